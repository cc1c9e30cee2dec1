use std::time::{Duration, Instant};

use layoutbench::sandbox::{execute, fresh_workdir, parallel_map, sanitize, ExecLimits, ExecStatus, DEFAULT_BLOCKLIST};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

use crate::Check;

const WORKERS: usize = 8;
const TRIALS: usize = 100;
const SPIN_TIMEOUT: Duration = Duration::from_secs(2);

fn source_lines() -> impl Strategy<Value = Vec<String>> {
    let line = prop_oneof![
        3 => "[ -~]{0,40}",
        1 => ("[ -~]{0,10}", "[ -~]{0,10}").prop_map(|(a, b)| format!("{a}LayoutViewer{b}")),
        1 => Just("gdspy.LayoutViewer(lib)".to_string()),
    ];
    prop::collection::vec(line, 0..30)
}

fn sanitizer() -> Result<(), String> {
    let cfg = Config {
        cases: 2000,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(cfg, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    let strategy = (source_lines(), prop::sample::select(vec!["\n", "\r\n"]), any::<bool>());
    runner
        .run(&strategy, |(lines, eol, trailing)| {
            let blocked = |l: &str| DEFAULT_BLOCKLIST.iter().any(|b| l.contains(b));
            let n = lines.len();
            let terminated: Vec<(String, bool)> = lines.into_iter().enumerate().map(|(i, l)| (l, i + 1 < n || trailing)).collect();
            let joined = |keep: &dyn Fn(&str) -> bool| -> String {
                terminated.iter().filter(|(l, _)| keep(l)).map(|(l, t)| if *t { format!("{l}{eol}") } else { l.clone() }).collect()
            };
            let src = joined(&|_| true);
            let once = sanitize(&src, DEFAULT_BLOCKLIST);
            prop_assert_eq!(once.hits.len(), terminated.iter().filter(|(l, _)| blocked(l)).count());
            prop_assert_eq!(&once.source, &joined(&|l| !blocked(l)));
            prop_assert!(!blocked(&once.source));
            let twice = sanitize(&once.source, DEFAULT_BLOCKLIST);
            prop_assert!(twice.hits.is_empty());
            prop_assert_eq!(twice.source, once.source);
            Ok(())
        })
        .map_err(|e| format!("sanitizer: {e}"))
}

fn spin(root: &std::path::Path) -> Result<f64, String> {
    let limits = ExecLimits {
        timeout: SPIN_TIMEOUT,
        ..ExecLimits::default()
    };
    let dir = fresh_workdir(root, "spin").map_err(|e| e.to_string())?;
    let start = Instant::now();
    let out = execute("while True:\n    pass\n", &limits, &dir);
    let took = start.elapsed().as_secs_f64();
    let want = SPIN_TIMEOUT.as_secs_f64();
    if out.status != ExecStatus::Timeout {
        return Err(format!("spin loop ended with {}", out.status));
    }
    if (took - want).abs() > 0.1 * want {
        return Err(format!("spin loop killed after {took:.2} s, timeout {want} s"));
    }
    Ok(took)
}

fn isolation(root: &std::path::Path) -> Result<(), String> {
    let limits = ExecLimits {
        timeout: Duration::from_secs(30),
        ..ExecLimits::default()
    };
    for trial in 0..TRIALS {
        let jobs: Vec<String> = (0..WORKERS).map(|w| format!("t{trial}w{w}")).collect();
        let outcomes = parallel_map(&jobs, WORKERS, |token| {
            let dir = fresh_workdir(root, token).expect("workdir");
            let src = format!(
                "import os, time\nopen('out_{token}.gds', 'w').write('{token}')\ntime.sleep(0.005)\nprint(' '.join(sorted(os.listdir('.'))))\n"
            );
            let out = execute(&src, &limits, &dir);
            std::fs::remove_dir_all(&dir).ok();
            out
        });
        for (token, out) in jobs.iter().zip(outcomes) {
            let name = format!("out_{token}.gds");
            if out.status != ExecStatus::Ok {
                return Err(format!("{token}: {} {}", out.status, out.stderr));
            }
            if out.artifacts.len() != 1 || out.artifacts[0].name != name || out.artifacts[0].bytes != token.as_bytes() {
                return Err(format!("{token}: artifacts {:?}", out.artifact_names));
            }
            let foreign: Vec<&str> = out.stdout.split_whitespace().filter(|f| f.starts_with("out_") && *f != name).collect();
            if !foreign.is_empty() {
                return Err(format!("{token} saw {foreign:?}"));
            }
        }
    }
    Ok(())
}

pub fn run() -> Check {
    let root = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return Check::Fail(e.to_string()),
    };
    let result = sanitizer().and_then(|_| spin(root.path())).and_then(|t| isolation(root.path()).map(|_| t));
    match result {
        Ok(took) => Check::Pass(format!(
            "sanitizer removes every blocklisted line and is idempotent over 2000 sources; spin loop killed after {took:.2} s of {} s; {WORKERS} concurrent workdirs x {TRIALS} trials stay isolated",
            SPIN_TIMEOUT.as_secs()
        )),
        Err(e) => Check::Fail(e),
    }
}
