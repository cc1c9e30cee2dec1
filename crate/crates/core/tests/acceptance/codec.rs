use layoutbench::gdsii::{
    decode_real64, encode_real64, parse_gdsii, write_gdsii, ArrayRef, Boundary, Element, GdsPoint, Library, Path, PathType, Strans, StructRef, Structure,
    Text, Timestamps,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

use crate::Check;

const LIBRARIES: u32 = 1000;

fn runner(cases: u32) -> TestRunner {
    let cfg = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(cfg, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn coord() -> impl Strategy<Value = i64> {
    prop_oneof![-100i64..100, i64::from(i32::MIN)..=i64::from(i32::MAX)]
}

fn point() -> impl Strategy<Value = GdsPoint> {
    (coord(), coord()).prop_map(|(x, y)| GdsPoint::new(x, y))
}

fn strans() -> impl Strategy<Value = Option<Strans>> {
    prop::option::of((any::<bool>(), any::<bool>(), any::<bool>(), prop::option::of(1e-4f64..1e4), prop::option::of(-720.0f64..720.0)).prop_map(
        |(reflect_x, abs_mag, abs_angle, magnification, angle_degrees)| Strans {
            reflect_x,
            abs_mag,
            abs_angle,
            magnification,
            angle_degrees,
        },
    ))
}

fn name() -> impl Strategy<Value = String> {
    "[A-Za-z_][A-Za-z0-9_?$]{0,31}"
}

fn element() -> impl Strategy<Value = Element> {
    let layer = 0u16..=255;
    prop_oneof![
        (layer.clone(), 0u16..=255, prop::collection::vec(point(), 3..40))
            .prop_map(|(l, d, ring)| Boundary::from_ring(l, d, &ring))
            .prop_filter("closed ring needs 4 points", |b| b.xy.len() >= 4)
            .prop_map(Element::Boundary),
        (layer.clone(), 0u16..=255, 0i16..3, any::<i32>(), prop::collection::vec(point(), 2..20)).prop_map(|(layer, datatype, t, width, xy)| {
            Element::Path(Path {
                layer,
                datatype,
                pathtype: PathType::from_code(t).expect("valid path type"),
                width,
                xy,
            })
        }),
        (layer, 0u16..=255, prop::option::of(0u16..64), strans(), point(), "[ -~]{0,64}").prop_map(
            |(layer, texttype, presentation, strans, position, string)| Element::Text(Text {
                layer,
                texttype,
                presentation,
                strans,
                position,
                string,
            })
        ),
        (name(), strans(), point()).prop_map(|(name, strans, origin)| Element::Sref(StructRef { name, strans, origin })),
        (name(), strans(), 1u16..=32767, 1u16..=32767, point(), point(), point()).prop_map(|(name, strans, columns, rows, a, b, c)| {
            Element::Aref(ArrayRef {
                name,
                strans,
                columns,
                rows,
                xy: [a, b, c],
            })
        }),
    ]
}

fn library() -> impl Strategy<Value = Library> {
    let structure = (name(), prop::collection::vec(element(), 0..8), any::<[i16; 6]>(), any::<[i16; 6]>()).prop_map(|(name, elements, m, a)| Structure {
        name,
        elements,
        timestamps: Timestamps { modified: m, accessed: a },
    });
    ("[A-Za-z0-9_.]{1,32}", 1e-9f64..10.0, 1e-12f64..1e-2, prop::collection::vec(structure, 0..6), any::<[i16; 6]>()).prop_map(
        |(name, uu, mu, mut structures, t)| {
            let mut seen = std::collections::HashSet::new();
            structures.retain(|s| seen.insert(s.name.clone()));
            Library {
                name,
                user_units_per_db_unit: uu,
                meters_per_db_unit: mu,
                structures,
                timestamps: Timestamps::both(t),
            }
        },
    )
}

fn ulps_apart(a: f64, b: f64) -> u64 {
    if a.is_sign_negative() != b.is_sign_negative() {
        return if a == b { 0 } else { u64::MAX };
    }
    a.to_bits().abs_diff(b.to_bits())
}

pub fn run() -> Check {
    let mut r = runner(LIBRARIES);
    let libs = r.run(&library(), |lib| {
        let bytes = write_gdsii(&lib).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let parsed = parse_gdsii(&bytes).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!(parsed.warnings.is_empty());
        prop_assert_eq!(&parsed.library, &lib);
        prop_assert_eq!(write_gdsii(&parsed.library).unwrap(), bytes);
        Ok(())
    });
    if let Err(e) = libs {
        return Check::Fail(format!("random library: {e}"));
    }

    let mut fixtures = 0;
    let dir = crate::tasks_dir().join("truths");
    let mut files: Vec<_> = std::fs::read_dir(&dir).map(|d| d.flatten().map(|e| e.path()).collect()).unwrap_or_default();
    files.sort();
    for f in files.iter().filter(|f| f.extension().is_some_and(|e| e == "gds")) {
        let bytes = std::fs::read(f).unwrap();
        let lib = match parse_gdsii(&bytes) {
            Ok(p) => p.library,
            Err(e) => return Check::Fail(format!("{}: {e}", f.display())),
        };
        let again = write_gdsii(&lib).unwrap();
        if again != bytes || parse_gdsii(&again).unwrap().library != lib {
            return Check::Fail(format!("{} does not round-trip", f.display()));
        }
        fixtures += 1;
    }
    if fixtures == 0 {
        return Check::Fail(format!("no fixtures under {}", dir.display()));
    }

    for x in [0.0, 1.0, -1.0, 1e-3, -1e-3, 1e-6, -1e-6, 1e-9, -1e-9] {
        let back = decode_real64(encode_real64(x).unwrap());
        if back != x {
            return Check::Fail(format!("real64 {x:e} decoded as {back:e}"));
        }
    }
    let reals = (1.0f64..2.0, -230i32..230, any::<bool>()).prop_map(|(m, e, neg)| if neg { -m } else { m } * 2f64.powi(e));
    let mut r = runner(20_000);
    let mut worst = 0u64;
    let res = r.run(&reals, |x| {
        let back = decode_real64(encode_real64(x).map_err(|e| TestCaseError::fail(e.to_string()))?);
        let d = ulps_apart(x, back);
        prop_assert!(d <= 1, "{x:e} came back as {back:e}");
        Ok(())
    });
    if let Err(e) = res {
        return Check::Fail(format!("real64: {e}"));
    }
    for bits in [0x3ff0_0000_0000_0001u64, 0x3fef_ffff_ffff_ffff, 0x4340_0000_0000_0001] {
        let x = f64::from_bits(bits);
        worst = worst.max(ulps_apart(x, decode_real64(encode_real64(x).unwrap())));
    }
    if worst > 1 {
        return Check::Fail(format!("real64 boundary values drift by {worst} ulp"));
    }
    Check::Pass(format!("{LIBRARIES} random libraries and {fixtures} committed files round-trip; real64 within 1 ulp on 20000 reals, exact on specials"))
}
