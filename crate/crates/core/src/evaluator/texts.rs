use serde::{Deserialize, Serialize};

use crate::gdsii::FlatText;

/// Outcome of pairing candidate labels with ground-truth labels.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TextMatchReport {
    /// `(candidate index, truth index)` pairs.
    pub matched: Vec<(usize, usize)>,
    pub unmatched_candidate: Vec<usize>,
    pub unmatched_truth: Vec<usize>,
}

impl TextMatchReport {
    /// Fraction of truth labels that found a partner; 1 when there are none.
    pub fn truth_recall(&self) -> f64 {
        let n = self.matched.len() + self.unmatched_truth.len();
        if n == 0 {
            1.0
        } else {
            self.matched.len() as f64 / n as f64
        }
    }
}

/// Greedy matching: each truth label, in order, takes the nearest unused
/// candidate with the same string (and layer, when `match_layers`) lying
/// within `tolerance` meters.
pub fn compare_texts(candidate: &[FlatText], truth: &[FlatText], tolerance: f64, match_layers: bool) -> TextMatchReport {
    let mut used = vec![false; candidate.len()];
    let mut report = TextMatchReport::default();
    for (ti, t) in truth.iter().enumerate() {
        let best = candidate
            .iter()
            .enumerate()
            .filter(|(ci, c)| !used[*ci] && c.string == t.string && (!match_layers || c.layer == t.layer))
            .map(|(ci, c)| (ci, (c.position - t.position).norm()))
            .filter(|(_, d)| *d <= tolerance)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match best {
            Some((ci, _)) => {
                used[ci] = true;
                report.matched.push((ci, ti));
            }
            None => report.unmatched_truth.push(ti),
        }
    }
    report.unmatched_candidate = (0..candidate.len()).filter(|i| !used[*i]).collect();
    report
}
