use serde::{Deserialize, Serialize};

/// ROC for "low survival probability means marked".
///
/// A threshold `v` labels every score `<= v` as marked; the curve visits each
/// distinct observed score in increasing order, so it starts at (0, 0) and
/// ends at (1, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// (fpr, tpr) pairs.
    pub points: Vec<(f64, f64)>,
    pub thresholds: Vec<f64>,
    pub auc: f64,
    /// All scores equal; the curve is the chance diagonal.
    pub degenerate: bool,
}

impl RocCurve {
    /// `marked` and `unmarked` hold survival probabilities.
    pub fn from_scores(marked: &[f64], unmarked: &[f64]) -> Self {
        let mut all: Vec<(f64, bool)> = marked
            .iter()
            .map(|&s| (s, true))
            .chain(unmarked.iter().map(|&s| (s, false)))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0));

        let pos = marked.len().max(1) as f64;
        let neg = unmarked.len().max(1) as f64;
        let mut points = vec![(0.0, 0.0)];
        let mut thresholds = Vec::new();
        let (mut tp, mut fp) = (0usize, 0usize);
        let mut i = 0;
        while i < all.len() {
            let v = all[i].0;
            while i < all.len() && all[i].0 == v {
                if all[i].1 {
                    tp += 1;
                } else {
                    fp += 1;
                }
                i += 1;
            }
            points.push((fp as f64 / neg, tp as f64 / pos));
            thresholds.push(v);
        }
        if points.last() != Some(&(1.0, 1.0)) {
            points.push((1.0, 1.0));
        }
        let auc = trapezoid(&points);
        Self {
            degenerate: thresholds.len() <= 1,
            points,
            thresholds,
            auc,
        }
    }

    /// Rates when "marked" means `score < theta`.
    pub fn rates_below(marked: &[f64], unmarked: &[f64], theta: f64) -> (f64, f64) {
        let frac = |xs: &[f64]| {
            if xs.is_empty() {
                0.0
            } else {
                xs.iter().filter(|&&s| s < theta).count() as f64 / xs.len() as f64
            }
        };
        (frac(unmarked), frac(marked))
    }
}

fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

/// Probability that a random marked score is below a random unmarked one,
/// counting ties as one half.
pub fn pairwise_auc(marked: &[f64], unmarked: &[f64]) -> f64 {
    if marked.is_empty() || unmarked.is_empty() {
        return 0.5;
    }
    let mut wins = 0.0;
    for &m in marked {
        for &u in unmarked {
            if m < u {
                wins += 1.0;
            } else if m == u {
                wins += 0.5;
            }
        }
    }
    wins / (marked.len() * unmarked.len()) as f64
}
