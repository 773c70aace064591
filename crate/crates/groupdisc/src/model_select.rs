//! Choosing the number of latent classes.
//!
//! Each candidate `K` is scored by k-fold cross-validation (mean held-out
//! log-likelihood per sample); the elbow of the score curve is the point
//! farthest from the chord joining its endpoints after both axes are min-max
//! normalised.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::Responses;
use crate::error::{Error, Result};
use crate::lca::{self, FitConfig};
use crate::seed;

pub const ELBOW_METHOD: &str = "max_chord_distance";

/// Distances closer than this count as tied.
const TIE_TOL: f64 = 1e-12;

/// Search ranges for small surveys and for large datasets.
pub const SMALL_K_RANGE: (usize, usize) = (2, 10);
pub const LARGE_K_RANGE: (usize, usize) = (2, 30);
pub const DEFAULT_N_FOLDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KScore {
    pub k: usize,
    pub mean: f64,
    pub folds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub candidate_ks: Vec<usize>,
    pub cv_scores: Vec<KScore>,
    pub n_folds: usize,
    /// `None` until [`find_elbow`] has been applied.
    pub chosen_k: Option<usize>,
    pub elbow_method: String,
}

impl SelectionReport {
    pub fn means(&self) -> Vec<f64> {
        self.cv_scores.iter().map(|s| s.mean).collect()
    }

    pub fn score(&self, k: usize) -> Option<f64> {
        self.cv_scores.iter().find(|s| s.k == k).map(|s| s.mean)
    }

    /// Long format `k,fold,score`, one line per fit.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,fold,score\n");
        for s in &self.cv_scores {
            for (f, v) in s.folds.iter().enumerate() {
                let _ = writeln!(out, "{},{},{}", s.k, f, v);
            }
        }
        out
    }
}

/// Seeded partition of `0..n` into `n_folds` folds whose sizes differ by at most one.
pub fn fold_indices(n: usize, n_folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seed::rng(seed, "cv/folds", 0));
    let base = n / n_folds;
    let extra = n % n_folds;
    let mut folds = Vec::with_capacity(n_folds);
    let mut start = 0;
    for f in 0..n_folds {
        let size = base + usize::from(f < extra);
        let mut fold = perm[start..start + size].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += size;
    }
    folds
}

/// Cross-validated held-out log-likelihood per sample for every `K` in `ks`.
pub fn cross_validate(
    data: &Responses,
    ks: &[usize],
    n_folds: usize,
    cfg: &FitConfig,
) -> Result<SelectionReport> {
    if ks.is_empty() || ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config(
            "candidate K list must be non-empty and strictly ascending",
        ));
    }
    if n_folds < 2 {
        return Err(Error::config("need at least two folds"));
    }
    let n = data.n_rows();
    if n < n_folds {
        return Err(Error::TooFewSamples {
            needed: n_folds,
            got: n,
        });
    }
    let folds = fold_indices(n, n_folds, cfg.seed);
    let mut in_fold = vec![0usize; n];
    for (f, fold) in folds.iter().enumerate() {
        for &i in fold {
            in_fold[i] = f;
        }
    }
    let splits: Vec<(Responses, Responses)> = (0..n_folds)
        .map(|f| {
            let train: Vec<usize> = (0..n).filter(|&i| in_fold[i] != f).collect();
            (data.subset(&train), data.subset(&folds[f]))
        })
        .collect();

    let mut cv_scores = Vec::with_capacity(ks.len());
    for &k in ks {
        let mut fold_scores = Vec::with_capacity(n_folds);
        for (f, (train, held_out)) in splits.iter().enumerate() {
            let fit_cfg = FitConfig {
                n_classes: k,
                seed: seed::substream(cfg.seed, "cv/fit", ((k as u64) << 32) | f as u64),
                ..cfg.clone()
            };
            let model = lca::fit(train, &fit_cfg)?;
            let ll = lca::log_likelihood(&model.params, held_out)?;
            fold_scores.push(ll / held_out.n_rows() as f64);
        }
        let mean = fold_scores.iter().sum::<f64>() / n_folds as f64;
        cv_scores.push(KScore {
            k,
            mean,
            folds: fold_scores,
        });
    }
    Ok(SelectionReport {
        candidate_ks: ks.to_vec(),
        cv_scores,
        n_folds,
        chosen_k: None,
        elbow_method: ELBOW_METHOD.to_string(),
    })
}

fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    values
        .iter()
        .map(|v| if range > 0.0 { (v - lo) / range } else { 0.0 })
        .collect()
}

/// Elbow of a score curve. Fewer than three points fall back to the best
/// score. Ties (within 1e-12) go to the smaller `K`.
pub fn find_elbow(ks: &[usize], scores: &[f64]) -> Result<usize> {
    if ks.is_empty() || ks.len() != scores.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} candidate Ks but {} scores",
            ks.len(),
            scores.len()
        )));
    }
    if ks.len() < 3 {
        let mut best = 0;
        for i in 1..ks.len() {
            if scores[i] > scores[best] + TIE_TOL {
                best = i;
            }
        }
        return Ok(ks[best]);
    }
    let xs = min_max(&ks.iter().map(|&k| k as f64).collect::<Vec<_>>());
    let ys = min_max(scores);
    let last = xs.len() - 1;
    let (x0, y0, x1, y1) = (xs[0], ys[0], xs[last], ys[last]);
    let len = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
    let mut best = 0;
    let mut best_d = f64::NEG_INFINITY;
    for i in 0..xs.len() {
        let d = if len > 0.0 {
            ((x1 - x0) * (y0 - ys[i]) - (x0 - xs[i]) * (y1 - y0)).abs() / len
        } else {
            0.0
        };
        if d > best_d + TIE_TOL {
            best = i;
            best_d = d;
        }
    }
    Ok(ks[best])
}

/// Cross-validation followed by elbow detection.
pub fn select_n_classes(
    data: &Responses,
    ks: &[usize],
    n_folds: usize,
    cfg: &FitConfig,
) -> Result<SelectionReport> {
    let mut report = cross_validate(data, ks, n_folds, cfg)?;
    report.chosen_k = Some(find_elbow(&report.candidate_ks, &report.means())?);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_scores_pick_smallest_k() {
        assert_eq!(find_elbow(&[2, 3, 4, 5], &[1.0, 2.0, 3.0, 4.0]).unwrap(), 2);
    }

    #[test]
    fn chord_distance_example() {
        // Normalised points (0,0), (.25,.833), (.5,.926), (.75,.972), (1,1):
        // distances to y = x are 0, .417/√2·…, largest at K=2.
        assert_eq!(
            find_elbow(&[1, 2, 3, 4, 5], &[0.0, 9.0, 10.0, 10.5, 10.8]).unwrap(),
            2
        );
    }

    #[test]
    fn short_lists_use_argmax() {
        assert_eq!(find_elbow(&[2, 3], &[-5.0, -4.0]).unwrap(), 3);
        assert_eq!(find_elbow(&[2, 3], &[-4.0, -4.0]).unwrap(), 2);
        assert_eq!(find_elbow(&[4], &[1.0]).unwrap(), 4);
        assert!(find_elbow(&[2, 3], &[1.0]).is_err());
    }

    #[test]
    fn folds_partition_evenly() {
        let folds = fold_indices(23, 5, 9);
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![5, 5, 5, 4, 4]);
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert_eq!(folds, fold_indices(23, 5, 9));
    }

    #[test]
    fn bad_inputs() {
        let data = Responses::new(
            vec![crate::dataset::ItemSchema::binary("a", "a")],
            vec![vec![1], vec![0]],
        )
        .unwrap();
        let cfg = FitConfig::new(1, 0);
        assert!(cross_validate(&data, &[], 2, &cfg).is_err());
        assert!(cross_validate(&data, &[3, 2], 2, &cfg).is_err());
        assert!(cross_validate(&data, &[1], 1, &cfg).is_err());
        assert!(matches!(
            cross_validate(&data, &[1], 3, &cfg),
            Err(Error::TooFewSamples { .. })
        ));
    }
}
