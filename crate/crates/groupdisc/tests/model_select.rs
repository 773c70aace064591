mod common;

use common::*;
use groupdisc::lca::{self, FitConfig, ItemParams, LcaParams};
use groupdisc::model_select::{cross_validate, find_elbow, fold_indices, select_n_classes};
use groupdisc::{synth, Error};
use proptest::prelude::*;

fn chord_distances(ks: &[usize], scores: &[f64]) -> Vec<f64> {
    let xs: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
    let norm = |v: &[f64]| -> Vec<f64> {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        v.iter()
            .map(|x| if hi > lo { (x - lo) / (hi - lo) } else { 0.0 })
            .collect()
    };
    let (x, y) = (norm(&xs), norm(scores));
    let n = x.len();
    let (dx, dy) = (x[n - 1] - x[0], y[n - 1] - y[0]);
    let len = (dx * dx + dy * dy).sqrt();
    (0..n)
        .map(|i| {
            if len == 0.0 {
                0.0
            } else {
                (dy * (x[i] - x[0]) - dx * (y[i] - y[0])).abs() / len
            }
        })
        .collect()
}

fn chord_oracle(ks: &[usize], scores: &[f64]) -> usize {
    let d = chord_distances(ks, scores);
    let mut best = 0;
    for i in 1..d.len() {
        if d[i] > d[best] + 1e-12 {
            best = i;
        }
    }
    ks[best]
}

#[test]
fn elbow_examples() {
    assert_eq!(
        find_elbow(&[1, 2, 3, 4, 5], &[0.0, 9.0, 10.0, 10.5, 10.8]).unwrap(),
        2
    );
    assert_eq!(find_elbow(&[2, 3, 4, 5], &[1.0, 2.0, 3.0, 4.0]).unwrap(), 2);
    assert_eq!(find_elbow(&[2, 3], &[-5.0, -4.0]).unwrap(), 3);
    assert_eq!(find_elbow(&[4], &[-1.0]).unwrap(), 4);
}

#[test]
fn two_fold_single_class_scores_closed_form_model() {
    let truth = synth::three_class_model();
    let (data, _) = synth::sample_lca(&truth, 101, 3).unwrap();
    let cfg = FitConfig {
        n_restarts: 1,
        ..FitConfig::new(1, 5)
    };
    let report = cross_validate(&data, &[1], 2, &cfg).unwrap();
    assert_eq!(report.cv_scores.len(), 1);
    let folds = fold_indices(101, 2, 5);
    let mut fold_scores = Vec::new();
    for f in 0..2 {
        let train: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|&(g, _)| g != f)
            .flat_map(|(_, v)| v.clone())
            .collect();
        let held = data.subset(&folds[f]);
        let train = data.subset(&train);
        // Closed-form single-class model: floored item marginals.
        let params = LcaParams {
            class_weights: vec![1.0],
            item_params: (0..train.n_items())
                .map(|j| {
                    let mut c = [0.0; 2];
                    for row in train.rows() {
                        c[row[j] as usize] += 1.0;
                    }
                    ItemParams::Bernoulli {
                        p: vec![floored_shares(&c, FLOOR)[1]],
                    }
                })
                .collect(),
        };
        fold_scores.push(lca::log_likelihood(&params, &held).unwrap() / held.n_rows() as f64);
    }
    let got = &report.cv_scores[0].folds;
    for (a, b) in got.iter().zip(&fold_scores) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn planted_two_classes_beat_one() {
    let params = LcaParams {
        class_weights: vec![0.5, 0.5],
        item_params: (0..6)
            .map(|j| ItemParams::Bernoulli {
                p: if j < 3 {
                    vec![0.9, 0.1]
                } else {
                    vec![0.1, 0.9]
                },
            })
            .collect(),
    };
    let (data, _) = synth::sample_lca(&params, 400, 4).unwrap();
    let cfg = FitConfig {
        n_restarts: 3,
        ..FitConfig::new(1, 4)
    };
    let a = cross_validate(&data, &[1, 2], 5, &cfg).unwrap();
    assert!(a.score(2).unwrap() > a.score(1).unwrap());
    assert_eq!(a, cross_validate(&data, &[1, 2], 5, &cfg).unwrap());
    assert!(a.cv_scores.iter().all(|s| s.folds.len() == 5));
}

#[test]
fn selection_chooses_a_candidate() {
    let (data, _) = synth::sample_lca(&synth::three_class_model(), 300, 6).unwrap();
    let cfg = FitConfig {
        n_restarts: 2,
        max_iter: 200,
        ..FitConfig::new(1, 6)
    };
    let r = select_n_classes(&data, &[2, 3, 4, 5], 3, &cfg).unwrap();
    assert!(r.candidate_ks.contains(&r.chosen_k.unwrap()));
}

#[test]
fn too_few_samples_for_folds() {
    let (data, _) = synth::sample_lca(&synth::three_class_model(), 3, 1).unwrap();
    let cfg = FitConfig::new(1, 0);
    assert!(matches!(
        cross_validate(&data, &[1], 5, &cfg),
        Err(Error::TooFewSamples { needed: 5, got: 3 })
    ));
}

proptest! {
    #[test]
    fn folds_partition_rows(n in 2usize..300, k in 2usize..12, seed in any::<u64>()) {
        prop_assume!(n >= k);
        let folds = fold_indices(n, k, seed);
        prop_assert_eq!(folds.len(), k);
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn elbow_matches_chord_oracle(scores in prop::collection::vec(-100.0f64..0.0, 3..12)) {
        let ks: Vec<usize> = (2..2 + scores.len()).collect();
        prop_assert_eq!(find_elbow(&ks, &scores).unwrap(), chord_oracle(&ks, &scores));
    }

    #[test]
    fn elbow_invariant_to_affine_score_rescaling(
        scores in prop::collection::vec(-100.0f64..0.0, 3..12),
        a in 0.1f64..10.0,
        b in -50.0f64..50.0,
    ) {
        let ks: Vec<usize> = (2..2 + scores.len()).collect();
        let scaled: Vec<f64> = scores.iter().map(|s| a * s + b).collect();
        let mut d = chord_distances(&ks, &scores);
        d.sort_by(|x, y| y.total_cmp(x));
        if d[0] - d[1] > 1e-9 {
            prop_assert_eq!(find_elbow(&ks, &scores).unwrap(), find_elbow(&ks, &scaled).unwrap());
        }
    }
}
