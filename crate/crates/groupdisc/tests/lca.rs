mod common;

use common::*;
use groupdisc::dataset::{ItemSchema, Responses};
use groupdisc::lca::{self, FitConfig, ItemParams, LcaModel, LcaParams, PROB_FLOOR};
use groupdisc::Error;
use proptest::prelude::*;

fn instance(seed: u64) -> (LcaParams, Responses, usize) {
    let mut r = rng(seed);
    let j = 1 + (seed % 6) as usize;
    let k = 1 + (seed % 4) as usize;
    let n = 10 + (seed % 90) as usize;
    let items = random_items(j, &mut r);
    let params = random_params(&items, k, &mut r);
    let data = random_responses(&items, n, &mut r);
    (params, data, k)
}

fn on_floored_simplex(v: &[f64]) -> bool {
    (v.iter().sum::<f64>() - 1.0).abs() < 1e-12
        && v.iter().all(|&p| p >= PROB_FLOOR * (1.0 - 1e-12))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn e_step_matches_direct_products(seed in any::<u64>()) {
        let (params, data, _) = instance(seed);
        let (a, ll) = lca::e_step(&params, &data).unwrap();
        let (resp, ll_oracle) = e_step_oracle(&params, &data);
        for (x, y) in a.responsibilities.iter().zip(resp.iter()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        prop_assert!((ll - ll_oracle).abs() <= 1e-12 * ll_oracle.abs());
        for row in a.responsibilities.rows() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn map_class_is_row_argmax(seed in any::<u64>()) {
        let (params, data, _) = instance(seed);
        let (a, _) = lca::e_step(&params, &data).unwrap();
        for (i, row) in a.responsibilities.rows().into_iter().enumerate() {
            let best = row[a.map_class[i]];
            prop_assert!(row.iter().all(|&v| v <= best));
        }
    }

    #[test]
    fn m_step_matches_weighted_counts(seed in any::<u64>()) {
        let (_, data, k) = instance(seed);
        let gamma = random_responsibilities(data.n_rows(), k, &mut rng(seed ^ 0xabc));
        let got = lca::m_step(&data, &gamma).unwrap();
        prop_assert!(max_param_diff(&got, &m_step_oracle(&data, &gamma)) <= 1e-12);
        prop_assert!(on_floored_simplex(&got.class_weights));
        for item in &got.item_params {
            for c in 0..k {
                let dist: Vec<f64> = (0..item.n_categories() as u32).map(|v| item.prob(c, v)).collect();
                prop_assert!(on_floored_simplex(&dist));
            }
        }
    }

    #[test]
    fn log_likelihood_never_decreases(seed in any::<u64>()) {
        let (_, data, k) = instance(seed);
        let cfg = FitConfig { n_restarts: 1, max_iter: 100, ..FitConfig::new(k, seed) };
        let model = lca::fit(&data, &cfg).unwrap();
        for w in model.ll_trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0));
        }
        prop_assert_eq!(model.log_likelihood, lca::log_likelihood(&model.params, &data).unwrap());
    }
}

#[test]
fn single_class_fit_is_item_marginals() {
    let (_, data, _) = instance(7);
    let model = lca::fit(&data, &FitConfig::new(1, 3)).unwrap();
    for (j, item) in model.params.item_params.iter().enumerate() {
        let m = item.n_categories();
        let mut counts = vec![0.0; m];
        for row in data.rows() {
            counts[row[j] as usize] += 1.0;
        }
        let want = floored_shares(&counts, FLOOR);
        for v in 0..m {
            assert!((item.prob(0, v as u32) - want[v]).abs() < 1e-12);
        }
    }
}

#[test]
fn fit_is_deterministic_and_seed_sensitive() {
    let truth = groupdisc::synth::three_class_model();
    let (data, _) = groupdisc::synth::sample_lca(&truth, 300, 5).unwrap();
    let cfg = FitConfig {
        n_restarts: 3,
        ..FitConfig::new(3, 42)
    };
    let a = lca::fit(&data, &cfg).unwrap();
    let b = lca::fit(&data, &cfg).unwrap();
    assert_eq!(a, b);
    let c = lca::fit(&data, &FitConfig { seed: 43, ..cfg }).unwrap();
    assert_ne!(a.ll_trace, c.ll_trace);
}

#[test]
fn model_json_round_trip() {
    let truth = groupdisc::synth::three_class_model();
    let (data, _) = groupdisc::synth::sample_lca(&truth, 200, 1).unwrap();
    let model = lca::fit(
        &data,
        &FitConfig {
            n_restarts: 2,
            ..FitConfig::new(2, 1)
        },
    )
    .unwrap();
    let back = LcaModel::from_json(&model.to_json().unwrap()).unwrap();
    assert_eq!(back, model);
    assert_eq!(
        lca::assign(&back, &data).unwrap(),
        lca::assign(&model, &data).unwrap()
    );
}

#[test]
fn empty_data_is_rejected() {
    let items = vec![ItemSchema::binary("a", "a")];
    let data = Responses::new(items, vec![]).unwrap();
    assert!(matches!(
        lca::fit(&data, &FitConfig::new(1, 0)),
        Err(Error::TooFewSamples { got: 0, .. })
    ));
}

#[test]
fn invalid_config_is_rejected() {
    let (_, data, _) = instance(1);
    let bad = FitConfig {
        n_restarts: 0,
        ..FitConfig::new(1, 0)
    };
    assert!(matches!(
        lca::fit(&data, &bad),
        Err(Error::InvalidConfig(_))
    ));
}

#[test]
fn categorical_items_recover_planted_distribution() {
    let params = LcaParams {
        class_weights: vec![0.5, 0.5],
        item_params: (0..6)
            .map(|j| ItemParams::Categorical {
                probs: if j % 2 == 0 {
                    vec![vec![0.8, 0.1, 0.1], vec![0.1, 0.1, 0.8]]
                } else {
                    vec![vec![0.1, 0.8, 0.1], vec![0.8, 0.1, 0.1]]
                },
            })
            .collect(),
    };
    let (data, _) = groupdisc::synth::sample_lca(&params, 2000, 9).unwrap();
    let model = lca::fit(&data, &FitConfig::new(2, 9)).unwrap();
    let perm = best_matching(&params, &model.params);
    assert!(
        max_param_diff(
            &params,
            &LcaParams {
                class_weights: perm
                    .iter()
                    .map(|&f| model.params.class_weights[f])
                    .collect(),
                item_params: model
                    .params
                    .item_params
                    .iter()
                    .map(|ip| match ip {
                        ItemParams::Categorical { probs } => ItemParams::Categorical {
                            probs: perm.iter().map(|&f| probs[f].clone()).collect(),
                        },
                        other => other.clone(),
                    })
                    .collect(),
            }
        ) < 0.05
    );
}
