#![allow(dead_code)]

use std::path::{Path, PathBuf};

use groupdisc::dataset::{ItemKind, ItemSchema, Responses};
use groupdisc::lca::{ItemParams, LcaParams};
use itertools::Itertools;
use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const FLOOR: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Reference tables
// ---------------------------------------------------------------------------

pub const GROUPS: [&str; 5] = ["0-20%", "20-40%", "40-60%", "60-80%", "80-100%"];

/// Percent of areas per deprivation decile, one row per group.
pub const DEPRIVATION_PCT: [[f64; 10]; 5] = [
    [
        8.62, 7.83, 8.28, 9.14, 10.04, 10.49, 11.03, 11.32, 11.52, 11.75,
    ],
    [
        12.22, 18.93, 18.12, 14.81, 10.77, 8.05, 5.96, 4.04, 3.79, 3.31,
    ],
    [
        20.10, 23.19, 17.49, 13.02, 8.71, 6.18, 4.48, 3.58, 2.12, 1.14,
    ],
    [
        31.13, 22.67, 16.58, 12.35, 8.12, 4.91, 2.71, 1.18, 0.34, 0.00,
    ],
    [41.60, 26.40, 20.00, 7.20, 1.60, 2.40, 0.80, 0.0, 0.0, 0.0],
];

/// Known deprivation discrepancy matrix and its AVG column.
pub const DEPRIVATION_DELTA: [[f64; 5]; 5] = [
    [0.0, 0.2001, 0.2896, 0.3877, 0.5064],
    [0.2001, 0.0, 0.0313, 0.1123, 0.2203],
    [0.2896, 0.0313, 0.0, 0.0314, 0.0963],
    [0.3877, 0.1123, 0.0314, 0.0, 0.0283],
    [0.5064, 0.2203, 0.0963, 0.0283, 0.0],
];
pub const DEPRIVATION_AVG: [f64; 5] = [0.2768, 0.1128, 0.0897, 0.1119, 0.1703];

/// Known census discrepancy matrix for the same five groups.
pub const CENSUS_DELTA: [[f64; 5]; 5] = [
    [0.0, 0.4865, 0.6783, 0.8603, 0.9347],
    [0.4865, 0.0, 0.1371, 0.3934, 0.5565],
    [0.6783, 0.1371, 0.0, 0.1173, 0.2744],
    [0.8603, 0.3934, 0.1173, 0.0, 0.0445],
    [0.9347, 0.5565, 0.2744, 0.0445, 0.0],
];

/// Known row-wise Pearson coefficients between the two matrices.
pub const ROWWISE_PEARSON: [f64; 5] = [0.9802, 0.9769, 0.9949, 0.9829, 0.9830];

pub fn group_names() -> Vec<String> {
    GROUPS.iter().map(|s| s.to_string()).collect()
}

pub fn deprivation_csv() -> String {
    let mut out = String::from("group,1,2,3,4,5,6,7,8,9,10\n");
    for (g, row) in GROUPS.iter().zip(DEPRIVATION_PCT) {
        out.push_str(g);
        for v in row {
            out.push_str(&format!(",{v:.2}"));
        }
        out.push('\n');
    }
    out
}

pub fn matrix5(values: [[f64; 5]; 5]) -> Array2<f64> {
    Array2::from_shape_fn((5, 5), |(i, j)| values[i][j])
}

// ---------------------------------------------------------------------------
// Random instances
// ---------------------------------------------------------------------------

pub fn random_simplex<R: Rng>(m: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..m).map(|_| 0.05 + rng.random::<f64>()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Random items: each binary with probability one half, else categorical with 3 or 4 levels.
pub fn random_items<R: Rng>(j: usize, rng: &mut R) -> Vec<ItemSchema> {
    (0..j)
        .map(|i| {
            let id = format!("x{i}");
            if rng.random_bool(0.5) {
                ItemSchema::binary(id.clone(), id)
            } else {
                let m = rng.random_range(3..=4);
                ItemSchema::categorical(id.clone(), id, (0..m).map(|v| format!("v{v}")).collect())
                    .unwrap()
            }
        })
        .collect()
}

pub fn random_params<R: Rng>(items: &[ItemSchema], k: usize, rng: &mut R) -> LcaParams {
    LcaParams {
        class_weights: random_simplex(k, rng),
        item_params: items
            .iter()
            .map(|it| match it.kind {
                ItemKind::BinaryIndicator => ItemParams::Bernoulli {
                    p: (0..k).map(|_| rng.random_range(0.05..0.95)).collect(),
                },
                ItemKind::Categorical => ItemParams::Categorical {
                    probs: (0..k)
                        .map(|_| random_simplex(it.n_categories(), rng))
                        .collect(),
                },
            })
            .collect(),
    }
}

pub fn random_responses<R: Rng>(items: &[ItemSchema], n: usize, rng: &mut R) -> Responses {
    let rows = (0..n)
        .map(|_| {
            items
                .iter()
                .map(|it| rng.random_range(0..it.n_categories() as u32))
                .collect()
        })
        .collect();
    Responses::new(items.to_vec(), rows).unwrap()
}

pub fn random_responsibilities<R: Rng>(n: usize, k: usize, rng: &mut R) -> Array2<f64> {
    let mut r = Array2::zeros((n, k));
    for mut row in r.rows_mut() {
        let p = random_simplex(k, rng);
        for (slot, v) in row.iter_mut().zip(p) {
            *slot = v;
        }
    }
    r
}

// ---------------------------------------------------------------------------
// LCA oracles
// ---------------------------------------------------------------------------

fn item_prob(p: &ItemParams, c: usize, v: u32) -> f64 {
    match p {
        ItemParams::Bernoulli { p } => {
            if v == 1 {
                p[c]
            } else {
                1.0 - p[c]
            }
        }
        ItemParams::Categorical { probs } => probs[c][v as usize],
    }
}

/// `w_c * prod_j P(x_j | c)` computed as a plain product.
pub fn joint_product(params: &LcaParams, row: &[u32]) -> Vec<f64> {
    (0..params.class_weights.len())
        .map(|c| {
            let mut acc = params.class_weights[c];
            for (p, &v) in params.item_params.iter().zip(row) {
                acc *= item_prob(p, c, v);
            }
            acc
        })
        .collect()
}

/// Responsibilities and total log-likelihood by direct products.
pub fn e_step_oracle(params: &LcaParams, data: &Responses) -> (Array2<f64>, f64) {
    let k = params.class_weights.len();
    let mut resp = Array2::zeros((data.n_rows(), k));
    let mut ll = 0.0;
    for (i, row) in data.rows().enumerate() {
        let joint = joint_product(params, row);
        let total: f64 = joint.iter().sum();
        ll += total.ln();
        for c in 0..k {
            resp[[i, c]] = joint[c] / total;
        }
    }
    (resp, ll)
}

/// Projection of raw weighted shares onto the floored simplex, found by
/// trying every number of pinned smallest entries.
pub fn floored_shares(counts: &[f64], floor: f64) -> Vec<f64> {
    let m = counts.len();
    let total: f64 = counts.iter().sum();
    let plain: Vec<f64> = counts.iter().map(|c| c / total).collect();
    if plain.iter().all(|&p| p >= floor) {
        return plain;
    }
    let order: Vec<usize> = (0..m)
        .sorted_by(|&a, &b| counts[a].total_cmp(&counts[b]))
        .collect();
    for t in 1..m {
        let free_total: f64 = order[t..].iter().map(|&i| counts[i]).sum();
        let free_mass = 1.0 - floor * t as f64;
        let mut out = vec![floor; m];
        let mut ok = true;
        for &i in &order[t..] {
            out[i] = counts[i] / free_total * free_mass;
            if out[i] < floor {
                ok = false;
            }
        }
        if ok {
            return out;
        }
    }
    vec![1.0 / m as f64; m]
}

/// Weighted-mean M-step with floors, written independently of the library.
pub fn m_step_oracle(data: &Responses, resp: &Array2<f64>) -> LcaParams {
    let (n, k) = resp.dim();
    let mass: Vec<f64> = (0..k).map(|c| (0..n).map(|i| resp[[i, c]]).sum()).collect();
    let class_weights = if k == 1 {
        vec![1.0]
    } else {
        floored_shares(&mass, FLOOR)
    };
    let item_params = data
        .items()
        .iter()
        .enumerate()
        .map(|(j, it)| {
            let m = it.n_categories();
            let weighted = |c: usize, v: u32| -> f64 {
                (0..n)
                    .filter(|&i| data.row(i)[j] == v)
                    .map(|i| resp[[i, c]])
                    .sum()
            };
            match it.kind {
                ItemKind::BinaryIndicator => ItemParams::Bernoulli {
                    p: (0..k)
                        .map(|c| (weighted(c, 1) / mass[c]).clamp(FLOOR, 1.0 - FLOOR))
                        .collect(),
                },
                ItemKind::Categorical => ItemParams::Categorical {
                    probs: (0..k)
                        .map(|c| {
                            let counts: Vec<f64> = (0..m as u32).map(|v| weighted(c, v)).collect();
                            floored_shares(&counts, FLOOR)
                        })
                        .collect(),
                },
            }
        })
        .collect();
    LcaParams {
        class_weights,
        item_params,
    }
}

pub fn max_param_diff(a: &LcaParams, b: &LcaParams) -> f64 {
    let mut d: f64 = a
        .class_weights
        .iter()
        .zip(&b.class_weights)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    for (pa, pb) in a.item_params.iter().zip(&b.item_params) {
        match (pa, pb) {
            (ItemParams::Bernoulli { p: x }, ItemParams::Bernoulli { p: y }) => {
                for (u, v) in x.iter().zip(y) {
                    d = d.max((u - v).abs());
                }
            }
            (ItemParams::Categorical { probs: x }, ItemParams::Categorical { probs: y }) => {
                for (ru, rv) in x.iter().zip(y) {
                    for (u, v) in ru.iter().zip(rv) {
                        d = d.max((u - v).abs());
                    }
                }
            }
            _ => return f64::INFINITY,
        }
    }
    d
}

/// Class permutation `perm[true_class] = fitted_class` minimising the
/// total absolute difference of Bernoulli parameters.
pub fn best_matching(truth: &LcaParams, fitted: &LcaParams) -> Vec<usize> {
    let k = truth.class_weights.len();
    let cost = |t: usize, f: usize| -> f64 {
        truth
            .item_params
            .iter()
            .zip(&fitted.item_params)
            .map(|(a, b)| match (a, b) {
                (ItemParams::Bernoulli { p: x }, ItemParams::Bernoulli { p: y }) => {
                    (x[t] - y[f]).abs()
                }
                _ => 0.0,
            })
            .sum()
    };
    (0..k)
        .permutations(k)
        .min_by(|a, b| {
            let ca: f64 = a.iter().enumerate().map(|(t, &f)| cost(t, f)).sum();
            let cb: f64 = b.iter().enumerate().map(|(t, &f)| cost(t, f)).sum();
            ca.total_cmp(&cb)
        })
        .unwrap()
}

// ---------------------------------------------------------------------------
// Statistics oracles
// ---------------------------------------------------------------------------

/// Textbook Pearson: covariance over the product of standard deviations.
pub fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (a - mx) * (b - my))
        .sum::<f64>()
        / n;
    let sx = (x.iter().map(|a| (a - mx).powi(2)).sum::<f64>() / n).sqrt();
    let sy = (y.iter().map(|b| (b - my).powi(2)).sum::<f64>() / n).sqrt();
    cov / (sx * sy)
}

/// Mid-ranks by counting smaller and equal values.
pub fn rank_oracle(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let less = x.iter().filter(|&&u| u < v).count() as f64;
            let equal = x.iter().filter(|&&u| u == v).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

pub fn spearman_oracle(x: &[f64], y: &[f64]) -> f64 {
    pearson_oracle(&rank_oracle(x), &rank_oracle(y))
}

/// Nested-loop class shares per group.
pub fn proportions_oracle(
    labels: &[usize],
    groups: &[usize],
    n_groups: usize,
    k: usize,
) -> Array2<f64> {
    let mut out = Array2::zeros((n_groups, k));
    for e in 0..n_groups {
        let members: Vec<usize> = (0..groups.len()).filter(|&i| groups[i] == e).collect();
        for c in 0..k {
            let hits = members.iter().filter(|&&i| labels[i] == c).count();
            out[[e, c]] = hits as f64 / members.len() as f64;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Pipeline fixtures
// ---------------------------------------------------------------------------

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub config: PathBuf,
}

impl Fixture {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn out(&self) -> PathBuf {
        self.dir.path().join("out")
    }
}

pub fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

/// Writes data, schema and a config with `config_tail` appended after the
/// mandatory keys.
pub fn fixture(csv: &str, schema: &str, seed: u64, config_tail: &str) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("data.csv"), csv);
    write(&dir.path().join("schema.toml"), schema);
    let config = dir.path().join("run.toml");
    write(
        &config,
        &format!("seed = {seed}\nout_dir = \"out\"\n\n[data]\ninput = \"data.csv\"\nschema = \"schema.toml\"\n\n{config_tail}"),
    );
    Fixture { dir, config }
}

/// Every regular file in `dir`, sorted, with its bytes.
pub fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

/// Manifest JSON with the `timings` key removed.
pub fn manifest_without_timings(bytes: &[u8]) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
    v.as_object_mut().unwrap().remove("timings");
    v
}
