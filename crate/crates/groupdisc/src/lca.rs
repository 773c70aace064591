//! Latent class model over binary and categorical indicators, fitted by EM.
//!
//! The joint of class `c` and response vector `x` factorises as
//! `p(c) * prod_j p(x_j | c)`; items are conditionally independent given the
//! class. Every probability is kept inside `[PROB_FLOOR, 1 - PROB_FLOOR]`.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{ItemKind, Responses};
use crate::error::{Error, Result};
use crate::seed;

pub const PROB_FLOOR: f64 = 1e-6;

/// Minimum total responsibility a class needs to survive an M-step.
const DEAD_CLASS_MASS: f64 = 1e-12;

/// Class-conditional parameters of one item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ItemParams {
    /// `p[c]` is the probability that the indicator is 1 in class `c`.
    Bernoulli { p: Vec<f64> },
    /// `probs[c][m]`, each row sums to one.
    Categorical { probs: Vec<Vec<f64>> },
}

impl ItemParams {
    pub fn n_categories(&self) -> usize {
        match self {
            ItemParams::Bernoulli { .. } => 2,
            ItemParams::Categorical { probs } => probs.first().map_or(0, Vec::len),
        }
    }

    /// `P(x = value | class)`.
    pub fn prob(&self, class: usize, value: u32) -> f64 {
        match self {
            ItemParams::Bernoulli { p } => {
                if value == 1 {
                    p[class]
                } else {
                    1.0 - p[class]
                }
            }
            ItemParams::Categorical { probs } => probs[class][value as usize],
        }
    }
}

/// Class weights and item parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcaParams {
    pub class_weights: Vec<f64>,
    pub item_params: Vec<ItemParams>,
}

impl LcaParams {
    pub fn n_classes(&self) -> usize {
        self.class_weights.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_params.len()
    }

    fn check_row(&self, row: &[u32]) -> Result<()> {
        if row.len() != self.item_params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.item_params.len(),
                got: row.len(),
            });
        }
        for (params, &v) in self.item_params.iter().zip(row) {
            let m = params.n_categories();
            if v as usize >= m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: v as usize + 1,
                });
            }
        }
        Ok(())
    }

    fn check_data(&self, data: &Responses) -> Result<()> {
        if data.n_items() != self.n_items() {
            return Err(Error::DimensionMismatch {
                expected: self.n_items(),
                got: data.n_items(),
            });
        }
        for (params, item) in self.item_params.iter().zip(data.items()) {
            if params.n_categories() != item.n_categories() {
                return Err(Error::DimensionMismatch {
                    expected: params.n_categories(),
                    got: item.n_categories(),
                });
            }
        }
        Ok(())
    }

    /// Log-probability lookup, `tables[j][c * M_j + m]`.
    fn log_tables(&self) -> Vec<Vec<f64>> {
        let k = self.n_classes();
        self.item_params
            .iter()
            .map(|params| {
                let m = params.n_categories();
                let mut t = Vec::with_capacity(k * m);
                for c in 0..k {
                    for v in 0..m {
                        t.push(params.prob(c, v as u32).ln());
                    }
                }
                t
            })
            .collect()
    }
}

/// A fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcaModel {
    pub n_classes: usize,
    #[serde(flatten)]
    pub params: LcaParams,
    pub item_ids: Vec<String>,
    /// Training log-likelihood of `params`.
    pub log_likelihood: f64,
    pub n_iterations: usize,
    pub seed: u64,
    /// Index of the restart that produced this model.
    pub restart: usize,
    /// Log-likelihood after every E-step of the winning run.
    pub ll_trace: Vec<f64>,
}

impl LcaModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentMode {
    #[default]
    MapHard,
    Soft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub n_classes: usize,
    pub max_iter: usize,
    /// Stop when `|LL_t - LL_{t-1}| / |LL_{t-1}|` falls below this.
    pub rel_tol: f64,
    pub n_restarts: usize,
    pub seed: u64,
    pub assignment: AssignmentMode,
}

impl FitConfig {
    pub fn new(n_classes: usize, seed: u64) -> Self {
        FitConfig {
            n_classes,
            max_iter: 500,
            rel_tol: 1e-8,
            n_restarts: 10,
            seed,
            assignment: AssignmentMode::MapHard,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 1 {
            return Err(Error::config("number of classes must be >= 1"));
        }
        if self.max_iter < 1 {
            return Err(Error::config("max_iter must be >= 1"));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::config("rel_tol must be positive"));
        }
        if self.n_restarts < 1 {
            return Err(Error::config("n_restarts must be >= 1"));
        }
        Ok(())
    }
}

/// Posterior class probabilities and MAP classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub responsibilities: Array2<f64>,
    pub map_class: Vec<usize>,
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// `log p(c) + sum_j log p(x_j | c)` for every class `c`.
pub fn log_joint(params: &LcaParams, row: &[u32]) -> Result<Vec<f64>> {
    params.check_row(row)?;
    Ok((0..params.n_classes())
        .map(|c| {
            params.class_weights[c].ln()
                + params
                    .item_params
                    .iter()
                    .zip(row)
                    .map(|(ip, &v)| ip.prob(c, v).ln())
                    .sum::<f64>()
        })
        .collect())
}

fn fill_log_joint(tables: &[Vec<f64>], log_w: &[f64], row: &[u32], out: &mut [f64]) {
    for (c, slot) in out.iter_mut().enumerate() {
        let mut acc = log_w[c];
        for (t, &v) in tables.iter().zip(row) {
            let m = t.len() / log_w.len();
            acc += t[c * m + v as usize];
        }
        *slot = acc;
    }
}

/// Responsibilities and total log-likelihood under `params`.
pub fn e_step(params: &LcaParams, data: &Responses) -> Result<(Assignment, f64)> {
    params.check_data(data)?;
    let k = params.n_classes();
    let n = data.n_rows();
    let tables = params.log_tables();
    let log_w: Vec<f64> = params.class_weights.iter().map(|w| w.ln()).collect();
    let mut resp = Array2::zeros((n, k));
    let mut map_class = Vec::with_capacity(n);
    let mut total = 0.0;
    let mut lj = vec![0.0; k];
    for (i, row) in data.rows().enumerate() {
        fill_log_joint(&tables, &log_w, row, &mut lj);
        let lse = log_sum_exp(&lj);
        total += lse;
        let mut r = resp.row_mut(i);
        for c in 0..k {
            r[c] = (lj[c] - lse).exp();
        }
        let s: f64 = r.sum();
        r.mapv_inplace(|v| v / s);
        map_class.push(argmax(r.iter().copied()));
    }
    if !total.is_finite() {
        return Err(Error::NonFiniteLikelihood);
    }
    Ok((
        Assignment {
            responsibilities: resp,
            map_class,
        },
        total,
    ))
}

/// Total log-likelihood of `data` under `params`.
pub fn log_likelihood(params: &LcaParams, data: &Responses) -> Result<f64> {
    params.check_data(data)?;
    let k = params.n_classes();
    let tables = params.log_tables();
    let log_w: Vec<f64> = params.class_weights.iter().map(|w| w.ln()).collect();
    let mut lj = vec![0.0; k];
    let mut total = 0.0;
    for row in data.rows() {
        fill_log_joint(&tables, &log_w, row, &mut lj);
        total += log_sum_exp(&lj);
    }
    if !total.is_finite() {
        return Err(Error::NonFiniteLikelihood);
    }
    Ok(total)
}

/// Maximises `sum_m counts[m] * ln p[m]` over the simplex with every
/// `p[m] >= floor`. Entries whose unconstrained share would fall below the
/// floor are pinned to it and the rest rescaled.
pub(crate) fn floored_simplex(counts: &[f64], floor: f64) -> Vec<f64> {
    let m = counts.len();
    let mut pinned = vec![false; m];
    let mut out = vec![floor; m];
    loop {
        let n_pinned = pinned.iter().filter(|&&p| p).count();
        let free_mass = 1.0 - floor * n_pinned as f64;
        let free_total: f64 = counts
            .iter()
            .zip(&pinned)
            .filter(|(_, &p)| !p)
            .map(|(c, _)| c)
            .sum();
        let n_free = m - n_pinned;
        let mut changed = false;
        for i in 0..m {
            if pinned[i] {
                out[i] = floor;
                continue;
            }
            out[i] = if free_total > 0.0 {
                counts[i] / free_total * free_mass
            } else {
                free_mass / n_free as f64
            };
            if out[i] < floor {
                pinned[i] = true;
                changed = true;
            }
        }
        if !changed {
            return out;
        }
    }
}

/// Maximum-likelihood parameters given responsibilities.
pub fn m_step(data: &Responses, responsibilities: &Array2<f64>) -> Result<LcaParams> {
    let n = data.n_rows();
    let (rows, k) = responsibilities.dim();
    if rows != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: rows,
        });
    }
    if k == 0 {
        return Err(Error::config("responsibilities have no classes"));
    }
    let class_mass: Vec<f64> = (0..k).map(|c| responsibilities.column(c).sum()).collect();
    if let Some(dead) = class_mass.iter().position(|&m| !(m >= DEAD_CLASS_MASS)) {
        return Err(Error::DegenerateClass { class: dead });
    }
    let class_weights = if k == 1 {
        vec![1.0]
    } else {
        floored_simplex(&class_mass, PROB_FLOOR)
    };

    let item_params = data
        .items()
        .iter()
        .enumerate()
        .map(|(j, item)| {
            let m = item.n_categories();
            // counts[c][v] = sum_i gamma_ic [x_ij = v]
            let mut counts = vec![vec![0.0; m]; k];
            for (i, row) in data.rows().enumerate() {
                let v = row[j] as usize;
                for (c, cc) in counts.iter_mut().enumerate() {
                    cc[v] += responsibilities[[i, c]];
                }
            }
            match item.kind {
                ItemKind::BinaryIndicator => ItemParams::Bernoulli {
                    p: counts
                        .iter()
                        .zip(&class_mass)
                        .map(|(cc, mass)| (cc[1] / mass).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR))
                        .collect(),
                },
                ItemKind::Categorical => ItemParams::Categorical {
                    probs: counts
                        .iter()
                        .map(|cc| floored_simplex(cc, PROB_FLOOR))
                        .collect(),
                },
            }
        })
        .collect();

    Ok(LcaParams {
        class_weights,
        item_params,
    })
}

fn dirichlet_responsibilities(n: usize, k: usize, rng: &mut impl Rng) -> Array2<f64> {
    let mut resp = Array2::zeros((n, k));
    for mut row in resp.rows_mut() {
        for v in row.iter_mut() {
            // Exp(1) draws normalised per row give Dirichlet(1, ..., 1).
            let u: f64 = rng.random();
            *v = -(1.0 - u).ln();
        }
        let s = row.sum();
        if s > 0.0 {
            row.mapv_inplace(|v| v / s);
        } else {
            row.fill(1.0 / k as f64);
        }
    }
    resp
}

struct RunOutcome {
    params: LcaParams,
    log_likelihood: f64,
    trace: Vec<f64>,
}

fn run_em(data: &Responses, cfg: &FitConfig, restart: usize) -> Result<RunOutcome> {
    let mut rng = seed::rng(cfg.seed, "lca/restart", restart as u64);
    let init = dirichlet_responsibilities(data.n_rows(), cfg.n_classes, &mut rng);
    let mut params = m_step(data, &init)?;
    let mut trace: Vec<f64> = Vec::new();
    for t in 0..cfg.max_iter {
        let (assignment, ll) = e_step(&params, data)?;
        let converged = trace.last().is_some_and(|&prev| {
            ((ll - prev) / prev.abs().max(f64::MIN_POSITIVE)).abs() < cfg.rel_tol
        });
        trace.push(ll);
        if converged || t + 1 == cfg.max_iter {
            return Ok(RunOutcome {
                params,
                log_likelihood: ll,
                trace,
            });
        }
        params = m_step(data, &assignment.responsibilities)?;
    }
    unreachable!("max_iter >= 1 is validated")
}

/// Fits `cfg.n_restarts` EM runs and keeps the one with the highest final
/// log-likelihood (ties go to the earlier restart). Runs that hit a dead
/// class are discarded; if every run fails the last error is returned.
pub fn fit(data: &Responses, cfg: &FitConfig) -> Result<LcaModel> {
    cfg.validate()?;
    if data.n_rows() == 0 {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let mut best: Option<(usize, RunOutcome)> = None;
    let mut last_err = None;
    for r in 0..cfg.n_restarts {
        match run_em(data, cfg, r) {
            Ok(run) => {
                if best
                    .as_ref()
                    .is_none_or(|(_, b)| run.log_likelihood > b.log_likelihood)
                {
                    best = Some((r, run));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let (restart, run) = match best {
        Some(b) => b,
        None => return Err(last_err.unwrap_or(Error::NonFiniteLikelihood)),
    };
    Ok(LcaModel {
        n_classes: cfg.n_classes,
        item_ids: data.items().iter().map(|it| it.item_id.clone()).collect(),
        log_likelihood: run.log_likelihood,
        n_iterations: run.trace.len(),
        seed: cfg.seed,
        restart,
        ll_trace: run.trace,
        params: run.params,
    })
}

/// Responsibilities and MAP classes of `data` under a fitted model.
pub fn assign(model: &LcaModel, data: &Responses) -> Result<Assignment> {
    e_step(&model.params, data).map(|(a, _)| a)
}
