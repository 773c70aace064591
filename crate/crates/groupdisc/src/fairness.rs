//! Classifier fairness harness: train logistic regression or a one-hidden-layer
//! MLP on encoded features, repeat over random splits, and report per-group
//! false positive rates.
//!
//! Label 0 is the negative class. FPR counts label-0 samples predicted as 1,
//! over all label-0 samples in scope.

use std::fmt::Write as _;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::EncodedDataset;
use crate::discrepancy::csv_field;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub features: Array2<f64>,
    pub labels: Vec<u8>,
    pub group_of: Vec<usize>,
    pub group_names: Vec<String>,
}

impl LabeledDataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<u8>,
        group_of: Vec<usize>,
        group_names: Vec<String>,
    ) -> Result<Self> {
        let n = features.nrows();
        for len in [labels.len(), group_of.len()] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: len,
                });
            }
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::config("labels must be 0 or 1"));
        }
        if !labels.contains(&0) {
            return Err(Error::NoNegatives);
        }
        if !labels.contains(&1) {
            return Err(Error::SingleClassTrainingSet);
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("features must be finite"));
        }
        let mut seen = vec![false; group_names.len()];
        for &g in &group_of {
            *seen
                .get_mut(g)
                .ok_or_else(|| Error::ShapeMismatch(format!("group index {g} out of range")))? =
                true;
        }
        if let Some(e) = seen.iter().position(|s| !s) {
            return Err(Error::EmptyGroup(group_names[e].clone()));
        }
        Ok(LabeledDataset {
            features,
            labels,
            group_of,
            group_names,
        })
    }

    /// One-hot features of an encoded dataset with its grouping.
    pub fn from_encoded(data: &EncodedDataset, labels: Vec<u8>) -> Result<Self> {
        LabeledDataset::new(
            data.responses().one_hot(),
            labels,
            data.group_of().to_vec(),
            data.group_names().to_vec(),
        )
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_groups(&self) -> usize {
        self.group_names.len()
    }
}

/// Levels 1..=5 become 0, 6..=10 become 1.
pub fn relabel_binary(levels: &[i64]) -> Result<Vec<u8>> {
    levels
        .iter()
        .map(|&l| match l {
            1..=5 => Ok(0),
            6..=10 => Ok(1),
            _ => Err(Error::LevelOutOfRange(l)),
        })
        .collect()
}

pub fn false_positive_rate(predictions: &[u8], labels: &[u8]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            got: predictions.len(),
        });
    }
    let (mut fp, mut tn) = (0usize, 0usize);
    for (&p, &l) in predictions.iter().zip(labels) {
        if l == 0 {
            if p == 1 {
                fp += 1;
            } else {
                tn += 1;
            }
        }
    }
    if fp + tn == 0 {
        return Err(Error::NoNegatives);
    }
    Ok(fp as f64 / (fp + tn) as f64)
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LogisticRegression,
    Mlp,
    /// Predicts 0 for everything.
    ConstantZero,
    /// Predicts 1 for everything.
    ConstantOne,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::LogisticRegression => "logistic_regression",
            ModelKind::Mlp => "mlp",
            ModelKind::ConstantZero => "constant_zero",
            ModelKind::ConstantOne => "constant_one",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic_regression" | "lr" => Ok(ModelKind::LogisticRegression),
            "mlp" => Ok(ModelKind::Mlp),
            "constant_zero" => Ok(ModelKind::ConstantZero),
            "constant_one" => Ok(ModelKind::ConstantOne),
            other => Err(Error::config(format!("unknown model kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticHyper {
    pub learning_rate: f64,
    pub l2: f64,
    pub max_epochs: usize,
    pub grad_tol: f64,
}

impl Default for LogisticHyper {
    fn default() -> Self {
        LogisticHyper {
            learning_rate: 0.1,
            l2: 1e-4,
            max_epochs: 5000,
            grad_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpHyper {
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
}

impl Default for MlpHyper {
    fn default() -> Self {
        MlpHyper {
            hidden: 32,
            learning_rate: 0.01,
            epochs: 200,
            batch_size: 32,
            l2: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model_kind: ModelKind,
    pub split_ratio: f64,
    pub n_repeats: usize,
    pub sampling_ratio: f64,
    pub seed: u64,
    pub stratify: bool,
    pub standardize: bool,
    pub threshold: f64,
    pub logistic: LogisticHyper,
    pub mlp: MlpHyper,
}

impl TrainConfig {
    pub fn new(model_kind: ModelKind, seed: u64) -> Self {
        TrainConfig {
            model_kind,
            split_ratio: 0.8,
            n_repeats: 10,
            sampling_ratio: 1.0,
            seed,
            stratify: true,
            standardize: true,
            threshold: 0.5,
            logistic: LogisticHyper::default(),
            mlp: MlpHyper::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::config(format!(
                "split_ratio must be in (0,1), got {}",
                self.split_ratio
            )));
        }
        if !(self.sampling_ratio > 0.0 && self.sampling_ratio <= 1.0) {
            return Err(Error::config(format!(
                "sampling_ratio must be in (0,1], got {}",
                self.sampling_ratio
            )));
        }
        if self.n_repeats < 1 {
            return Err(Error::config("n_repeats must be >= 1"));
        }
        if self.model_kind == ModelKind::Mlp && (self.mlp.hidden < 1 || self.mlp.batch_size < 1) {
            return Err(Error::config("mlp needs hidden >= 1 and batch_size >= 1"));
        }
        Ok(())
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of logit `z` against `y`: `log(1 + e^z) - y z`.
fn bce_from_logit(z: f64, y: u8) -> f64 {
    let softplus = if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    };
    softplus - f64::from(y) * z
}

fn check_training_labels(y: &[u8]) -> Result<()> {
    if !(y.contains(&0) && y.contains(&1)) {
        return Err(Error::SingleClassTrainingSet);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Array1<f64>,
    pub bias: f64,
    pub n_epochs: usize,
}

/// Mean BCE plus `l2/2 * |w|^2`, with gradients in `w` and `b`.
pub fn logistic_loss_and_grad(
    weights: ArrayView1<f64>,
    bias: f64,
    x: ArrayView2<f64>,
    y: &[u8],
    l2: f64,
) -> (f64, Array1<f64>, f64) {
    let n = x.nrows() as f64;
    let z = x.dot(&weights) + bias;
    let mut loss = 0.0;
    let mut resid = Array1::zeros(x.nrows());
    for (i, &zi) in z.iter().enumerate() {
        loss += bce_from_logit(zi, y[i]);
        resid[i] = sigmoid(zi) - f64::from(y[i]);
    }
    loss = loss / n + 0.5 * l2 * weights.dot(&weights);
    let grad_w = x.t().dot(&resid) / n + &(&weights * l2);
    let grad_b = resid.sum() / n;
    (loss, grad_w, grad_b)
}

/// Full-batch gradient descent from zero weights.
pub fn train_logistic(x: ArrayView2<f64>, y: &[u8], hp: &LogisticHyper) -> Result<LogisticModel> {
    check_training_labels(y)?;
    let mut w = Array1::zeros(x.ncols());
    let mut b = 0.0;
    let mut epochs = 0;
    while epochs < hp.max_epochs {
        let (loss, gw, gb) = logistic_loss_and_grad(w.view(), b, x, y, hp.l2);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        let max_norm = gw.iter().fold(gb.abs(), |m, v| m.max(v.abs()));
        if max_norm < hp.grad_tol {
            break;
        }
        w.scaled_add(-hp.learning_rate, &gw);
        b -= hp.learning_rate * gb;
        epochs += 1;
    }
    Ok(LogisticModel {
        weights: w,
        bias: b,
        n_epochs: epochs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    /// `hidden x features`.
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array1<f64>,
    pub b2: f64,
}

impl MlpModel {
    /// Xavier-uniform weights, zero biases.
    pub fn init(n_features: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let a1 = (6.0 / (n_features + hidden) as f64).sqrt();
        let a2 = (6.0 / (hidden + 1) as f64).sqrt();
        let w1 = Array2::from_shape_fn((hidden, n_features), |_| rng.random_range(-a1..=a1));
        let w2 = Array1::from_shape_fn(hidden, |_| rng.random_range(-a2..=a2));
        MlpModel {
            w1,
            b1: Array1::zeros(hidden),
            w2,
            b2: 0.0,
        }
    }

    fn logits(&self, x: ArrayView2<f64>) -> (Array2<f64>, Array1<f64>) {
        let h = (x.dot(&self.w1.t()) + &self.b1).mapv(f64::tanh);
        let z = h.dot(&self.w2) + self.b2;
        (h, z)
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Array1<f64> {
        self.logits(x).1.mapv(sigmoid)
    }
}

/// Mean BCE plus `l2/2` times the squared weight norms (biases excluded),
/// with the gradient laid out as an `MlpModel`.
pub fn mlp_loss_and_grad(net: &MlpModel, x: ArrayView2<f64>, y: &[u8], l2: f64) -> (f64, MlpModel) {
    let n = x.nrows() as f64;
    let (h, z) = net.logits(x);
    let mut loss = 0.0;
    let mut dz = Array1::zeros(x.nrows());
    for (i, &zi) in z.iter().enumerate() {
        loss += bce_from_logit(zi, y[i]);
        dz[i] = (sigmoid(zi) - f64::from(y[i])) / n;
    }
    loss = loss / n + 0.5 * l2 * (net.w1.iter().map(|v| v * v).sum::<f64>() + net.w2.dot(&net.w2));
    let gw2 = h.t().dot(&dz) + &(&net.w2 * l2);
    let gb2 = dz.sum();
    // dL/dpre = dz * w2 * (1 - h^2)
    let mut dpre = h.mapv(|v| 1.0 - v * v);
    for (mut row, &d) in dpre.rows_mut().into_iter().zip(&dz) {
        row *= &(&net.w2 * d);
    }
    let gw1 = dpre.t().dot(&x) + &(&net.w1 * l2);
    let gb1 = dpre.sum_axis(Axis(0));
    (
        loss,
        MlpModel {
            w1: gw1,
            b1: gb1,
            w2: gw2,
            b2: gb2,
        },
    )
}

/// Mini-batch gradient descent over a freshly shuffled order each epoch.
pub fn train_mlp(x: ArrayView2<f64>, y: &[u8], hp: &MlpHyper, seed: u64) -> Result<MlpModel> {
    check_training_labels(y)?;
    let mut rng = seed::rng(seed, "mlp/init", 0);
    let mut net = MlpModel::init(x.ncols(), hp.hidden, &mut rng);
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut shuffle_rng = seed::rng(seed, "mlp/batches", 0);
    for _ in 0..hp.epochs {
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(hp.batch_size) {
            let xb = x.select(Axis(0), batch);
            let yb: Vec<u8> = batch.iter().map(|&i| y[i]).collect();
            let (loss, g) = mlp_loss_and_grad(&net, xb.view(), &yb, hp.l2);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss);
            }
            net.w1.scaled_add(-hp.learning_rate, &g.w1);
            net.b1.scaled_add(-hp.learning_rate, &g.b1);
            net.w2.scaled_add(-hp.learning_rate, &g.w2);
            net.b2 -= hp.learning_rate * g.b2;
        }
    }
    Ok(net)
}

/// Per-column affine map fitted on training rows. Constant columns are only centred.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mean = x.sum_axis(Axis(0)) / n;
        let var = (&x - &mean).mapv(|v| v * v).sum_axis(Axis(0)) / n;
        let scale = var.mapv(|v| if v > 0.0 { v.sqrt() } else { 1.0 });
        Standardizer { mean, scale }
    }

    pub fn identity(d: usize) -> Self {
        Standardizer {
            mean: Array1::zeros(d),
            scale: Array1::ones(d),
        }
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Array2<f64> {
        (&x - &self.mean) / &self.scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Classifier {
    Logistic(LogisticModel),
    Mlp(MlpModel),
    Constant(u8),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedClassifier {
    pub standardizer: Standardizer,
    pub model: Classifier,
}

impl TrainedClassifier {
    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let xs = self.standardizer.transform(x);
        match &self.model {
            Classifier::Logistic(m) => (xs.dot(&m.weights) + m.bias).mapv(sigmoid),
            Classifier::Mlp(m) => m.predict_proba(xs.view()),
            Classifier::Constant(c) => Array1::from_elem(x.nrows(), f64::from(*c)),
        }
    }

    /// 1 where the probability exceeds `threshold`.
    pub fn predict(&self, x: ArrayView2<f64>, threshold: f64) -> Vec<u8> {
        self.predict_proba(x)
            .iter()
            .map(|&p| u8::from(p > threshold))
            .collect()
    }
}

/// Trains the configured model on `(x, y)`; `seed` only matters for the MLP.
pub fn train(
    x: ArrayView2<f64>,
    y: &[u8],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainedClassifier> {
    check_training_labels(y)?;
    let standardizer = if cfg.standardize {
        Standardizer::fit(x)
    } else {
        Standardizer::identity(x.ncols())
    };
    let xs = standardizer.transform(x);
    let model = match cfg.model_kind {
        ModelKind::LogisticRegression => {
            Classifier::Logistic(train_logistic(xs.view(), y, &cfg.logistic)?)
        }
        ModelKind::Mlp => Classifier::Mlp(train_mlp(xs.view(), y, &cfg.mlp, seed)?),
        ModelKind::ConstantZero => Classifier::Constant(0),
        ModelKind::ConstantOne => Classifier::Constant(1),
    };
    Ok(TrainedClassifier {
        standardizer,
        model,
    })
}

// ---------------------------------------------------------------------------
// Experiment
// ---------------------------------------------------------------------------

/// Validation-set confusion counts of one group in one repeat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroupCounts {
    pub negatives: usize,
    pub positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatOutcome {
    /// Rows of the full dataset used in this repeat, ascending.
    pub sampled: Vec<usize>,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    /// Predictions aligned with `validation`.
    pub predictions: Vec<u8>,
    pub counts: Vec<GroupCounts>,
    /// `None` where the group had no label-0 validation members.
    pub fpr: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupFpr {
    pub group: String,
    pub mean: Option<f64>,
    /// Population standard deviation over the repeats where FPR was defined.
    pub std: Option<f64>,
    pub n_valid_repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub model_kind: ModelKind,
    pub config: TrainConfig,
    pub per_group_fpr: Vec<GroupFpr>,
    pub repeats: Vec<RepeatOutcome>,
}

impl FairnessReport {
    pub fn means(&self) -> Vec<Option<f64>> {
        self.per_group_fpr.iter().map(|g| g.mean).collect()
    }

    pub fn csv_header() -> &'static str {
        "group,model,sampling_ratio,fpr_mean,fpr_std,n_valid_repeats\n"
    }

    /// Rows without the header, so reports can be concatenated.
    pub fn csv_rows(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::new();
        for g in &self.per_group_fpr {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                csv_field(&g.group),
                self.model_kind.name(),
                self.config.sampling_ratio,
                fmt(g.mean),
                fmt(g.std),
                g.n_valid_repeats
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        format!("{}{}", Self::csv_header(), self.csv_rows())
    }
}

/// Uniform subsample of `round(ratio * n)` rows (at least one), ascending.
fn subsample(n: usize, ratio: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let m = ((ratio * n as f64).round() as usize).clamp(1, n);
    if m == n {
        return (0..n).collect();
    }
    let mut picked = rand::seq::index::sample(rng, n, m).into_vec();
    picked.sort_unstable();
    picked
}

/// Splits `rows` into (train, validation). Stratified splits take
/// `round(ratio * n_label)` of each label for training.
pub fn split_rows(
    rows: &[usize],
    labels: &[u8],
    ratio: f64,
    stratify: bool,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut valid = Vec::new();
    let strata: Vec<Vec<usize>> = if stratify {
        (0..=1u8)
            .map(|l| rows.iter().copied().filter(|&i| labels[i] == l).collect())
            .collect()
    } else {
        vec![rows.to_vec()]
    };
    for mut stratum in strata {
        stratum.shuffle(rng);
        let k = (ratio * stratum.len() as f64).round() as usize;
        train.extend_from_slice(&stratum[..k]);
        valid.extend_from_slice(&stratum[k..]);
    }
    train.sort_unstable();
    valid.sort_unstable();
    (train, valid)
}

fn population_mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (Some(mean), Some(var.sqrt()))
}

pub fn run_fairness_experiment(data: &LabeledDataset, cfg: &TrainConfig) -> Result<FairnessReport> {
    cfg.validate()?;
    let g = data.n_groups();
    let mut repeats = Vec::with_capacity(cfg.n_repeats);
    for r in 0..cfg.n_repeats {
        let mut rng = seed::rng(cfg.seed, "fairness/repeat", r as u64);
        let sampled = subsample(data.n_samples(), cfg.sampling_ratio, &mut rng);
        let (train_rows, valid_rows) = split_rows(
            &sampled,
            &data.labels,
            cfg.split_ratio,
            cfg.stratify,
            &mut rng,
        );
        let x_train = data.features.select(Axis(0), &train_rows);
        let y_train: Vec<u8> = train_rows.iter().map(|&i| data.labels[i]).collect();
        let model = train(
            x_train.view(),
            &y_train,
            cfg,
            seed::substream(cfg.seed, "fairness/model", r as u64),
        )?;
        let x_valid = data.features.select(Axis(0), &valid_rows);
        let predictions = model.predict(x_valid.view(), cfg.threshold);

        let mut counts = vec![GroupCounts::default(); g];
        for (&i, &p) in valid_rows.iter().zip(&predictions) {
            let c = &mut counts[data.group_of[i]];
            if data.labels[i] == 0 {
                c.negatives += 1;
                if p == 1 {
                    c.false_positives += 1;
                } else {
                    c.true_negatives += 1;
                }
            } else {
                c.positives += 1;
            }
        }
        let fpr = counts
            .iter()
            .map(|c| (c.negatives > 0).then(|| c.false_positives as f64 / c.negatives as f64))
            .collect();
        repeats.push(RepeatOutcome {
            sampled,
            train: train_rows,
            validation: valid_rows,
            predictions,
            counts,
            fpr,
        });
    }

    let per_group_fpr = (0..g)
        .map(|e| {
            let vals: Vec<f64> = repeats.iter().filter_map(|rep| rep.fpr[e]).collect();
            let (mean, std) = population_mean_std(&vals);
            GroupFpr {
                group: data.group_names[e].clone(),
                mean,
                std,
                n_valid_repeats: vals.len(),
            }
        })
        .collect();
    Ok(FairnessReport {
        model_kind: cfg.model_kind,
        config: cfg.clone(),
        per_group_fpr,
        repeats,
    })
}
