//! Validation analytics: PCA of group profiles, Pearson and Spearman
//! correlation between discrepancy matrices, and discrepancy matrices built
//! from external per-group label distributions.

use std::fmt::Write as _;

use itertools::Itertools;
use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::discrepancy::{self, csv_field, AvgMode, DiscrepancyMatrix, Metric, ProportionMatrix};
use crate::error::{Error, Result};

/// Largest `n` for which exact permutation p-values are enumerated.
pub const MAX_EXACT_PERMUTATION_N: usize = 10;

// ---------------------------------------------------------------------------
// PCA
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    /// `|G| x d` scores of the centred rows.
    pub coordinates: Array2<f64>,
    pub explained_variance_ratio: Vec<f64>,
    /// `d x |C|`, orthonormal rows; the largest-magnitude entry of each is positive.
    pub component_axes: Array2<f64>,
    pub group_names: Vec<String>,
}

impl PcaProjection {
    /// Index of each group's nearest other group in the projected space.
    pub fn nearest_neighbors(&self) -> Vec<usize> {
        let g = self.coordinates.nrows();
        (0..g)
            .map(|a| {
                let mut best = (usize::MAX, f64::INFINITY);
                for b in (0..g).filter(|&b| b != a) {
                    let d: f64 = self
                        .coordinates
                        .row(a)
                        .iter()
                        .zip(self.coordinates.row(b))
                        .map(|(x, y)| (x - y).powi(2))
                        .sum();
                    if d < best.1 {
                        best = (b, d);
                    }
                }
                best.0
            })
            .collect()
    }

    /// `group,pc1,…,pcd,nearest_neighbor`.
    pub fn to_csv(&self) -> String {
        let d = self.coordinates.ncols();
        let mut out = String::from("group");
        for i in 1..=d {
            let _ = write!(out, ",pc{i}");
        }
        out.push_str(",nearest_neighbor\n");
        let nn = self.nearest_neighbors();
        for (e, name) in self.group_names.iter().enumerate() {
            out.push_str(&csv_field(name));
            for v in self.coordinates.row(e) {
                let _ = write!(out, ",{v}");
            }
            let neighbor = nn[e];
            let neighbor = if neighbor < self.group_names.len() {
                csv_field(&self.group_names[neighbor])
            } else {
                String::new()
            };
            let _ = writeln!(out, ",{neighbor}");
        }
        out
    }
}

/// Projects the rows of `p` onto their top `d` principal axes.
pub fn pca_project(p: &ProportionMatrix, d: usize) -> Result<PcaProjection> {
    pca_rows(&p.values, &p.group_names, d)
}

pub fn pca_rows(rows: &Array2<f64>, group_names: &[String], d: usize) -> Result<PcaProjection> {
    let (g, c) = rows.dim();
    let max = g.min(c);
    if d > max {
        return Err(Error::DimensionTooLarge { requested: d, max });
    }
    if d == 0 {
        return Err(Error::config("PCA needs at least one component"));
    }
    let mean = rows
        .mean_axis(ndarray::Axis(0))
        .unwrap_or_else(|| Array1::zeros(c));
    let centered = rows - &mean;
    let denom = (g.max(2) - 1) as f64;
    let cov = centered.t().dot(&centered) / denom;
    let cov_na = DMatrix::from_fn(c, c, |i, j| 0.5 * (cov[[i, j]] + cov[[j, i]]));
    let eig = SymmetricEigen::new(cov_na);

    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();

    let mut axes = Array2::zeros((d, c));
    for (r, &idx) in order.iter().take(d).enumerate() {
        let col = eig.eigenvectors.column(idx);
        let mut lead = 0;
        for i in 1..c {
            if col[i].abs() > col[lead].abs() {
                lead = i;
            }
        }
        let sign = if col[lead] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..c {
            axes[[r, i]] = sign * col[i];
        }
    }
    let explained_variance_ratio = eigenvalues
        .iter()
        .take(d)
        .map(|&l| if total > 0.0 { l / total } else { 0.0 })
        .collect();
    let coordinates = centered.dot(&axes.t());
    Ok(PcaProjection {
        coordinates,
        explained_variance_ratio,
        component_axes: axes,
        group_names: group_names.to_vec(),
    })
}

// ---------------------------------------------------------------------------
// Correlation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationKind {
    Pearson,
    Spearman,
}

impl CorrelationKind {
    pub fn name(self) -> &'static str {
        match self {
            CorrelationKind::Pearson => "pearson",
            CorrelationKind::Spearman => "spearman",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    /// Two-sided Student-t approximation with `n - 2` degrees of freedom.
    #[default]
    TApprox,
    /// Exact two-sided permutation test; only for `n <= 10`.
    ExactPermutation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub coefficient: f64,
    pub p_value: f64,
    pub n: usize,
    pub kind: CorrelationKind,
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch(format!(
            "lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::TooShort(x.len()));
    }
    Ok(())
}

/// Product-moment coefficient, without p-value.
fn pearson_coefficient(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if !(sxx > 0.0) || !(syy > 0.0) {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Two-sided p-value of `r` from the t statistic `r sqrt((n-2)/(1-r^2))`,
/// evaluated as `I_{1-r^2}((n-2)/2, 1/2)`. Perfect correlation gives the
/// smallest positive normal double.
pub fn t_test_p_value(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    let x = 1.0 - r * r;
    if x <= 0.0 {
        return f64::MIN_POSITIVE;
    }
    let p = statrs::function::beta::beta_reg(df / 2.0, 0.5, x.min(1.0));
    p.clamp(f64::MIN_POSITIVE, 1.0)
}

fn permutation_p_value(
    x: &[f64],
    y: &[f64],
    r: f64,
    coefficient: fn(&[f64], &[f64]) -> Result<f64>,
) -> Result<f64> {
    let n = x.len();
    if n > MAX_EXACT_PERMUTATION_N {
        return Err(Error::config(format!(
            "exact permutation p-values need n <= {MAX_EXACT_PERMUTATION_N}, got {n}"
        )));
    }
    let mut hits = 0u64;
    let mut total = 0u64;
    let mut permuted = vec![0.0; n];
    for perm in (0..n).permutations(n) {
        for (slot, &i) in permuted.iter_mut().zip(&perm) {
            *slot = y[i];
        }
        let rp = coefficient(x, &permuted)?;
        if rp.abs() >= r.abs() - 1e-12 {
            hits += 1;
        }
        total += 1;
    }
    Ok(hits as f64 / total as f64)
}

/// Average ranks (1-based); tied values share the mean of their ranks.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn spearman_coefficient(x: &[f64], y: &[f64]) -> Result<f64> {
    pearson_coefficient(&average_ranks(x), &average_ranks(y))
}

pub fn correlate(
    x: &[f64],
    y: &[f64],
    kind: CorrelationKind,
    method: PValueMethod,
) -> Result<CorrelationResult> {
    check_pair(x, y)?;
    let coefficient_fn: fn(&[f64], &[f64]) -> Result<f64> = match kind {
        CorrelationKind::Pearson => pearson_coefficient,
        CorrelationKind::Spearman => spearman_coefficient,
    };
    let coefficient = coefficient_fn(x, y)?;
    let p_value = match method {
        PValueMethod::TApprox => t_test_p_value(coefficient, x.len()),
        PValueMethod::ExactPermutation => permutation_p_value(x, y, coefficient, coefficient_fn)?,
    };
    Ok(CorrelationResult {
        coefficient,
        p_value,
        n: x.len(),
        kind,
    })
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    correlate(x, y, CorrelationKind::Pearson, PValueMethod::TApprox)
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    correlate(x, y, CorrelationKind::Spearman, PValueMethod::TApprox)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrelationOptions {
    pub kind: CorrelationKind,
    pub p_value: PValueMethod,
    /// Row-wise: keep the zero diagonal as a shared point.
    pub include_diagonal: bool,
    /// Flattened: use every cell instead of the strict upper triangle.
    pub flatten_full: bool,
}

impl CorrelationOptions {
    pub fn new(kind: CorrelationKind) -> Self {
        CorrelationOptions {
            kind,
            p_value: PValueMethod::TApprox,
            include_diagonal: true,
            flatten_full: false,
        }
    }
}

fn check_same_shape(a: &DiscrepancyMatrix, b: &DiscrepancyMatrix) -> Result<()> {
    if a.values.dim() != b.values.dim() {
        return Err(Error::ShapeMismatch(format!(
            "matrices are {:?} and {:?}",
            a.values.dim(),
            b.values.dim()
        )));
    }
    if a.group_names != b.group_names {
        return Err(Error::ShapeMismatch(
            "matrices list different groups".into(),
        ));
    }
    Ok(())
}

/// Correlates row `e` of `a` with row `e` of `b` for every group.
pub fn rowwise_correlations(
    a: &DiscrepancyMatrix,
    b: &DiscrepancyMatrix,
    opts: &CorrelationOptions,
) -> Result<Vec<CorrelationResult>> {
    check_same_shape(a, b)?;
    let g = a.n_groups();
    (0..g)
        .map(|e| {
            let keep = |f: &usize| opts.include_diagonal || *f != e;
            let x: Vec<f64> = (0..g).filter(keep).map(|f| a.values[[e, f]]).collect();
            let y: Vec<f64> = (0..g).filter(keep).map(|f| b.values[[e, f]]).collect();
            correlate(&x, &y, opts.kind, opts.p_value)
        })
        .collect()
}

fn flatten(m: &DiscrepancyMatrix, full: bool) -> Vec<f64> {
    let g = m.n_groups();
    if full {
        return m.values.iter().copied().collect();
    }
    (0..g)
        .flat_map(|i| (i + 1..g).map(move |j| (i, j)))
        .map(|(i, j)| m.values[[i, j]])
        .collect()
}

/// One correlation over the strict upper triangles (or whole matrices).
pub fn flattened_correlation(
    a: &DiscrepancyMatrix,
    b: &DiscrepancyMatrix,
    opts: &CorrelationOptions,
) -> Result<CorrelationResult> {
    check_same_shape(a, b)?;
    correlate(
        &flatten(a, opts.flatten_full),
        &flatten(b, opts.flatten_full),
        opts.kind,
        opts.p_value,
    )
}

/// A correlation tagged with where it came from, for report rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScopedCorrelation {
    pub scope: String,
    pub result: CorrelationResult,
}

/// `scope,kind,coefficient,p_value,n`.
pub fn correlations_to_csv(rows: &[ScopedCorrelation]) -> String {
    let mut out = String::from("scope,kind,coefficient,p_value,n\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            csv_field(&row.scope),
            row.result.kind.name(),
            row.result.coefficient,
            row.result.p_value,
            row.result.n
        );
    }
    out
}

// ---------------------------------------------------------------------------
// External reference profiles
// ---------------------------------------------------------------------------

/// Distribution of an external label (e.g. deprivation decile) per group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceProfileMatrix {
    pub values: Array2<f64>,
    pub level_names: Vec<String>,
    pub group_names: Vec<String>,
}

impl ReferenceProfileMatrix {
    /// Rows must be non-negative and sum to one within 1e-6.
    pub fn new(
        values: Array2<f64>,
        level_names: Vec<String>,
        group_names: Vec<String>,
    ) -> Result<Self> {
        let (g, l) = values.dim();
        if group_names.len() != g || level_names.len() != l {
            return Err(Error::ShapeMismatch(format!(
                "{g}x{l} values with {} group and {} level names",
                group_names.len(),
                level_names.len()
            )));
        }
        for (e, row) in values.rows().into_iter().enumerate() {
            if row.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::ShapeMismatch(format!(
                    "row {} has negative or non-finite entries",
                    e + 1
                )));
            }
            let s = row.sum();
            if (s - 1.0).abs() > 1e-6 {
                return Err(Error::ShapeMismatch(format!(
                    "row {} sums to {s}, not 1",
                    e + 1
                )));
            }
        }
        Ok(ReferenceProfileMatrix {
            values,
            level_names,
            group_names,
        })
    }

    /// Rescales every row of counts, percentages or shares to sum to one.
    pub fn from_weights(
        mut values: Array2<f64>,
        level_names: Vec<String>,
        group_names: Vec<String>,
    ) -> Result<Self> {
        for (e, mut row) in values.rows_mut().into_iter().enumerate() {
            let s = row.sum();
            if !(s > 0.0) {
                return Err(Error::ShapeMismatch(format!("row {} has no mass", e + 1)));
            }
            row.mapv_inplace(|v| v / s);
        }
        ReferenceProfileMatrix::new(values, level_names, group_names)
    }

    /// Cross-tab of per-sample `labels` by group.
    pub fn from_labels(
        group_of: &[usize],
        group_names: &[String],
        labels: &[String],
        level_names: &[String],
    ) -> Result<Self> {
        if group_of.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: group_of.len(),
                got: labels.len(),
            });
        }
        let mut counts = Array2::zeros((group_names.len(), level_names.len()));
        for (&e, label) in group_of.iter().zip(labels) {
            let l = level_names.iter().position(|n| n == label).ok_or_else(|| {
                Error::ShapeMismatch(format!("label `{label}` is not a listed level"))
            })?;
            if e >= group_names.len() {
                return Err(Error::ShapeMismatch(format!(
                    "group index {e} out of range"
                )));
            }
            counts[[e, l]] += 1.0;
        }
        for (e, row) in counts.rows().into_iter().enumerate() {
            if row.sum() == 0.0 {
                return Err(Error::EmptyGroup(group_names[e].clone()));
            }
        }
        ReferenceProfileMatrix::from_weights(counts, level_names.to_vec(), group_names.to_vec())
    }

    /// Reads `group,<level>,…` CSV; rows are rescaled to sum to one. A
    /// trailing `Total` column, if present, is ignored.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let header: Vec<String> = rdr
            .headers()?
            .iter()
            .map(|s| s.trim().to_string())
            .collect();
        let mut take = header.len();
        if header
            .last()
            .is_some_and(|h| h.eq_ignore_ascii_case("total"))
        {
            take -= 1;
        }
        if take < 2 {
            return Err(Error::ShapeMismatch(
                "reference CSV needs a group column and levels".into(),
            ));
        }
        let level_names = header[1..take].to_vec();
        let mut group_names = Vec::new();
        let mut flat = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            group_names.push(rec[0].trim().to_string());
            for cell in rec.iter().take(take).skip(1) {
                let cell = cell.trim().trim_end_matches('%');
                flat.push(
                    cell.parse::<f64>()
                        .map_err(|_| Error::ShapeMismatch(format!("`{cell}` is not a number")))?,
                );
            }
        }
        let values = Array2::from_shape_vec((group_names.len(), level_names.len()), flat)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        ReferenceProfileMatrix::from_weights(values, level_names, group_names)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("group");
        for l in &self.level_names {
            out.push(',');
            out.push_str(&csv_field(l));
        }
        out.push('\n');
        for (name, row) in self.group_names.iter().zip(self.values.rows()) {
            out.push_str(&csv_field(name));
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Pairwise discrepancies of the external profiles, same machinery as the
/// latent-class matrix.
pub fn reference_discrepancy(
    m: &ReferenceProfileMatrix,
    metric: Metric,
    avg_mode: AvgMode,
) -> Result<DiscrepancyMatrix> {
    discrepancy::pairwise(&m.values, &m.group_names, metric, avg_mode)
}
