//! Group profiles over latent classes and pairwise group discrepancies.
//!
//! Each group `e` is summarised by `r_e`, the share of its members in each
//! class. The discrepancy of two groups is `1 - cos(r_e, r_e')`; because the
//! profiles are non-negative it lies in `[0, 1]`.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lca::Assignment;

/// Smoothing added to every entry before a KL divergence.
pub const KL_SMOOTHING: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMode {
    /// Count MAP classes.
    #[default]
    HardCounts,
    /// Sum responsibilities.
    SoftCounts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Cosine,
    Euclidean,
    Manhattan,
    /// `KL(a||b) + KL(b||a)` on smoothed, renormalised rows.
    KlSymmetrized,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Metric::Cosine),
            "euclidean" => Ok(Metric::Euclidean),
            "manhattan" => Ok(Metric::Manhattan),
            "kl_symmetrized" | "kl" => Ok(Metric::KlSymmetrized),
            other => Err(Error::config(format!("unknown metric `{other}`"))),
        }
    }
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Cosine => "cosine",
            Metric::Euclidean => "euclidean",
            Metric::Manhattan => "manhattan",
            Metric::KlSymmetrized => "kl_symmetrized",
        }
    }

    pub fn distance(self, a: ArrayView1<f64>, b: ArrayView1<f64>) -> Result<f64> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: a.len(),
                got: b.len(),
            });
        }
        match self {
            Metric::Cosine => cosine_discrepancy(&a.to_vec(), &b.to_vec()),
            Metric::Euclidean => Ok(a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt()),
            Metric::Manhattan => Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()),
            Metric::KlSymmetrized => {
                let smooth = |v: ArrayView1<f64>| -> Vec<f64> {
                    let s: f64 = v.iter().map(|x| x + KL_SMOOTHING).sum();
                    v.iter().map(|x| (x + KL_SMOOTHING) / s).collect()
                };
                let (p, q) = (smooth(a), smooth(b));
                Ok(p.iter()
                    .zip(&q)
                    .map(|(pi, qi)| (pi - qi) * (pi / qi).ln())
                    .sum())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AvgMode {
    /// Mean over the other `|G| - 1` groups.
    #[default]
    ExcludeDiagonal,
    /// Mean over all `|G|` entries of the row, zero diagonal included.
    IncludeDiagonal,
}

/// `|G| x |C|` matrix of class shares per group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionMatrix {
    pub values: Array2<f64>,
    pub group_names: Vec<String>,
    pub mode: CountMode,
}

impl ProportionMatrix {
    pub fn class_count(&self) -> usize {
        self.values.ncols()
    }

    pub fn n_groups(&self) -> usize {
        self.values.nrows()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("group");
        for c in 0..self.class_count() {
            let _ = write!(out, ",class_{c}");
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

    /// Parses the output of [`ProportionMatrix::to_csv`] without rescaling.
    pub fn from_csv(text: &str, mode: CountMode) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let k = rdr.headers()?.len().saturating_sub(1);
        let mut group_names = Vec::new();
        let mut flat = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != k + 1 {
                return Err(Error::ShapeMismatch("ragged proportions CSV".into()));
            }
            group_names.push(rec[0].to_string());
            for cell in rec.iter().skip(1) {
                flat.push(parse_f64(cell)?);
            }
        }
        let values = Array2::from_shape_vec((group_names.len(), k), flat)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Ok(ProportionMatrix {
            values,
            group_names,
            mode,
        })
    }
}

/// Symmetric group-by-group discrepancy matrix with its AVG column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyMatrix {
    pub values: Array2<f64>,
    pub avg: Vec<f64>,
    pub group_names: Vec<String>,
    pub metric: Metric,
    pub avg_mode: AvgMode,
}

impl DiscrepancyMatrix {
    pub fn n_groups(&self) -> usize {
        self.values.nrows()
    }

    /// Largest off-diagonal entry as `(row, col, value)` with `row < col`;
    /// ties go to the first pair in row-major order.
    pub fn max_pair(&self) -> (usize, usize, f64) {
        let n = self.n_groups();
        let mut best = (0, 1.min(n.saturating_sub(1)), f64::NEG_INFINITY);
        for i in 0..n {
            for j in i + 1..n {
                if self.values[[i, j]] > best.2 {
                    best = (i, j, self.values[[i, j]]);
                }
            }
        }
        best
    }

    /// Header is the group names plus `AVG`; first column is the group name.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("group");
        for name in &self.group_names {
            out.push(',');
            out.push_str(&csv_field(name));
        }
        out.push_str(",AVG\n");
        for (e, name) in self.group_names.iter().enumerate() {
            out.push_str(&csv_field(name));
            for v in self.values.row(e) {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(out, ",{}", self.avg[e]);
        }
        out
    }

    /// One `(group_a, group_b, delta)` line per ordered pair.
    pub fn to_long_csv(&self) -> String {
        let mut out = String::from("group_a,group_b,delta\n");
        for (a, na) in self.group_names.iter().enumerate() {
            for (b, nb) in self.group_names.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{}",
                    csv_field(na),
                    csv_field(nb),
                    self.values[[a, b]]
                );
            }
        }
        out
    }

    /// Parses the output of [`DiscrepancyMatrix::to_csv`].
    pub fn from_csv(text: &str, metric: Metric, avg_mode: AvgMode) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header.len() < 3 || header[header.len() - 1] != "AVG" {
            return Err(Error::ShapeMismatch(
                "discrepancy CSV needs group columns and AVG".into(),
            ));
        }
        let group_names: Vec<String> = header[1..header.len() - 1].to_vec();
        let g = group_names.len();
        let mut values = Array2::zeros((g, g));
        let mut avg = Vec::with_capacity(g);
        let mut rows = 0;
        for (e, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if e >= g || rec.len() != g + 2 || rec[0] != group_names[e] {
                return Err(Error::ShapeMismatch(format!(
                    "unexpected row {} in discrepancy CSV",
                    e + 1
                )));
            }
            for j in 0..g {
                values[[e, j]] = parse_f64(&rec[j + 1])?;
            }
            avg.push(parse_f64(&rec[g + 1])?);
            rows += 1;
        }
        if rows != g {
            return Err(Error::ShapeMismatch("discrepancy CSV is not square".into()));
        }
        Ok(DiscrepancyMatrix {
            values,
            avg,
            group_names,
            metric,
            avg_mode,
        })
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::ShapeMismatch(format!("`{s}` is not a number")))
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Class shares `r_c^e = N_c^e / N^e` for every group.
pub fn proportions(
    assignment: &Assignment,
    group_of: &[usize],
    group_names: &[String],
    mode: CountMode,
) -> Result<ProportionMatrix> {
    let n = assignment.map_class.len();
    let k = assignment.responsibilities.ncols();
    if group_of.len() != n || assignment.responsibilities.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: group_of.len(),
        });
    }
    let g = group_names.len();
    let mut values = Array2::zeros((g, k));
    let mut sizes = vec![0usize; g];
    for (i, &e) in group_of.iter().enumerate() {
        if e >= g {
            return Err(Error::ShapeMismatch(format!(
                "group index {e} but only {g} groups"
            )));
        }
        sizes[e] += 1;
        match mode {
            CountMode::HardCounts => {
                let c = assignment.map_class[i];
                if c >= k {
                    return Err(Error::ShapeMismatch(format!(
                        "class index {c} but only {k} classes"
                    )));
                }
                values[[e, c]] += 1.0;
            }
            CountMode::SoftCounts => {
                let mut row = values.row_mut(e);
                row += &assignment.responsibilities.row(i);
            }
        }
    }
    for (e, &size) in sizes.iter().enumerate() {
        if size == 0 {
            return Err(Error::EmptyGroup(group_names[e].clone()));
        }
        values.row_mut(e).mapv_inplace(|v| v / size as f64);
    }
    Ok(ProportionMatrix {
        values,
        group_names: group_names.to_vec(),
        mode,
    })
}

/// Proportions from hard labels only, e.g. k-means clusters.
pub fn proportions_from_labels(
    labels: &[usize],
    n_classes: usize,
    group_of: &[usize],
    group_names: &[String],
) -> Result<ProportionMatrix> {
    let mut responsibilities = Array2::zeros((labels.len(), n_classes));
    for (i, &c) in labels.iter().enumerate() {
        if c >= n_classes {
            return Err(Error::ShapeMismatch(format!(
                "label {c} but only {n_classes} classes"
            )));
        }
        responsibilities[[i, c]] = 1.0;
    }
    let assignment = Assignment {
        responsibilities,
        map_class: labels.to_vec(),
    };
    proportions(&assignment, group_of, group_names, CountMode::HardCounts)
}

/// `1 - a.b / (|a| |b|)`, clamped to `[0, 1]` against rounding. Identical
/// vectors give exactly zero.
pub fn cosine_discrepancy(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(na > 0.0) || !(nb > 0.0) {
        return Err(Error::ZeroNormVector);
    }
    if a == b {
        return Ok(0.0);
    }
    Ok((1.0 - dot / (na * nb)).clamp(0.0, 1.0))
}

/// Pairwise matrix over the rows of `profiles`.
pub fn pairwise(
    profiles: &Array2<f64>,
    group_names: &[String],
    metric: Metric,
    avg_mode: AvgMode,
) -> Result<DiscrepancyMatrix> {
    let g = profiles.nrows();
    if group_names.len() != g {
        return Err(Error::DimensionMismatch {
            expected: g,
            got: group_names.len(),
        });
    }
    let mut values = Array2::zeros((g, g));
    for e in 0..g {
        for f in e + 1..g {
            let d = metric.distance(profiles.row(e), profiles.row(f))?;
            values[[e, f]] = d;
            values[[f, e]] = d;
        }
    }
    let denom = match avg_mode {
        AvgMode::ExcludeDiagonal => g.saturating_sub(1),
        AvgMode::IncludeDiagonal => g,
    };
    let avg = (0..g)
        .map(|e| {
            if denom == 0 {
                0.0
            } else {
                (0..g)
                    .filter(|&f| f != e)
                    .map(|f| values[[e, f]])
                    .sum::<f64>()
                    / denom as f64
            }
        })
        .collect();
    Ok(DiscrepancyMatrix {
        values,
        avg,
        group_names: group_names.to_vec(),
        metric,
        avg_mode,
    })
}

pub fn discrepancy_matrix(
    p: &ProportionMatrix,
    metric: Metric,
    avg_mode: AvgMode,
) -> Result<DiscrepancyMatrix> {
    pairwise(&p.values, &p.group_names, metric, avg_mode)
}
