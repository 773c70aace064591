//! Staged runs driven by a TOML config: `fit` → `discrepancy` → `analyze`,
//! with `fairness` independent. Stages exchange files in the output
//! directory, so one expensive fit can feed many analyses.
//!
//! ```toml
//! seed = 7                      # required
//! out_dir = "out"
//!
//! [data]
//! input = "survey.csv"
//! schema = "schema.toml"        # see the dataset module
//!
//! [select]
//! k_min = 2
//! k_max = 10
//! n_folds = 10
//! # fixed_k = 4                 # skip cross-validation
//!
//! [fit]
//! n_restarts = 10
//! count_mode = "hard_counts"    # or "soft_counts"
//!
//! [discrepancy]
//! metric = "cosine"
//! avg_mode = "exclude_diagonal"
//!
//! [analysis]
//! reference = "deprivation.csv" # group,<level>,… shares per group
//! # reference_column = "decile" # or cross-tab a data column
//! kmeans_baseline = true
//!
//! [fairness]
//! label_column = "decile"
//! label_mode = "deciles"        # 1..10 relabelled, or "binary"
//! models = ["logistic_regression", "mlp"]
//! sampling_ratios = [1.0, 0.9, 0.8]
//! ```
//!
//! Relative paths are resolved against the config file's directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    self, correlations_to_csv, CorrelationKind, CorrelationOptions, PValueMethod, PcaProjection,
    ReferenceProfileMatrix, ScopedCorrelation,
};
use crate::dataset::{self, DatasetSchema, Loaded};
use crate::discrepancy::{
    self, csv_field, AvgMode, CountMode, DiscrepancyMatrix, Metric, ProportionMatrix,
};
use crate::error::{Error, Result};
use crate::fairness::{
    self, FairnessReport, LabeledDataset, LogisticHyper, MlpHyper, ModelKind, TrainConfig,
};
use crate::kmeans::{self, KMeansConfig};
use crate::lca::{self, Assignment, AssignmentMode, FitConfig, LcaModel};
use crate::model_select::{self, SelectionReport};
use crate::seed;

pub const DATASET_FILE: &str = "dataset.json";
pub const SELECTION_FILE: &str = "selection.json";
pub const CV_SCORES_FILE: &str = "cv_scores.csv";
pub const MODEL_FILE: &str = "model.json";
pub const ASSIGNMENT_FILE: &str = "assignment.csv";
pub const PROPORTIONS_FILE: &str = "proportions.csv";
pub const MATRIX_FILE: &str = "discrepancy_matrix.csv";
pub const LONG_FILE: &str = "discrepancy_long.csv";
pub const PCA_FILE: &str = "pca.csv";
pub const REFERENCE_PROFILE_FILE: &str = "reference_profiles.csv";
pub const REFERENCE_MATRIX_FILE: &str = "reference_matrix.csv";
pub const CORRELATIONS_FILE: &str = "correlations.csv";
pub const KMEANS_MATRIX_FILE: &str = "kmeans_discrepancy_matrix.csv";
pub const ABLATION_FILE: &str = "ablation.csv";
pub const FAIRNESS_FILE: &str = "fairness.csv";
pub const FAIRNESS_COUNTS_FILE: &str = "fairness_counts.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub data: DataSection,
    #[serde(default)]
    pub select: SelectSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub discrepancy: DiscrepancySection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub fairness: Option<FairnessSection>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub input: PathBuf,
    pub schema: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectSection {
    pub k_min: usize,
    pub k_max: usize,
    pub n_folds: usize,
    pub fixed_k: Option<usize>,
    /// Restarts per cross-validation fit; defaults to the final fit's.
    pub cv_restarts: Option<usize>,
    pub cv_max_iter: Option<usize>,
}

impl Default for SelectSection {
    fn default() -> Self {
        SelectSection {
            k_min: model_select::SMALL_K_RANGE.0,
            k_max: model_select::SMALL_K_RANGE.1,
            n_folds: model_select::DEFAULT_N_FOLDS,
            fixed_k: None,
            cv_restarts: None,
            cv_max_iter: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub max_iter: usize,
    pub rel_tol: f64,
    pub n_restarts: usize,
    pub count_mode: CountMode,
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection {
            max_iter: 500,
            rel_tol: 1e-8,
            n_restarts: 10,
            count_mode: CountMode::HardCounts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscrepancySection {
    pub metric: Metric,
    pub avg_mode: AvgMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub pca: bool,
    pub pca_dims: usize,
    pub reference: Option<PathBuf>,
    pub reference_column: Option<String>,
    /// Level order for `reference_column`; sorted distinct values otherwise.
    pub reference_levels: Option<Vec<String>>,
    pub rowwise_include_diagonal: bool,
    pub flatten_full: bool,
    pub p_value: PValueMethod,
    pub kmeans_baseline: bool,
    /// Defaults to the latent class count.
    pub kmeans_k: Option<usize>,
    pub kmeans_restarts: usize,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            pca: true,
            pca_dims: 2,
            reference: None,
            reference_column: None,
            reference_levels: None,
            rowwise_include_diagonal: true,
            flatten_full: false,
            p_value: PValueMethod::TApprox,
            kmeans_baseline: true,
            kmeans_k: None,
            kmeans_restarts: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// Integer levels 1..=10, split at 5/6.
    Deciles,
    /// Already 0/1.
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FairnessSection {
    pub label_column: String,
    #[serde(default = "default_label_mode")]
    pub label_mode: LabelMode,
    #[serde(default = "default_models")]
    pub models: Vec<ModelKind>,
    #[serde(default = "default_ratios")]
    pub sampling_ratios: Vec<f64>,
    #[serde(default = "default_repeats")]
    pub n_repeats: usize,
    #[serde(default = "default_split")]
    pub split_ratio: f64,
    #[serde(default = "default_true")]
    pub stratify: bool,
    #[serde(default = "default_true")]
    pub standardize: bool,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub logistic: LogisticHyper,
    #[serde(default)]
    pub mlp: MlpHyper,
}

fn default_label_mode() -> LabelMode {
    LabelMode::Deciles
}
fn default_models() -> Vec<ModelKind> {
    vec![ModelKind::LogisticRegression, ModelKind::Mlp]
}
fn default_ratios() -> Vec<f64> {
    vec![1.0]
}
fn default_repeats() -> usize {
    10
}
fn default_split() -> f64 {
    0.8
}
fn default_true() -> bool {
    true
}
fn default_threshold() -> f64 {
    0.5
}

impl RunConfig {
    /// Parses TOML; relative paths are resolved against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Toml {
            path: "<config>".into(),
            message: e.to_string(),
        })?;
        cfg.resolve_paths(base_dir);
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        RunConfig::from_toml_str(&text, base).map_err(|e| match e {
            Error::Toml { message, .. } => Error::Toml {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &PathBuf| {
            if p.is_absolute() {
                p.clone()
            } else {
                base.join(p)
            }
        };
        self.out_dir = join(&self.out_dir);
        self.data.input = join(&self.data.input);
        self.data.schema = join(&self.data.schema);
        if let Some(r) = &self.analysis.reference {
            self.analysis.reference = Some(join(r));
        }
    }

    /// Checks ranges and that every referenced input exists.
    pub fn validate(&self) -> Result<()> {
        let mut inputs = vec![&self.data.input, &self.data.schema];
        if let Some(r) = &self.analysis.reference {
            inputs.push(r);
        }
        for p in inputs {
            if !p.is_file() {
                return Err(Error::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
                ));
            }
        }
        let s = &self.select;
        if let Some(k) = s.fixed_k {
            if k < 1 {
                return Err(Error::config("fixed_k must be >= 1"));
            }
        } else {
            if s.k_min < 1 || s.k_min > s.k_max {
                return Err(Error::config(format!(
                    "bad K range {}..={}",
                    s.k_min, s.k_max
                )));
            }
            if s.n_folds < 2 {
                return Err(Error::config("n_folds must be >= 2"));
            }
        }
        self.final_fit_config(1).validate()?;
        if self.analysis.reference.is_some() && self.analysis.reference_column.is_some() {
            return Err(Error::config(
                "give either analysis.reference or analysis.reference_column",
            ));
        }
        if let Some(f) = &self.fairness {
            if f.models.is_empty() || f.sampling_ratios.is_empty() {
                return Err(Error::config(
                    "fairness needs at least one model and one sampling ratio",
                ));
            }
            for &ratio in &f.sampling_ratios {
                self.train_config(f, f.models[0], ratio, 0).validate()?;
            }
        }
        Ok(())
    }

    fn final_fit_config(&self, k: usize) -> FitConfig {
        FitConfig {
            n_classes: k,
            max_iter: self.fit.max_iter,
            rel_tol: self.fit.rel_tol,
            n_restarts: self.fit.n_restarts,
            seed: seed::substream(self.seed, "lca/final", 0),
            assignment: match self.fit.count_mode {
                CountMode::HardCounts => AssignmentMode::MapHard,
                CountMode::SoftCounts => AssignmentMode::Soft,
            },
        }
    }

    fn train_config(
        &self,
        f: &FairnessSection,
        model: ModelKind,
        ratio: f64,
        ratio_index: usize,
    ) -> TrainConfig {
        TrainConfig {
            model_kind: model,
            split_ratio: f.split_ratio,
            n_repeats: f.n_repeats,
            sampling_ratio: ratio,
            // Shared across models so every model sees the same splits.
            seed: seed::substream(self.seed, "fairness/ratio", ratio_index as u64),
            stratify: f.stratify,
            standardize: f.standardize,
            threshold: f.threshold,
            logistic: f.logistic.clone(),
            mlp: f.mlp.clone(),
        }
    }

    fn correlation_options(&self, kind: CorrelationKind) -> CorrelationOptions {
        CorrelationOptions {
            kind,
            p_value: self.analysis.p_value,
            include_diagonal: self.analysis.rowwise_include_diagonal,
            flatten_full: self.analysis.flatten_full,
        }
    }
}

// ---------------------------------------------------------------------------
// Artifact I/O
// ---------------------------------------------------------------------------

/// Writes via a temporary sibling and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    std::fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read_artifact(out: &Path, name: &str) -> Result<String> {
    let path = out.join(name);
    if !path.is_file() {
        return Err(Error::MissingArtifact(path));
    }
    std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Summary of the encoded data written by `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_samples: usize,
    pub dropped_rows: usize,
    pub item_ids: Vec<String>,
    pub group_names: Vec<String>,
    pub group_sizes: Vec<usize>,
    pub cut_points: Option<Vec<f64>>,
}

/// `row,group,map_class,p_1,…,p_K`; `row` is the 0-based data row.
fn assignment_csv(loaded: &Loaded, a: &Assignment) -> String {
    let k = a.responsibilities.ncols();
    let mut out = String::from("row,group,map_class");
    for c in 1..=k {
        let _ = write!(out, ",p_{c}");
    }
    out.push('\n');
    let names = loaded.dataset.group_names();
    for (i, &row) in loaded.kept_rows.iter().enumerate() {
        let _ = write!(
            out,
            "{row},{},{}",
            csv_field(&names[loaded.dataset.group_of()[i]]),
            a.map_class[i]
        );
        for v in a.responsibilities.row(i) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

fn parse_assignment_csv(text: &str, group_names: &[String]) -> Result<(Assignment, Vec<usize>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let k = rdr.headers()?.len().saturating_sub(3);
    let mut map_class = Vec::new();
    let mut group_of = Vec::new();
    let mut flat = Vec::new();
    let bad = |what: &str| Error::ShapeMismatch(format!("{ASSIGNMENT_FILE}: {what}"));
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != k + 3 {
            return Err(bad("ragged row"));
        }
        let g = group_names
            .iter()
            .position(|n| n == &rec[1])
            .ok_or_else(|| bad(&format!("unknown group `{}`", &rec[1])))?;
        group_of.push(g);
        map_class.push(
            rec[2]
                .parse::<usize>()
                .map_err(|_| bad("bad class index"))?,
        );
        for c in 0..k {
            flat.push(
                rec[3 + c]
                    .parse::<f64>()
                    .map_err(|_| bad("bad probability"))?,
            );
        }
    }
    let responsibilities = Array2::from_shape_vec((map_class.len(), k), flat)
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    Ok((
        Assignment {
            responsibilities,
            map_class,
        },
        group_of,
    ))
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub selection: SelectionReport,
    pub model: LcaModel,
    pub assignment: Assignment,
    pub summary: DatasetSummary,
}

fn load_data(cfg: &RunConfig, extra: &[String]) -> Result<Loaded> {
    let schema = DatasetSchema::from_toml_path(&cfg.data.schema)?;
    dataset::load_csv_with(&cfg.data.input, &schema, extra)
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<FitOutcome> {
    cfg.validate()?;
    let loaded = load_data(cfg, &[])?;
    let data = loaded.dataset.responses();
    let selection = match cfg.select.fixed_k {
        Some(k) => SelectionReport {
            candidate_ks: vec![k],
            cv_scores: Vec::new(),
            n_folds: 0,
            chosen_k: Some(k),
            elbow_method: "fixed".into(),
        },
        None => {
            let ks: Vec<usize> = (cfg.select.k_min..=cfg.select.k_max).collect();
            let mut cv = cfg.final_fit_config(1);
            cv.seed = seed::substream(cfg.seed, "cv", 0);
            cv.n_restarts = cfg.select.cv_restarts.unwrap_or(cfg.fit.n_restarts);
            cv.max_iter = cfg.select.cv_max_iter.unwrap_or(cfg.fit.max_iter);
            model_select::select_n_classes(data, &ks, cfg.select.n_folds, &cv)?
        }
    };
    let k = selection.chosen_k.expect("selection always picks a K");
    let model = lca::fit(data, &cfg.final_fit_config(k))?;
    let assignment = lca::assign(&model, data)?;
    let summary = DatasetSummary {
        n_samples: loaded.dataset.n_samples(),
        dropped_rows: loaded.dropped_rows,
        item_ids: model.item_ids.clone(),
        group_names: loaded.dataset.group_names().to_vec(),
        group_sizes: loaded.dataset.group_sizes(),
        cut_points: loaded.cut_points.clone(),
    };

    let out = &cfg.out_dir;
    write_atomic(
        &out.join(DATASET_FILE),
        serde_json::to_string_pretty(&summary)?.as_bytes(),
    )?;
    write_atomic(
        &out.join(SELECTION_FILE),
        serde_json::to_string_pretty(&selection)?.as_bytes(),
    )?;
    write_atomic(&out.join(CV_SCORES_FILE), selection.to_csv().as_bytes())?;
    write_atomic(&out.join(MODEL_FILE), model.to_json()?.as_bytes())?;
    write_atomic(
        &out.join(ASSIGNMENT_FILE),
        assignment_csv(&loaded, &assignment).as_bytes(),
    )?;
    Ok(FitOutcome {
        selection,
        model,
        assignment,
        summary,
    })
}

#[derive(Debug, Clone)]
pub struct DiscrepancyOutcome {
    pub proportions: ProportionMatrix,
    pub matrix: DiscrepancyMatrix,
}

fn read_summary(out: &Path) -> Result<DatasetSummary> {
    Ok(serde_json::from_str(&read_artifact(out, DATASET_FILE)?)?)
}

pub fn cmd_discrepancy(cfg: &RunConfig) -> Result<DiscrepancyOutcome> {
    let out = &cfg.out_dir;
    let summary = read_summary(out)?;
    read_artifact(out, MODEL_FILE)?;
    let (assignment, group_of) =
        parse_assignment_csv(&read_artifact(out, ASSIGNMENT_FILE)?, &summary.group_names)?;
    let proportions = discrepancy::proportions(
        &assignment,
        &group_of,
        &summary.group_names,
        cfg.fit.count_mode,
    )?;
    let matrix = discrepancy::discrepancy_matrix(
        &proportions,
        cfg.discrepancy.metric,
        cfg.discrepancy.avg_mode,
    )?;
    write_atomic(&out.join(PROPORTIONS_FILE), proportions.to_csv().as_bytes())?;
    write_atomic(&out.join(MATRIX_FILE), matrix.to_csv().as_bytes())?;
    write_atomic(&out.join(LONG_FILE), matrix.to_long_csv().as_bytes())?;
    Ok(DiscrepancyOutcome {
        proportions,
        matrix,
    })
}

#[derive(Debug, Clone, Default)]
pub struct AnalyzeOutcome {
    pub pca: Option<PcaProjection>,
    pub reference: Option<DiscrepancyMatrix>,
    pub correlations: Vec<ScopedCorrelation>,
    pub kmeans: Option<DiscrepancyMatrix>,
    pub ablation: Vec<ScopedCorrelation>,
}

fn both_kinds(
    scope: &str,
    a: &DiscrepancyMatrix,
    b: &DiscrepancyMatrix,
    cfg: &RunConfig,
    out: &mut Vec<ScopedCorrelation>,
) -> Result<()> {
    for kind in [CorrelationKind::Pearson, CorrelationKind::Spearman] {
        out.push(ScopedCorrelation {
            scope: scope.to_string(),
            result: analysis::flattened_correlation(a, b, &cfg.correlation_options(kind))?,
        });
    }
    Ok(())
}

pub fn cmd_analyze(cfg: &RunConfig) -> Result<AnalyzeOutcome> {
    cfg.validate()?;
    let out = &cfg.out_dir;
    let metric = cfg.discrepancy.metric;
    let avg_mode = cfg.discrepancy.avg_mode;
    let summary = read_summary(out)?;
    let lca_matrix =
        DiscrepancyMatrix::from_csv(&read_artifact(out, MATRIX_FILE)?, metric, avg_mode)?;
    let proportions =
        ProportionMatrix::from_csv(&read_artifact(out, PROPORTIONS_FILE)?, cfg.fit.count_mode)?;
    let mut outcome = AnalyzeOutcome::default();

    if cfg.analysis.pca {
        let pca = analysis::pca_project(&proportions, cfg.analysis.pca_dims)?;
        write_atomic(&out.join(PCA_FILE), pca.to_csv().as_bytes())?;
        outcome.pca = Some(pca);
    }

    let needs_data = cfg.analysis.reference_column.is_some() || cfg.analysis.kmeans_baseline;
    let loaded = if needs_data {
        let extra: Vec<String> = cfg.analysis.reference_column.iter().cloned().collect();
        Some(load_data(cfg, &extra)?)
    } else {
        None
    };

    let reference_profiles = if let Some(path) = &cfg.analysis.reference {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Some(ReferenceProfileMatrix::from_csv(&text)?)
    } else if let (Some(col), Some(loaded)) = (&cfg.analysis.reference_column, &loaded) {
        let labels = &loaded.carried[col];
        let levels = match &cfg.analysis.reference_levels {
            Some(l) => l.clone(),
            None => {
                let mut l = labels.clone();
                l.sort();
                l.dedup();
                l
            }
        };
        Some(ReferenceProfileMatrix::from_labels(
            loaded.dataset.group_of(),
            loaded.dataset.group_names(),
            labels,
            &levels,
        )?)
    } else {
        None
    };

    if let Some(profiles) = &reference_profiles {
        if profiles.group_names != summary.group_names {
            return Err(Error::ShapeMismatch(format!(
                "reference groups {:?} differ from data groups {:?}",
                profiles.group_names, summary.group_names
            )));
        }
        let reference = analysis::reference_discrepancy(profiles, metric, avg_mode)?;
        let mut rows = Vec::new();
        for kind in [CorrelationKind::Pearson, CorrelationKind::Spearman] {
            let opts = cfg.correlation_options(kind);
            for (name, r) in summary
                .group_names
                .iter()
                .zip(analysis::rowwise_correlations(
                    &lca_matrix,
                    &reference,
                    &opts,
                )?)
            {
                rows.push(ScopedCorrelation {
                    scope: format!("row:{name}"),
                    result: r,
                });
            }
            rows.push(ScopedCorrelation {
                scope: "flattened".into(),
                result: analysis::flattened_correlation(&lca_matrix, &reference, &opts)?,
            });
        }
        write_atomic(
            &out.join(REFERENCE_PROFILE_FILE),
            profiles.to_csv().as_bytes(),
        )?;
        write_atomic(
            &out.join(REFERENCE_MATRIX_FILE),
            reference.to_csv().as_bytes(),
        )?;
        write_atomic(
            &out.join(CORRELATIONS_FILE),
            correlations_to_csv(&rows).as_bytes(),
        )?;
        outcome.correlations = rows;
        outcome.reference = Some(reference);
    }

    if cfg.analysis.kmeans_baseline {
        let loaded = loaded.as_ref().expect("data loaded for k-means");
        let model: LcaModel = LcaModel::from_json(&read_artifact(out, MODEL_FILE)?)?;
        let k = cfg.analysis.kmeans_k.unwrap_or(model.n_classes);
        let points = loaded.dataset.responses().one_hot();
        let km_cfg = KMeansConfig {
            n_restarts: cfg.analysis.kmeans_restarts,
            ..KMeansConfig::new(k, seed::substream(cfg.seed, "kmeans", 0))
        };
        let km = kmeans::kmeans_fit(points.view(), &km_cfg)?;
        let labels = kmeans::kmeans_assign(&km, points.view())?;
        let props = discrepancy::proportions_from_labels(
            &labels,
            k,
            loaded.dataset.group_of(),
            loaded.dataset.group_names(),
        )?;
        let km_matrix = discrepancy::discrepancy_matrix(&props, metric, avg_mode)?;
        let mut rows = Vec::new();
        if let Some(reference) = &outcome.reference {
            both_kinds("lca_vs_reference", &lca_matrix, reference, cfg, &mut rows)?;
            both_kinds("kmeans_vs_reference", &km_matrix, reference, cfg, &mut rows)?;
        }
        both_kinds("kmeans_vs_lca", &km_matrix, &lca_matrix, cfg, &mut rows)?;
        write_atomic(&out.join(KMEANS_MATRIX_FILE), km_matrix.to_csv().as_bytes())?;
        write_atomic(
            &out.join(ABLATION_FILE),
            correlations_to_csv(&rows).as_bytes(),
        )?;
        outcome.ablation = rows;
        outcome.kmeans = Some(km_matrix);
    }
    Ok(outcome)
}

fn parse_labels(values: &[String], mode: LabelMode, column: &str) -> Result<Vec<u8>> {
    let parsed = values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            v.trim().parse::<i64>().map_err(|_| Error::MalformedCell {
                row: i + 1,
                column: column.to_string(),
                reason: format!("`{v}` is not an integer label"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    match mode {
        LabelMode::Deciles => fairness::relabel_binary(&parsed),
        LabelMode::Binary => parsed
            .into_iter()
            .map(|l| match l {
                0 | 1 => Ok(l as u8),
                other => Err(Error::config(format!("binary label column holds {other}"))),
            })
            .collect(),
    }
}

fn ratio_tag(ratio: f64) -> String {
    format!("{}", (ratio * 100.0).round() as i64)
}

pub fn cmd_fairness(cfg: &RunConfig) -> Result<Vec<FairnessReport>> {
    cfg.validate()?;
    let f = cfg
        .fairness
        .as_ref()
        .ok_or_else(|| Error::config("config has no [fairness] section"))?;
    let loaded = load_data(cfg, std::slice::from_ref(&f.label_column))?;
    let labels = parse_labels(
        &loaded.carried[&f.label_column],
        f.label_mode,
        &f.label_column,
    )?;
    let data = LabeledDataset::from_encoded(&loaded.dataset, labels)?;
    let out = &cfg.out_dir;
    let mut reports = Vec::new();
    let mut combined = String::from(FairnessReport::csv_header());
    let mut counts = String::from(
        "model,sampling_ratio,repeat,group,negatives,positives,false_positives,true_negatives\n",
    );
    for &model in &f.models {
        for (ri, &ratio) in f.sampling_ratios.iter().enumerate() {
            let report =
                fairness::run_fairness_experiment(&data, &cfg.train_config(f, model, ratio, ri))?;
            let name = format!("fairness_{}_{}.csv", model.name(), ratio_tag(ratio));
            write_atomic(&out.join(name), report.to_csv().as_bytes())?;
            combined.push_str(&report.csv_rows());
            for (r, rep) in report.repeats.iter().enumerate() {
                for (g, c) in rep.counts.iter().enumerate() {
                    let _ = writeln!(
                        counts,
                        "{},{},{},{},{},{},{},{}",
                        model.name(),
                        ratio,
                        r,
                        csv_field(&data.group_names[g]),
                        c.negatives,
                        c.positives,
                        c.false_positives,
                        c.true_negatives
                    );
                }
            }
            reports.push(report);
        }
    }
    write_atomic(&out.join(FAIRNESS_FILE), combined.as_bytes())?;
    write_atomic(&out.join(FAIRNESS_COUNTS_FILE), counts.as_bytes())?;
    Ok(reports)
}

// ---------------------------------------------------------------------------
// Manifest and full pipeline
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Everything except `timings` is a pure function of config, inputs and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub timings: Vec<StageTiming>,
}

fn config_digest(cfg: &RunConfig) -> Result<String> {
    // Hash the settings, not the location of the output directory.
    let mut canon = cfg.clone();
    canon.out_dir = PathBuf::new();
    Ok(sha256_hex(serde_json::to_string(&canon)?.as_bytes()))
}

fn display_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn write_manifest(
    cfg: &RunConfig,
    command: &str,
    timings: Vec<StageTiming>,
) -> Result<Manifest> {
    let mut inputs = vec![&cfg.data.input, &cfg.data.schema];
    if let Some(r) = &cfg.analysis.reference {
        inputs.push(r);
    }
    let inputs = inputs
        .into_iter()
        .map(|p| {
            Ok(FileDigest {
                path: display_name(p),
                sha256: sha256_file(p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut names: Vec<String> = std::fs::read_dir(&cfg.out_dir)
        .map_err(|e| Error::io(&cfg.out_dir, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n != MANIFEST_FILE && !n.starts_with('.'))
        .collect();
    names.sort();
    let outputs = names
        .into_iter()
        .map(|n| {
            Ok(FileDigest {
                sha256: sha256_file(&cfg.out_dir.join(&n))?,
                path: n,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        config_sha256: config_digest(cfg)?,
        inputs,
        outputs,
        timings,
    };
    write_atomic(
        &cfg.out_dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )?;
    Ok(manifest)
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub fit: FitOutcome,
    pub discrepancy: DiscrepancyOutcome,
    pub analysis: AnalyzeOutcome,
    pub fairness: Vec<FairnessReport>,
    pub manifest: Manifest,
}

fn timed<T>(
    stage: &str,
    timings: &mut Vec<StageTiming>,
    f: impl FnOnce() -> Result<T>,
) -> Result<T> {
    let start = Instant::now();
    let value = f()?;
    timings.push(StageTiming {
        stage: stage.to_string(),
        seconds: start.elapsed().as_secs_f64(),
    });
    Ok(value)
}

/// Every stage in order; fairness only when configured.
pub fn cmd_pipeline(cfg: &RunConfig) -> Result<PipelineOutcome> {
    let mut timings = Vec::new();
    let fit = timed("fit", &mut timings, || cmd_fit(cfg))?;
    let discrepancy = timed("discrepancy", &mut timings, || cmd_discrepancy(cfg))?;
    let analysis = timed("analyze", &mut timings, || cmd_analyze(cfg))?;
    let fairness = if cfg.fairness.is_some() {
        timed("fairness", &mut timings, || cmd_fairness(cfg))?
    } else {
        Vec::new()
    };
    let manifest = write_manifest(cfg, "pipeline", timings)?;
    Ok(PipelineOutcome {
        fit,
        discrepancy,
        analysis,
        fairness,
        manifest,
    })
}
