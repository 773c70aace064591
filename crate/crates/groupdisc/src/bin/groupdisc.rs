use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use groupdisc::analysis::PValueMethod;
use groupdisc::discrepancy::{AvgMode, CountMode, Metric};
use groupdisc::model_select::{LARGE_K_RANGE, SMALL_K_RANGE};
use groupdisc::pipeline::{self, RunConfig, StageTiming};

#[derive(Parser)]
#[command(
    name = "groupdisc",
    version,
    about = "Latent-class group discrepancy analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select K, fit the latent class model and write assignments.
    Fit(Common),
    /// Build proportion and discrepancy matrices from a previous fit.
    Discrepancy(Common),
    /// PCA, reference correlations and the k-means baseline.
    Analyze(Common),
    /// Per-group false positive rates of trained classifiers.
    Fairness(Common),
    /// All stages in order.
    Pipeline(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum KRange {
    Small,
    Large,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// cosine, euclidean, manhattan or kl_symmetrized.
    #[arg(long)]
    metric: Option<String>,
    /// Average each row over all groups, including the zero diagonal.
    #[arg(long)]
    avg_include_diagonal: bool,
    /// Sum responsibilities instead of counting MAP classes.
    #[arg(long)]
    soft_counts: bool,
    #[arg(long, value_enum)]
    k_range: Option<KRange>,
    /// Flatten whole matrices instead of strict upper triangles.
    #[arg(long)]
    flatten_full: bool,
    /// Drop the diagonal from row-wise correlations.
    #[arg(long)]
    rowwise_exclude_diagonal: bool,
    /// Exact permutation p-values (n <= 10).
    #[arg(long)]
    exact_p: bool,
    #[arg(long)]
    kmeans_k: Option<usize>,
    /// Plain random train/validation splits.
    #[arg(long)]
    unstratified: bool,
}

impl Common {
    fn load(&self) -> groupdisc::Result<RunConfig> {
        let mut cfg = RunConfig::from_path(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(m) = &self.metric {
            cfg.discrepancy.metric = m.parse::<Metric>()?;
        }
        if self.avg_include_diagonal {
            cfg.discrepancy.avg_mode = AvgMode::IncludeDiagonal;
        }
        if self.soft_counts {
            cfg.fit.count_mode = CountMode::SoftCounts;
        }
        if let Some(r) = self.k_range {
            let (lo, hi) = match r {
                KRange::Small => SMALL_K_RANGE,
                KRange::Large => LARGE_K_RANGE,
            };
            cfg.select.k_min = lo;
            cfg.select.k_max = hi;
            cfg.select.fixed_k = None;
        }
        if self.flatten_full {
            cfg.analysis.flatten_full = true;
        }
        if self.rowwise_exclude_diagonal {
            cfg.analysis.rowwise_include_diagonal = false;
        }
        if self.exact_p {
            cfg.analysis.p_value = PValueMethod::ExactPermutation;
        }
        if let Some(k) = self.kmeans_k {
            cfg.analysis.kmeans_k = Some(k);
        }
        if self.unstratified {
            if let Some(f) = cfg.fairness.as_mut() {
                f.stratify = false;
            }
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> groupdisc::Result<()> {
    let (name, common) = match &cli.command {
        Command::Fit(c) => ("fit", c),
        Command::Discrepancy(c) => ("discrepancy", c),
        Command::Analyze(c) => ("analyze", c),
        Command::Fairness(c) => ("fairness", c),
        Command::Pipeline(c) => ("pipeline", c),
    };
    let cfg = common.load()?;
    if let Command::Pipeline(_) = cli.command {
        let outcome = pipeline::cmd_pipeline(&cfg)?;
        eprintln!(
            "K = {}, {} files written to {}",
            outcome.fit.model.n_classes,
            outcome.manifest.outputs.len(),
            cfg.out_dir.display()
        );
        return Ok(());
    }
    let start = Instant::now();
    match cli.command {
        Command::Fit(_) => {
            let fit = pipeline::cmd_fit(&cfg)?;
            eprintln!(
                "K = {}, log-likelihood {:.4}",
                fit.model.n_classes, fit.model.log_likelihood
            );
        }
        Command::Discrepancy(_) => {
            let d = pipeline::cmd_discrepancy(&cfg)?;
            let (i, j, v) = d.matrix.max_pair();
            eprintln!(
                "largest discrepancy {v:.4} between {} and {}",
                d.matrix.group_names[i], d.matrix.group_names[j]
            );
        }
        Command::Analyze(_) => {
            pipeline::cmd_analyze(&cfg)?;
        }
        Command::Fairness(_) => {
            let reports = pipeline::cmd_fairness(&cfg)?;
            eprintln!("{} fairness reports", reports.len());
        }
        Command::Pipeline(_) => unreachable!(),
    }
    let timings = vec![StageTiming {
        stage: name.to_string(),
        seconds: start.elapsed().as_secs_f64(),
    }];
    pipeline::write_manifest(&cfg, name, timings)?;
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
