//! Per-group false positive rates of logistic regression and an MLP on
//! data where some groups follow an inverted feature-label pattern, next
//! to the discrepancy of each group's latent class profile.
//!
//! ```text
//! cargo run --release --example fairness_audit
//! ```

use groupdisc::discrepancy::{self, AvgMode, CountMode, Metric};
use groupdisc::fairness::{self, ModelKind, TrainConfig};
use groupdisc::lca::{self, FitConfig};
use groupdisc::synth::{self, PlantedBiasConfig};

fn main() -> groupdisc::Result<()> {
    let planted = synth::planted_bias(&PlantedBiasConfig::default(), 4)?;
    let data = &planted.dataset;

    let model = lca::fit(data.responses(), &FitConfig::new(4, 4))?;
    let a = lca::assign(&model, data.responses())?;
    let p = discrepancy::proportions(
        &a,
        data.group_of(),
        data.group_names(),
        CountMode::HardCounts,
    )?;
    let s = discrepancy::discrepancy_matrix(&p, Metric::Cosine, AvgMode::ExcludeDiagonal)?;
    let (i, j, v) = s.max_pair();
    println!(
        "largest discrepancy: {} vs {} ({v:.3})\n",
        s.group_names[i], s.group_names[j]
    );

    let labeled = planted.labeled()?;
    println!(
        "{:<8} {:>6} {:>16} {:>16}",
        "group", "AVG", "LR fpr", "MLP fpr"
    );
    let mut reports = Vec::new();
    for kind in [ModelKind::LogisticRegression, ModelKind::Mlp] {
        for ratio in [1.0, 0.8] {
            let mut cfg = TrainConfig::new(kind, 4);
            cfg.sampling_ratio = ratio;
            cfg.n_repeats = 5;
            reports.push(fairness::run_fairness_experiment(&labeled, &cfg)?);
        }
    }
    let cell = |r: &fairness::FairnessReport, e: usize| {
        let g = &r.per_group_fpr[e];
        match (g.mean, g.std) {
            (Some(m), Some(sd)) => format!("{m:.3} ± {sd:.3}"),
            _ => "n/a".into(),
        }
    };
    for e in 0..labeled.n_groups() {
        println!(
            "{:<8} {:>6.3} {:>16} {:>16}",
            labeled.group_names[e],
            s.avg[e],
            cell(&reports[0], e),
            cell(&reports[2], e)
        );
    }
    println!("\nsampling 80% of rows per repeat:");
    for e in 0..labeled.n_groups() {
        println!(
            "{:<8} {:>6} {:>16} {:>16}",
            labeled.group_names[e],
            "",
            cell(&reports[1], e),
            cell(&reports[3], e)
        );
    }
    Ok(())
}
