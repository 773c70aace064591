//! Discrepancy computed directly from a table of deprivation
//! decile shares per group, and its correlation with a second matrix.
//!
//! ```text
//! cargo run --example deprivation_reference
//! ```

use groupdisc::analysis::{self, CorrelationKind, CorrelationOptions, ReferenceProfileMatrix};
use groupdisc::discrepancy::{AvgMode, Metric};
use ndarray::arr2;

/// Percent of areas in each deprivation decile, per ethnic-population band.
const SHARES: &str = "\
group,1,2,3,4,5,6,7,8,9,10
0-20%,8.62,7.83,8.28,9.14,10.04,10.49,11.03,11.32,11.52,11.75
20-40%,12.22,18.93,18.12,14.81,10.77,8.05,5.96,4.04,3.79,3.31
40-60%,20.10,23.19,17.49,13.02,8.71,6.18,4.48,3.58,2.12,1.14
60-80%,31.13,22.67,16.58,12.35,8.12,4.91,2.71,1.18,0.34,0.00
80-100%,41.60,26.40,20.00,7.20,1.60,2.40,0.80,0.00,0.00,0.00
";

fn main() -> groupdisc::Result<()> {
    let profiles = ReferenceProfileMatrix::from_csv(SHARES)?;
    let dep = analysis::reference_discrepancy(&profiles, Metric::Cosine, AvgMode::IncludeDiagonal)?;
    println!("deprivation discrepancy:\n{}", dep.to_csv());

    // A census-based matrix over the same groups.
    let mut census = dep.clone();
    census.values = arr2(&[
        [0.0, 0.4865, 0.6783, 0.8603, 0.9347],
        [0.4865, 0.0, 0.1371, 0.3934, 0.5565],
        [0.6783, 0.1371, 0.0, 0.1173, 0.2744],
        [0.8603, 0.3934, 0.1173, 0.0, 0.0445],
        [0.9347, 0.5565, 0.2744, 0.0445, 0.0],
    ]);

    for kind in [CorrelationKind::Pearson, CorrelationKind::Spearman] {
        let opts = CorrelationOptions::new(kind);
        let rows = analysis::rowwise_correlations(&census, &dep, &opts)?;
        let coeffs: Vec<String> = rows
            .iter()
            .map(|r| format!("{:.4}", r.coefficient))
            .collect();
        println!("{:<8} row-wise   {}", kind.name(), coeffs.join("  "));
        for full in [false, true] {
            let r = analysis::flattened_correlation(
                &census,
                &dep,
                &CorrelationOptions {
                    flatten_full: full,
                    ..opts
                },
            )?;
            let scope = if full { "full" } else { "upper" };
            println!(
                "{:<8} flattened ({scope}, n={}) r={:.4} p={:.3e}",
                kind.name(),
                r.n,
                r.coefficient,
                r.p_value
            );
        }
    }
    Ok(())
}
