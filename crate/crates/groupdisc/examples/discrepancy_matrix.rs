//! From a fitted model to group profiles and the pairwise discrepancy
//! matrix, with the AVG column under both averaging conventions.
//!
//! ```text
//! cargo run --example discrepancy_matrix
//! ```

use groupdisc::discrepancy::{self, AvgMode, CountMode, Metric};
use groupdisc::lca::{self, FitConfig};
use groupdisc::synth;

fn main() -> groupdisc::Result<()> {
    let weights = vec![
        vec![0.7, 0.2, 0.1],
        vec![0.6, 0.25, 0.15],
        vec![0.34, 0.33, 0.33],
        vec![0.1, 0.2, 0.7],
    ];
    let (data, _) = synth::grouped_lca(&synth::three_class_model(), &weights, 500, 5)?;
    let model = lca::fit(data.responses(), &FitConfig::new(3, 5))?;
    let assignment = lca::assign(&model, data.responses())?;

    let p = discrepancy::proportions(
        &assignment,
        data.group_of(),
        data.group_names(),
        CountMode::HardCounts,
    )?;
    println!("class shares per group:\n{}", p.to_csv());

    let s = discrepancy::discrepancy_matrix(&p, Metric::Cosine, AvgMode::ExcludeDiagonal)?;
    println!(
        "cosine discrepancy (AVG over other groups):\n{}",
        s.to_csv()
    );
    let (i, j, v) = s.max_pair();
    println!(
        "largest: {} vs {} = {v:.4}",
        s.group_names[i], s.group_names[j]
    );

    let incl = discrepancy::discrepancy_matrix(&p, Metric::Cosine, AvgMode::IncludeDiagonal)?;
    println!("\nAVG including the zero diagonal: {:.4?}", incl.avg);

    let soft = discrepancy::proportions(
        &assignment,
        data.group_of(),
        data.group_names(),
        CountMode::SoftCounts,
    )?;
    let s_soft = discrepancy::discrepancy_matrix(&soft, Metric::Cosine, AvgMode::ExcludeDiagonal)?;
    println!("AVG from soft counts:            {:.4?}", s_soft.avg);
    Ok(())
}
