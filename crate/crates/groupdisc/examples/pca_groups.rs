//! Project group class profiles onto their first two principal components
//! and list each group's nearest neighbour in that plane.
//!
//! ```text
//! cargo run --example pca_groups
//! ```

use groupdisc::analysis;
use groupdisc::discrepancy::{self, CountMode};
use groupdisc::lca::{self, FitConfig};
use groupdisc::synth;

fn main() -> groupdisc::Result<()> {
    let weights = vec![
        vec![0.8, 0.1, 0.1],
        vec![0.7, 0.2, 0.1],
        vec![0.3, 0.4, 0.3],
        vec![0.1, 0.2, 0.7],
        vec![0.1, 0.1, 0.8],
    ];
    let (data, _) = synth::grouped_lca(&synth::three_class_model(), &weights, 400, 2)?;
    let model = lca::fit(data.responses(), &FitConfig::new(3, 2))?;
    let a = lca::assign(&model, data.responses())?;
    let p = discrepancy::proportions(
        &a,
        data.group_of(),
        data.group_names(),
        CountMode::HardCounts,
    )?;

    let pca = analysis::pca_project(&p, 2)?;
    println!("explained variance: {:.3?}", pca.explained_variance_ratio);
    print!("{}", pca.to_csv());
    Ok(())
}
