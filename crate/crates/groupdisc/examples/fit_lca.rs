//! Fit a latent class model to data drawn from a known three-class model
//! and compare the recovered parameters with the truth.
//!
//! ```text
//! cargo run --example fit_lca
//! ```

use groupdisc::lca::{self, FitConfig, ItemParams};
use groupdisc::synth;

fn main() -> groupdisc::Result<()> {
    let truth = synth::three_class_model();
    let (data, classes) = synth::sample_lca(&truth, 3000, 1)?;
    let model = lca::fit(&data, &FitConfig::new(3, 7))?;

    println!(
        "log-likelihood {:.2} after {} iterations (restart {})",
        model.log_likelihood, model.n_iterations, model.restart
    );
    println!("class weights: {:.3?}", model.params.class_weights);
    println!("\nitem   P(item = 1 | class)");
    for (id, item) in model.item_ids.iter().zip(&model.params.item_params) {
        if let ItemParams::Bernoulli { p } = item {
            println!("{id:<6} {p:.2?}");
        }
    }

    // Classes come back in arbitrary order; match each true class to the
    // fitted class that absorbed most of its members.
    let assignment = lca::assign(&model, &data)?;
    let mut agree = 0;
    for t in 0..3 {
        let mut counts = [0usize; 3];
        for (&c, &f) in classes.iter().zip(&assignment.map_class) {
            if c == t {
                counts[f] += 1;
            }
        }
        agree += counts.iter().max().unwrap();
    }
    println!(
        "\nMAP agreement with the planted classes: {:.3}",
        agree as f64 / classes.len() as f64
    );
    Ok(())
}
