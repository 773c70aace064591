//! Choose the number of latent classes by cross-validated held-out
//! log-likelihood and the elbow of the score curve.
//!
//! ```text
//! cargo run --release --example select_classes
//! ```

use groupdisc::lca::FitConfig;
use groupdisc::model_select;
use groupdisc::synth;

fn main() -> groupdisc::Result<()> {
    let (data, _) = synth::sample_lca(&synth::three_class_model(), 1000, 3)?;
    let ks: Vec<usize> = (2..=8).collect();
    let cfg = FitConfig {
        n_restarts: 3,
        max_iter: 200,
        ..FitConfig::new(1, 11)
    };
    let report = model_select::select_n_classes(&data, &ks, 5, &cfg)?;

    println!("  K   held-out LL per row");
    for s in &report.cv_scores {
        let mark = if Some(s.k) == report.chosen_k {
            "  <- elbow"
        } else {
            ""
        };
        println!("{:>3}   {:.4}{mark}", s.k, s.mean);
    }
    println!("\nchosen K = {}", report.chosen_k.unwrap());
    Ok(())
}
