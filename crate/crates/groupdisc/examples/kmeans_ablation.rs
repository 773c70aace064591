//! Replace the latent class model with k-means on one-hot rows and compare
//! both discrepancy matrices against a ground-truth reference.
//!
//! ```text
//! cargo run --example kmeans_ablation
//! ```

use groupdisc::analysis::{self, CorrelationKind, CorrelationOptions, ReferenceProfileMatrix};
use groupdisc::discrepancy::{self, AvgMode, CountMode, Metric};
use groupdisc::kmeans::{kmeans_assign, kmeans_fit, KMeansConfig};
use groupdisc::lca::{self, FitConfig};
use groupdisc::synth;

fn main() -> groupdisc::Result<()> {
    let weights = vec![
        vec![0.7, 0.2, 0.1],
        vec![0.5, 0.3, 0.2],
        vec![0.34, 0.33, 0.33],
        vec![0.2, 0.3, 0.5],
        vec![0.1, 0.2, 0.7],
    ];
    let (data, truth) = synth::grouped_lca(&synth::three_class_model(), &weights, 300, 9)?;
    let (metric, avg) = (Metric::Cosine, AvgMode::ExcludeDiagonal);

    let labels: Vec<String> = truth.iter().map(|c| format!("class{c}")).collect();
    let levels: Vec<String> = (0..3).map(|c| format!("class{c}")).collect();
    let reference =
        ReferenceProfileMatrix::from_labels(data.group_of(), data.group_names(), &labels, &levels)?;
    let reference = analysis::reference_discrepancy(&reference, metric, avg)?;

    let model = lca::fit(data.responses(), &FitConfig::new(3, 9))?;
    let a = lca::assign(&model, data.responses())?;
    let p = discrepancy::proportions(
        &a,
        data.group_of(),
        data.group_names(),
        CountMode::HardCounts,
    )?;
    let lca_matrix = discrepancy::discrepancy_matrix(&p, metric, avg)?;

    let points = data.responses().one_hot();
    let km = kmeans_fit(points.view(), &KMeansConfig::new(3, 9))?;
    let clusters = kmeans_assign(&km, points.view())?;
    let kp =
        discrepancy::proportions_from_labels(&clusters, 3, data.group_of(), data.group_names())?;
    let km_matrix = discrepancy::discrepancy_matrix(&kp, metric, avg)?;

    println!(
        "k-means inertia {:.1} after {} updates",
        km.inertia, km.n_iterations
    );
    println!("\n{:<22} {:>8} {:>8}", "flattened", "pearson", "spearman");
    for (name, x, y) in [
        ("lca vs reference", &lca_matrix, &reference),
        ("k-means vs reference", &km_matrix, &reference),
        ("k-means vs lca", &km_matrix, &lca_matrix),
    ] {
        let r: Vec<f64> = [CorrelationKind::Pearson, CorrelationKind::Spearman]
            .into_iter()
            .map(|k| {
                analysis::flattened_correlation(x, y, &CorrelationOptions::new(k))
                    .map(|c| c.coefficient)
            })
            .collect::<groupdisc::Result<_>>()?;
        println!("{name:<22} {:>8.4} {:>8.4}", r[0], r[1]);
    }
    Ok(())
}
