//! Writes a small dataset, schema, reference table and run config into a
//! directory so the command-line tool has something to chew on:
//!
//! ```text
//! cargo run --example write_demo_inputs -- demo
//! cargo run --release --bin groupdisc -- pipeline --config demo/run.toml
//! ```

use std::path::PathBuf;

use groupdisc::synth::{self, PlantedBiasConfig};

const RUN: &str = r#"seed = 2024
out_dir = "out"

[data]
input = "data.csv"
schema = "schema.toml"

[select]
k_min = 2
k_max = 6
n_folds = 5
cv_restarts = 3

[fit]
n_restarts = 10

[analysis]
reference_column = "true_pattern"

[fairness]
label_column = "label"
label_mode = "binary"
models = ["logistic_regression", "mlp"]
sampling_ratios = [1.0, 0.9, 0.8]
"#;

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "demo".into()));
    std::fs::create_dir_all(&dir)?;
    let planted = synth::planted_bias(&PlantedBiasConfig::default(), 2024).expect("valid defaults");
    let labels = planted.labels.iter().map(u8::to_string).collect();
    let pattern = planted
        .inverted
        .iter()
        .map(|&inv| if inv { "inverted" } else { "regular" }.to_string())
        .collect();
    let csv = synth::dataset_csv(
        &planted.dataset,
        &[("label".into(), labels), ("true_pattern".into(), pattern)],
    );
    std::fs::write(dir.join("data.csv"), csv)?;
    std::fs::write(
        dir.join("schema.toml"),
        synth::schema_toml(&planted.dataset),
    )?;
    std::fs::write(dir.join("run.toml"), RUN)?;
    println!(
        "wrote data.csv, schema.toml and run.toml to {}",
        dir.display()
    );
    Ok(())
}
