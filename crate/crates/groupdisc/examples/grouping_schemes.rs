//! The three ways of forming groups: an explicit label column, fixed
//! percentage intervals, and equal-size quantile groups.
//!
//! ```text
//! cargo run --example grouping_schemes
//! ```

use groupdisc::dataset::{self, DatasetSchema, RawTable};

const CSV: &str = "\
tenure,car,region,share
own,1,north,12
rent,0,south,35
social,0,south,81
own,1,north,57
rent,,north,44
social,1,south,93
own,0,south,22
rent,1,north,68
";

fn show(title: &str, schema: &str) -> groupdisc::Result<()> {
    let schema = DatasetSchema::from_toml_str(schema)?;
    let table = RawTable::from_reader(CSV.as_bytes())?;
    let loaded = dataset::encode_table(&table, &schema, &[])?;
    let d = &loaded.dataset;
    println!(
        "{title}: {} rows kept, {} dropped",
        d.n_samples(),
        loaded.dropped_rows
    );
    for (name, size) in d.group_names().iter().zip(d.group_sizes()) {
        println!("  {name:<10} {size}");
    }
    if let Some(cuts) = &loaded.cut_points {
        println!("  cut points {cuts:?}");
    }
    Ok(())
}

const ITEMS: &str = r#"
[[items]]
id = "tenure"
kind = "categorical"
labels = ["own", "rent", "social"]

[[items]]
id = "car"
"#;

fn main() -> groupdisc::Result<()> {
    show(
        "explicit column",
        &format!("[grouping]\nmode = \"explicit\"\ncolumn = \"region\"\n{ITEMS}"),
    )?;
    show(
        "fixed intervals",
        &format!(
            "[grouping]\nmode = \"fixed_intervals\"\ncolumn = \"share\"\nbreaks = [0.25, 0.5, 0.75]\nscale = 100.0\n{ITEMS}"
        ),
    )?;
    show(
        "quantiles",
        &format!(
            "[grouping]\nmode = \"quantile\"\ncolumn = \"share\"\nk = 3\nscale = 100.0\n{ITEMS}"
        ),
    )?;
    Ok(())
}
