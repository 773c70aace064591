mod common;

use common::*;
use groupdisc::dataset::{self, DatasetSchema, GroupingSpec, ItemSchema, RawTable};
use groupdisc::Error;
use proptest::prelude::*;

fn load(csv: &str, schema: &str) -> groupdisc::Result<dataset::Loaded> {
    let schema = DatasetSchema::from_toml_str(schema)?;
    let table = RawTable::from_reader(csv.as_bytes())?;
    dataset::encode_table(&table, &schema, &[])
}

const EXPLICIT: &str = r#"
[grouping]
mode = "explicit"
column = "region"

[[items]]
id = "owns_car"
"#;

#[test]
fn four_row_read_through() {
    let got = load(
        "owns_car,region\n1,north\n0,south\n1,south\n0,north\n",
        EXPLICIT,
    )
    .unwrap();
    let d = &got.dataset;
    assert_eq!((d.n_samples(), d.n_items(), d.n_groups()), (4, 1, 2));
    assert_eq!(d.group_names(), ["north", "south"]);
    assert_eq!(d.group_of(), [0, 1, 1, 0]);
    assert_eq!(got.dropped_rows, 0);
}

#[test]
fn blank_cell_drops_the_row() {
    let got = load(
        "owns_car,region\n1,north\n,south\n1,south\n0,north\n",
        EXPLICIT,
    )
    .unwrap();
    assert_eq!(got.dataset.n_samples(), 3);
    assert_eq!(got.dropped_rows, 1);
    assert_eq!(got.kept_rows, vec![0, 2, 3]);
}

#[test]
fn single_group_is_rejected() {
    let r = load("owns_car,region\n1,north\n0,north\n", EXPLICIT);
    assert!(matches!(r, Err(Error::TooFewGroups(1))));
}

#[test]
fn missing_column_is_named() {
    let r = load("car,region\n1,north\n0,south\n", EXPLICIT);
    assert!(matches!(r, Err(Error::MissingColumn(c)) if c == "owns_car"));
}

#[test]
fn malformed_cell_reports_row_and_column() {
    let r = load("owns_car,region\n1,north\nyes,south\n", EXPLICIT);
    assert!(
        matches!(r, Err(Error::MalformedCell { row: 2, ref column, .. }) if column == "owns_car")
    );
}

#[test]
fn all_rows_dropped_is_an_error() {
    let r = load("owns_car,region\n,north\n1,\n", EXPLICIT);
    assert!(matches!(r, Err(Error::AllRowsDropped { dropped: 2 })));
}

#[test]
fn fixed_interval_boundaries() {
    let b = [0.2, 0.4, 0.6, 0.8];
    assert_eq!(
        dataset::group_by_fixed_intervals(&[0.0, 0.2, 1.0], &b).unwrap(),
        vec![0, 1, 4]
    );
    assert_eq!(
        dataset::group_by_fixed_intervals(&[0.1, 0.3, 0.5, 0.7, 0.9], &b).unwrap(),
        vec![0, 1, 2, 3, 4]
    );
    assert!(matches!(
        dataset::group_by_fixed_intervals(&[1.2], &b),
        Err(Error::ValueOutOfRange { .. })
    ));
    assert_eq!(dataset::interval_names(&b)[4], "80–100%");
}

#[test]
fn quantile_examples() {
    let (g, cuts) = dataset::group_by_quantile(&[0.1, 0.2, 0.3, 0.4], 2).unwrap();
    assert_eq!(g, vec![0, 0, 1, 1]);
    assert_eq!(cuts, vec![0.3]);
    let v: Vec<f64> = (0..10).map(|i| f64::from(9 - i) / 10.0).collect();
    let (g, _) = dataset::group_by_quantile(&v, 5).unwrap();
    for e in 0..5 {
        assert_eq!(g.iter().filter(|&&x| x == e).count(), 2);
    }
    assert!(matches!(
        dataset::group_by_quantile(&[0.1], 2),
        Err(Error::TooFewSamples { needed: 2, got: 1 })
    ));
}

#[test]
fn quantile_cut_points_match_sort_and_slice() {
    use rand::Rng;
    let mut r = rng(77);
    let v: Vec<f64> = (0..1000).map(|_| r.random::<f64>()).collect();
    let (_, cuts) = dataset::group_by_quantile(&v, 5).unwrap();
    let mut sorted = v.clone();
    sorted.sort_by(f64::total_cmp);
    let want: Vec<f64> = (1..5).map(|g| sorted[g * 200]).collect();
    assert_eq!(cuts, want);
}

#[test]
fn percentage_column_grouping_through_schema() {
    let schema = r#"
[grouping]
mode = "fixed_intervals"
column = "pct"
breaks = [0.2, 0.4, 0.6, 0.8]
scale = 100.0

[[items]]
id = "tenure"
kind = "categorical"
labels = ["own", "rent", "social"]
"#;
    let csv = "tenure,pct\nown,5\nrent,35\nsocial,55\nown,75\nrent,95\nown,100\n";
    let got = load(csv, schema).unwrap();
    assert_eq!(got.dataset.group_of(), [0, 1, 2, 3, 4, 4]);
    assert_eq!(
        got.dataset.group_names(),
        dataset::interval_names(&[0.2, 0.4, 0.6, 0.8])
    );
    assert_eq!(got.dataset.responses().decode_row(2), vec!["social"]);
}

#[test]
fn binned_item_maps_values_to_bins() {
    let item = ItemSchema::binned("age", "age", vec![30.0, 60.0]).unwrap();
    assert_eq!(item.n_categories(), 3);
    let schema = DatasetSchema::new(
        vec![item],
        GroupingSpec::Explicit {
            column: "g".into(),
            order: None,
        },
    )
    .unwrap();
    let table = RawTable::from_reader("age,g\n10,a\n30,a\n75,b\n".as_bytes()).unwrap();
    let got = dataset::encode_table(&table, &schema, &[]).unwrap();
    let codes: Vec<u32> = got.dataset.responses().rows().map(|r| r[0]).collect();
    assert_eq!(codes, vec![0, 1, 2]);
}

#[test]
fn schema_rejects_bad_breaks_and_unknown_fields() {
    let bad = "[grouping]\nmode = \"fixed_intervals\"\ncolumn = \"p\"\nbreaks = [0.5, 0.2]\n\n[[items]]\nid = \"a\"\n";
    assert!(DatasetSchema::from_toml_str(bad).is_err());
    let unknown =
        "[grouping]\nmode = \"explicit\"\ncolumn = \"g\"\n\n[[items]]\nid = \"a\"\nweight = 2\n";
    assert!(DatasetSchema::from_toml_str(unknown).is_err());
    let k1 = "[grouping]\nmode = \"quantile\"\ncolumn = \"g\"\nk = 1\n\n[[items]]\nid = \"a\"\n";
    assert!(DatasetSchema::from_toml_str(k1).is_err());
}

proptest! {
    #[test]
    fn decoding_reproduces_kept_cells(
        cells in prop::collection::vec((prop::option::of(0usize..3), 0usize..3), 3..40),
    ) {
        let labels = ["low", "mid", "high"];
        let groups = ["a", "b", "c"];
        let schema = "[grouping]\nmode = \"explicit\"\ncolumn = \"g\"\n\n[[items]]\nid = \"level\"\nkind = \"categorical\"\nlabels = [\"low\", \"mid\", \"high\"]\n";
        let mut csv = String::from("level,g\n");
        for (v, g) in &cells {
            csv.push_str(&format!("{},{}\n", v.map_or("", |v| labels[v]), groups[*g]));
        }
        let Ok(got) = load(&csv, schema) else { return Ok(()); };
        let kept: Vec<_> = cells.iter().filter(|(v, _)| v.is_some()).collect();
        prop_assert_eq!(got.dataset.n_samples(), kept.len());
        prop_assert_eq!(got.dropped_rows, cells.len() - kept.len());
        for (i, (v, g)) in kept.iter().enumerate() {
            prop_assert_eq!(got.dataset.responses().decode_row(i), vec![labels[v.unwrap()]]);
            prop_assert_eq!(&got.dataset.group_names()[got.dataset.group_of()[i]], groups[*g]);
        }
    }

    #[test]
    fn quantile_sizes_balanced_and_permutation_equivariant(
        v in prop::collection::vec(0.0f64..1.0, 5..80),
        k in 2usize..5,
        rot in 0usize..80,
    ) {
        let (g, _) = dataset::group_by_quantile(&v, k).unwrap();
        let sizes: Vec<usize> = (0..k).map(|e| g.iter().filter(|&&x| x == e).count()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let r = rot % v.len();
        let mut shuffled = v.clone();
        shuffled.rotate_left(r);
        let (g2, _) = dataset::group_by_quantile(&shuffled, k).unwrap();
        let mut a: Vec<(u64, usize)> = v.iter().zip(&g).map(|(x, &e)| (x.to_bits(), e)).collect();
        let mut b: Vec<(u64, usize)> = shuffled.iter().zip(&g2).map(|(x, &e)| (x.to_bits(), e)).collect();
        a.sort();
        b.sort();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn fixed_intervals_total_and_ordered(v in prop::collection::vec(0.0f64..=1.0, 1..50)) {
        let breaks = [0.2, 0.4, 0.6, 0.8];
        let g = dataset::group_by_fixed_intervals(&v, &breaks).unwrap();
        for (x, &e) in v.iter().zip(&g) {
            prop_assert!(e < 5);
            let lo = if e == 0 { 0.0 } else { breaks[e - 1] };
            prop_assert!(*x >= lo);
            if e < 4 {
                prop_assert!(*x < breaks[e]);
            }
        }
        prop_assert_eq!(dataset::group_by_fixed_intervals(&v, &breaks).unwrap(), g);
    }
}
