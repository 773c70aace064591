//! CSV ingestion, indicator encoding and group labelling.
//!
//! A schema file is TOML with one `[grouping]` table and any number of
//! `[[items]]` tables:
//!
//! ```toml
//! missing = ["", "NA"]            # optional; tokens treated as missing
//!
//! [grouping]
//! mode = "explicit"               # "explicit" | "fixed_intervals" | "quantile"
//! column = "ethnicity"
//! order = ["African", "Chinese"]  # explicit only, optional
//! # breaks = [0.2, 0.4, 0.6, 0.8] # fixed_intervals
//! # k = 5                         # quantile
//! # scale = 100.0                 # divide the column by this before grouping
//!
//! [[items]]
//! id = "q20_language"
//! column = "q20_language"
//! kind = "binary"                 # "binary" | "categorical"
//! labels = ["0", "1"]             # binary default is ["0", "1"]
//!
//! [[items]]
//! id = "pct_bad_health"
//! column = "pct_bad_health"
//! bins = [0.05, 0.10]             # numeric column cut at these edges
//! ```
//!
//! Rows with a missing value in any used column are dropped (listwise
//! deletion) and counted.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Read;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A CSV file read verbatim: header plus text cells.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    column_names: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn new(column_names: Vec<String>, rows: Vec<Vec<String>>) -> Result<Self> {
        let mut seen = HashSet::new();
        for name in &column_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::DuplicateColumn(name.clone()));
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != column_names.len() {
                return Err(Error::ShapeMismatch(format!(
                    "row {} has {} cells, header has {}",
                    i + 1,
                    row.len(),
                    column_names.len()
                )));
            }
        }
        Ok(RawTable { column_names, rows })
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_reader(reader);
        let column_names: Vec<String> = rdr
            .headers()?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record?;
            rows.push(record.iter().map(str::to_string).collect());
        }
        RawTable::new(column_names, rows)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        RawTable::from_reader(std::io::BufReader::new(file))
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.column_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    BinaryIndicator,
    Categorical,
}

/// One indicator variable and how to read it from its source column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemSchema {
    pub item_id: String,
    pub kind: ItemKind,
    pub source_column: String,
    /// Label of each encoded value; index is the code. Binary items have two.
    pub category_labels: Vec<String>,
    /// When set, the source column is numeric and cut at these ascending edges.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_edges: Option<Vec<f64>>,
}

impl ItemSchema {
    pub fn binary(item_id: impl Into<String>, source_column: impl Into<String>) -> Self {
        ItemSchema {
            item_id: item_id.into(),
            kind: ItemKind::BinaryIndicator,
            source_column: source_column.into(),
            category_labels: vec!["0".into(), "1".into()],
            bin_edges: None,
        }
    }

    pub fn categorical(
        item_id: impl Into<String>,
        source_column: impl Into<String>,
        labels: Vec<String>,
    ) -> Result<Self> {
        let item = ItemSchema {
            item_id: item_id.into(),
            kind: ItemKind::Categorical,
            source_column: source_column.into(),
            category_labels: labels,
            bin_edges: None,
        };
        item.validate()?;
        Ok(item)
    }

    /// A numeric column cut at `edges`; one edge gives a binary indicator.
    pub fn binned(
        item_id: impl Into<String>,
        source_column: impl Into<String>,
        edges: Vec<f64>,
    ) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::config("bins needs at least one edge"));
        }
        let labels = bin_labels(&edges);
        let item = ItemSchema {
            item_id: item_id.into(),
            kind: if edges.len() == 1 {
                ItemKind::BinaryIndicator
            } else {
                ItemKind::Categorical
            },
            source_column: source_column.into(),
            category_labels: labels,
            bin_edges: Some(edges),
        };
        item.validate()?;
        Ok(item)
    }

    pub fn n_categories(&self) -> usize {
        self.category_labels.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.category_labels.len();
        match self.kind {
            ItemKind::BinaryIndicator if m != 2 => {
                return Err(Error::config(format!(
                    "binary item `{}` needs exactly two labels",
                    self.item_id
                )))
            }
            ItemKind::Categorical if m < 2 => {
                return Err(Error::config(format!(
                    "categorical item `{}` needs at least two categories",
                    self.item_id
                )))
            }
            _ => {}
        }
        let unique: HashSet<&String> = self.category_labels.iter().collect();
        if unique.len() != m {
            return Err(Error::config(format!(
                "item `{}` has duplicate category labels",
                self.item_id
            )));
        }
        if let Some(edges) = &self.bin_edges {
            if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::config(format!(
                    "item `{}` bin edges must be finite and strictly ascending",
                    self.item_id
                )));
            }
            if edges.len() + 1 != m {
                return Err(Error::config(format!(
                    "item `{}` has {} edges but {} labels",
                    self.item_id,
                    edges.len(),
                    m
                )));
            }
        }
        Ok(())
    }

    /// Encodes one non-missing cell, returning the failure reason otherwise.
    fn encode(&self, cell: &str) -> std::result::Result<u32, String> {
        match &self.bin_edges {
            Some(edges) => {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| format!("`{cell}` is not a number"))?;
                if !v.is_finite() {
                    return Err(format!("`{cell}` is not finite"));
                }
                Ok(edges.iter().filter(|&&e| e <= v).count() as u32)
            }
            None => self
                .category_labels
                .iter()
                .position(|l| l == cell)
                .map(|p| p as u32)
                .ok_or_else(|| {
                    format!(
                        "`{cell}` is not one of {:?} for item `{}`",
                        self.category_labels, self.item_id
                    )
                }),
        }
    }
}

fn bin_labels(edges: &[f64]) -> Vec<String> {
    let mut labels = Vec::with_capacity(edges.len() + 1);
    labels.push(format!("<{}", edges[0]));
    for w in edges.windows(2) {
        labels.push(format!("[{},{})", w[0], w[1]));
    }
    labels.push(format!(">={}", edges[edges.len() - 1]));
    labels
}

/// Encoded indicator matrix without group information.
///
/// Cells are stored row-major; binary items take `{0, 1}` and categorical
/// item `j` takes `0..M_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Responses {
    items: Vec<ItemSchema>,
    n_rows: usize,
    cells: Vec<u32>,
}

impl Responses {
    pub fn new(items: Vec<ItemSchema>, rows: Vec<Vec<u32>>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::config("at least one item is required"));
        }
        for item in &items {
            item.validate()?;
        }
        let j = items.len();
        let mut cells = Vec::with_capacity(rows.len() * j);
        for row in &rows {
            if row.len() != j {
                return Err(Error::DimensionMismatch {
                    expected: j,
                    got: row.len(),
                });
            }
            for (item, &v) in items.iter().zip(row) {
                if v as usize >= item.n_categories() {
                    return Err(Error::ShapeMismatch(format!(
                        "value {v} out of range for item `{}`",
                        item.item_id
                    )));
                }
            }
            cells.extend_from_slice(row);
        }
        Ok(Responses {
            items,
            n_rows: rows.len(),
            cells,
        })
    }

    pub fn items(&self) -> &[ItemSchema] {
        &self.items
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn row(&self, i: usize) -> &[u32] {
        let j = self.items.len();
        &self.cells[i * j..(i + 1) * j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u32]> {
        self.cells.chunks_exact(self.items.len())
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Responses {
        let mut cells = Vec::with_capacity(indices.len() * self.items.len());
        for &i in indices {
            cells.extend_from_slice(self.row(i));
        }
        Responses {
            items: self.items.clone(),
            n_rows: indices.len(),
            cells,
        }
    }

    /// Width of the one-hot expansion: one column per binary item, `M_j`
    /// columns per categorical item.
    pub fn one_hot_width(&self) -> usize {
        self.items
            .iter()
            .map(|it| match it.kind {
                ItemKind::BinaryIndicator => 1,
                ItemKind::Categorical => it.n_categories(),
            })
            .sum()
    }

    /// Real-valued expansion: binary items as 0/1, categorical items one-hot.
    pub fn one_hot(&self) -> Array2<f64> {
        let width = self.one_hot_width();
        let mut out = Array2::zeros((self.n_rows, width));
        for (i, row) in self.rows().enumerate() {
            let mut col = 0;
            for (item, &v) in self.items.iter().zip(row) {
                match item.kind {
                    ItemKind::BinaryIndicator => {
                        out[[i, col]] = v as f64;
                        col += 1;
                    }
                    ItemKind::Categorical => {
                        out[[i, col + v as usize]] = 1.0;
                        col += item.n_categories();
                    }
                }
            }
        }
        out
    }

    /// Category labels of row `i`.
    pub fn decode_row(&self, i: usize) -> Vec<&str> {
        self.items
            .iter()
            .zip(self.row(i))
            .map(|(item, &v)| item.category_labels[v as usize].as_str())
            .collect()
    }
}

/// Encoded responses with a group index per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    responses: Responses,
    group_of: Vec<usize>,
    group_names: Vec<String>,
}

impl EncodedDataset {
    pub fn new(
        responses: Responses,
        group_of: Vec<usize>,
        group_names: Vec<String>,
    ) -> Result<Self> {
        if responses.n_rows() == 0 {
            return Err(Error::TooFewSamples { needed: 1, got: 0 });
        }
        if group_of.len() != responses.n_rows() {
            return Err(Error::DimensionMismatch {
                expected: responses.n_rows(),
                got: group_of.len(),
            });
        }
        if group_names.len() < 2 {
            return Err(Error::TooFewGroups(group_names.len()));
        }
        let mut sizes = vec![0usize; group_names.len()];
        for &g in &group_of {
            if g >= group_names.len() {
                return Err(Error::ShapeMismatch(format!(
                    "group index {g} but only {} groups",
                    group_names.len()
                )));
            }
            sizes[g] += 1;
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::EmptyGroup(group_names[empty].clone()));
        }
        Ok(EncodedDataset {
            responses,
            group_of,
            group_names,
        })
    }

    pub fn responses(&self) -> &Responses {
        &self.responses
    }

    pub fn items(&self) -> &[ItemSchema] {
        self.responses.items()
    }

    pub fn n_samples(&self) -> usize {
        self.responses.n_rows()
    }

    pub fn n_items(&self) -> usize {
        self.responses.n_items()
    }

    pub fn group_of(&self) -> &[usize] {
        &self.group_of
    }

    pub fn group_names(&self) -> &[String] {
        &self.group_names
    }

    pub fn n_groups(&self) -> usize {
        self.group_names.len()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.group_names.len()];
        for &g in &self.group_of {
            sizes[g] += 1;
        }
        sizes
    }
}

/// How samples are assigned to groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GroupingSpec {
    /// Group label read from a text column. `order` fixes the group order;
    /// otherwise groups appear in order of first occurrence.
    Explicit {
        column: String,
        #[serde(default)]
        order: Option<Vec<String>>,
    },
    /// Fixed percentage intervals `[0,b1), [b1,b2), …, [b_last, 1]`.
    FixedIntervals {
        column: String,
        breaks: Vec<f64>,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `k` equal-size groups by rank of the column value.
    Quantile {
        column: String,
        k: usize,
        #[serde(default = "one")]
        scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl GroupingSpec {
    pub fn column(&self) -> &str {
        match self {
            GroupingSpec::Explicit { column, .. }
            | GroupingSpec::FixedIntervals { column, .. }
            | GroupingSpec::Quantile { column, .. } => column,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GroupingSpec::Explicit { order, .. } => {
                if let Some(order) = order {
                    let unique: HashSet<&String> = order.iter().collect();
                    if unique.len() != order.len() {
                        return Err(Error::config("grouping order has duplicates"));
                    }
                }
                Ok(())
            }
            GroupingSpec::FixedIntervals { breaks, scale, .. } => {
                check_breaks(breaks)?;
                check_scale(*scale)
            }
            GroupingSpec::Quantile { k, scale, .. } => {
                if *k < 2 {
                    return Err(Error::config("quantile grouping needs k >= 2"));
                }
                check_scale(*scale)
            }
        }
    }
}

fn check_scale(scale: f64) -> Result<()> {
    if scale.is_finite() && scale > 0.0 {
        Ok(())
    } else {
        Err(Error::config("grouping scale must be positive"))
    }
}

fn check_breaks(breaks: &[f64]) -> Result<()> {
    if breaks.is_empty() {
        return Err(Error::config("fixed intervals need at least one break"));
    }
    if breaks.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::config("break points must be strictly ascending"));
    }
    if !(breaks[0] > 0.0) || !(breaks[breaks.len() - 1] < 1.0) {
        return Err(Error::config(
            "break points must lie strictly inside (0, 1)",
        ));
    }
    Ok(())
}

/// Maps each value to its interval. The last interval is closed on the right.
pub fn group_by_fixed_intervals(values: &[f64], breaks: &[f64]) -> Result<Vec<usize>> {
    check_breaks(breaks)?;
    values
        .iter()
        .map(|&v| {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::ValueOutOfRange { value: v });
            }
            Ok(breaks.iter().filter(|&&b| b <= v).count())
        })
        .collect()
}

/// Group names such as `0–20%` for each interval.
pub fn interval_names(breaks: &[f64]) -> Vec<String> {
    let mut edges = Vec::with_capacity(breaks.len() + 2);
    edges.push(0.0);
    edges.extend_from_slice(breaks);
    edges.push(1.0);
    edges
        .windows(2)
        .map(|w| format!("{}–{}%", percent_label(w[0]), percent_label(w[1])))
        .collect()
}

fn percent_label(fraction: f64) -> String {
    let pct = (fraction * 100.0 * 1e6).round() / 1e6;
    format!("{pct}")
}

/// Splits samples into `k` rank-ordered groups whose sizes differ by at most
/// one; the first `n % k` groups take the extra sample. Ties are broken by
/// original position. Cut point `g - 1` is the smallest value in group `g`.
pub fn group_by_quantile(values: &[f64], k: usize) -> Result<(Vec<usize>, Vec<f64>)> {
    if k < 2 {
        return Err(Error::config("quantile grouping needs k >= 2"));
    }
    let n = values.len();
    if n < k {
        return Err(Error::TooFewSamples { needed: k, got: n });
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::config("quantile grouping values must not be NaN"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));

    let base = n / k;
    let extra = n % k;
    let mut groups = vec![0usize; n];
    let mut cut_points = Vec::with_capacity(k - 1);
    let mut start = 0;
    for g in 0..k {
        let size = base + usize::from(g < extra);
        if g > 0 {
            cut_points.push(values[order[start]]);
        }
        for &idx in &order[start..start + size] {
            groups[idx] = g;
        }
        start += size;
    }
    Ok((groups, cut_points))
}

/// Items, grouping and missing-value tokens, usually read from a schema file.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSchema {
    pub items: Vec<ItemSchema>,
    pub grouping: GroupingSpec,
    pub missing_tokens: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaFile {
    #[serde(default)]
    missing: Option<Vec<String>>,
    grouping: GroupingSpec,
    items: Vec<ItemEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ItemEntry {
    id: String,
    #[serde(default)]
    column: Option<String>,
    #[serde(default)]
    kind: Option<String>,
    #[serde(default)]
    labels: Option<Vec<String>>,
    #[serde(default)]
    bins: Option<Vec<f64>>,
}

impl ItemEntry {
    fn into_schema(self) -> Result<ItemSchema> {
        let column = self.column.unwrap_or_else(|| self.id.clone());
        if let Some(edges) = self.bins {
            let item = ItemSchema::binned(self.id, column, edges)?;
            if let Some(kind) = self.kind.as_deref() {
                let expected = match item.kind {
                    ItemKind::BinaryIndicator => "binary",
                    ItemKind::Categorical => "categorical",
                };
                if kind != expected {
                    return Err(Error::config(format!(
                        "item `{}`: {} bin edges give a {expected} item, not {kind}",
                        item.item_id,
                        item.bin_edges.as_ref().map_or(0, Vec::len)
                    )));
                }
            }
            return Ok(item);
        }
        match self.kind.as_deref().unwrap_or("binary") {
            "binary" => {
                let mut item = ItemSchema::binary(self.id, column);
                if let Some(labels) = self.labels {
                    item.category_labels = labels;
                }
                item.validate()?;
                Ok(item)
            }
            "categorical" => {
                let labels = self.labels.ok_or_else(|| {
                    Error::config(format!("categorical item `{}` needs labels", self.id))
                })?;
                ItemSchema::categorical(self.id, column, labels)
            }
            other => Err(Error::config(format!("unknown item kind `{other}`"))),
        }
    }
}

impl DatasetSchema {
    pub fn new(items: Vec<ItemSchema>, grouping: GroupingSpec) -> Result<Self> {
        let schema = DatasetSchema {
            items,
            grouping,
            missing_tokens: vec![String::new()],
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: SchemaFile = toml::from_str(text).map_err(|e| Error::Toml {
            path: "<schema>".into(),
            message: e.to_string(),
        })?;
        let items = file
            .items
            .into_iter()
            .map(ItemEntry::into_schema)
            .collect::<Result<Vec<_>>>()?;
        let schema = DatasetSchema {
            items,
            grouping: file.grouping,
            missing_tokens: file.missing.unwrap_or_else(|| vec![String::new()]),
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_toml_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        DatasetSchema::from_toml_str(&text).map_err(|e| match e {
            Error::Toml { message, .. } => Error::Toml {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.items.is_empty() {
            return Err(Error::config("schema declares no items"));
        }
        let mut ids = HashSet::new();
        for item in &self.items {
            item.validate()?;
            if !ids.insert(item.item_id.as_str()) {
                return Err(Error::config(format!(
                    "duplicate item id `{}`",
                    item.item_id
                )));
            }
        }
        self.grouping.validate()
    }
}

/// Result of [`load_csv`].
#[derive(Debug, Clone)]
pub struct Loaded {
    pub dataset: EncodedDataset,
    /// Rows removed because a used column was missing.
    pub dropped_rows: usize,
    /// Data-row index (0-based, pre-drop) of every kept sample.
    pub kept_rows: Vec<usize>,
    /// Raw values of any extra columns requested, aligned with kept rows.
    pub carried: BTreeMap<String, Vec<String>>,
    /// Boundaries used by quantile grouping.
    pub cut_points: Option<Vec<f64>>,
}

pub fn load_csv(path: &Path, schema: &DatasetSchema) -> Result<Loaded> {
    load_csv_with(path, schema, &[])
}

/// Like [`load_csv`], also carrying `extra_columns` through the drop rule.
pub fn load_csv_with(
    path: &Path,
    schema: &DatasetSchema,
    extra_columns: &[String],
) -> Result<Loaded> {
    let table = RawTable::from_path(path)?;
    encode_table(&table, schema, extra_columns)
}

pub fn encode_table(
    table: &RawTable,
    schema: &DatasetSchema,
    extra_columns: &[String],
) -> Result<Loaded> {
    schema.validate()?;
    let item_cols = schema
        .items
        .iter()
        .map(|it| table.column_index(&it.source_column))
        .collect::<Result<Vec<_>>>()?;
    let group_col = table.column_index(schema.grouping.column())?;
    let extra_cols = extra_columns
        .iter()
        .map(|c| table.column_index(c))
        .collect::<Result<Vec<_>>>()?;

    let is_missing = |cell: &str| {
        let t = cell.trim();
        schema.missing_tokens.iter().any(|m| m.trim() == t)
    };

    let mut used: Vec<usize> = item_cols.clone();
    used.push(group_col);
    used.extend(&extra_cols);

    let mut kept_rows = Vec::new();
    let mut encoded_rows = Vec::new();
    let mut group_cells = Vec::new();
    let mut dropped = 0;
    for (r, row) in table.rows().iter().enumerate() {
        if used.iter().any(|&c| is_missing(&row[c])) {
            dropped += 1;
            continue;
        }
        let mut codes = Vec::with_capacity(item_cols.len());
        for (item, &c) in schema.items.iter().zip(&item_cols) {
            let code = item
                .encode(row[c].trim())
                .map_err(|reason| Error::MalformedCell {
                    row: r + 1,
                    column: item.source_column.clone(),
                    reason,
                })?;
            codes.push(code);
        }
        kept_rows.push(r);
        encoded_rows.push(codes);
        group_cells.push(row[group_col].trim().to_string());
    }
    if encoded_rows.is_empty() {
        return Err(Error::AllRowsDropped { dropped });
    }

    let (group_of, group_names, cut_points) =
        assign_groups(&schema.grouping, &group_cells, &kept_rows)?;
    let responses = Responses::new(schema.items.clone(), encoded_rows)?;
    let dataset = EncodedDataset::new(responses, group_of, group_names)?;

    let carried = extra_columns
        .iter()
        .zip(&extra_cols)
        .map(|(name, &c)| {
            let values = kept_rows
                .iter()
                .map(|&r| table.rows()[r][c].trim().to_string())
                .collect();
            (name.clone(), values)
        })
        .collect();

    Ok(Loaded {
        dataset,
        dropped_rows: dropped,
        kept_rows,
        carried,
        cut_points,
    })
}

type GroupAssignment = (Vec<usize>, Vec<String>, Option<Vec<f64>>);

fn assign_groups(
    spec: &GroupingSpec,
    cells: &[String],
    kept_rows: &[usize],
) -> Result<GroupAssignment> {
    let column = spec.column();
    let parse_scaled = |scale: f64| -> Result<Vec<f64>> {
        cells
            .iter()
            .zip(kept_rows)
            .map(|(cell, &r)| {
                cell.parse::<f64>()
                    .map(|v| v / scale)
                    .map_err(|_| Error::MalformedCell {
                        row: r + 1,
                        column: column.to_string(),
                        reason: format!("`{cell}` is not a number"),
                    })
            })
            .collect()
    };
    match spec {
        GroupingSpec::Explicit { order, .. } => {
            let names: Vec<String> = match order {
                Some(order) => order.clone(),
                None => {
                    let mut seen = HashSet::new();
                    cells
                        .iter()
                        .filter(|c| seen.insert(c.as_str()))
                        .cloned()
                        .collect()
                }
            };
            let index: HashMap<&str, usize> = names
                .iter()
                .enumerate()
                .map(|(i, n)| (n.as_str(), i))
                .collect();
            let group_of = cells
                .iter()
                .zip(kept_rows)
                .map(|(cell, &r)| {
                    index
                        .get(cell.as_str())
                        .copied()
                        .ok_or_else(|| Error::MalformedCell {
                            row: r + 1,
                            column: column.to_string(),
                            reason: format!("`{cell}` is not a listed group"),
                        })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((group_of, names, None))
        }
        GroupingSpec::FixedIntervals { breaks, scale, .. } => {
            let values = parse_scaled(*scale)?;
            let group_of = group_by_fixed_intervals(&values, breaks)?;
            Ok((group_of, interval_names(breaks), None))
        }
        GroupingSpec::Quantile { k, scale, .. } => {
            let values = parse_scaled(*scale)?;
            let (group_of, cuts) = group_by_quantile(&values, *k)?;
            let names = (1..=*k).map(|g| g.to_string()).collect();
            Ok((group_of, names, Some(cuts)))
        }
    }
}
