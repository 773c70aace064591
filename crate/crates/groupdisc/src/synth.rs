//! Synthetic data with known structure: samples from a planted latent class
//! model, and a grouped labelled dataset in which some members have an
//! inverted feature-label relationship.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{EncodedDataset, ItemKind, ItemSchema, Responses};
use crate::discrepancy::csv_field;
use crate::error::{Error, Result};
use crate::fairness::LabeledDataset;
use crate::lca::{ItemParams, LcaParams};
use crate::seed;

/// Draws `n` rows from `params`, returning the data and each row's true class.
pub fn sample_lca(params: &LcaParams, n: usize, seed: u64) -> Result<(Responses, Vec<usize>)> {
    let k = params.n_classes();
    if k == 0 || params.item_params.is_empty() {
        return Err(Error::config(
            "planted model needs at least one class and one item",
        ));
    }
    let mut rng = seed::rng(seed, "synth/lca", 0);
    let items: Vec<ItemSchema> = params
        .item_params
        .iter()
        .enumerate()
        .map(|(j, p)| match p {
            ItemParams::Bernoulli { .. } => Ok(ItemSchema::binary(
                format!("q{}", j + 1),
                format!("q{}", j + 1),
            )),
            ItemParams::Categorical { probs } => ItemSchema::categorical(
                format!("q{}", j + 1),
                format!("q{}", j + 1),
                (0..probs[0].len()).map(|v| format!("v{v}")).collect(),
            ),
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for _ in 0..n {
        let c = draw_index(&params.class_weights, &mut rng);
        let row = params
            .item_params
            .iter()
            .map(|p| match p {
                ItemParams::Bernoulli { p } => u32::from(rng.random::<f64>() < p[c]),
                ItemParams::Categorical { probs } => draw_index(&probs[c], &mut rng) as u32,
            })
            .collect();
        rows.push(row);
        truth.push(c);
    }
    Ok((Responses::new(items, rows)?, truth))
}

fn draw_index<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Samples `group_size` rows per group, drawing classes from that group's
/// own weights and items from `params`. Returns the dataset and true classes.
pub fn grouped_lca(
    params: &LcaParams,
    group_weights: &[Vec<f64>],
    group_size: usize,
    seed: u64,
) -> Result<(EncodedDataset, Vec<usize>)> {
    let mut rows = Vec::new();
    let mut truth = Vec::new();
    let mut group_of = Vec::new();
    let mut items = None;
    for (e, w) in group_weights.iter().enumerate() {
        if w.len() != params.n_classes() {
            return Err(Error::DimensionMismatch {
                expected: params.n_classes(),
                got: w.len(),
            });
        }
        let local = LcaParams {
            class_weights: w.clone(),
            item_params: params.item_params.clone(),
        };
        let (resp, t) = sample_lca(
            &local,
            group_size,
            seed::substream(seed, "synth/group", e as u64),
        )?;
        rows.extend(resp.rows().map(<[u32]>::to_vec));
        truth.extend(t);
        group_of.extend(std::iter::repeat_n(e, group_size));
        items.get_or_insert_with(|| resp.items().to_vec());
    }
    let items = items.ok_or(Error::TooFewGroups(0))?;
    let names = (1..=group_weights.len())
        .map(|e| format!("group{e}"))
        .collect();
    Ok((
        EncodedDataset::new(Responses::new(items, rows)?, group_of, names)?,
        truth,
    ))
}

/// Three classes over eight binary items. Class codewords are 11111000,
/// 00011111 and 10100101 (pairwise Hamming distance at least 5); each item
/// is 1 with probability 0.9 where the codeword has a 1 and 0.1 elsewhere.
pub fn three_class_model() -> LcaParams {
    let codewords = ["11111000", "00011111", "10100101"];
    let item_params = (0..8)
        .map(|j| ItemParams::Bernoulli {
            p: codewords
                .iter()
                .map(|w| if w.as_bytes()[j] == b'1' { 0.9 } else { 0.1 })
                .collect(),
        })
        .collect();
    LcaParams {
        class_weights: vec![0.4, 0.35, 0.25],
        item_params,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedBiasConfig {
    /// Fraction of each group whose signal items are inverted.
    pub inverted_fraction: Vec<f64>,
    pub group_size: usize,
    pub n_signal: usize,
    pub n_context: usize,
    /// P(signal item = 1) when it agrees with the label.
    pub signal_strength: f64,
    /// P(context item = 1) for regular and inverted members.
    pub context_regular: f64,
    pub context_inverted: f64,
    pub positive_rate: f64,
}

impl Default for PlantedBiasConfig {
    fn default() -> Self {
        PlantedBiasConfig {
            inverted_fraction: vec![0.0, 0.15, 0.3, 0.45, 1.0],
            group_size: 400,
            n_signal: 4,
            n_context: 4,
            signal_strength: 0.8,
            context_regular: 0.15,
            context_inverted: 0.85,
            positive_rate: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedBias {
    pub dataset: EncodedDataset,
    pub labels: Vec<u8>,
    pub inverted: Vec<bool>,
}

impl PlantedBias {
    pub fn labeled(&self) -> Result<LabeledDataset> {
        LabeledDataset::from_encoded(&self.dataset, self.labels.clone())
    }
}

/// Groups of equal size. Regular members have signal items that follow the
/// label; inverted members have them reversed and a shifted context profile.
/// Within each group exactly `round(fraction * size)` members are inverted.
pub fn planted_bias(cfg: &PlantedBiasConfig, seed: u64) -> Result<PlantedBias> {
    let g = cfg.inverted_fraction.len();
    if g < 2 || cfg.group_size < 2 {
        return Err(Error::config("planted-bias data needs two groups of two"));
    }
    let mut rng = seed::rng(seed, "synth/bias", 0);
    let items: Vec<ItemSchema> = (0..cfg.n_signal)
        .map(|j| format!("s{}", j + 1))
        .chain((0..cfg.n_context).map(|j| format!("c{}", j + 1)))
        .map(|id| ItemSchema::binary(id.clone(), id))
        .collect();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut inverted = Vec::new();
    let mut group_of = Vec::new();
    for (e, &frac) in cfg.inverted_fraction.iter().enumerate() {
        let n_inv = (frac * cfg.group_size as f64).round() as usize;
        for i in 0..cfg.group_size {
            let inv = i < n_inv;
            let label = u8::from(rng.random::<f64>() < cfg.positive_rate);
            let agrees = (label == 1) != inv;
            let p_signal = if agrees {
                cfg.signal_strength
            } else {
                1.0 - cfg.signal_strength
            };
            let p_context = if inv {
                cfg.context_inverted
            } else {
                cfg.context_regular
            };
            let row: Vec<u32> = (0..cfg.n_signal + cfg.n_context)
                .map(|j| {
                    let p = if j < cfg.n_signal {
                        p_signal
                    } else {
                        p_context
                    };
                    u32::from(rng.random::<f64>() < p)
                })
                .collect();
            rows.push(row);
            labels.push(label);
            inverted.push(inv);
            group_of.push(e);
        }
    }
    let names = (1..=g).map(|e| format!("group{e}")).collect();
    let dataset = EncodedDataset::new(Responses::new(items, rows)?, group_of, names)?;
    Ok(PlantedBias {
        dataset,
        labels,
        inverted,
    })
}

/// CSV with one column per item (category labels as cells), a `group`
/// column, and any extra `(name, values)` columns.
pub fn dataset_csv(data: &EncodedDataset, extra: &[(String, Vec<String>)]) -> String {
    let resp = data.responses();
    let mut header: Vec<String> = resp
        .items()
        .iter()
        .map(|it| csv_field(&it.source_column))
        .collect();
    header.push("group".into());
    header.extend(extra.iter().map(|(name, _)| csv_field(name)));
    let mut out = header.join(",");
    out.push('\n');
    for i in 0..data.n_samples() {
        let mut cells: Vec<String> = resp.decode_row(i).into_iter().map(csv_field).collect();
        cells.push(csv_field(&data.group_names()[data.group_of()[i]]));
        cells.extend(extra.iter().map(|(_, v)| csv_field(&v[i])));
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

/// Schema for [`dataset_csv`] output: explicit grouping on `group` in the
/// dataset's group order.
pub fn schema_toml(data: &EncodedDataset) -> String {
    let quote = |v: &str| format!("\"{}\"", v.replace('\\', "\\\\").replace('"', "\\\""));
    let list = |vs: &[String]| vs.iter().map(|v| quote(v)).collect::<Vec<_>>().join(", ");
    let mut out = String::from("[grouping]\nmode = \"explicit\"\ncolumn = \"group\"\n");
    let _ = writeln!(out, "order = [{}]", list(data.group_names()));
    for it in data.items() {
        let kind = match it.kind {
            ItemKind::BinaryIndicator => "binary",
            ItemKind::Categorical => "categorical",
        };
        let _ = write!(
            out,
            "\n[[items]]\nid = {}\ncolumn = {}\nkind = \"{kind}\"\nlabels = [{}]\n",
            quote(&it.item_id),
            quote(&it.source_column),
            list(&it.category_labels)
        );
    }
    out
}
