//! Calibration-error and ranking metrics.
//!
//! The kernels work on parallel `predictions` / `labels` slices so callers can
//! score many candidate prediction vectors against the same labels without
//! rebuilding a [`Dataset`]. Field-level metrics take a [`Grouping`].
//!
//! Equal-frequency bins are formed after a stable sort by prediction, so ties
//! keep their original order. With `n` samples and `T` bins the first
//! `n mod T` bins get one extra sample.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{partition_indices, Dataset};
use crate::error::{CalibError, Result};
use crate::fusion::PROB_FLOOR;

pub const DEFAULT_BINS: usize = 100;
pub const DEFAULT_SHUFFLES: usize = 32;
pub const DEFAULT_SEED: u64 = 42;

/// Assignment of samples to the values of one field.
#[derive(Debug, Clone)]
pub struct Grouping {
    ids: Vec<usize>,
    groups: usize,
}

impl Grouping {
    /// `keys[i]` is the group of sample `i`; ids are dense and ordered by first key.
    pub fn from_keys<K: Ord>(keys: &[K]) -> Self {
        let mut index: BTreeMap<&K, usize> = BTreeMap::new();
        for k in keys {
            let next = index.len();
            index.entry(k).or_insert(next);
        }
        let ids = keys.iter().map(|k| index[k]).collect();
        Self { ids, groups: index.len() }
    }

    pub fn by_field(dataset: &Dataset, field: &str) -> Result<Self> {
        let groups = partition_indices(dataset, field)?;
        let mut ids = vec![0; dataset.len()];
        for (g, members) in groups.values().enumerate() {
            for &i in members {
                ids[i] = g;
            }
        }
        Ok(Self { ids, groups: groups.len() })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Field-level relative calibration error under this grouping.
    ///
    /// Groups without positive labels have an undefined relative error and
    /// are skipped; the normalizer is still the full sample count.
    pub fn field_rce(&self, predictions: &[f64], labels: &[bool]) -> f64 {
        assert_eq!(predictions.len(), self.ids.len());
        assert_eq!(labels.len(), self.ids.len());
        if self.ids.is_empty() {
            return 0.0;
        }
        let mut count = vec![0usize; self.groups];
        let mut positives = vec![0usize; self.groups];
        let mut residual = vec![0.0f64; self.groups];
        for ((&g, &p), &y) in self.ids.iter().zip(predictions).zip(labels) {
            count[g] += 1;
            positives[g] += usize::from(y);
            residual[g] += f64::from(u8::from(y)) - p;
        }
        let total: f64 = (0..self.groups)
            .filter(|&g| positives[g] > 0)
            .map(|g| count[g] as f64 * residual[g].abs() / positives[g] as f64)
            .sum();
        total / self.ids.len() as f64
    }
}

pub fn field_rce(dataset: &Dataset, field: &str) -> Result<f64> {
    let grouping = Grouping::by_field(dataset, field)?;
    Ok(grouping.field_rce(&dataset.predictions(), &dataset.labels()))
}

/// Mean of [`field_rce`] over `fields`.
pub fn multi_field_rce<S: AsRef<str>>(dataset: &Dataset, fields: &[S]) -> Result<f64> {
    if fields.is_empty() {
        return Err(CalibError::Config("multi-field RCE needs at least one field".into()));
    }
    let predictions = dataset.predictions();
    let labels = dataset.labels();
    let mut sum = 0.0;
    for f in fields {
        sum += Grouping::by_field(dataset, f.as_ref())?.field_rce(&predictions, &labels);
    }
    Ok(sum / fields.len() as f64)
}

fn check_bins(n: usize, bins: usize) -> Result<()> {
    if bins == 0 {
        return Err(CalibError::Config("bin count must be >= 1".into()));
    }
    if bins > n {
        return Err(CalibError::Data(format!("{bins} bins requested for {n} samples")));
    }
    Ok(())
}

/// Sizes of `bins` equal-frequency bins over `n` items.
pub fn bin_sizes(n: usize, bins: usize) -> impl Iterator<Item = usize> {
    let base = n / bins;
    let extra = n % bins;
    (0..bins).map(move |t| base + usize::from(t < extra))
}

/// Indices sorted by prediction, ties in original order.
pub fn sorted_order(predictions: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..predictions.len()).collect();
    order.sort_by(|&a, &b| predictions[a].total_cmp(&predictions[b]));
    order
}

/// Expected calibration error over `bins` equal-frequency bins.
pub fn ece(predictions: &[f64], labels: &[bool], bins: usize) -> Result<f64> {
    assert_eq!(predictions.len(), labels.len());
    let n = predictions.len();
    check_bins(n, bins)?;
    let order = sorted_order(predictions);
    let mut start = 0;
    let mut total = 0.0;
    for size in bin_sizes(n, bins) {
        let residual: f64 = order[start..start + size]
            .iter()
            .map(|&i| f64::from(u8::from(labels[i])) - predictions[i])
            .sum();
        total += residual.abs();
        start += size;
    }
    Ok(total / n as f64)
}

/// Mean per-bin absolute residual over explicit sample orderings ("views").
///
/// Each view is split by position into `bins` equal bins; the result averages
/// `|sum(y - p)| / |bin|` over all `views.len() * bins` bins.
pub fn mvce_views(predictions: &[f64], labels: &[bool], bins: usize, views: &[Vec<usize>]) -> Result<f64> {
    assert_eq!(predictions.len(), labels.len());
    let n = predictions.len();
    check_bins(n, bins)?;
    if views.is_empty() {
        return Err(CalibError::Config("at least one view is required".into()));
    }
    let mut total = 0.0;
    for view in views {
        if view.len() != n {
            return Err(CalibError::Data(format!("view has {} entries, expected {n}", view.len())));
        }
        let mut start = 0;
        for size in bin_sizes(n, bins) {
            let residual: f64 = view[start..start + size]
                .iter()
                .map(|&i| f64::from(u8::from(labels[i])) - predictions[i])
                .sum();
            total += residual.abs() / size as f64;
            start += size;
        }
    }
    Ok(total / (views.len() * bins) as f64)
}

/// Permutation used for shuffle `round` of an MVCE run seeded with `seed`.
pub fn shuffled_order(n: usize, seed: u64, round: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(round);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Multi-view calibration error with `shuffles` seeded random views.
pub fn mvce(predictions: &[f64], labels: &[bool], bins: usize, shuffles: usize, seed: u64) -> Result<f64> {
    if shuffles == 0 {
        return Err(CalibError::Config("MVCE needs at least one shuffle".into()));
    }
    check_bins(predictions.len(), bins)?;
    let views: Vec<Vec<usize>> = (0..shuffles as u64)
        .map(|r| shuffled_order(predictions.len(), seed, r))
        .collect();
    mvce_views(predictions, labels, bins, &views)
}

/// Area under the ROC curve via the Mann-Whitney statistic, ties at average rank.
pub fn auc(predictions: &[f64], labels: &[bool]) -> Result<f64> {
    assert_eq!(predictions.len(), labels.len());
    let positives = labels.iter().filter(|&&y| y).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(CalibError::Data("AUC needs both positive and negative labels".into()));
    }
    let order = sorted_order(predictions);
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && predictions[order[j + 1]] == predictions[order[i]] {
            j += 1;
        }
        // Ranks are 1-based; the tied run i..=j shares the mean rank.
        let rank = (i + j) as f64 / 2.0 + 1.0;
        let tied_pos = order[i..=j].iter().filter(|&&k| labels[k]).count();
        rank_sum += rank * tied_pos as f64;
        i = j + 1;
    }
    let p = positives as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * negatives as f64))
}

/// Mean binary cross-entropy with predictions clamped to `[1e-6, 1 - 1e-6]`.
pub fn logloss(predictions: &[f64], labels: &[bool]) -> Result<f64> {
    assert_eq!(predictions.len(), labels.len());
    if predictions.is_empty() {
        return Err(CalibError::EmptySubset);
    }
    let total: f64 = predictions
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / predictions.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub fields: Vec<String>,
    pub ece_bins: usize,
    pub mvce_shuffles: usize,
    pub seed: u64,
}

impl EvalConfig {
    pub fn new(fields: Vec<String>) -> Self {
        Self {
            fields,
            ece_bins: DEFAULT_BINS,
            mvce_shuffles: DEFAULT_SHUFFLES,
            seed: DEFAULT_SEED,
        }
    }
}

/// Metric table for one scored dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub entries: BTreeMap<String, f64>,
    pub config: EvalConfig,
}

impl EvalReport {
    pub fn get(&self, metric: &str) -> Option<f64> {
        self.entries.get(metric).copied()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Two-column plain-text table, metric names left-aligned.
    pub fn to_table(&self) -> String {
        let width = self.entries.keys().map(String::len).max().unwrap_or(0).max("metric".len());
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  value", "metric");
        let _ = writeln!(out, "{:<width$}  {}", "n", self.n);
        for (name, value) in &self.entries {
            let _ = writeln!(out, "{name:<width$}  {value:.6}");
        }
        out
    }
}

/// Computes every metric on `dataset`'s predictions.
///
/// AUC is omitted when only one class is present.
pub fn evaluate(dataset: &Dataset, config: &EvalConfig) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(CalibError::Data("cannot evaluate an empty dataset".into()));
    }
    let predictions = dataset.predictions();
    let labels = dataset.labels();
    let mut entries = BTreeMap::new();
    if !config.fields.is_empty() {
        let mut sum = 0.0;
        for f in &config.fields {
            let v = Grouping::by_field(dataset, f)?.field_rce(&predictions, &labels);
            sum += v;
            entries.insert(format!("field-rce:{f}"), v);
        }
        entries.insert("multi-field-rce".into(), sum / config.fields.len() as f64);
    }
    entries.insert("ece".into(), ece(&predictions, &labels, config.ece_bins)?);
    entries.insert(
        "mvce".into(),
        mvce(&predictions, &labels, config.ece_bins, config.mvce_shuffles, config.seed)?,
    );
    if let Ok(a) = auc(&predictions, &labels) {
        entries.insert("auc".into(), a);
    }
    entries.insert("logloss".into(), logloss(&predictions, &labels)?);
    Ok(EvalReport { n: dataset.len(), entries, config: config.clone() })
}
