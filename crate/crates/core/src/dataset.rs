//! Scored samples, the dataset container, field partitioning and subset
//! statistics.
//!
//! Field values are opaque strings. A sample stores its values positionally,
//! aligned with the [`FieldSpec`] of the dataset that owns it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};

/// Value used for a sample that has no value for a target field.
pub const MISSING: &str = "__missing__";

/// Ordered, non-empty list of unique target field names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct FieldSpec {
    names: Vec<String>,
}

impl FieldSpec {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(CalibError::Config("at least one target field is required".into()));
        }
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() {
                return Err(CalibError::Config("field names must be non-empty".into()));
            }
            if names[..i].contains(name) {
                return Err(CalibError::Config(format!("duplicate field name {name:?}")));
            }
        }
        Ok(Self { names })
    }

    /// Spec with no target fields, for datasets only scored by field-agnostic
    /// calibrators.
    pub fn empty() -> Self {
        Self { names: Vec::new() }
    }

    /// Parses a comma-separated list such as `site,app`.
    pub fn parse_list(list: &str) -> Result<Self> {
        Self::new(list.split(',').map(str::trim))
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, field: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == field)
            .ok_or_else(|| CalibError::Config(format!("unknown field {field:?}")))
    }
}

impl TryFrom<Vec<String>> for FieldSpec {
    type Error = CalibError;

    fn try_from(names: Vec<String>) -> Result<Self> {
        Self::new(names)
    }
}

impl From<FieldSpec> for Vec<String> {
    fn from(spec: FieldSpec) -> Self {
        spec.names
    }
}

/// One scored record.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub prediction: f64,
    pub label: bool,
    /// Field values, in the order of the owning dataset's [`FieldSpec`].
    pub values: Vec<String>,
    pub timestamp: Option<i64>,
}

impl Sample {
    pub fn new<I, S>(prediction: f64, label: bool, values: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            prediction,
            label,
            values: values.into_iter().map(Into::into).collect(),
            timestamp: None,
        }
    }

    pub fn with_timestamp(mut self, timestamp: i64) -> Self {
        self.timestamp = Some(timestamp);
        self
    }

    pub fn target(&self) -> f64 {
        if self.label {
            1.0
        } else {
            0.0
        }
    }
}

/// Samples sharing one [`FieldSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    spec: FieldSpec,
    samples: Vec<Sample>,
}

impl Dataset {
    /// Validates every sample against the spec. Empty field values are
    /// replaced by [`MISSING`].
    pub fn new(spec: FieldSpec, mut samples: Vec<Sample>) -> Result<Self> {
        for (i, s) in samples.iter_mut().enumerate() {
            if !(0.0..=1.0).contains(&s.prediction) {
                return Err(CalibError::Data(format!(
                    "sample {i}: prediction {} outside [0, 1]",
                    s.prediction
                )));
            }
            if s.values.len() != spec.len() {
                return Err(CalibError::Data(format!(
                    "sample {i}: expected {} field values, found {}",
                    spec.len(),
                    s.values.len()
                )));
            }
            for v in s.values.iter_mut() {
                if v.is_empty() {
                    *v = MISSING.to_string();
                }
            }
        }
        Ok(Self { spec, samples })
    }

    pub fn spec(&self) -> &FieldSpec {
        &self.spec
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn predictions(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.prediction).collect()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Copy of the dataset with every prediction replaced.
    pub fn with_predictions(&self, predictions: &[f64]) -> Result<Self> {
        if predictions.len() != self.len() {
            return Err(CalibError::Data(format!(
                "expected {} predictions, found {}",
                self.len(),
                predictions.len()
            )));
        }
        let samples = self
            .samples
            .iter()
            .zip(predictions)
            .map(|(s, &p)| Sample { prediction: p, ..s.clone() })
            .collect();
        Dataset::new(self.spec.clone(), samples)
    }

    /// Copy containing only the samples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            spec: self.spec.clone(),
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    /// Value of `field` on every sample, in sample order.
    pub fn column(&self, field: &str) -> Result<Vec<&str>> {
        let idx = self.spec.index_of(field)?;
        Ok(self.samples.iter().map(|s| s.values[idx].as_str()).collect())
    }
}

/// Groups samples by their value of `field`.
pub fn partition<'a>(dataset: &'a Dataset, field: &str) -> Result<BTreeMap<&'a str, Vec<&'a Sample>>> {
    let idx = dataset.spec.index_of(field)?;
    let mut groups: BTreeMap<&str, Vec<&Sample>> = BTreeMap::new();
    for s in &dataset.samples {
        groups.entry(s.values[idx].as_str()).or_default().push(s);
    }
    Ok(groups)
}

/// Like [`partition`], but yields sample indices.
pub fn partition_indices<'a>(dataset: &'a Dataset, field: &str) -> Result<BTreeMap<&'a str, Vec<usize>>> {
    let idx = dataset.spec.index_of(field)?;
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in dataset.samples.iter().enumerate() {
        groups.entry(s.values[idx].as_str()).or_default().push(i);
    }
    Ok(groups)
}

/// Sample count, positive count, observed rate and mean prediction of a subset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsetStats {
    pub n: u64,
    pub positives: u64,
    pub p: f64,
    pub p_hat: f64,
}

impl SubsetStats {
    /// Builds stats from `(prediction, label)` pairs.
    pub fn from_pairs<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, bool)>,
    {
        let mut n = 0u64;
        let mut positives = 0u64;
        let mut sum = 0.0;
        for (prediction, label) in pairs {
            n += 1;
            positives += u64::from(label);
            sum += prediction;
        }
        if n == 0 {
            return Err(CalibError::EmptySubset);
        }
        Ok(Self {
            n,
            positives,
            p: positives as f64 / n as f64,
            p_hat: sum / n as f64,
        })
    }
}

/// Statistics of a non-empty subset of samples.
pub fn stats<'a, I>(subset: I) -> Result<SubsetStats>
where
    I: IntoIterator<Item = &'a Sample>,
{
    SubsetStats::from_pairs(subset.into_iter().map(|s| (s.prediction, s.label)))
}
