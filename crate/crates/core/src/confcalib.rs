//! Confidence-aware field calibration.
//!
//! For each subset (one field value, optionally one prediction bin) the
//! deviation score `z` places the subset's mean prediction on the Wilson bound
//! around its observed rate. The score is shrunk through a bounded sigmoid
//! variant and the Wilson bound at the shrunk score becomes the calibrated
//! subset mean. Members of the subset are then scaled by
//! `calibrated_mean / mean_prediction`.
//!
//! Small subsets have wide intervals, so the same absolute gap yields a small
//! `z` and a mild correction. Large subsets get pulled close to their
//! observed rate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::binning;
use crate::dataset::{partition_indices, Dataset, FieldSpec, SubsetStats};
use crate::error::{CalibError, Result};
use crate::fusion::{self, fuse, FusionWeights};
use crate::wilson::{solve_deviation, wilson_interval, P_HAT_FLOOR};

pub const DEFAULT_LAMBDA: f64 = 2.0;

/// Bounded shrinkage of deviation scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZTransform {
    lambda: f64,
}

impl ZTransform {
    pub fn new(lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn apply(&self, z: f64) -> f64 {
        z_transform(z, self.lambda)
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(CalibError::Config(format!("lambda must be a positive finite number, got {lambda}")))
    }
}

/// `min(lambda * (2 / (1 + e^(-z/2)) - 1), z)`.
///
/// The `min` keeps the shrunk score at or below `z`, which keeps the
/// calibrated mean between the observed rate and the prediction even when
/// `lambda > 4`.
pub fn z_transform(z: f64, lambda: f64) -> f64 {
    let g = lambda * (2.0 / (1.0 + (-z / 2.0).exp()) - 1.0);
    g.min(z)
}

/// Outcome of calibrating one subset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibratedMean {
    pub z: f64,
    pub z_prime: f64,
    pub p_hat_prime: f64,
    pub multiplier: f64,
}

pub fn calibrated_mean(stats: &SubsetStats, lambda: f64) -> Result<CalibratedMean> {
    check_lambda(lambda)?;
    let SubsetStats { n, p, p_hat, .. } = *stats;
    if p_hat == p {
        return Ok(CalibratedMean { z: 0.0, z_prime: 0.0, p_hat_prime: p, multiplier: 1.0 });
    }
    let z = solve_deviation(stats)?.value();
    let z_prime = z_transform(z, lambda);
    let (lower, upper) = wilson_interval(p, n, z_prime)?;
    let p_hat_prime = if p_hat > p { upper } else { lower };
    let multiplier = p_hat_prime / p_hat.clamp(P_HAT_FLOOR, 1.0);
    if !(multiplier.is_finite() && multiplier > 0.0) {
        return Err(CalibError::Domain(format!(
            "degenerate multiplier {multiplier} for n={n}, p={p}, p_hat={p_hat}"
        )));
    }
    Ok(CalibratedMean { z, z_prime, p_hat_prime, multiplier })
}

/// Per-bin multipliers for one subset, bins ordered by prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinCalibrator {
    pub edges: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub stats: Vec<SubsetStats>,
}

impl BinCalibrator {
    /// Fits on `(prediction, label)` pairs that are already sorted by prediction.
    fn fit_sorted(pairs: &[(f64, bool)], bins: usize, lambda: f64) -> Result<Self> {
        if pairs.is_empty() {
            return Err(CalibError::EmptySubset);
        }
        let predictions: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let ranges = binning::equal_frequency(&predictions, bins);
        let edges = binning::midpoint_edges(&predictions, &ranges);
        let mut multipliers = Vec::with_capacity(ranges.len());
        let mut stats = Vec::with_capacity(ranges.len());
        for r in ranges {
            let s = SubsetStats::from_pairs(pairs[r].iter().copied())?;
            multipliers.push(calibrated_mean(&s, lambda)?.multiplier);
            stats.push(s);
        }
        Ok(Self { edges, multipliers, stats })
    }

    pub fn fit(pairs: &[(f64, bool)], bins: usize, lambda: f64) -> Result<Self> {
        let mut sorted = pairs.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self::fit_sorted(&sorted, bins, lambda)
    }

    pub fn multiplier(&self, prediction: f64) -> f64 {
        self.multipliers[binning::locate(&self.edges, prediction)]
    }

    pub fn len(&self) -> usize {
        self.multipliers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.multipliers.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let ok = !self.multipliers.is_empty()
            && self.multipliers.len() == self.edges.len() + 1
            && self.stats.len() == self.multipliers.len()
            && self.multipliers.iter().all(|m| m.is_finite() && *m > 0.0)
            && self.edges.windows(2).all(|w| w[0] < w[1]);
        if ok {
            Ok(())
        } else {
            Err(CalibError::Data("malformed bin calibrator".into()))
        }
    }
}

/// Calibrators for every observed value of one field, plus a global fallback
/// used for values never seen during fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldCalibrator {
    pub field: String,
    pub table: BTreeMap<String, BinCalibrator>,
    pub fallback: BinCalibrator,
}

impl FieldCalibrator {
    pub fn multiplier(&self, value: &str, prediction: f64) -> f64 {
        self.table.get(value).unwrap_or(&self.fallback).multiplier(prediction)
    }

    pub fn calibrator_for(&self, value: &str) -> &BinCalibrator {
        self.table.get(value).unwrap_or(&self.fallback)
    }
}

pub fn fit_field(dataset: &Dataset, field: &str, bins: usize, lambda: f64) -> Result<FieldCalibrator> {
    if dataset.is_empty() {
        return Err(CalibError::Fit("cannot fit a field calibrator on an empty dataset".into()));
    }
    if bins == 0 {
        return Err(CalibError::Config("bin count must be >= 1".into()));
    }
    check_lambda(lambda)?;
    let samples = dataset.samples();
    let sorted_pairs = |indices: &mut dyn Iterator<Item = usize>| {
        let mut pairs: Vec<(f64, bool)> =
            indices.map(|i| (samples[i].prediction, samples[i].label)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        pairs
    };

    let mut table = BTreeMap::new();
    for (value, indices) in partition_indices(dataset, field)? {
        let pairs = sorted_pairs(&mut indices.into_iter());
        table.insert(value.to_string(), BinCalibrator::fit_sorted(&pairs, bins, lambda)?);
    }
    let all = sorted_pairs(&mut (0..samples.len()));
    let fallback = BinCalibrator::fit_sorted(&all, bins, lambda)?;
    Ok(FieldCalibrator { field: field.to_string(), table, fallback })
}

/// Hyperparameters for fitting a [`ConfCalibModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub bins: usize,
    pub lambda: f64,
}

impl FitConfig {
    pub fn new(bins: usize, lambda: f64) -> Self {
        Self { bins, lambda }
    }
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { bins: 1, lambda: DEFAULT_LAMBDA }
    }
}

/// One [`FieldCalibrator`] per target field, fused with simplex weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfCalibModel {
    spec: FieldSpec,
    lambda: f64,
    bins: usize,
    calibrators: Vec<FieldCalibrator>,
    weights: FusionWeights,
}

impl ConfCalibModel {
    /// Fits every field of `spec` on `dataset`; weights start out uniform.
    pub fn fit(dataset: &Dataset, spec: &FieldSpec, config: &FitConfig) -> Result<Self> {
        if spec.is_empty() {
            return Err(CalibError::Config("at least one target field is required".into()));
        }
        let calibrators = spec
            .names()
            .iter()
            .map(|f| fit_field(dataset, f, config.bins, config.lambda))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec: spec.clone(),
            lambda: config.lambda,
            bins: config.bins,
            calibrators,
            weights: FusionWeights::uniform(spec.len()),
        })
    }

    pub fn spec(&self) -> &FieldSpec {
        &self.spec
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn calibrators(&self) -> &[FieldCalibrator] {
        &self.calibrators
    }

    pub fn weights(&self) -> &FusionWeights {
        &self.weights
    }

    pub fn set_weights(&mut self, weights: FusionWeights) -> Result<()> {
        if weights.weights.len() != self.spec.len() {
            return Err(CalibError::Config(format!(
                "model has {} fields but {} weights were given",
                self.spec.len(),
                weights.weights.len()
            )));
        }
        fusion::validate_weights(&weights.weights)?;
        self.weights = weights;
        Ok(())
    }

    /// Column index in `dataset` of each model field.
    fn field_columns(&self, dataset: &Dataset) -> Result<Vec<usize>> {
        self.spec
            .names()
            .iter()
            .map(|f| {
                dataset.spec().index_of(f).map_err(|_| {
                    CalibError::Data(format!("input has no column for model field {f:?}"))
                })
            })
            .collect()
    }

    /// Per-sample, per-field multipliers (`[sample][field]`).
    pub fn multiplier_matrix(&self, dataset: &Dataset) -> Result<Vec<Vec<f64>>> {
        let columns = self.field_columns(dataset)?;
        Ok(dataset
            .samples()
            .iter()
            .map(|s| {
                self.calibrators
                    .iter()
                    .zip(&columns)
                    .map(|(c, &col)| c.multiplier(&s.values[col], s.prediction))
                    .collect()
            })
            .collect())
    }

    /// Calibrated probability for every sample of `dataset`.
    pub fn calibrate(&self, dataset: &Dataset) -> Result<Vec<f64>> {
        let columns = self.field_columns(dataset)?;
        let mut row = vec![0.0; self.calibrators.len()];
        Ok(dataset
            .samples()
            .iter()
            .map(|s| {
                for ((m, c), &col) in row.iter_mut().zip(&self.calibrators).zip(&columns) {
                    *m = c.multiplier(&s.values[col], s.prediction);
                }
                fuse(&row, &self.weights.weights, s.prediction)
            })
            .collect())
    }

    /// Checks structural invariants of a deserialized model.
    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda)?;
        if self.bins == 0 {
            return Err(CalibError::Data("model bin count must be >= 1".into()));
        }
        if self.calibrators.len() != self.spec.len() || self.weights.weights.len() != self.spec.len() {
            return Err(CalibError::Data("model field, calibrator and weight counts differ".into()));
        }
        fusion::validate_weights(&self.weights.weights)?;
        for (c, name) in self.calibrators.iter().zip(self.spec.names()) {
            if &c.field != name {
                return Err(CalibError::Data(format!("calibrator for {:?} found in slot {name:?}", c.field)));
            }
            c.fallback.validate()?;
            for b in c.table.values() {
                b.validate()?;
            }
        }
        Ok(())
    }
}
