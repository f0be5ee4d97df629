//! Multi-field fusion: weighted geometric mean of per-field multipliers and a
//! grid search for the weights over a simplex lattice.

use serde::{Deserialize, Serialize};

use crate::confcalib::ConfCalibModel;
use crate::dataset::Dataset;
use crate::error::{CalibError, Result};
use crate::metrics::{self, Grouping};

/// Calibrated probabilities are kept inside `[PROB_FLOOR, 1 - PROB_FLOOR]`.
pub const PROB_FLOOR: f64 = 1e-6;

pub const DEFAULT_STEP: f64 = 0.05;

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// Fusion weights on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub weights: Vec<f64>,
    /// Lattice resolution the weights were fitted at, if any.
    pub step: Option<f64>,
}

impl FusionWeights {
    pub fn uniform(k: usize) -> Self {
        Self { weights: vec![1.0 / k as f64; k], step: None }
    }

    pub fn new(weights: Vec<f64>) -> Result<Self> {
        validate_weights(&weights)?;
        Ok(Self { weights, step: None })
    }
}

pub(crate) fn validate_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(CalibError::Config("fusion needs at least one weight".into()));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(CalibError::Config(format!("weights must be finite and >= 0: {weights:?}")));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(CalibError::Config(format!("weights sum to {sum}, expected 1")));
    }
    Ok(())
}

/// `clamp(m_1^w_1 * ... * m_K^w_K * p_pred)`.
pub fn fuse(multipliers: &[f64], weights: &[f64], p_pred: f64) -> f64 {
    debug_assert_eq!(multipliers.len(), weights.len());
    let scale: f64 = multipliers.iter().zip(weights).map(|(m, w)| m.powf(*w)).product();
    clamp_prob(scale * p_pred)
}

/// What the weight search minimizes.
#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    FieldRce(String),
    MultiFieldRce,
    Ece { bins: usize },
    Mvce { bins: usize, shuffles: usize, seed: u64 },
}

impl Objective {
    /// Parses `field-rce:<field>`, `multi-field-rce`, `ece` or `mvce`; the
    /// global metrics use the default bin/shuffle settings.
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "multi-field-rce" => Ok(Objective::MultiFieldRce),
            "ece" => Ok(Objective::Ece { bins: metrics::DEFAULT_BINS }),
            "mvce" => Ok(Objective::Mvce {
                bins: metrics::DEFAULT_BINS,
                shuffles: metrics::DEFAULT_SHUFFLES,
                seed: metrics::DEFAULT_SEED,
            }),
            other => match other.strip_prefix("field-rce:") {
                Some(field) if !field.is_empty() => Ok(Objective::FieldRce(field.to_string())),
                _ => Err(CalibError::Config(format!("unknown objective {other:?}"))),
            },
        }
    }
}

/// Every point `(a_1, ..., a_K) * step` with non-negative integer `a_i`
/// summing to `1 / step`, in lexicographic order.
pub fn simplex_lattice(k: usize, step: f64) -> Result<Vec<Vec<f64>>> {
    let divisions = lattice_divisions(step)?;
    if k == 0 {
        return Err(CalibError::Config("lattice needs at least one coordinate".into()));
    }
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(k);
    compositions(k, divisions, &mut current, &mut out);
    Ok(out
        .into_iter()
        .map(|c| c.into_iter().map(|a| a as f64 / divisions as f64).collect())
        .collect())
}

fn lattice_divisions(step: f64) -> Result<usize> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(CalibError::Config(format!("grid step must be in (0, 1], got {step}")));
    }
    let divisions = (1.0 / step).round();
    if (divisions * step - 1.0).abs() > 1e-9 {
        return Err(CalibError::Config(format!("1/step must be an integer, got step {step}")));
    }
    Ok(divisions as usize)
}

fn compositions(k: usize, remaining: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if current.len() + 1 == k {
        current.push(remaining);
        out.push(current.clone());
        current.pop();
        return;
    }
    for a in 0..=remaining {
        current.push(a);
        compositions(k, remaining - a, current, out);
        current.pop();
    }
}

/// Result of a weight search, including the score of every lattice point.
#[derive(Debug, Clone)]
pub struct WeightSearch {
    pub best: FusionWeights,
    pub best_score: f64,
    pub candidates: Vec<(Vec<f64>, f64)>,
}

/// Grid search for the fusion weights of `model` on `dataset`.
///
/// Per-field multipliers are computed once; each lattice point then only
/// re-fuses and re-scores. Ties keep the lexicographically smallest vector.
pub fn fit_weights(
    model: &ConfCalibModel,
    dataset: &Dataset,
    objective: &Objective,
    step: f64,
) -> Result<WeightSearch> {
    if dataset.is_empty() {
        return Err(CalibError::Fit("cannot fit weights on an empty dataset".into()));
    }
    let k = model.spec().len();
    let lattice = simplex_lattice(k, step)?;
    let labels = dataset.labels();
    let multipliers = model.multiplier_matrix(dataset)?;

    let groupings: Vec<Grouping> = match objective {
        Objective::FieldRce(field) => vec![Grouping::by_field(dataset, field)?],
        Objective::MultiFieldRce => model
            .spec()
            .names()
            .iter()
            .map(|f| Grouping::by_field(dataset, f))
            .collect::<Result<_>>()?,
        Objective::Ece { bins } | Objective::Mvce { bins, .. } => {
            if *bins == 0 || *bins > dataset.len() {
                return Err(CalibError::Config(format!(
                    "objective needs 1 <= bins <= {}, got {bins}",
                    dataset.len()
                )));
            }
            Vec::new()
        }
    };

    let mut calibrated = vec![0.0; dataset.len()];
    let mut candidates = Vec::with_capacity(lattice.len());
    let mut best: Option<(usize, f64)> = None;
    for (ci, weights) in lattice.iter().enumerate() {
        for ((out, sample), row) in calibrated.iter_mut().zip(dataset.samples()).zip(&multipliers) {
            *out = fuse(row, weights, sample.prediction);
        }
        let score = match objective {
            Objective::FieldRce(_) | Objective::MultiFieldRce => {
                groupings.iter().map(|g| g.field_rce(&calibrated, &labels)).sum::<f64>()
                    / groupings.len() as f64
            }
            Objective::Ece { bins } => metrics::ece(&calibrated, &labels, *bins)?,
            Objective::Mvce { bins, shuffles, seed } => {
                metrics::mvce(&calibrated, &labels, *bins, *shuffles, *seed)?
            }
        };
        if !score.is_finite() {
            return Err(CalibError::Domain(format!("objective is not finite at weights {weights:?}")));
        }
        if best.is_none_or(|(_, s)| score < s) {
            best = Some((ci, score));
        }
        candidates.push((weights.clone(), score));
    }
    let (bi, best_score) = best.expect("lattice is never empty");
    Ok(WeightSearch {
        best: FusionWeights { weights: lattice[bi].clone(), step: Some(step) },
        best_score,
        candidates,
    })
}
