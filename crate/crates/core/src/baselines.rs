//! Classical calibrators: naive scaling, Platt scaling, histogram binning and
//! isotonic regression.

use serde::{Deserialize, Serialize};

use crate::binning;
use crate::dataset::Dataset;
use crate::error::{CalibError, Result};
use crate::fusion::clamp_prob;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "lowercase")]
pub enum CalibratorArtifact {
    Naive { k: f64 },
    Platt { a: f64, b: f64 },
    #[serde(rename = "histbin")]
    HistBin { edges: Vec<f64>, rates: Vec<f64> },
    Isotonic { breakpoints: Vec<f64>, levels: Vec<f64> },
}

impl CalibratorArtifact {
    pub fn kind(&self) -> &'static str {
        match self {
            CalibratorArtifact::Naive { .. } => "naive",
            CalibratorArtifact::Platt { .. } => "platt",
            CalibratorArtifact::HistBin { .. } => "histbin",
            CalibratorArtifact::Isotonic { .. } => "isotonic",
        }
    }

    pub fn apply(&self, p: f64) -> f64 {
        match self {
            CalibratorArtifact::Naive { k } => clamp_prob(k * p),
            CalibratorArtifact::Platt { a, b } => sigmoid(a * logit(clamp_prob(p)) + b),
            CalibratorArtifact::HistBin { edges, rates } => rates[binning::locate(edges, p)],
            CalibratorArtifact::Isotonic { breakpoints, levels } => {
                let i = breakpoints.partition_point(|&b| b <= p);
                levels[i.saturating_sub(1)]
            }
        }
    }

    pub fn apply_all(&self, dataset: &Dataset) -> Vec<f64> {
        dataset.samples().iter().map(|s| self.apply(s.prediction)).collect()
    }

    /// Checks structural invariants of a deserialized artifact.
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            CalibratorArtifact::Naive { k } => k.is_finite() && *k > 0.0,
            CalibratorArtifact::Platt { a, b } => a.is_finite() && b.is_finite(),
            CalibratorArtifact::HistBin { edges, rates } => {
                rates.len() == edges.len() + 1
                    && rates.iter().all(|r| (0.0..=1.0).contains(r))
                    && edges.windows(2).all(|w| w[0] < w[1])
            }
            CalibratorArtifact::Isotonic { breakpoints, levels } => {
                !levels.is_empty()
                    && levels.len() == breakpoints.len()
                    && levels.iter().all(|l| (0.0..=1.0).contains(l))
                    && levels.windows(2).all(|w| w[0] <= w[1])
                    && breakpoints.windows(2).all(|w| w[0] < w[1])
            }
        };
        if ok {
            Ok(())
        } else {
            Err(CalibError::Data(format!("malformed {} calibrator", self.kind())))
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Scales every prediction by `mean(label) / mean(prediction)`.
pub fn fit_naive(dataset: &Dataset) -> Result<CalibratorArtifact> {
    if dataset.is_empty() {
        return Err(CalibError::Fit("naive scaling needs a non-empty dataset".into()));
    }
    let n = dataset.len() as f64;
    let mean_pred = dataset.samples().iter().map(|s| s.prediction).sum::<f64>() / n;
    let mean_label = dataset.samples().iter().map(|s| s.target()).sum::<f64>() / n;
    if mean_pred <= 0.0 {
        return Err(CalibError::Fit("mean prediction is zero".into()));
    }
    if mean_label <= 0.0 {
        return Err(CalibError::Fit("naive scaling needs at least one positive label".into()));
    }
    Ok(CalibratorArtifact::Naive { k: mean_label / mean_pred })
}

const PLATT_MAX_ITER: usize = 100;
const PLATT_GRAD_TOL: f64 = 1e-8;

/// Maximum-likelihood fit of `sigmoid(a * logit(p) + b)` by damped Newton.
pub fn fit_platt(dataset: &Dataset) -> Result<CalibratorArtifact> {
    let xs: Vec<f64> = dataset.samples().iter().map(|s| logit(clamp_prob(s.prediction))).collect();
    let ys: Vec<f64> = dataset.samples().iter().map(|s| s.target()).collect();
    let positives = ys.iter().filter(|&&y| y > 0.0).count();
    if positives == 0 || positives == ys.len() {
        return Err(CalibError::Fit("Platt scaling needs both classes".into()));
    }
    let (a, b) = newton_logistic(&xs, &ys);
    if !(a.is_finite() && b.is_finite()) {
        return Err(CalibError::Fit(format!("Platt fit diverged: a={a}, b={b}")));
    }
    Ok(CalibratorArtifact::Platt { a, b })
}

fn mean_logloss(xs: &[f64], ys: &[f64], a: f64, b: f64) -> f64 {
    let n = xs.len() as f64;
    xs.iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let t = a * x + b;
            // log(1 + e^t) - y t, written to avoid overflow for large |t|.
            let softplus = if t > 0.0 { t + (-t).exp().ln_1p() } else { t.exp().ln_1p() };
            softplus - y * t
        })
        .sum::<f64>()
        / n
}

fn newton_logistic(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let (mut a, mut b) = (1.0, 0.0);
    let mut loss = mean_logloss(xs, ys, a, b);
    for _ in 0..PLATT_MAX_ITER {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(ys) {
            let q = sigmoid(a * x + b);
            let r = q - y;
            let w = q * (1.0 - q);
            ga += r * x;
            gb += r;
            haa += w * x * x;
            hab += w * x;
            hbb += w;
        }
        let (ga, gb) = (ga / n, gb / n);
        if ga.hypot(gb) < PLATT_GRAD_TOL {
            break;
        }
        // Small ridge keeps the system solvable when the Hessian degenerates.
        let (haa, hab, hbb) = (haa / n + 1e-12, hab / n, hbb / n + 1e-12);
        let det = haa * hbb - hab * hab;
        let (da, db) = if det.abs() > 1e-300 {
            ((hbb * ga - hab * gb) / det, (haa * gb - hab * ga) / det)
        } else {
            (ga, gb)
        };
        let mut step = 1.0;
        let mut improved = false;
        while step >= 1e-10 {
            let (na, nb) = (a - step * da, b - step * db);
            let next = mean_logloss(xs, ys, na, nb);
            if next <= loss {
                (a, b, loss) = (na, nb, next);
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (a, b)
}

/// Equal-frequency histogram binning with `bins` bins; the output for a bin is
/// its positive rate.
pub fn fit_histbin(dataset: &Dataset, bins: usize) -> Result<CalibratorArtifact> {
    if bins == 0 {
        return Err(CalibError::Config("histogram binning needs at least one bin".into()));
    }
    if bins > dataset.len() {
        return Err(CalibError::Fit(format!(
            "{bins} bins requested for {} samples",
            dataset.len()
        )));
    }
    let mut pairs: Vec<(f64, bool)> = dataset.samples().iter().map(|s| (s.prediction, s.label)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let predictions: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ranges = binning::equal_frequency(&predictions, bins);
    let edges = binning::midpoint_edges(&predictions, &ranges);
    let rates = ranges
        .into_iter()
        .map(|r| {
            let len = r.len() as f64;
            pairs[r].iter().filter(|p| p.1).count() as f64 / len
        })
        .collect();
    Ok(CalibratorArtifact::HistBin { edges, rates })
}

/// One pooled block of the isotonic fit.
#[derive(Debug, Clone, Copy)]
struct Block {
    start: f64,
    sum: f64,
    count: f64,
}

impl Block {
    fn mean(&self) -> f64 {
        self.sum / self.count
    }
}

/// Pool-adjacent-violators fit of a non-decreasing step function.
///
/// Samples with equal predictions start out in one block. `breakpoints[i]` is
/// the smallest prediction of block `i`; a query takes the level of the last
/// block starting at or below it (the first block for smaller queries).
pub fn fit_isotonic(dataset: &Dataset) -> Result<CalibratorArtifact> {
    if dataset.is_empty() {
        return Err(CalibError::Fit("isotonic regression needs a non-empty dataset".into()));
    }
    let mut pairs: Vec<(f64, f64)> = dataset.samples().iter().map(|s| (s.prediction, s.target())).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut stack: Vec<Block> = Vec::with_capacity(pairs.len());
    let mut i = 0;
    while i < pairs.len() {
        let x = pairs[i].0;
        let mut block = Block { start: x, sum: 0.0, count: 0.0 };
        while i < pairs.len() && pairs[i].0 == x {
            block.sum += pairs[i].1;
            block.count += 1.0;
            i += 1;
        }
        while let Some(top) = stack.last() {
            if top.mean() < block.mean() {
                break;
            }
            // Merge equal means too so levels are strictly increasing.
            let top = stack.pop().expect("non-empty");
            block = Block { start: top.start, sum: top.sum + block.sum, count: top.count + block.count };
        }
        stack.push(block);
    }
    Ok(CalibratorArtifact::Isotonic {
        breakpoints: stack.iter().map(|b| b.start).collect(),
        levels: stack.iter().map(Block::mean).collect(),
    })
}
