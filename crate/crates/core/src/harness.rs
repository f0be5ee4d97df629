//! Synthetic miscalibrated data with known ground truth, and an offline
//! simulation of periodic calibration refits over a timestamped log.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::{Arc, RwLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::baselines::{logit, sigmoid};
use crate::confcalib::{ConfCalibModel, FitConfig};
use crate::dataset::{Dataset, FieldSpec, Sample};
use crate::error::{CalibError, Result};
use crate::fusion::{fit_weights, Objective};
use crate::metrics::{self, Grouping};
use crate::pipeline::{Pipeline, Stage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthField {
    pub name: String,
    pub cardinality: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.0, validation: 0.5, test: 0.5 }
    }
}

fn default_spread() -> f64 {
    0.5
}

fn default_temperature() -> f64 {
    1.0
}

/// Generator settings. Field values are named `v0`, `v1`, ...
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_samples: usize,
    pub fields: Vec<SynthField>,
    pub base_rate: f64,
    /// Standard deviation of the true per-value logit effects.
    #[serde(default = "default_spread")]
    pub truth_spread: f64,
    /// Logit shift added to the prediction (not the truth), per field and value.
    #[serde(default)]
    pub bias: BTreeMap<String, BTreeMap<String, f64>>,
    /// Global temperature applied to the prediction logit.
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default)]
    pub split: SplitRatios,
    /// When set, sample `i` gets timestamp `start_time + i * seconds_per_sample`.
    #[serde(default)]
    pub seconds_per_sample: Option<i64>,
    #[serde(default)]
    pub start_time: i64,
}

impl SynthConfig {
    pub fn new(seed: u64, n_samples: usize, fields: &[(&str, usize)], base_rate: f64) -> Self {
        Self {
            seed,
            n_samples,
            fields: fields
                .iter()
                .map(|&(name, cardinality)| SynthField { name: name.to_string(), cardinality })
                .collect(),
            base_rate,
            truth_spread: default_spread(),
            bias: BTreeMap::new(),
            temperature: default_temperature(),
            split: SplitRatios::default(),
            seconds_per_sample: None,
            start_time: 0,
        }
    }

    /// Two-field reference setup: seed 42, 100k samples, `site=v3` shifted by
    /// +1.0 logit, temperature 1.2.
    pub fn reference() -> Self {
        let mut config = Self::new(42, 100_000, &[("site", 8), ("app", 12)], 0.1).with_bias("site", "v3", 1.0);
        config.temperature = 1.2;
        config
    }

    pub fn with_bias(mut self, field: &str, value: &str, shift: f64) -> Self {
        self.bias.entry(field.to_string()).or_default().insert(value.to_string(), shift);
        self
    }

    pub fn spec(&self) -> Result<FieldSpec> {
        FieldSpec::new(self.fields.iter().map(|f| f.name.clone()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CalibError::Config(m));
        if !(self.base_rate > 0.0 && self.base_rate < 1.0) {
            return bad(format!("base_rate must be in (0, 1), got {}", self.base_rate));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return bad(format!("temperature must be > 0, got {}", self.temperature));
        }
        if !(self.truth_spread.is_finite() && self.truth_spread >= 0.0) {
            return bad(format!("truth_spread must be >= 0, got {}", self.truth_spread));
        }
        let SplitRatios { train, validation, test } = self.split;
        if [train, validation, test].iter().any(|r| !(0.0..=1.0).contains(r))
            || (train + validation + test - 1.0).abs() > 1e-9
        {
            return bad("split ratios must be in [0, 1] and sum to 1".into());
        }
        let spec = self.spec()?;
        for f in &self.fields {
            if f.cardinality == 0 {
                return bad(format!("field {:?} needs cardinality >= 1", f.name));
            }
        }
        for (field, shifts) in &self.bias {
            let idx = spec.index_of(field)?;
            for (value, shift) in shifts {
                if value_index(value).is_none_or(|v| v >= self.fields[idx].cardinality) {
                    return bad(format!("bias refers to unknown value {value:?} of field {field:?}"));
                }
                if !shift.is_finite() {
                    return bad(format!("bias for {field}={value} is not finite"));
                }
            }
        }
        Ok(())
    }
}

fn value_name(i: usize) -> String {
    format!("v{i}")
}

fn value_index(name: &str) -> Option<usize> {
    name.strip_prefix('v')?.parse().ok()
}

/// A generated dataset and the true probability of every sample.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub dataset: Dataset,
    pub truth: Vec<f64>,
}

/// Draws a dataset whose labels follow the true probabilities while the
/// predictions carry per-value logit biases and a global temperature.
/// Bit-reproducible for a fixed seed.
pub fn generate(config: &SynthConfig) -> Result<Synthetic> {
    config.validate()?;
    let spec = config.spec()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let base = logit(config.base_rate);

    let effects: Vec<Vec<f64>> = if config.truth_spread > 0.0 {
        let normal = Normal::new(0.0, config.truth_spread).expect("spread validated");
        config.fields.iter().map(|f| (0..f.cardinality).map(|_| normal.sample(&mut rng)).collect()).collect()
    } else {
        config.fields.iter().map(|f| vec![0.0; f.cardinality]).collect()
    };
    let biases: Vec<Vec<f64>> = config
        .fields
        .iter()
        .map(|f| {
            let shifts = config.bias.get(&f.name);
            (0..f.cardinality)
                .map(|v| shifts.and_then(|s| s.get(&value_name(v))).copied().unwrap_or(0.0))
                .collect()
        })
        .collect();

    let mut samples = Vec::with_capacity(config.n_samples);
    let mut truth = Vec::with_capacity(config.n_samples);
    for i in 0..config.n_samples {
        let mut true_logit = base;
        let mut shift = 0.0;
        let mut values = Vec::with_capacity(config.fields.len());
        for (k, f) in config.fields.iter().enumerate() {
            let v = rng.random_range(0..f.cardinality as u64) as usize;
            true_logit += effects[k][v];
            shift += biases[k][v];
            values.push(value_name(v));
        }
        let q = sigmoid(true_logit);
        let label = rng.random::<f64>() < q;
        let prediction = sigmoid((true_logit + shift) / config.temperature);
        let mut sample = Sample { prediction, label, values, timestamp: None };
        if let Some(step) = config.seconds_per_sample {
            sample.timestamp = Some(config.start_time + i as i64 * step);
        }
        samples.push(sample);
        truth.push(q);
    }
    Ok(Synthetic { dataset: Dataset::new(spec, samples)?, truth })
}

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Synthetic,
    pub validation: Synthetic,
    pub test: Synthetic,
}

/// Splits by position into train, validation and test.
pub fn split(data: &Synthetic, ratios: SplitRatios) -> Splits {
    let n = data.dataset.len();
    let n_train = (n as f64 * ratios.train).round() as usize;
    let n_val = ((n as f64 * ratios.validation).round() as usize).min(n - n_train);
    let part = |range: std::ops::Range<usize>| Synthetic {
        dataset: data.dataset.select(&range.clone().collect::<Vec<_>>()),
        truth: data.truth[range].to_vec(),
    };
    Splits {
        train: part(0..n_train),
        validation: part(n_train..n_train + n_val),
        test: part(n_train + n_val..n),
    }
}

/// Keeps each sample independently with probability `rate`, in original order.
pub fn subsample(dataset: &Dataset, rate: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep: Vec<usize> = (0..dataset.len()).filter(|_| rng.random::<f64>() < rate).collect();
    dataset.select(&keep)
}

/// How a refit chooses fusion weights.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightPolicy {
    Uniform,
    Grid { objective: Objective, step: f64 },
}

/// Fits a confidence-aware model, grid-searching weights if asked.
pub fn fit_model(dataset: &Dataset, spec: &FieldSpec, fit: &FitConfig, policy: &WeightPolicy) -> Result<ConfCalibModel> {
    let mut model = ConfCalibModel::fit(dataset, spec, fit)?;
    if let WeightPolicy::Grid { objective, step } = policy {
        let search = fit_weights(&model, dataset, objective, *step)?;
        model.set_weights(search.best)?;
    }
    Ok(model)
}

#[derive(Debug, Clone)]
pub struct StreamConfig {
    pub refit_interval: i64,
    pub window: i64,
    pub spec: FieldSpec,
    pub fit: FitConfig,
    pub weights: WeightPolicy,
    /// ECE bins per interval (capped at the interval size).
    pub ece_bins: usize,
}

impl StreamConfig {
    pub fn new(refit_interval: i64, window: i64, spec: FieldSpec, fit: FitConfig) -> Self {
        Self {
            refit_interval,
            window,
            spec,
            fit,
            weights: WeightPolicy::Uniform,
            ece_bins: metrics::DEFAULT_BINS,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.refit_interval <= 0 {
            return Err(CalibError::Config("refit interval must be > 0".into()));
        }
        if self.window < self.refit_interval {
            return Err(CalibError::Config("window must be >= refit interval".into()));
        }
        Ok(())
    }
}

/// An immutable published calibration model.
#[derive(Debug, Clone)]
pub struct Snapshot {
    /// 0 is the identity snapshot; each refit increments it.
    pub version: u64,
    pub pipeline: Pipeline,
    /// Latest timestamp among the samples the snapshot was fitted on.
    pub fitted_through: Option<i64>,
}

/// Single-writer, many-reader holder of the current snapshot. Readers get an
/// `Arc` to a complete snapshot; publishing swaps the pointer.
#[derive(Debug)]
pub struct SnapshotStore {
    current: RwLock<Arc<Snapshot>>,
}

impl SnapshotStore {
    pub fn new(initial: Snapshot) -> Self {
        Self { current: RwLock::new(Arc::new(initial)) }
    }

    pub fn load(&self) -> Arc<Snapshot> {
        Arc::clone(&self.current.read().expect("snapshot lock poisoned"))
    }

    pub fn publish(&self, snapshot: Snapshot) {
        *self.current.write().expect("snapshot lock poisoned") = Arc::new(snapshot);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalReport {
    pub start: i64,
    pub n: usize,
    pub snapshot: u64,
    pub fitted_through: Option<i64>,
    /// Empty when the interval has no samples.
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct StreamReport {
    pub intervals: Vec<IntervalReport>,
    /// Refits that produced a new snapshot.
    pub refits: usize,
    pub metric_names: Vec<String>,
    pub final_snapshot: Arc<Snapshot>,
}

impl StreamReport {
    /// CSV with columns `interval_start,n` followed by one column per metric.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["interval_start".to_string(), "n".to_string()];
        header.extend(self.metric_names.iter().cloned());
        w.write_record(&header)?;
        for iv in &self.intervals {
            let mut row = vec![iv.start.to_string(), iv.n.to_string()];
            for m in &self.metric_names {
                row.push(iv.metrics.get(m).map(|v| crate::io::format_prob(*v)).unwrap_or_default());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn interval_metrics(
    raw: &Dataset,
    calibrated: &[f64],
    spec: &FieldSpec,
    ece_bins: usize,
) -> Result<BTreeMap<String, f64>> {
    let labels = raw.labels();
    let raw_preds = raw.predictions();
    let mut out = BTreeMap::new();
    let (mut cal_sum, mut raw_sum) = (0.0, 0.0);
    for f in spec.names() {
        let g = Grouping::by_field(raw, f)?;
        let c = g.field_rce(calibrated, &labels);
        cal_sum += c;
        raw_sum += g.field_rce(&raw_preds, &labels);
        out.insert(format!("field-rce:{f}"), c);
    }
    let k = spec.len() as f64;
    out.insert("multi-field-rce".into(), cal_sum / k);
    out.insert("raw-multi-field-rce".into(), raw_sum / k);
    out.insert("ece".into(), metrics::ece(calibrated, &labels, ece_bins.min(raw.len()))?);
    out.insert("logloss".into(), metrics::logloss(calibrated, &labels)?);
    Ok(out)
}

fn metric_names(spec: &FieldSpec) -> Vec<String> {
    let mut names: Vec<String> = spec.names().iter().map(|f| format!("field-rce:{f}")).collect();
    names.extend(["multi-field-rce", "raw-multi-field-rce", "ece", "logloss"].map(String::from));
    names
}

/// Replays `log` in fixed steps of `refit_interval` seconds.
///
/// Interval `k` covers `[t0 + k*step, t0 + (k+1)*step)`. At the end of each
/// interval a model is fitted on the samples in the trailing `window`
/// (strictly before the boundary) and published; the next interval is scored
/// with whatever snapshot is current. The first interval uses the identity.
pub fn simulate_stream(log: &Dataset, config: &StreamConfig) -> Result<StreamReport> {
    config.validate()?;
    let samples = log.samples();
    if samples.is_empty() {
        return Err(CalibError::Data("stream log is empty".into()));
    }
    let mut times = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let t = s
            .timestamp
            .ok_or_else(|| CalibError::Data(format!("sample {i} has no timestamp")))?;
        if times.last().is_some_and(|&prev| t < prev) {
            return Err(CalibError::Data(format!("log is not sorted by timestamp at sample {i}")));
        }
        times.push(t);
    }
    let t0 = times[0];
    let step = config.refit_interval;
    let count = ((times[times.len() - 1] - t0) / step + 1) as usize;
    let bound = |t: i64| times.partition_point(|&x| x < t);

    let store = SnapshotStore::new(Snapshot { version: 0, pipeline: Pipeline::identity(), fitted_through: None });
    let mut intervals = Vec::with_capacity(count);
    let mut refits = 0;
    for k in 0..count {
        let start = t0 + k as i64 * step;
        let end = start + step;
        let (lo, hi) = (bound(start), bound(end));
        let active = store.load();
        let metrics = if hi > lo {
            let chunk = log.select(&(lo..hi).collect::<Vec<_>>());
            let calibrated = active.pipeline.calibrate(&chunk)?;
            interval_metrics(&chunk, &calibrated, &config.spec, config.ece_bins)?
        } else {
            BTreeMap::new()
        };
        intervals.push(IntervalReport {
            start,
            n: hi - lo,
            snapshot: active.version,
            fitted_through: active.fitted_through,
            metrics,
        });

        let (wlo, whi) = (bound(end - config.window), hi);
        if whi > wlo {
            let window = log.select(&(wlo..whi).collect::<Vec<_>>());
            let model = fit_model(&window, &config.spec, &config.fit, &config.weights)?;
            store.publish(Snapshot {
                version: active.version + 1,
                pipeline: Pipeline::single(Stage::ConfCalib(model)),
                fitted_through: Some(times[whi - 1]),
            });
            refits += 1;
        }
    }
    Ok(StreamReport { intervals, refits, metric_names: metric_names(&config.spec), final_snapshot: store.load() })
}
