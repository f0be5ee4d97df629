//! Ordered composition of calibrators, applied left to right.

use serde::{Deserialize, Serialize};

use crate::baselines::CalibratorArtifact;
use crate::confcalib::{ConfCalibModel, FitConfig};
use crate::dataset::{Dataset, FieldSpec};
use crate::error::Result;

/// One fitted calibrator. Serializes as `{"kind": ..., "payload": ...}` where
/// `kind` is `confcalib` or one of the baseline kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TaggedStage", into = "TaggedStage")]
pub enum Stage {
    ConfCalib(ConfCalibModel),
    Baseline(CalibratorArtifact),
}

#[derive(Serialize, Deserialize)]
struct TaggedStage {
    kind: String,
    payload: serde_json::Value,
}

impl From<Stage> for TaggedStage {
    fn from(stage: Stage) -> Self {
        let value = match &stage {
            Stage::ConfCalib(m) => serde_json::json!({ "kind": "confcalib", "payload": m }),
            Stage::Baseline(b) => serde_json::to_value(b).expect("artifact serializes"),
        };
        serde_json::from_value(value).expect("tagged shape")
    }
}

impl TryFrom<TaggedStage> for Stage {
    type Error = serde_json::Error;

    fn try_from(tagged: TaggedStage) -> std::result::Result<Self, Self::Error> {
        if tagged.kind == "confcalib" {
            return Ok(Stage::ConfCalib(serde_json::from_value(tagged.payload)?));
        }
        let value = serde_json::json!({ "kind": tagged.kind, "payload": tagged.payload });
        Ok(Stage::Baseline(serde_json::from_value(value)?))
    }
}

impl Stage {
    pub fn kind(&self) -> &'static str {
        match self {
            Stage::ConfCalib(_) => "confcalib",
            Stage::Baseline(b) => b.kind(),
        }
    }

    pub fn calibrate(&self, dataset: &Dataset) -> Result<Vec<f64>> {
        match self {
            Stage::ConfCalib(m) => m.calibrate(dataset),
            Stage::Baseline(b) => Ok(b.apply_all(dataset)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Stage::ConfCalib(m) => m.validate(),
            Stage::Baseline(b) => b.validate(),
        }
    }
}

/// A pipeline with no stages is the identity.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub stages: Vec<Stage>,
}

impl Pipeline {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn single(stage: Stage) -> Self {
        Self { stages: vec![stage] }
    }

    pub fn is_identity(&self) -> bool {
        self.stages.is_empty()
    }

    /// Runs every stage, feeding each stage's output to the next as predictions.
    pub fn calibrate(&self, dataset: &Dataset) -> Result<Vec<f64>> {
        let mut predictions = dataset.predictions();
        let mut staged: Option<Dataset> = None;
        for (i, stage) in self.stages.iter().enumerate() {
            let input = staged.as_ref().unwrap_or(dataset);
            predictions = stage.calibrate(input)?;
            if i + 1 < self.stages.len() {
                staged = Some(input.with_predictions(&predictions)?);
            }
        }
        Ok(predictions)
    }

    /// Copy of `dataset` with predictions replaced by the pipeline output.
    pub fn apply(&self, dataset: &Dataset) -> Result<Dataset> {
        dataset.with_predictions(&self.calibrate(dataset)?)
    }
}

/// Fits a confidence-aware model on top of `inner`'s outputs and returns the
/// two-stage pipeline `inner -> confcalib`.
pub fn recalibrate(
    inner: Pipeline,
    dataset: &Dataset,
    spec: &FieldSpec,
    config: &FitConfig,
) -> Result<(Pipeline, ConfCalibModel)> {
    let transformed = inner.apply(dataset)?;
    let model = ConfCalibModel::fit(&transformed, spec, config)?;
    let mut stages = inner.stages;
    stages.push(Stage::ConfCalib(model.clone()));
    Ok((Pipeline { stages }, model))
}
