//! Self-describing JSON container for any trained detector.
//!
//! Network weights, batch-norm statistics and optimizer moments are base64
//! blobs of little-endian f64; everything else is plain JSON.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data_model::{write_atomic, PairSample, Preprocess};
use crate::detector::{Detector, ModelKind, TrainedDetector};
use crate::error::{Error, Result};
use crate::representation::{EpochLoss, TrainState};
use crate::spoof_classifier::{ClassifierEpoch, Prediction};

pub const CHECKPOINT_FORMAT: &str = "mtof-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model: ModelKind,
    /// The run configuration that produced this checkpoint.
    pub config: Value,
    /// Preprocessing that inputs must go through before scoring.
    pub preprocess: Preprocess,
    pub epoch: usize,
    /// Optimizer and batch-order RNG position; set for representation models.
    pub train_state: Option<TrainState>,
    pub representation_log: Vec<EpochLoss>,
    pub classifier_log: Vec<ClassifierEpoch>,
    pub detector: Detector,
}

impl Checkpoint {
    pub fn new(trained: TrainedDetector, preprocess: Preprocess, config: Value) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model: trained.kind,
            config,
            preprocess,
            epoch: trained.epochs,
            train_state: trained.train_state,
            representation_log: trained.representation_log,
            classifier_log: trained.classifier_log,
            detector: trained.detector,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Checkpoint> {
        // check the header first so a foreign file gets a clear message
        let head: Value = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if head.get("format").and_then(Value::as_str) != Some(CHECKPOINT_FORMAT) {
            return Err(Error::Checkpoint(format!("not an {CHECKPOINT_FORMAT} file")));
        }
        let version = head.get("version").and_then(Value::as_u64);
        if version != Some(u64::from(CHECKPOINT_VERSION)) {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version:?}, expected {CHECKPOINT_VERSION}"
            )));
        }
        serde_json::from_value(head).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_json(&text)
    }

    /// Applies the stored preprocessing (resize, center crop) and predicts.
    pub fn predict(&self, sample: &PairSample) -> Result<Prediction> {
        let view = self.preprocess.eval_view(sample)?;
        self.detector.predict(&view)
    }
}
