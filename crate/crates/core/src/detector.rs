//! One entry point for training and scoring every detector variant.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{
    margin_to_probability, train_naive_cnn, CnnConfig, CnnInput, FreqModality, FreqSvm, NaiveCnn,
    PcaSvm, SvmConfig,
};
use crate::data_model::{PairSample, Preprocess};
use crate::error::{Error, Result};
use crate::representation::{train_representation, EpochLoss, LossWeights, TrainConfig, TrainState};
use crate::spoof_classifier::{
    decide, train_classifier, ClassifierConfig, ClassifierEpoch, MToFNet, Prediction,
};
use crate::synth_gen::mix_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Representation network plus classifier.
    Mtofnet,
    /// Same, trained without the representation loss.
    MtofnetNoRep,
    PcaSvm,
    FreqSvm,
    /// CNN on the 4-channel RGB + ToF stack.
    NaiveCnn,
    /// CNN on RGB only.
    ImageCnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Mtofnet,
        ModelKind::MtofnetNoRep,
        ModelKind::PcaSvm,
        ModelKind::FreqSvm,
        ModelKind::NaiveCnn,
        ModelKind::ImageCnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mtofnet => "mtofnet",
            ModelKind::MtofnetNoRep => "mtofnet_no_rep",
            ModelKind::PcaSvm => "pca_svm",
            ModelKind::FreqSvm => "freq_svm",
            ModelKind::NaiveCnn => "naive_cnn",
            ModelKind::ImageCnn => "image_cnn",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = ModelKind::ALL.iter().map(|k| k.name()).collect();
                Error::InvalidArgument(format!("unknown model {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Channel widths of the three encoder (and CNN) stages.
    pub widths: [usize; 3],
    pub loss_weights: LossWeights,
    pub staged: bool,
    pub finetune: bool,
    /// Crop/flip/rotation augmentation for the CNN baselines.
    pub augment: bool,
    pub freq_modality: FreqModality,
    pub svm: SvmConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            widths: [32, 64, 128],
            loss_weights: LossWeights::default(),
            staged: false,
            finetune: false,
            augment: false,
            freq_modality: FreqModality::Tof,
            svm: SvmConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Classifier-head overrides; unset means same as above.
    pub classifier_learning_rate: Option<f64>,
    pub classifier_epochs: Option<usize>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 32,
            epochs: 20,
            seed: 0,
            classifier_learning_rate: None,
            classifier_epochs: None,
        }
    }
}

impl ModelConfig {
    pub fn check(&self) -> Result<()> {
        if self.widths.contains(&0) {
            return Err(Error::Config(format!("widths must be positive, got {:?}", self.widths)));
        }
        Ok(())
    }
}

impl TrainingConfig {
    fn representation(&self, model: &ModelConfig, kind: ModelKind) -> TrainConfig {
        let mut loss_weights = model.loss_weights;
        if kind == ModelKind::MtofnetNoRep {
            loss_weights.rep = 0.0;
        }
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            loss_weights,
            seed: mix_seed(&[self.seed, 1]),
            staged: model.staged,
        }
    }

    fn classifier(&self, model: &ModelConfig) -> ClassifierConfig {
        ClassifierConfig {
            learning_rate: self.classifier_learning_rate.unwrap_or(self.learning_rate),
            batch_size: self.batch_size,
            epochs: self.classifier_epochs.unwrap_or(self.epochs),
            seed: mix_seed(&[self.seed, 2]),
            finetune: model.finetune,
        }
    }

    fn cnn(&self, model: &ModelConfig) -> CnnConfig {
        CnnConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: mix_seed(&[self.seed, 3]),
            augment: model.augment,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Detector {
    Mtofnet(MToFNet),
    PcaSvm(PcaSvm),
    FreqSvm(FreqSvm),
    NaiveCnn(NaiveCnn),
}

impl Detector {
    /// Display probabilities of already preprocessed pairs.
    pub fn score(&self, samples: &[&PairSample]) -> Result<Vec<f64>> {
        match self {
            Detector::Mtofnet(m) => m.score(samples),
            Detector::PcaSvm(m) => samples
                .iter()
                .map(|s| Ok(margin_to_probability(m.decision(&s.tof)?)))
                .collect(),
            Detector::FreqSvm(m) => samples
                .iter()
                .map(|s| Ok(margin_to_probability(m.decision(s)?)))
                .collect(),
            Detector::NaiveCnn(m) => m.score(samples),
        }
    }

    pub fn predict(&self, sample: &PairSample) -> Result<Prediction> {
        let p_display = self.score(&[sample])?[0];
        Ok(Prediction {
            label: decide(p_display),
            p_display,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainedDetector {
    pub kind: ModelKind,
    pub detector: Detector,
    pub representation_log: Vec<EpochLoss>,
    pub classifier_log: Vec<ClassifierEpoch>,
    /// Optimizer and batch-order stream of the representation trainer.
    pub train_state: Option<TrainState>,
    /// Training epochs completed (both phases in staged mode).
    pub epochs: usize,
    /// RGB reads of display pairs by the representation trainer.
    pub display_rgb_reads: u64,
}

fn eval_views(samples: &[PairSample], pre: &Preprocess) -> Result<Vec<PairSample>> {
    samples.iter().map(|s| pre.eval_view(s)).collect()
}

/// Trains `kind` on resized training pairs. Random crops (when `pre.crop` is
/// set) feed the representation network and augmented CNNs; every other
/// stage trains on the center-cropped evaluation view.
pub fn train_detector(
    kind: ModelKind,
    train: &[PairSample],
    pre: &Preprocess,
    model: &ModelConfig,
    training: &TrainingConfig,
) -> Result<TrainedDetector> {
    model.check()?;
    if train.is_empty() {
        return Err(Error::Empty("empty training partition".into()));
    }
    let mut representation_log = Vec::new();
    let mut classifier_log = Vec::new();
    let mut display_rgb_reads = 0;
    let mut train_state = None;
    let mut epochs = training.epochs;
    let detector = match kind {
        ModelKind::Mtofnet | ModelKind::MtofnetNoRep => {
            let rep = train_representation(train, model.widths, &training.representation(model, kind), pre.crop)?;
            representation_log = rep.log;
            display_rgb_reads = rep.display_rgb_reads;
            epochs = rep.state.epoch;
            train_state = Some(rep.state);
            let views = eval_views(train, pre)?;
            let (net, log) = train_classifier(rep.net, &views, &training.classifier(model))?;
            classifier_log = log;
            Detector::Mtofnet(net)
        }
        ModelKind::PcaSvm => {
            epochs = model.svm.epochs;
            Detector::PcaSvm(PcaSvm::fit(&eval_views(train, pre)?, &model.svm)?)
        }
        ModelKind::FreqSvm => {
            epochs = model.svm.epochs;
            Detector::FreqSvm(FreqSvm::fit(&eval_views(train, pre)?, model.freq_modality, &model.svm)?)
        }
        ModelKind::NaiveCnn | ModelKind::ImageCnn => {
            let input = if kind == ModelKind::NaiveCnn {
                CnnInput::RgbTof
            } else {
                CnnInput::Rgb
            };
            let cfg = training.cnn(model);
            let net = if cfg.augment {
                train_naive_cnn(train, input, model.widths, &cfg, pre.crop)?
            } else {
                train_naive_cnn(&eval_views(train, pre)?, input, model.widths, &cfg, None)?
            };
            Detector::NaiveCnn(net)
        }
    };
    Ok(TrainedDetector {
        kind,
        detector,
        representation_log,
        classifier_log,
        train_state,
        epochs,
        display_rgb_reads,
    })
}

