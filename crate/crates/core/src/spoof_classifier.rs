//! Real-vs-display classifier on top of the two encoders.
//!
//! Both latent codes are average-pooled over space and concatenated into a
//! `2 * c3` feature, which a two-layer perceptron maps to class logits.
//! Inference goes through the encoders only; the generators are not used.

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_model::{Label, PairSample, PlanarMap, RgbImage, ToFMap};
use crate::error::{Error, Result};
use crate::nn::{loss, Adam, Layer, Linear, Mode, Relu, Sequential};
use crate::representation::{concat_modalities, LatentCode, RepNet};
use crate::synth_gen::mix_seed;
use crate::tensor::Tensor;

pub const HIDDEN: usize = 128;

/// Pairs scored per encoder pass at inference.
const SCORE_CHUNK: usize = 32;

fn avg_pool(z: &Tensor) -> Vec<Vec<f64>> {
    let hw = (z.h() * z.w()) as f64;
    (0..z.n())
        .map(|i| {
            z.sample(i)
                .chunks_exact(z.h() * z.w())
                .map(|plane| plane.iter().sum::<f64>() / hw)
                .collect()
        })
        .collect()
}

/// `[n, 2 * c3, 1, 1]` features: pooled multi-modal code, then pooled ToF code.
pub fn pool_and_concat(z_m: &LatentCode, z_t: &LatentCode) -> Result<Tensor> {
    let (a, b) = (&z_m.0, &z_t.0);
    if a.n() != b.n() || a.c() != b.c() {
        return Err(Error::Shape(format!(
            "latent codes {:?} and {:?} do not pair up",
            a.shape(),
            b.shape()
        )));
    }
    let mut data = Vec::with_capacity(a.n() * 2 * a.c());
    for (pm, pt) in avg_pool(a).into_iter().zip(avg_pool(b)) {
        data.extend(pm);
        data.extend(pt);
    }
    Tensor::from_vec([a.n(), 2 * a.c(), 1, 1], data)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpoofClassifier {
    pub in_features: usize,
    pub mlp: Sequential,
}

impl SpoofClassifier {
    pub fn new(in_features: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            in_features,
            mlp: Sequential::new(vec![
                Layer::Linear(Linear::new(in_features, HIDDEN, &mut rng)),
                Layer::Relu(Relu::default()),
                Layer::Linear(Linear::new(HIDDEN, 2, &mut rng)),
            ]),
        }
    }

    fn check(&self, features: &Tensor) -> Result<()> {
        if features.sample_len() != self.in_features {
            return Err(Error::Shape(format!(
                "classifier takes {} features, got {}",
                self.in_features,
                features.sample_len()
            )));
        }
        Ok(())
    }
}

/// Per-row `(p_real, p_display)`.
pub fn classify(features: &Tensor, clf: &SpoofClassifier) -> Result<Vec<(f64, f64)>> {
    clf.check(features)?;
    let logits = clf.mlp.infer(features);
    Ok((0..logits.n())
        .map(|i| {
            let p = loss::softmax(logits.sample(i));
            (p[0], p[1])
        })
        .collect())
}

/// Display unless strictly more likely real.
pub fn decide(p_display: f64) -> Label {
    if p_display >= 0.5 {
        Label::Display
    } else {
        Label::Real
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Label,
    pub p_display: f64,
}

/// Representation network plus classifier head.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MToFNet {
    pub rep: RepNet,
    pub classifier: SpoofClassifier,
}

impl MToFNet {
    pub fn features(&self, pairs: &[(&RgbImage, &ToFMap)]) -> Result<Tensor> {
        if pairs.is_empty() {
            return Err(Error::Empty("no pairs to encode".into()));
        }
        let mut mm = Vec::with_capacity(pairs.len());
        let mut tof = Vec::with_capacity(pairs.len());
        for (rgb, t) in pairs {
            mm.push(concat_modalities(rgb, t)?);
            tof.push(t.to_tensor());
        }
        let z_m = self.rep.encode_multimodal(&Tensor::stack(&mm)?)?;
        let z_t = self.rep.encode_tof(&Tensor::stack(&tof)?)?;
        pool_and_concat(&z_m, &z_t)
    }

    /// Display probability of each pair.
    pub fn score(&self, samples: &[&PairSample]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(SCORE_CHUNK) {
            let pairs: Vec<_> = chunk.iter().map(|s| (&s.rgb, &s.tof)).collect();
            let f = self.features(&pairs)?;
            out.extend(classify(&f, &self.classifier)?.into_iter().map(|(_, d)| d));
        }
        Ok(out)
    }

    pub fn generator_calls(&self) -> u64 {
        self.rep.generator_calls()
    }
}

pub fn predict_pair(rgb: &RgbImage, tof: &ToFMap, model: &MToFNet) -> Result<Prediction> {
    let f = model.features(&[(rgb, tof)])?;
    let (_, p_display) = classify(&f, &model.classifier)?[0];
    Ok(Prediction {
        label: decide(p_display),
        p_display,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Also update both encoders through the classification loss.
    pub finetune: bool,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 32,
            epochs: 20,
            seed: 0,
            finetune: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

fn labels_of(samples: &[PairSample]) -> Vec<usize> {
    samples.iter().map(|s| s.label().index()).collect()
}

/// Gradient of the pooled features back onto a latent block of `shape`.
fn unpool(grad: &Tensor, offset: usize, shape: [usize; 4]) -> Tensor {
    let [n, c, h, w] = shape;
    let hw = h * w;
    let mut out = Tensor::zeros(n, c, h, w);
    for i in 0..n {
        let g = &grad.sample(i)[offset..offset + c];
        for (plane, &gc) in out.sample_mut(i).chunks_exact_mut(hw).zip(g) {
            plane.fill(gc / hw as f64);
        }
    }
    out
}

fn check_training_set(samples: &[PairSample]) -> Result<()> {
    let n_display = samples.iter().filter(|s| s.label().is_display()).count();
    if n_display == 0 || n_display == samples.len() {
        return Err(Error::Empty(
            "classifier training needs both real and display pairs".into(),
        ));
    }
    Ok(())
}

/// Trains the head on `samples`; `rep` is only modified in fine-tune mode.
pub fn train_classifier(
    rep: RepNet,
    samples: &[PairSample],
    config: &ClassifierConfig,
) -> Result<(MToFNet, Vec<ClassifierEpoch>)> {
    check_training_set(samples)?;
    if !(config.learning_rate > 0.0) || config.batch_size == 0 || config.epochs == 0 {
        return Err(Error::Config(format!("invalid classifier config {config:?}")));
    }
    let mut model = MToFNet {
        classifier: SpoofClassifier::new(2 * rep.latent_channels(), mix_seed(&[config.seed, 0xC1A5])),
        rep,
    };
    let labels = labels_of(samples);
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[config.seed, 0x0DE7]));
    let mut adam = Adam::new(config.learning_rate);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);

    let frozen_features = if config.finetune {
        None
    } else {
        let refs: Vec<&PairSample> = samples.iter().collect();
        let mut rows = Vec::with_capacity(samples.len());
        for chunk in refs.chunks(SCORE_CHUNK) {
            let pairs: Vec<_> = chunk.iter().map(|s| (&s.rgb, &s.tof)).collect();
            let f = model.features(&pairs)?;
            rows.extend((0..f.n()).map(|i| Tensor::from_vec([1, f.c(), 1, 1], f.sample(i).to_vec())));
        }
        Some(rows.into_iter().collect::<Result<Vec<_>>>()?)
    };

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let targets: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            model.classifier.mlp.zero_grad();
            let logits = if let Some(rows) = &frozen_features {
                let x = Tensor::stack(&chunk.iter().map(|&i| rows[i].clone()).collect::<Vec<_>>())?;
                let logits = model.classifier.mlp.forward(&x, Mode::Train);
                let (l, g) = loss::softmax_cross_entropy(&logits, &targets);
                model.classifier.mlp.backward(&g);
                adam.update(model.classifier.mlp.params_mut());
                loss_sum += l * chunk.len() as f64;
                logits
            } else {
                let (l, logits) = finetune_step(&mut model, samples, chunk, &targets, &mut adam)?;
                loss_sum += l * chunk.len() as f64;
                logits
            };
            for (k, &t) in targets.iter().enumerate() {
                let row = logits.sample(k);
                let pred = if row[1] >= row[0] { 1 } else { 0 };
                correct += (pred == t) as usize;
            }
        }
        let entry = ClassifierEpoch {
            epoch,
            loss: loss_sum / samples.len() as f64,
            accuracy: correct as f64 / samples.len() as f64,
        };
        info!(
            "classifier epoch {epoch}: loss {:.6} accuracy {:.4}",
            entry.loss, entry.accuracy
        );
        log.push(entry);
    }
    Ok((model, log))
}

fn finetune_step(
    model: &mut MToFNet,
    samples: &[PairSample],
    chunk: &[usize],
    targets: &[usize],
    adam: &mut Adam,
) -> Result<(f64, Tensor)> {
    let mut mm = Vec::with_capacity(chunk.len());
    let mut tof = Vec::with_capacity(chunk.len());
    for &i in chunk {
        mm.push(concat_modalities(&samples[i].rgb, &samples[i].tof)?);
        tof.push(samples[i].tof.to_tensor());
    }
    let rep = &mut model.rep;
    rep.multimodal.encoder.zero_grad();
    rep.tof_modal.encoder.zero_grad();
    let z_m = rep.multimodal.encoder.forward(&Tensor::stack(&mm)?, Mode::Train);
    let z_t = rep.tof_modal.encoder.forward(&Tensor::stack(&tof)?, Mode::Train);
    let x = pool_and_concat(&LatentCode(z_m.clone()), &LatentCode(z_t.clone()))?;
    let logits = model.classifier.mlp.forward(&x, Mode::Train);
    let (l, g) = loss::softmax_cross_entropy(&logits, targets);
    let gx = model.classifier.mlp.backward(&g);
    let c = z_m.c();
    rep.multimodal.encoder.backward(&unpool(&gx, 0, z_m.shape()));
    rep.tof_modal.encoder.backward(&unpool(&gx, c, z_t.shape()));
    let mut params = model.classifier.mlp.params_mut();
    params.extend(rep.multimodal.encoder.params_mut());
    params.extend(rep.tof_modal.encoder.params_mut());
    adam.update(params);
    Ok((l, logits))
}
