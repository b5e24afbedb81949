use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_model::{crop_offsets, Label, PairSample, PlanarMap};
use crate::error::{Error, Result};
use crate::nn::{loss, Adam, Conv2d, GlobalAvgPool, Layer, Linear, MaxPool2, Mode, Relu, Sequential};
use crate::representation::concat_modalities;
use crate::synth_gen::mix_seed;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CnnInput {
    Rgb,
    RgbTof,
}

impl CnnInput {
    pub fn channels(self) -> usize {
        match self {
            CnnInput::Rgb => 3,
            CnnInput::RgbTof => 4,
        }
    }

    fn tensor(self, s: &PairSample) -> Result<Tensor> {
        match self {
            CnnInput::Rgb => Ok(s.rgb.to_tensor()),
            CnnInput::RgbTof => concat_modalities(&s.rgb, &s.tof),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CnnConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Random crops, horizontal flips and quarter turns (square crops only).
    pub augment: bool,
}

impl Default for CnnConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 32,
            epochs: 20,
            seed: 0,
            augment: false,
        }
    }
}

/// Three conv(3x3) → ReLU → 2x2 max-pool stages, global average pool, linear.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NaiveCnn {
    pub input: CnnInput,
    pub net: Sequential,
}

impl NaiveCnn {
    pub fn new(input: CnnInput, widths: [usize; 3], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let mut in_c = input.channels();
        for &w in &widths {
            layers.push(Layer::Conv(Conv2d::new(in_c, w, 3, 1, 1, &mut rng)));
            layers.push(Layer::Relu(Relu::default()));
            layers.push(Layer::MaxPool(MaxPool2::default()));
            in_c = w;
        }
        layers.push(Layer::GlobalAvgPool(GlobalAvgPool::default()));
        layers.push(Layer::Linear(Linear::new(in_c, 2, &mut rng)));
        Self {
            input,
            net: Sequential::new(layers),
        }
    }

    pub fn score(&self, samples: &[&PairSample]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(32) {
            let xs = chunk.iter().map(|s| self.input.tensor(s)).collect::<Result<Vec<_>>>()?;
            let x = Tensor::stack(&xs)?;
            if x.h() < 8 || x.w() < 8 {
                return Err(Error::Shape(format!("input {}x{} below 8x8", x.w(), x.h())));
            }
            let logits = self.net.infer(&x);
            out.extend((0..logits.n()).map(|i| loss::softmax(logits.sample(i))[1]));
        }
        Ok(out)
    }
}

fn augment(s: &PairSample, crop: Option<usize>, rng: &mut ChaCha8Rng) -> Result<PairSample> {
    let mut v = match crop {
        Some(size) if size < s.width().min(s.height()) => {
            let (x0, y0) = crop_offsets(s.width(), s.height(), size, rng);
            s.cropped(x0, y0, size)?
        }
        Some(size) if size > s.width().min(s.height()) => {
            return Err(Error::InvalidArgument(format!(
                "crop {size} larger than {}x{}",
                s.width(),
                s.height()
            )))
        }
        _ => s.clone(),
    };
    if rng.random_bool(0.5) {
        v = v.flipped();
    }
    if v.width() == v.height() {
        v = v.rotated(rng.random_range(0..4u8));
    }
    Ok(v)
}

/// With `config.augment`, each pair is viewed through a random `crop` window
/// (when given), a random flip and a random quarter turn every epoch.
pub fn train_naive_cnn(
    samples: &[PairSample],
    input: CnnInput,
    widths: [usize; 3],
    config: &CnnConfig,
    crop: Option<usize>,
) -> Result<NaiveCnn> {
    let n_display = samples.iter().filter(|s| s.label() == Label::Display).count();
    if n_display == 0 || n_display == samples.len() {
        return Err(Error::Empty("CNN training needs both real and display pairs".into()));
    }
    if !(config.learning_rate > 0.0) || config.batch_size == 0 || config.epochs == 0 {
        return Err(Error::Config(format!("invalid CNN config {config:?}")));
    }
    let mut model = NaiveCnn::new(input, widths, mix_seed(&[config.seed, 0xC7]));
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[config.seed, 0xC8]));
    let mut adam = Adam::new(config.learning_rate);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let mut xs = Vec::with_capacity(chunk.len());
            let mut targets = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let view = if config.augment {
                    augment(&samples[i], crop, &mut rng)?
                } else {
                    samples[i].clone()
                };
                xs.push(input.tensor(&view)?);
                targets.push(view.label().index());
            }
            model.net.zero_grad();
            let logits = model.net.forward(&Tensor::stack(&xs)?, Mode::Train);
            let (l, g) = loss::softmax_cross_entropy(&logits, &targets);
            model.net.backward(&g);
            adam.update(model.net.params_mut());
            total += l * chunk.len() as f64;
        }
        info!("naive cnn epoch {epoch}: loss {:.6}", total / samples.len() as f64);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth_gen::{gen_samples, SynthConfig};

    #[test]
    fn shapes_and_scores() {
        let samples = gen_samples(&SynthConfig::desk(2, 1, 2, (24, 24), 3)).unwrap();
        let cfg = CnnConfig {
            learning_rate: 1e-2,
            batch_size: 4,
            epochs: 2,
            augment: true,
            ..CnnConfig::default()
        };
        for input in [CnnInput::Rgb, CnnInput::RgbTof] {
            let m = train_naive_cnn(&samples, input, [2, 3, 4], &cfg, Some(16)).unwrap();
            let refs: Vec<&PairSample> = samples.iter().collect();
            let s = m.score(&refs).unwrap();
            assert_eq!(s.len(), samples.len());
            assert!(s.iter().all(|p| (0.0..=1.0).contains(p)));
            let again = train_naive_cnn(&samples, input, [2, 3, 4], &cfg, Some(16)).unwrap();
            assert_eq!(again.score(&refs).unwrap(), s);
        }
    }

    #[test]
    fn augmentation_keeps_label_and_size() {
        let samples = gen_samples(&SynthConfig::desk(1, 1, 1, (20, 20), 3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for s in &samples {
            let v = augment(s, Some(12), &mut rng).unwrap();
            assert_eq!((v.width(), v.height()), (12, 12));
            assert_eq!(v.label(), s.label());
        }
        assert!(augment(&samples[0], Some(30), &mut rng).is_err());
    }
}
