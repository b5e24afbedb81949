//! The ToF representation network.
//!
//! Two encoder/generator pairs reconstruct the ToF map: the multi-modal model
//! reads the 4-channel `[R, G, B, ToF]` stack of real pairs only, the
//! ToF-modal model reads the ToF map of every pair. A representation loss
//! pulls the two latent codes together on real pairs, so display pairs show
//! up as disagreement between the codes.
//!
//! Loss conventions: both reconstruction losses are per-element mean squared
//! errors, the representation loss is the per-element mean absolute error.

use std::sync::atomic::{AtomicU64, Ordering};

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_model::{crop_offsets, Label, PairSample, PlanarMap, RgbImage, ToFMap};
use crate::error::{Error, Result};
use crate::nn::{loss, Adam, BatchNorm2d, Conv2d, ConvTranspose2d, Layer, Mode, Param, Relu, Sequential};
use crate::tensor::Tensor;

/// Spatial reduction of the three stride-2 encoder stages.
pub const DOWNSAMPLE: usize = 8;

/// Call counter that survives cloning as a fresh zero and is skipped by serde.
#[derive(Debug, Default)]
pub struct CallCounter(AtomicU64);

impl CallCounter {
    pub fn bump(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }
    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

impl Clone for CallCounter {
    fn clone(&self) -> Self {
        Self::default()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub in_channels: usize,
    pub widths: [usize; 3],
}

impl EncoderSpec {
    /// Three stages of conv(kernel 3, stride 2, pad 1) → ReLU → batch norm.
    pub fn build(&self, rng: &mut ChaCha8Rng) -> Sequential {
        let mut layers = Vec::new();
        let mut in_c = self.in_channels;
        for &out_c in &self.widths {
            layers.push(Layer::Conv(Conv2d::new(in_c, out_c, 3, 2, 1, rng)));
            layers.push(Layer::Relu(Relu::default()));
            layers.push(Layer::BatchNorm(BatchNorm2d::new(out_c)));
            in_c = out_c;
        }
        Sequential::new(layers)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    /// Encoder widths; the generator walks them backwards down to one channel.
    pub widths: [usize; 3],
}

impl GeneratorSpec {
    /// Three transposed convs (kernel 2, stride 2), ReLU between, no skips.
    pub fn build(&self, rng: &mut ChaCha8Rng) -> Sequential {
        let [c1, c2, c3] = self.widths;
        Sequential::new(vec![
            Layer::Deconv(ConvTranspose2d::new(c3, c2, 2, rng)),
            Layer::Relu(Relu::default()),
            Layer::Deconv(ConvTranspose2d::new(c2, c1, 2, rng)),
            Layer::Relu(Relu::default()),
            Layer::Deconv(ConvTranspose2d::new(c1, 1, 2, rng)),
        ])
    }
}

/// Encoder output block `[n, c3, h/8, w/8]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCode(pub Tensor);

impl LatentCode {
    pub fn tensor(&self) -> &Tensor {
        &self.0
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmbeddingModel {
    pub encoder: Sequential,
    pub generator: Sequential,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RepNet {
    pub widths: [usize; 3],
    pub multimodal: EmbeddingModel,
    pub tof_modal: EmbeddingModel,
    #[serde(skip)]
    generator_calls: CallCounter,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub rec_multimodal: f64,
    pub rec_tof: f64,
    pub rep: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            rec_multimodal: 1.0,
            rec_tof: 1.0,
            rep: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub rec_multimodal: f64,
    pub rec_tof: f64,
    pub rep: f64,
    pub total: f64,
}

/// Which embedding models receive updates; a frozen model runs in eval mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Trainable {
    pub multimodal: bool,
    pub tof_modal: bool,
}

impl Trainable {
    pub const BOTH: Trainable = Trainable {
        multimodal: true,
        tof_modal: true,
    };
}

/// One optimization batch. Only real pairs contribute a multi-modal input.
#[derive(Clone, Debug)]
pub struct RepBatch {
    /// `[B, 1, h, w]`, every pair.
    pub tof: Tensor,
    /// `[R, 4, h, w]`, real pairs only.
    pub multimodal: Option<Tensor>,
    /// Rows of `tof` that are real pairs, aligned with `multimodal`.
    pub real_rows: Vec<usize>,
}

fn check_divisible(h: usize, w: usize) -> Result<()> {
    if h % DOWNSAMPLE != 0 || w % DOWNSAMPLE != 0 || h == 0 || w == 0 {
        return Err(Error::Shape(format!(
            "input {w}x{h} is not divisible by {DOWNSAMPLE}"
        )));
    }
    Ok(())
}

/// `[1, 4, h, w]` stack with channels `[R, G, B, ToF]`.
pub fn concat_modalities(rgb: &RgbImage, tof: &ToFMap) -> Result<Tensor> {
    if (rgb.width, rgb.height) != (tof.width, tof.height) {
        return Err(Error::Shape(format!(
            "rgb {}x{} vs tof {}x{}",
            rgb.width, rgb.height, tof.width, tof.height
        )));
    }
    let mut data = Vec::with_capacity(rgb.values.len() + tof.values.len());
    data.extend_from_slice(&rgb.values);
    data.extend_from_slice(&tof.values);
    Tensor::from_vec([1, 4, tof.height, tof.width], data)
}

pub fn rep_loss(z_m: &LatentCode, z_t: &LatentCode) -> Result<f64> {
    Ok(loss::mae(&z_m.0, &z_t.0)?.0)
}

impl RepNet {
    pub fn new(widths: [usize; 3], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gen = GeneratorSpec { widths };
        let multimodal = EmbeddingModel {
            encoder: EncoderSpec {
                in_channels: 4,
                widths,
            }
            .build(&mut rng),
            generator: gen.build(&mut rng),
        };
        let tof_modal = EmbeddingModel {
            encoder: EncoderSpec {
                in_channels: 1,
                widths,
            }
            .build(&mut rng),
            generator: gen.build(&mut rng),
        };
        Self {
            widths,
            multimodal,
            tof_modal,
            generator_calls: CallCounter::default(),
        }
    }

    pub fn latent_channels(&self) -> usize {
        self.widths[2]
    }

    /// Number of generator evaluations since construction or clone.
    pub fn generator_calls(&self) -> u64 {
        self.generator_calls.get()
    }

    fn check_input(x: &Tensor, channels: usize) -> Result<()> {
        if x.c() != channels {
            return Err(Error::Shape(format!(
                "expected {channels} input channels, got {}",
                x.c()
            )));
        }
        check_divisible(x.h(), x.w())
    }

    /// Evaluation-mode multi-modal encoding of a `[n, 4, h, w]` stack.
    pub fn encode_multimodal(&self, x: &Tensor) -> Result<LatentCode> {
        Self::check_input(x, 4)?;
        Ok(LatentCode(self.multimodal.encoder.infer(x)))
    }

    /// Evaluation-mode ToF-modal encoding of a `[n, 1, h, w]` map.
    pub fn encode_tof(&self, x: &Tensor) -> Result<LatentCode> {
        Self::check_input(x, 1)?;
        Ok(LatentCode(self.tof_modal.encoder.infer(x)))
    }

    fn check_latent(&self, z: &LatentCode) -> Result<()> {
        if z.0.c() != self.latent_channels() {
            return Err(Error::Shape(format!(
                "latent has {} channels, generator expects {}",
                z.0.c(),
                self.latent_channels()
            )));
        }
        Ok(())
    }

    pub fn generate_multimodal(&self, z: &LatentCode) -> Result<Tensor> {
        self.check_latent(z)?;
        self.generator_calls.bump();
        Ok(self.multimodal.generator.infer(&z.0))
    }

    pub fn generate_tof(&self, z: &LatentCode) -> Result<Tensor> {
        self.check_latent(z)?;
        self.generator_calls.bump();
        Ok(self.tof_modal.generator.infer(&z.0))
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut p = self.multimodal.encoder.params();
        p.extend(self.multimodal.generator.params());
        p.extend(self.tof_modal.encoder.params());
        p.extend(self.tof_modal.generator.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.multimodal.encoder.params_mut();
        p.extend(self.multimodal.generator.params_mut());
        p.extend(self.tof_modal.encoder.params_mut());
        p.extend(self.tof_modal.generator.params_mut());
        p
    }

    fn trainable_params_mut(&mut self, which: Trainable) -> Vec<&mut Param> {
        let mut p = Vec::new();
        if which.multimodal {
            p.extend(self.multimodal.encoder.params_mut());
            p.extend(self.multimodal.generator.params_mut());
        }
        if which.tof_modal {
            p.extend(self.tof_modal.encoder.params_mut());
            p.extend(self.tof_modal.generator.params_mut());
        }
        p
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Training-path forward of all three losses; with `backward` set, the
    /// weighted total is differentiated and gradients accumulate into the
    /// parameters of the trainable models.
    pub fn batch_losses(
        &mut self,
        batch: &RepBatch,
        weights: LossWeights,
        which: Trainable,
        backward: bool,
    ) -> Result<LossParts> {
        check_divisible(batch.tof.h(), batch.tof.w())?;
        let mode_of = |t: bool| if t { Mode::Train } else { Mode::Eval };
        let tof_mode = mode_of(which.tof_modal);
        let mm_mode = mode_of(which.multimodal);

        let z_t = self.tof_modal.encoder.forward(&batch.tof, tof_mode);
        let rec_t = self.tof_modal.generator.forward(&z_t, tof_mode);
        self.generator_calls.bump();
        let (l_t, g_rec_t) = loss::mse(&rec_t, &batch.tof)?;

        let mut parts = LossParts {
            rec_tof: l_t,
            ..LossParts::default()
        };
        let mut mm_grads = None;
        if let Some(x_mm) = &batch.multimodal {
            if x_mm.n() != batch.real_rows.len() {
                return Err(Error::Shape("multi-modal rows do not match real_rows".into()));
            }
            let z_m = self.multimodal.encoder.forward(x_mm, mm_mode);
            let rec_m = self.multimodal.generator.forward(&z_m, mm_mode);
            self.generator_calls.bump();
            let tof_real = batch.tof.select(&batch.real_rows);
            let (l_m, g_rec_m) = loss::mse(&rec_m, &tof_real)?;
            let (l_rep, g_rep) = loss::mae(&z_m, &z_t.select(&batch.real_rows))?;
            parts.rec_multimodal = l_m;
            parts.rep = l_rep;
            mm_grads = Some((g_rec_m, g_rep));
        }
        parts.total = weights.rec_multimodal * parts.rec_multimodal
            + weights.rec_tof * parts.rec_tof
            + weights.rep * parts.rep;

        if backward {
            let scale = |t: &Tensor, s: f64| {
                let mut out = t.clone();
                out.data_mut().iter_mut().for_each(|v| *v *= s);
                out
            };
            if which.tof_modal {
                let mut gz_t = self.tof_modal.generator.backward(&scale(&g_rec_t, weights.rec_tof));
                if let Some((_, g_rep)) = &mm_grads {
                    for (k, &row) in batch.real_rows.iter().enumerate() {
                        for (g, r) in gz_t.sample_mut(row).iter_mut().zip(g_rep.sample(k)) {
                            *g -= weights.rep * r;
                        }
                    }
                }
                self.tof_modal.encoder.backward(&gz_t);
            }
            if which.multimodal {
                if let Some((g_rec_m, g_rep)) = &mm_grads {
                    let mut gz_m = self
                        .multimodal
                        .generator
                        .backward(&scale(g_rec_m, weights.rec_multimodal));
                    for (g, r) in gz_m.data_mut().iter_mut().zip(g_rep.data()) {
                        *g += weights.rep * r;
                    }
                    self.multimodal.encoder.backward(&gz_m);
                }
            }
        }
        Ok(parts)
    }

    /// Evaluation-mode losses over `samples`, averaged per element as in training.
    pub fn eval_losses(&self, samples: &[&PairSample]) -> Result<LossParts> {
        let reals: Vec<&PairSample> = samples.iter().copied().filter(|s| s.label() == Label::Real).collect();
        let rec_t = rec_loss_tof(self, samples)?;
        let (rec_m, rep) = if reals.is_empty() {
            (0.0, 0.0)
        } else {
            let mut rep_sum = 0.0;
            for s in &reals {
                let z_m = self.encode_multimodal(&concat_modalities(&s.rgb, &s.tof)?)?;
                let z_t = self.encode_tof(&s.tof.to_tensor())?;
                rep_sum += rep_loss(&z_m, &z_t)?;
            }
            (rec_loss_multimodal(self, &reals)?, rep_sum / reals.len() as f64)
        };
        Ok(LossParts {
            rec_multimodal: rec_m,
            rec_tof: rec_t,
            rep,
            total: rec_m + rec_t + rep,
        })
    }
}

/// Evaluation-mode multi-modal reconstruction error over real pairs.
pub fn rec_loss_multimodal(net: &RepNet, batch: &[&PairSample]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("empty batch".into()));
    }
    let mut xs = Vec::with_capacity(batch.len());
    let mut targets = Vec::with_capacity(batch.len());
    for s in batch {
        if s.label() != Label::Real {
            return Err(Error::Contract(format!(
                "multi-modal reconstruction takes real pairs only, got display {}",
                s.meta.id
            )));
        }
        xs.push(concat_modalities(&s.rgb, &s.tof)?);
        targets.push(s.tof.to_tensor());
    }
    let x = Tensor::stack(&xs)?;
    let rec = net.generate_multimodal(&net.encode_multimodal(&x)?)?;
    Ok(loss::mse(&rec, &Tensor::stack(&targets)?)?.0)
}

/// Evaluation-mode ToF-modal reconstruction error over pairs of any label.
pub fn rec_loss_tof(net: &RepNet, batch: &[&PairSample]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("empty batch".into()));
    }
    let targets: Vec<Tensor> = batch.iter().map(|s| s.tof.to_tensor()).collect();
    let x = Tensor::stack(&targets)?;
    let rec = net.generate_tof(&net.encode_tof(&x)?)?;
    Ok(loss::mse(&rec, &x)?.0)
}

/// Read access to training pairs that counts every RGB read of a display pair.
pub struct PairStore<'a> {
    samples: &'a [PairSample],
    display_rgb_reads: AtomicU64,
}

impl<'a> PairStore<'a> {
    pub fn new(samples: &'a [PairSample]) -> Self {
        Self {
            samples,
            display_rgb_reads: AtomicU64::new(0),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn label(&self, i: usize) -> Label {
        self.samples[i].label()
    }

    pub fn tof(&self, i: usize) -> &ToFMap {
        &self.samples[i].tof
    }

    pub fn rgb(&self, i: usize) -> &RgbImage {
        if self.samples[i].label() == Label::Display {
            self.display_rgb_reads.fetch_add(1, Ordering::Relaxed);
        }
        &self.samples[i].rgb
    }

    pub fn display_rgb_reads(&self) -> u64 {
        self.display_rgb_reads.load(Ordering::Relaxed)
    }
}

/// Builds a batch; with `crop` set, each pair gets one random square window
/// shared by its RGB image and ToF map.
pub fn assemble_batch(
    store: &PairStore<'_>,
    indices: &[usize],
    crop: Option<usize>,
    rng: &mut ChaCha8Rng,
) -> Result<RepBatch> {
    let mut tofs = Vec::with_capacity(indices.len());
    let mut mms = Vec::new();
    let mut real_rows = Vec::new();
    for (row, &i) in indices.iter().enumerate() {
        let tof = store.tof(i);
        let window = match crop {
            Some(size) if size != tof.width || size != tof.height => {
                if size > tof.width.min(tof.height) {
                    return Err(Error::InvalidArgument(format!(
                        "crop {size} larger than {}x{}",
                        tof.width, tof.height
                    )));
                }
                Some((crop_offsets(tof.width, tof.height, size, rng), size))
            }
            _ => None,
        };
        let cut_tof = match window {
            Some(((x0, y0), s)) => crate::data_model::crop(tof, x0, y0, s, s)?,
            None => tof.clone(),
        };
        if store.label(i) == Label::Real {
            let rgb = store.rgb(i);
            let cut_rgb = match window {
                Some(((x0, y0), s)) => crate::data_model::crop(rgb, x0, y0, s, s)?,
                None => rgb.clone(),
            };
            mms.push(concat_modalities(&cut_rgb, &cut_tof)?);
            real_rows.push(row);
        }
        tofs.push(cut_tof.to_tensor());
    }
    Ok(RepBatch {
        tof: Tensor::stack(&tofs)?,
        multimodal: if mms.is_empty() {
            None
        } else {
            Some(Tensor::stack(&mms)?)
        },
        real_rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss_weights: LossWeights,
    pub seed: u64,
    /// Train the multi-modal model first, then the ToF-modal model against
    /// the frozen multi-modal encoder, instead of one joint optimization.
    pub staged: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 32,
            epochs: 20,
            loss_weights: LossWeights::default(),
            seed: 0,
            staged: false,
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        let w = self.loss_weights;
        if !(self.learning_rate > 0.0)
            || self.batch_size == 0
            || self.epochs == 0
            || w.rec_multimodal < 0.0
            || w.rec_tof < 0.0
            || w.rep < 0.0
        {
            return Err(Error::Config(format!("invalid training config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub rec_multimodal: f64,
    pub rec_tof: f64,
    pub rep: f64,
    pub total: f64,
}

/// Training state carried in checkpoints next to the network.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainState {
    pub adam: Adam,
    pub epoch: usize,
    /// Seed of the batch-order stream and its position after the last epoch.
    pub rng_seed: u64,
    pub rng_word_pos: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainedRepNet {
    pub net: RepNet,
    pub state: TrainState,
    pub log: Vec<EpochLoss>,
    pub config: TrainConfig,
    /// RGB reads of display pairs during training; always zero.
    #[serde(default)]
    pub display_rgb_reads: u64,
}

fn run_epochs(
    net: &mut RepNet,
    store: &PairStore<'_>,
    config: &TrainConfig,
    weights: LossWeights,
    which: Trainable,
    adam: &mut Adam,
    rng: &mut ChaCha8Rng,
    crop: Option<usize>,
    epoch_offset: usize,
    log: &mut Vec<EpochLoss>,
) -> Result<()> {
    let mut order: Vec<usize> = (0..store.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(rng);
        let mut sums = LossParts::default();
        let (mut n_batches, mut n_real_batches) = (0usize, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let batch = assemble_batch(store, chunk, crop, rng)?;
            net.zero_grad();
            let parts = net.batch_losses(&batch, weights, which, true)?;
            adam.update(net.trainable_params_mut(which));
            sums.rec_tof += parts.rec_tof;
            sums.total += parts.total;
            n_batches += 1;
            if batch.multimodal.is_some() {
                sums.rec_multimodal += parts.rec_multimodal;
                sums.rep += parts.rep;
                n_real_batches += 1;
            }
        }
        let real_div = n_real_batches.max(1) as f64;
        let entry = EpochLoss {
            epoch: epoch_offset + epoch,
            rec_multimodal: sums.rec_multimodal / real_div,
            rec_tof: sums.rec_tof / n_batches as f64,
            rep: sums.rep / real_div,
            total: sums.total / n_batches as f64,
        };
        info!(
            "representation epoch {}: rec_m {:.6} rec_t {:.6} rep {:.6} total {:.6}",
            entry.epoch, entry.rec_multimodal, entry.rec_tof, entry.rep, entry.total
        );
        log.push(entry);
    }
    Ok(())
}

/// Trains both embedding models on `samples` (the training partition),
/// optionally on random `crop`-sized square windows.
///
/// Per batch, the multi-modal reconstruction and representation losses use
/// only the real pairs; the ToF-modal reconstruction uses every pair. RGB of
/// display pairs is never read.
pub fn train_representation(
    samples: &[PairSample],
    widths: [usize; 3],
    config: &TrainConfig,
    crop: Option<usize>,
) -> Result<TrainedRepNet> {
    config.check()?;
    if !samples.iter().any(|s| s.label() == Label::Real) {
        return Err(Error::Empty("training partition has no real pairs".into()));
    }
    let mut net = RepNet::new(widths, config.seed);
    let store = PairStore::new(samples);
    let rng_seed = crate::synth_gen::mix_seed(&[config.seed, 0xBA7C]);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut adam = Adam::new(config.learning_rate);
    let mut log = Vec::new();
    let w = config.loss_weights;
    if config.staged {
        let first = LossWeights {
            rec_multimodal: w.rec_multimodal,
            rec_tof: 0.0,
            rep: 0.0,
        };
        let which = Trainable {
            multimodal: true,
            tof_modal: false,
        };
        run_epochs(&mut net, &store, config, first, which, &mut adam, &mut rng, crop, 0, &mut log)?;
        let second = LossWeights {
            rec_multimodal: 0.0,
            ..w
        };
        let which = Trainable {
            multimodal: false,
            tof_modal: true,
        };
        let mut adam2 = Adam::new(config.learning_rate);
        run_epochs(&mut net, &store, config, second, which, &mut adam2, &mut rng, crop, config.epochs, &mut log)?;
        adam = adam2;
    } else {
        run_epochs(&mut net, &store, config, w, Trainable::BOTH, &mut adam, &mut rng, crop, 0, &mut log)?;
    }
    Ok(TrainedRepNet {
        state: TrainState {
            adam,
            epoch: log.len(),
            rng_seed,
            rng_word_pos: rng.get_word_pos().to_string(),
        },
        net,
        log,
        config: config.clone(),
        display_rgb_reads: store.display_rgb_reads(),
    })
}

/// `epoch,L_recM,L_recT,L_rep,total`, one row per epoch.
pub fn loss_log_csv(log: &[EpochLoss]) -> String {
    let mut out = String::from("epoch,L_recM,L_recT,L_rep,total\n");
    for e in log {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            e.epoch, e.rec_multimodal, e.rec_tof, e.rep, e.total
        ));
    }
    out
}
