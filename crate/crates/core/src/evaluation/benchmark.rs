//! The desk-scale synthetic benchmark: data, training settings and display
//! split frozen in one place so the CLI and tests run the same thing.

use std::collections::BTreeSet;

use crate::data_model::{PairSample, Preprocess, SplitRatios};
use crate::detector::{ModelConfig, TrainingConfig};
use crate::error::Result;
use crate::synth_gen::{gen_samples, SynthConfig};

use super::protocol::{scaling_order, RunSettings};

pub const BENCH_SEED: u64 = 0;
pub const BENCH_TRAIN_DISPLAYS: usize = 3;

/// 6 objects, 10 captures each, 5 displays, 80×80; half of every
/// (object, display) group goes to test.
pub fn benchmark_synth(seed: u64) -> SynthConfig {
    let mut cfg = SynthConfig::desk(6, 10, 5, (80, 80), seed);
    cfg.split = SplitRatios {
        train: 0.5,
        val: 0.0,
        test: 0.5,
    };
    cfg
}

pub fn benchmark_settings(seed: u64) -> RunSettings {
    RunSettings {
        preprocess: Preprocess::native(),
        model: ModelConfig {
            widths: [8, 16, 32],
            ..ModelConfig::default()
        },
        training: TrainingConfig {
            learning_rate: 1e-3,
            batch_size: 8,
            epochs: 10,
            seed,
            classifier_learning_rate: Some(1e-2),
            classifier_epochs: Some(30),
        },
    }
}

pub struct Benchmark {
    pub samples: Vec<PairSample>,
    pub settings: RunSettings,
    /// The first [`BENCH_TRAIN_DISPLAYS`] displays of the seeded order.
    pub train_displays: BTreeSet<String>,
}

pub fn benchmark(seed: u64) -> Result<Benchmark> {
    let samples = gen_samples(&benchmark_synth(seed))?;
    let train_displays = scaling_order(&samples, seed)
        .into_iter()
        .take(BENCH_TRAIN_DISPLAYS)
        .collect();
    Ok(Benchmark {
        samples,
        settings: benchmark_settings(seed),
        train_displays,
    })
}
