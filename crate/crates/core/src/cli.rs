//! Command implementations behind the `mtof` binary.
//!
//! Each command writes into `<out>/<command>-<tag>-<hash>/`, where the hash
//! covers the effective configuration and every input that shapes the
//! artifact, so a re-run with the same inputs lands in the same directory.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::config::{content_hash, RunConfig};
use crate::data_model::{
    load_samples, read_rgb_png, read_tof_png, split_dataset, write_atomic, Label, Manifest,
    PairSample, SampleMeta, NO_DISPLAY,
};
use crate::detector::{train_detector, ModelKind};
use crate::error::{Error, Result};
use crate::evaluation::{
    ablation_suite, build_report, cluster_separation, confusion_by_taxonomy, confusion_csv,
    cross_domain_reports, export_features_2d, moire_scaling, partition, projection_csv,
    run_protocol, scaling_csv, scaling_order, score_samples, scores_csv, RunSettings,
};
use crate::representation::loss_log_csv;
use crate::spectrum::power_spectrum_1d;
use crate::spoof_classifier::Prediction;
use crate::synth_gen::{gen_dataset, gen_samples};
use crate::baselines::FreqModality;
use crate::detector::Detector;

/// Evaluation suites reachable from `mtof eval`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    /// One protocol run of one model.
    Protocol,
    /// Full model, image-only CNN, naive CNN and the no-L_rep variant.
    Ablation,
    /// Unseen AUROC against the number of training displays.
    Scaling,
    /// Train-on-one-type, test-on-each-type matrix.
    Confusion,
    /// 2-D projection of the classifier features.
    Features,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Protocol,
        Suite::Ablation,
        Suite::Scaling,
        Suite::Confusion,
        Suite::Features,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Protocol => "protocol",
            Suite::Ablation => "ablation",
            Suite::Scaling => "scaling",
            Suite::Confusion => "confusion",
            Suite::Features => "features",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown suite {s:?}")))
    }
}

fn run_dir(out: &Path, command: &str, tag: &str, cfg: &RunConfig, extra: &[&str]) -> Result<PathBuf> {
    let json = cfg.canonical_json()?;
    let mut parts = vec![command, tag, json.as_str()];
    parts.extend_from_slice(extra);
    let name = if tag.is_empty() {
        format!("{command}-{}", content_hash(&parts))
    } else {
        format!("{command}-{tag}-{}", content_hash(&parts))
    };
    let dir = out.join(name);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn file_digest(path: &Path) -> Result<String> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(content_hash(&[&text]))
}

/// Samples named by the config, resized and split-tagged: the manifest under
/// `paths.data_root` when set, else the synthetic dataset generated in memory.
pub fn load_data(cfg: &RunConfig) -> Result<Vec<PairSample>> {
    let samples = match &cfg.paths.data_root {
        Some(root) => {
            let mut manifest = Manifest::read(root)?;
            manifest.validate(Some(root))?;
            if manifest.records.iter().any(|r| r.split.is_none()) {
                manifest = split_dataset(&manifest, cfg.synth.split, cfg.synth.seed)?;
            }
            load_samples(root, &manifest, &cfg.preprocess)?
        }
        None => gen_samples(&cfg.synth.to_synth_config())?
            .iter()
            .map(|s| cfg.preprocess.apply_resize(s))
            .collect::<Result<Vec<_>>>()?,
    };
    info!("loaded {} pairs", samples.len());
    Ok(samples)
}

/// Configured training displays, or the first `n_train_displays` of the
/// seeded display order.
pub fn train_displays(cfg: &RunConfig, samples: &[PairSample]) -> Result<BTreeSet<String>> {
    if !cfg.protocol.train_displays.is_empty() {
        return Ok(cfg.protocol.train_displays.iter().cloned().collect());
    }
    let order = scaling_order(samples, cfg.training.seed);
    if cfg.protocol.n_train_displays > order.len() {
        return Err(Error::Config(format!(
            "n_train_displays {} exceeds the {} displays in the data",
            cfg.protocol.n_train_displays,
            order.len()
        )));
    }
    Ok(order.into_iter().take(cfg.protocol.n_train_displays).collect())
}

fn test_displays(cfg: &RunConfig) -> Option<BTreeSet<String>> {
    cfg.protocol.test_displays.as_ref().map(|t| t.iter().cloned().collect())
}

pub fn settings(cfg: &RunConfig) -> RunSettings {
    RunSettings {
        preprocess: cfg.preprocess.clone(),
        model: cfg.model.clone(),
        training: cfg.training.clone(),
    }
}

/// Writes the synthetic dataset (images, raw ToF words, manifest).
pub fn cmd_gen(cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    let dir = run_dir(out, "gen", "", cfg, &[])?;
    let manifest = gen_dataset(&cfg.synth.to_synth_config(), &dir)?;
    write_json(&dir.join("config.json"), cfg)?;
    info!("wrote {} pairs to {}", manifest.records.len(), dir.display());
    Ok(dir)
}

/// Trains `kind` on the training partition of the configured protocol and
/// writes `checkpoint.json` plus the loss logs.
pub fn cmd_train(cfg: &RunConfig, kind: ModelKind, out: &Path) -> Result<PathBuf> {
    let samples = load_data(cfg)?;
    let train_ids = train_displays(cfg, &samples)?;
    let part = partition(&samples, &train_ids, cfg.protocol.mode, test_displays(cfg).as_ref())?;
    info!("{kind} {}: leakage check passed", cfg.protocol.mode);
    let train: Vec<PairSample> = part.train.iter().map(|&i| samples[i].clone()).collect();
    let trained = train_detector(kind, &train, &cfg.preprocess, &cfg.model, &cfg.training)?;
    let dir = run_dir(out, "train", kind.name(), cfg, &[])?;
    if !trained.representation_log.is_empty() {
        write_atomic(&dir.join("loss.csv"), loss_log_csv(&trained.representation_log).as_bytes())?;
    }
    if !trained.classifier_log.is_empty() {
        let mut csv = String::from("epoch,loss,accuracy\n");
        for e in &trained.classifier_log {
            let _ = writeln!(csv, "{},{},{}", e.epoch, e.loss, e.accuracy);
        }
        write_atomic(&dir.join("classifier_loss.csv"), csv.as_bytes())?;
    }
    let ck = Checkpoint::new(trained, cfg.preprocess.clone(), serde_json::to_value(cfg)?);
    // the checkpoint goes last: its presence marks a complete run
    ck.save(&dir.join("checkpoint.json"))?;
    info!("checkpoint written to {}", dir.display());
    Ok(dir)
}

/// Runs one evaluation suite and writes `report.json` plus CSV exports.
/// With a checkpoint, the protocol suite scores the stored detector on the
/// test partition instead of training a new one.
pub fn cmd_eval(
    cfg: &RunConfig,
    kind: ModelKind,
    suite: Suite,
    checkpoint: Option<&Path>,
    out: &Path,
) -> Result<PathBuf> {
    let samples = load_data(cfg)?;
    let train_ids = train_displays(cfg, &samples)?;
    let tests = test_displays(cfg);
    let run = settings(cfg);
    let digest = checkpoint.map(file_digest).transpose()?;
    let tag = format!("{}-{}", suite.name(), kind.name());
    let dir = run_dir(out, "eval", &tag, cfg, &[digest.as_deref().unwrap_or("")])?;
    match suite {
        Suite::Protocol => {
            let report = match checkpoint {
                Some(path) => {
                    let ck = Checkpoint::load(path)?;
                    if ck.model != kind {
                        info!("using the checkpoint's model {} instead of {kind}", ck.model);
                    }
                    let part = partition(&samples, &train_ids, cfg.protocol.mode, tests.as_ref())?;
                    info!(
                        "{} {}: leakage check passed; train displays {:?}, test displays {:?}",
                        ck.model, cfg.protocol.mode, part.train_displays, part.test_displays
                    );
                    let views = part
                        .test
                        .iter()
                        .map(|&i| ck.preprocess.eval_view(&samples[i]))
                        .collect::<Result<Vec<_>>>()?;
                    let refs: Vec<&PairSample> = views.iter().collect();
                    build_report(&samples, &part, ck.model, score_samples(&ck.detector, &refs)?)?
                }
                None => run_protocol(kind, &samples, &train_ids, cfg.protocol.mode, tests.as_ref(), &run)?.report,
            };
            write_atomic(&dir.join("scores.csv"), scores_csv(&report.scores).as_bytes())?;
            write_json(&dir.join("report.json"), &report)?;
        }
        Suite::Ablation => {
            let report = ablation_suite(&samples, &train_ids, cfg.protocol.mode, &run)?;
            write_json(&dir.join("report.json"), &report)?;
        }
        Suite::Scaling => {
            let points = moire_scaling(kind, &samples, &cfg.protocol.scaling_counts, cfg.training.seed, &run)?;
            write_atomic(&dir.join("scaling.csv"), scaling_csv(&points).as_bytes())?;
            write_json(&dir.join("report.json"), &points)?;
        }
        Suite::Confusion => {
            let reports = cross_domain_reports(kind, &samples, cfg.protocol.taxonomy, &run)?;
            let matrix = confusion_by_taxonomy(&reports, cfg.protocol.taxonomy)?;
            write_atomic(&dir.join("confusion.csv"), confusion_csv(&matrix).as_bytes())?;
            write_json(
                &dir.join("report.json"),
                &serde_json::json!({ "matrix": matrix, "reports": reports }),
            )?;
        }
        Suite::Features => {
            let net = match checkpoint {
                Some(path) => match Checkpoint::load(path)?.detector {
                    Detector::Mtofnet(net) => net,
                    _ => {
                        return Err(Error::InvalidArgument(
                            "feature export needs a representation-network checkpoint".into(),
                        ))
                    }
                },
                None => {
                    let kind = match kind {
                        ModelKind::Mtofnet | ModelKind::MtofnetNoRep => kind,
                        _ => ModelKind::Mtofnet,
                    };
                    match run_protocol(kind, &samples, &train_ids, cfg.protocol.mode, tests.as_ref(), &run)?
                        .trained
                        .detector
                    {
                        Detector::Mtofnet(net) => net,
                        _ => unreachable!("representation kinds train representation detectors"),
                    }
                }
            };
            let part = partition(&samples, &train_ids, cfg.protocol.mode, tests.as_ref())?;
            let views = part
                .test
                .iter()
                .map(|&i| cfg.preprocess.eval_view(&samples[i]))
                .collect::<Result<Vec<_>>>()?;
            let export = export_features_2d(&net, &views)?;
            write_atomic(&dir.join("projection.csv"), projection_csv(&export.rows).as_bytes())?;
            write_json(
                &dir.join("report.json"),
                &serde_json::json!({
                    "n": export.rows.len(),
                    "cluster_separation": cluster_separation(&export)?,
                }),
            )?;
        }
    }
    info!("report written to {}", dir.display());
    Ok(dir)
}

/// Per-sample and class-mean radial power spectra of the ToF maps (or RGB
/// luminance).
pub fn cmd_spectrum(cfg: &RunConfig, modality: FreqModality, out: &Path) -> Result<PathBuf> {
    let samples = load_data(cfg)?;
    let tag = match modality {
        FreqModality::Tof => "tof",
        FreqModality::Image => "image",
    };
    let dir = run_dir(out, "spectrum", tag, cfg, &[])?;
    let mut per_sample = String::from("sample_id,label,radius,value\n");
    let mut sums = [Vec::<f64>::new(), Vec::new()];
    let mut counts = [0usize; 2];
    for s in &samples {
        let map = match modality {
            FreqModality::Tof => s.tof.clone(),
            FreqModality::Image => s.rgb.luminance(),
        };
        let profile = power_spectrum_1d(&map)?.values;
        let class = s.label().index();
        if sums[class].is_empty() {
            sums[class] = vec![0.0; profile.len()];
        } else if sums[class].len() != profile.len() {
            return Err(Error::Shape("spectra need equally sized maps; set preprocess.resize".into()));
        }
        for (r, v) in profile.iter().enumerate() {
            sums[class][r] += v;
            let _ = writeln!(per_sample, "{},{},{r},{v}", s.meta.id, s.label());
        }
        counts[class] += 1;
    }
    let (real, display) = (Label::Real.index(), Label::Display.index());
    if counts[real] == 0 || counts[display] == 0 {
        return Err(Error::Empty("class-mean spectra need both classes".into()));
    }
    if sums[real].len() != sums[display].len() {
        return Err(Error::Shape("spectra need equally sized maps; set preprocess.resize".into()));
    }
    let mut means = String::from("radius,mean_real,mean_display\n");
    for r in 0..sums[real].len() {
        let _ = writeln!(
            means,
            "{r},{},{}",
            sums[real][r] / counts[real] as f64,
            sums[display][r] / counts[display] as f64
        );
    }
    write_atomic(&dir.join("profiles.csv"), per_sample.as_bytes())?;
    write_atomic(&dir.join("spectrum.csv"), means.as_bytes())?;
    info!("spectra written to {}", dir.display());
    Ok(dir)
}

/// Scores one RGB + ToF file pair with a checkpoint.
pub fn cmd_predict(checkpoint: &Path, rgb_path: &Path, tof_path: &Path) -> Result<Prediction> {
    let ck = Checkpoint::load(checkpoint)?;
    let rgb = read_rgb_png(rgb_path)?;
    let tof = read_tof_png(tof_path, ck.preprocess.conf_threshold)?;
    // the label is unknown; metadata only has to be well formed
    let meta = SampleMeta {
        id: "query".into(),
        label: Label::Real,
        display_id: NO_DISPLAY.into(),
        display_type: NO_DISPLAY.into(),
        device_type: NO_DISPLAY.into(),
        object_category: "query".into(),
        split: None,
    };
    ck.predict(&PairSample::new(meta, rgb, tof)?)
}
