use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{group_metrics, metrics, GroupMetrics, Metrics, ScoredSample};
use crate::baselines::Pca;
use crate::data_model::{Label, PairSample, Preprocess, Split};
use crate::detector::{train_detector, Detector, ModelConfig, ModelKind, TrainedDetector, TrainingConfig};
use crate::error::{Error, Result};
use crate::spoof_classifier::MToFNet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolMode {
    /// Test on the training displays.
    Target,
    /// Test on displays absent from training.
    Unseen,
    /// Train and test on every display.
    All,
}

impl ProtocolMode {
    pub fn name(self) -> &'static str {
        match self {
            ProtocolMode::Target => "target",
            ProtocolMode::Unseen => "unseen",
            ProtocolMode::All => "all",
        }
    }
}

impl fmt::Display for ProtocolMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtocolMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "target" => Ok(ProtocolMode::Target),
            "unseen" => Ok(ProtocolMode::Unseen),
            "all" => Ok(ProtocolMode::All),
            _ => Err(Error::InvalidArgument(format!(
                "unknown mode {s:?}; expected target, unseen or all"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Taxonomy {
    DisplayType,
    DeviceType,
}

impl Taxonomy {
    pub fn of(self, s: &PairSample) -> &str {
        match self {
            Taxonomy::DisplayType => &s.meta.display_type,
            Taxonomy::DeviceType => &s.meta.device_type,
        }
    }
}

impl FromStr for Taxonomy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "display_type" => Ok(Taxonomy::DisplayType),
            "device_type" => Ok(Taxonomy::DeviceType),
            _ => Err(Error::InvalidArgument(format!(
                "unknown grouping {s:?}; expected display_type or device_type"
            ))),
        }
    }
}

/// Index sets of one protocol run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub mode: ProtocolMode,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub train_displays: BTreeSet<String>,
    pub test_displays: BTreeSet<String>,
}

pub fn display_ids(samples: &[PairSample]) -> BTreeSet<String> {
    samples
        .iter()
        .filter(|s| s.label() == Label::Display)
        .map(|s| s.meta.display_id.clone())
        .collect()
}

/// Training takes train-split pairs that are real or shown on a training
/// display; testing takes test-split pairs that are real or shown on a test
/// display. `test_displays` overrides the mode's default test set: in unseen
/// mode it must avoid the training displays, in target mode it may extend
/// past them (cross-domain runs).
pub fn partition(
    samples: &[PairSample],
    train_displays: &BTreeSet<String>,
    mode: ProtocolMode,
    test_displays: Option<&BTreeSet<String>>,
) -> Result<Partition> {
    let all = display_ids(samples);
    if let Some(s) = samples.iter().find(|s| s.meta.split.is_none()) {
        return Err(Error::Protocol(format!("sample {} has no split", s.meta.id)));
    }
    let train_set = match mode {
        ProtocolMode::All => all.clone(),
        _ => train_displays.clone(),
    };
    if let Some(d) = train_set.iter().chain(test_displays.into_iter().flatten()).find(|d| !all.contains(*d)) {
        return Err(Error::Protocol(format!("display {d:?} not in the data")));
    }
    let test_set = match (mode, test_displays) {
        (ProtocolMode::All, _) => all.clone(),
        (_, Some(t)) => t.clone(),
        (ProtocolMode::Target, None) => train_set.clone(),
        (ProtocolMode::Unseen, None) => all.difference(&train_set).cloned().collect(),
    };
    let keep = |s: &PairSample, split: Split, displays: &BTreeSet<String>| {
        s.meta.split == Some(split) && (s.label() == Label::Real || displays.contains(&s.meta.display_id))
    };
    let train: Vec<usize> = (0..samples.len()).filter(|&i| keep(&samples[i], Split::Train, &train_set)).collect();
    let test: Vec<usize> = (0..samples.len()).filter(|&i| keep(&samples[i], Split::Test, &test_set)).collect();
    if train.is_empty() || test.is_empty() {
        return Err(Error::Empty(format!(
            "{mode} partition has {} training and {} test pairs",
            train.len(),
            test.len()
        )));
    }
    let p = Partition {
        mode,
        train,
        test,
        train_displays: train_set,
        test_displays: test_set,
    };
    check_leakage(samples, &p)?;
    Ok(p)
}

/// Errors if a pair sits on both sides, if training uses a display outside
/// its set, or (unseen mode) if any test display was seen in training.
pub fn check_leakage(samples: &[PairSample], p: &Partition) -> Result<()> {
    let train_ids: BTreeSet<&str> = p.train.iter().map(|&i| samples[i].meta.id.as_str()).collect();
    if let Some(&i) = p.test.iter().find(|&&i| train_ids.contains(samples[i].meta.id.as_str())) {
        return Err(Error::Protocol(format!("pair {} in both partitions", samples[i].meta.id)));
    }
    let seen: BTreeSet<&str> = p
        .train
        .iter()
        .map(|&i| &samples[i])
        .filter(|s| s.label() == Label::Display)
        .map(|s| s.meta.display_id.as_str())
        .collect();
    if let Some(d) = seen.iter().find(|d| !p.train_displays.contains(**d)) {
        return Err(Error::Protocol(format!("training used display {d} outside its set")));
    }
    if p.mode == ProtocolMode::Unseen {
        if let Some(d) = p.test_displays.iter().find(|d| p.train_displays.contains(*d) || seen.contains(d.as_str())) {
            return Err(Error::Protocol(format!("unseen test display {d} leaked into training")));
        }
        for &i in &p.test {
            let s = &samples[i];
            if s.label() == Label::Display && seen.contains(s.meta.display_id.as_str()) {
                return Err(Error::Protocol(format!("test pair {} shows a training display", s.meta.id)));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: ProtocolMode,
    pub model: ModelKind,
    pub train_display_ids: Vec<String>,
    pub test_display_ids: Vec<String>,
    pub train_display_types: Vec<String>,
    pub train_device_types: Vec<String>,
    pub n_train: usize,
    pub n_test: usize,
    pub metrics: Metrics,
    /// Test reals plus the test pairs of one display (or type).
    pub by_display: BTreeMap<String, GroupMetrics>,
    pub by_display_type: BTreeMap<String, GroupMetrics>,
    pub by_device_type: BTreeMap<String, GroupMetrics>,
    pub leakage_checked: bool,
    pub scores: Vec<ScoredSample>,
}

fn breakdown(scores: &[ScoredSample], key: impl Fn(&ScoredSample) -> &str) -> Result<BTreeMap<String, GroupMetrics>> {
    let groups: BTreeSet<&str> = scores.iter().filter(|s| s.label.is_display()).map(&key).collect();
    let mut out = BTreeMap::new();
    for g in groups {
        let subset: Vec<ScoredSample> = scores
            .iter()
            .filter(|s| !s.label.is_display() || key(s) == g)
            .cloned()
            .collect();
        out.insert(g.to_string(), group_metrics(&subset)?);
    }
    Ok(out)
}

/// Scores `test` (preprocessed to the evaluation view) with a trained detector.
pub fn score_samples(detector: &Detector, test: &[&PairSample]) -> Result<Vec<ScoredSample>> {
    let scores = detector.score(test)?;
    test.iter().zip(scores).map(|(s, p)| ScoredSample::new(&s.meta, p)).collect()
}

pub fn build_report(
    samples: &[PairSample],
    part: &Partition,
    kind: ModelKind,
    scores: Vec<ScoredSample>,
) -> Result<EvalReport> {
    let types = |tax: Taxonomy| -> Vec<String> {
        let set: BTreeSet<String> = part
            .train
            .iter()
            .map(|&i| &samples[i])
            .filter(|s| s.label() == Label::Display)
            .map(|s| tax.of(s).to_string())
            .collect();
        set.into_iter().collect()
    };
    Ok(EvalReport {
        protocol: part.mode,
        model: kind,
        train_display_ids: part.train_displays.iter().cloned().collect(),
        test_display_ids: part.test_displays.iter().cloned().collect(),
        train_display_types: types(Taxonomy::DisplayType),
        train_device_types: types(Taxonomy::DeviceType),
        n_train: part.train.len(),
        n_test: part.test.len(),
        metrics: metrics(&scores)?,
        by_display: breakdown(&scores, |s| &s.display_id)?,
        by_display_type: breakdown(&scores, |s| &s.display_type)?,
        by_device_type: breakdown(&scores, |s| &s.device_type)?,
        leakage_checked: true,
        scores,
    })
}

/// Shared settings of protocol runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub preprocess: Preprocess,
    pub model: ModelConfig,
    pub training: TrainingConfig,
}

pub struct ProtocolRun {
    pub report: EvalReport,
    pub trained: TrainedDetector,
}

/// Trains `kind` on one partition of `samples` (resized, split-tagged) and
/// evaluates it on the other.
pub fn run_protocol(
    kind: ModelKind,
    samples: &[PairSample],
    train_displays: &BTreeSet<String>,
    mode: ProtocolMode,
    test_displays: Option<&BTreeSet<String>>,
    settings: &RunSettings,
) -> Result<ProtocolRun> {
    let part = partition(samples, train_displays, mode, test_displays)?;
    info!(
        "{kind} {mode}: leakage check passed; train displays {:?}, test displays {:?}",
        part.train_displays, part.test_displays
    );
    let train: Vec<PairSample> = part.train.iter().map(|&i| samples[i].clone()).collect();
    let trained = train_detector(kind, &train, &settings.preprocess, &settings.model, &settings.training)?;
    let views = part
        .test
        .iter()
        .map(|&i| settings.preprocess.eval_view(&samples[i]))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&PairSample> = views.iter().collect();
    let scores = score_samples(&trained.detector, &refs)?;
    let report = build_report(samples, &part, kind, scores)?;
    info!(
        "{kind} {mode}: acc {:.4} auroc {:.4} ap {:.4}",
        report.metrics.accuracy, report.metrics.auroc, report.metrics.ap
    );
    Ok(ProtocolRun { report, trained })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub full: EvalReport,
    /// CNN on RGB only.
    pub image_only: EvalReport,
    /// 4-channel CNN without the representation network.
    pub naive_cnn: EvalReport,
    /// Full model trained without the representation loss.
    pub no_rep: EvalReport,
}

pub fn ablation_suite(
    samples: &[PairSample],
    train_displays: &BTreeSet<String>,
    mode: ProtocolMode,
    settings: &RunSettings,
) -> Result<AblationReport> {
    let run = |kind| Ok::<_, Error>(run_protocol(kind, samples, train_displays, mode, None, settings)?.report);
    Ok(AblationReport {
        full: run(ModelKind::Mtofnet)?,
        image_only: run(ModelKind::ImageCnn)?,
        naive_cnn: run(ModelKind::NaiveCnn)?,
        no_rep: run(ModelKind::MtofnetNoRep)?,
    })
}

/// Display ids in a seeded random order; scaling runs train on prefixes.
pub fn scaling_order(samples: &[PairSample], seed: u64) -> Vec<String> {
    let mut ids: Vec<String> = display_ids(samples).into_iter().collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    ids
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub k: usize,
    pub report: EvalReport,
}

/// For each `k`, trains on the first `k` displays of [`scaling_order`] and
/// tests on the displays past the largest `k`, so every point of the curve
/// shares one unseen test set. The CNN baselines always train with
/// augmentation here.
pub fn moire_scaling(
    kind: ModelKind,
    samples: &[PairSample],
    counts: &[usize],
    seed: u64,
    settings: &RunSettings,
) -> Result<Vec<ScalingPoint>> {
    let order = scaling_order(samples, seed);
    let max_k = counts.iter().copied().max().ok_or_else(|| Error::Empty("no display counts".into()))?;
    if counts.contains(&0) || max_k >= order.len() {
        return Err(Error::Protocol(format!(
            "display counts {counts:?} must lie in 1..{} to leave unseen displays",
            order.len()
        )));
    }
    let held_out: BTreeSet<String> = order[max_k..].iter().cloned().collect();
    let mut settings = settings.clone();
    if matches!(kind, ModelKind::NaiveCnn | ModelKind::ImageCnn) {
        settings.model.augment = true;
    }
    let settings = &settings;
    counts
        .iter()
        .map(|&k| {
            let train: BTreeSet<String> = order[..k].iter().cloned().collect();
            let run = run_protocol(kind, samples, &train, ProtocolMode::Unseen, Some(&held_out), settings)?;
            Ok(ScalingPoint { k, report: run.report })
        })
        .collect()
}

/// One report per group value: trained on that group's displays, tested on
/// every display.
pub fn cross_domain_reports(
    kind: ModelKind,
    samples: &[PairSample],
    group_by: Taxonomy,
    settings: &RunSettings,
) -> Result<Vec<EvalReport>> {
    let all = display_ids(samples);
    let mut groups: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for s in samples.iter().filter(|s| s.label() == Label::Display) {
        groups
            .entry(group_by.of(s).to_string())
            .or_default()
            .insert(s.meta.display_id.clone());
    }
    groups
        .values()
        .map(|displays| {
            Ok(run_protocol(kind, samples, displays, ProtocolMode::Target, Some(&all), settings)?.report)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub group_by: Taxonomy,
    pub metric: String,
    pub groups: Vec<String>,
    /// `cells[train_group][test_group]`; `None` where no report covers the pair.
    pub cells: Vec<Vec<Option<f64>>>,
}

/// Rows are training domains, columns test domains; cells hold test AUROC.
pub fn confusion_by_taxonomy(reports: &[EvalReport], group_by: Taxonomy) -> Result<ConfusionMatrix> {
    let row_of = |r: &EvalReport| -> Result<String> {
        let groups = match group_by {
            Taxonomy::DisplayType => &r.train_display_types,
            Taxonomy::DeviceType => &r.train_device_types,
        };
        match groups.as_slice() {
            [g] => Ok(g.clone()),
            _ => Err(Error::Protocol(format!(
                "report trained on {groups:?}; a confusion row needs exactly one group"
            ))),
        }
    };
    fn cols_of(r: &EvalReport, group_by: Taxonomy) -> &BTreeMap<String, GroupMetrics> {
        match group_by {
            Taxonomy::DisplayType => &r.by_display_type,
            Taxonomy::DeviceType => &r.by_device_type,
        }
    }
    let mut names = BTreeSet::new();
    for r in reports {
        names.insert(row_of(r)?);
        names.extend(cols_of(r, group_by).keys().cloned());
    }
    let groups: Vec<String> = names.into_iter().collect();
    let index = |g: &str| groups.iter().position(|x| x == g).expect("known group");
    let mut cells = vec![vec![None; groups.len()]; groups.len()];
    for r in reports {
        let row = index(&row_of(r)?);
        for (g, m) in cols_of(r, group_by) {
            let cell = &mut cells[row][index(g)];
            if cell.is_some() {
                return Err(Error::Protocol(format!("two reports fill cell ({}, {g})", groups[row])));
            }
            *cell = m.auroc;
        }
    }
    Ok(ConfusionMatrix {
        group_by,
        metric: "auroc".into(),
        groups,
        cells,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRow {
    pub sample_id: String,
    pub label: Label,
    pub display_id: String,
    pub u: f64,
    pub v: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureExport {
    pub rows: Vec<ProjectionRow>,
    /// Full pooled features, row-aligned with `rows`.
    pub features: Vec<Vec<f64>>,
}

/// Pooled `[z_M, z_T]` features of `samples` (evaluation views) and their
/// projection onto the two leading principal axes.
pub fn export_features_2d(model: &MToFNet, samples: &[PairSample]) -> Result<FeatureExport> {
    let mut features = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(32) {
        let pairs: Vec<_> = chunk.iter().map(|s| (&s.rgb, &s.tof)).collect();
        let f = model.features(&pairs)?;
        features.extend((0..f.n()).map(|i| f.sample(i).to_vec()));
    }
    let pca = Pca::fit(&features, 2)?;
    let rows = samples
        .iter()
        .zip(&features)
        .map(|(s, f)| {
            let z = pca.transform(f)?;
            Ok(ProjectionRow {
                sample_id: s.meta.id.clone(),
                label: s.label(),
                display_id: s.meta.display_id.clone(),
                u: z[0],
                v: z[1],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureExport { rows, features })
}

/// Distance from the real centroid to the nearest display centroid over the
/// mean distance of real points to their centroid.
pub fn cluster_separation(export: &FeatureExport) -> Result<f64> {
    let dim = export.features.first().map_or(0, Vec::len);
    let centroid = |rows: &[&Vec<f64>]| -> Vec<f64> {
        let mut c = vec![0.0; dim];
        for r in rows {
            c.iter_mut().zip(r.iter()).for_each(|(a, b)| *a += b / rows.len() as f64);
        }
        c
    };
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let mut by_display: BTreeMap<&str, Vec<&Vec<f64>>> = BTreeMap::new();
    let mut reals = Vec::new();
    for (row, f) in export.rows.iter().zip(&export.features) {
        if row.label == Label::Real {
            reals.push(f);
        } else {
            by_display.entry(row.display_id.as_str()).or_default().push(f);
        }
    }
    if reals.is_empty() || by_display.is_empty() {
        return Err(Error::Empty("separation needs real and display pairs".into()));
    }
    let c_real = centroid(&reals);
    let radius = reals.iter().map(|r| dist(r, &c_real)).sum::<f64>() / reals.len() as f64;
    let nearest = by_display
        .values()
        .map(|rows| dist(&centroid(rows), &c_real))
        .fold(f64::INFINITY, f64::min);
    Ok(nearest / radius.max(f64::MIN_POSITIVE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth_gen::{gen_samples, SynthConfig};

    fn data() -> Vec<PairSample> {
        let mut cfg = SynthConfig::desk(4, 2, 4, (16, 16), 11);
        cfg.split = crate::data_model::SplitRatios {
            train: 0.5,
            val: 0.0,
            test: 0.5,
        };
        gen_samples(&cfg).unwrap()
    }

    fn set(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn modes_pick_expected_displays() {
        let samples = data();
        let all = display_ids(&samples);
        let first: Vec<&str> = all.iter().take(2).map(String::as_str).collect();
        let train = set(&first);
        let p = partition(&samples, &train, ProtocolMode::Unseen, None).unwrap();
        assert!(p.test_displays.is_disjoint(&p.train_displays));
        assert_eq!(p.test_displays.len() + p.train_displays.len(), all.len());
        let t = partition(&samples, &train, ProtocolMode::Target, None).unwrap();
        assert_eq!(t.test_displays, train);
        let a = partition(&samples, &train, ProtocolMode::All, None).unwrap();
        let everything = partition(&samples, &all, ProtocolMode::Target, None).unwrap();
        assert_eq!((a.train, a.test), (everything.train, everything.test));
    }

    #[test]
    fn leaks_are_caught() {
        let samples = data();
        let all = display_ids(&samples);
        let one = set(&[all.iter().next().unwrap()]);
        assert!(matches!(
            partition(&samples, &one, ProtocolMode::Unseen, Some(&all)),
            Err(Error::Protocol(_))
        ));
        let mut p = partition(&samples, &one, ProtocolMode::Unseen, None).unwrap();
        p.test.push(p.train[0]);
        assert!(check_leakage(&samples, &p).is_err());
        assert!(partition(&samples, &set(&["nope"]), ProtocolMode::Target, None).is_err());
    }

    #[test]
    fn confusion_rows_are_training_groups() {
        let gm = |auroc| GroupMetrics {
            n: 4,
            accuracy: 1.0,
            auroc: Some(auroc),
            ap: Some(1.0),
        };
        let base = EvalReport {
            protocol: ProtocolMode::Target,
            model: ModelKind::PcaSvm,
            train_display_ids: vec![],
            test_display_ids: vec![],
            train_display_types: vec!["LCD".into()],
            train_device_types: vec![],
            n_train: 0,
            n_test: 0,
            metrics: Metrics {
                accuracy: 1.0,
                auroc: 1.0,
                ap: 1.0,
            },
            by_display: BTreeMap::new(),
            by_display_type: [("LCD".to_string(), gm(0.9)), ("OLED".to_string(), gm(0.6))].into(),
            by_device_type: BTreeMap::new(),
            leakage_checked: true,
            scores: vec![],
        };
        let mut other = base.clone();
        other.train_display_types = vec!["OLED".into()];
        other.by_display_type = [("OLED".to_string(), gm(0.8))].into();
        let m = confusion_by_taxonomy(&[base.clone(), other], Taxonomy::DisplayType).unwrap();
        assert_eq!(m.groups, vec!["LCD", "OLED"]);
        assert_eq!(m.cells, vec![vec![Some(0.9), Some(0.6)], vec![None, Some(0.8)]]);
        assert!(confusion_by_taxonomy(&[base.clone(), base], Taxonomy::DisplayType).is_err());
    }
}
