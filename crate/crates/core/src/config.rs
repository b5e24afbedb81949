//! Run configuration: one JSON file, defaults for every field, dotted-path
//! `--set key=value` overrides, and a content hash for versioned outputs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::data_model::{Preprocess, SplitRatios};
use crate::detector::{ModelConfig, TrainingConfig};
use crate::error::{Error, Result};
use crate::evaluation::{ProtocolMode, Taxonomy};
use crate::synth_gen::{make_profiles, DisplayProfile, SynthConfig};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// Dataset directory holding a manifest; `None` generates the synthetic
    /// dataset described by `synth` in memory.
    pub data_root: Option<PathBuf>,
    /// Artifact root, overridden by `--out`.
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub n_objects: usize,
    pub samples_per_object: usize,
    pub n_profiles: usize,
    /// Explicit display profiles; replaces the generated ones when set.
    pub profiles: Option<Vec<DisplayProfile>>,
    /// `(width, height)`.
    pub image_size: (usize, usize),
    pub seed: u64,
    pub split: SplitRatios,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            n_objects: 6,
            samples_per_object: 10,
            n_profiles: 5,
            profiles: None,
            image_size: (240, 180),
            seed: 0,
            split: SplitRatios::default(),
        }
    }
}

impl SynthSection {
    pub fn to_synth_config(&self) -> SynthConfig {
        SynthConfig {
            n_objects: self.n_objects,
            samples_per_object: self.samples_per_object,
            profiles: self
                .profiles
                .clone()
                .unwrap_or_else(|| make_profiles(self.n_profiles, self.seed)),
            image_size: self.image_size,
            seed: self.seed,
            split: self.split,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolSection {
    /// Training displays; empty takes the first `n_train_displays` of the
    /// seeded display order.
    pub train_displays: Vec<String>,
    pub n_train_displays: usize,
    /// Replaces the mode's default test displays when set.
    pub test_displays: Option<Vec<String>>,
    pub mode: ProtocolMode,
    /// Display counts of the moiré scaling curve.
    pub scaling_counts: Vec<usize>,
    pub taxonomy: Taxonomy,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        Self {
            train_displays: Vec::new(),
            n_train_displays: 3,
            test_displays: None,
            mode: ProtocolMode::Unseen,
            scaling_counts: vec![1, 2, 3, 4],
            taxonomy: Taxonomy::DisplayType,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub paths: Paths,
    pub synth: SynthSection,
    pub preprocess: Preprocess,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub protocol: ProtocolSection,
}

/// Recursively overlays `top` onto `base`; objects merge, anything else replaces.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Applies one `a.b.c=value` override. The value is read as JSON and falls
/// back to a plain string, so `mode=unseen` and `mode="unseen"` agree.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key {key:?}")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    for part in &parts[..parts.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?} descends into a non-object")))?;
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
        if node.is_null() {
            *node = Value::Object(Map::new());
        }
    }
    let obj = node
        .as_object_mut()
        .ok_or_else(|| Error::Config(format!("override {key:?} descends into a non-object")))?;
    obj.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Defaults, then the file (if any), then the overrides in order.
    /// Unknown keys anywhere are an error.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
        let mut doc = serde_json::to_value(RunConfig::default())?;
        if let Some(path) = path {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let file: Value = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            if !file.is_object() {
                return Err(Error::Config(format!("{}: top level must be an object", path.display())));
            }
            merge(&mut doc, file);
        }
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: RunConfig = serde_json::from_value(doc).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.check()?;
        self.synth.to_synth_config().check()?;
        let t = &self.training;
        if !(t.learning_rate > 0.0 && t.learning_rate.is_finite()) || t.batch_size == 0 || t.epochs == 0 {
            return Err(Error::Config(
                "training needs a positive learning rate, batch size and epoch count".into(),
            ));
        }
        if t.classifier_learning_rate.is_some_and(|lr| !(lr > 0.0 && lr.is_finite()))
            || t.classifier_epochs == Some(0)
        {
            return Err(Error::Config("classifier overrides must be positive".into()));
        }
        let p = &self.preprocess;
        if !(0.0..=1.0).contains(&p.conf_threshold) {
            return Err(Error::Config(format!("conf_threshold {} outside [0, 1]", p.conf_threshold)));
        }
        let (w, h) = p.resize.unwrap_or(self.synth.image_size);
        if p.resize.is_some_and(|(w, h)| w == 0 || h == 0) {
            return Err(Error::Config("resize target must be non-zero".into()));
        }
        if let Some(c) = p.crop {
            if c == 0 || c > w.min(h) {
                return Err(Error::Config(format!("crop {c} does not fit {w}x{h}")));
            }
        }
        let proto = &self.protocol;
        if proto.train_displays.is_empty() && proto.n_train_displays == 0 {
            return Err(Error::Config("protocol needs training displays".into()));
        }
        if proto.scaling_counts.is_empty() || proto.scaling_counts.contains(&0) {
            return Err(Error::Config("scaling_counts must be non-empty and positive".into()));
        }
        Ok(())
    }

    /// Overwrites both seeds.
    pub fn set_seed(&mut self, seed: u64) {
        self.synth.seed = seed;
        self.training.seed = seed;
    }

    /// Canonical JSON: object keys sorted, no whitespace.
    pub fn canonical_json(&self) -> Result<String> {
        // serde_json's default map is ordered by key
        Ok(serde_json::to_string(&serde_json::to_value(self)?)?)
    }
}

/// First 16 hex digits of SHA-256 over `parts` joined by newlines.
pub fn content_hash(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for (i, p) in parts.iter().enumerate() {
        if i > 0 {
            h.update(b"\n");
        }
        h.update(p.as_bytes());
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn defaults_validate() {
        let cfg = RunConfig::load(None, &[]).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.training.learning_rate, 1e-4);
        assert_eq!(cfg.training.batch_size, 32);
        assert_eq!(cfg.training.epochs, 20);
        assert_eq!(cfg.preprocess.resize, Some((240, 180)));
        assert_eq!(cfg.preprocess.crop, Some(160));
    }

    #[test]
    fn overrides_apply_in_order() {
        let cfg = RunConfig::load(
            None,
            &[
                "training.epochs=3".into(),
                "protocol.mode=target".into(),
                "preprocess.resize=[80,64]".into(),
                "preprocess.crop=null".into(),
                "training.epochs=4".into(),
                "paths.data_root=/tmp/x".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.training.epochs, 4);
        assert_eq!(cfg.protocol.mode, ProtocolMode::Target);
        assert_eq!(cfg.preprocess.resize, Some((80, 64)));
        assert_eq!(cfg.preprocess.crop, None);
        assert_eq!(cfg.paths.data_root, Some(PathBuf::from("/tmp/x")));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::load(None, &["training.epoch=3".into()]).is_err());
        assert!(RunConfig::load(None, &["nonsense=1".into()]).is_err());
        assert!(RunConfig::load(None, &["training".into()]).is_err());
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, r#"{{"model": {{"widths": [8, 16, 32], "depth": 3}}}}"#).unwrap();
        assert!(RunConfig::load(Some(f.path()), &[]).is_err());
    }

    #[test]
    fn file_merges_over_defaults() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, r#"{{"model": {{"widths": [8, 16, 32]}}, "training": {{"seed": 9}}}}"#).unwrap();
        let cfg = RunConfig::load(Some(f.path()), &["training.seed=11".into()]).unwrap();
        assert_eq!(cfg.model.widths, [8, 16, 32]);
        assert_eq!(cfg.model.loss_weights, ModelConfig::default().loss_weights);
        assert_eq!(cfg.training.seed, 11);
        assert_eq!(cfg.training.epochs, 20);
    }

    #[test]
    fn invalid_values_rejected() {
        for bad in [
            "training.learning_rate=0",
            "training.batch_size=0",
            "preprocess.crop=500",
            "preprocess.conf_threshold=2",
            "model.widths=[0,1,2]",
            "synth.n_objects=0",
            "protocol.scaling_counts=[]",
        ] {
            assert!(RunConfig::load(None, &[bad.into()]).is_err(), "{bad}");
        }
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.training.epochs += 1;
        let ha = content_hash(&[&a.canonical_json().unwrap()]);
        assert_eq!(ha.len(), 16);
        assert_eq!(ha, content_hash(&[&a.clone().canonical_json().unwrap()]));
        assert_ne!(ha, content_hash(&[&b.canonical_json().unwrap()]));
        assert_ne!(content_hash(&["ab", "c"]), content_hash(&["a", "bc"]));
    }
}
