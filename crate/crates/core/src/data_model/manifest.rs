//! On-disk dataset layout: `<root>/manifest.jsonl` plus PNG rasters.
//!
//! Each manifest line is one JSON object describing one pair. RGB images are
//! 8-bit PNG, raw ToF maps 16-bit single-channel PNG, refined ToF maps 8-bit
//! single-channel PNG. Paths are relative to the dataset root.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma, Rgb};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::maps::{PlanarMap, RgbImage, ToFMap};
use super::sample::{Label, PairSample, SampleMeta, Split, NO_DISPLAY};
use super::tof::{decode_raw_tof, refine_tof, RawToFMap};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub schema_version: u32,
    pub id: String,
    pub rgb_path: String,
    pub tof_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tof_raw_path: Option<String>,
    pub label: Label,
    pub display_id: String,
    pub display_type: String,
    pub device_type: String,
    pub object_category: String,
    #[serde(default)]
    pub split: Option<Split>,
}

impl SampleRecord {
    pub fn meta(&self) -> SampleMeta {
        SampleMeta {
            id: self.id.clone(),
            label: self.label,
            display_id: self.display_id.clone(),
            display_type: self.display_type.clone(),
            device_type: self.device_type.clone(),
            object_category: self.object_category.clone(),
            split: self.split,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Manifest {
    pub schema_version: u32,
    pub records: Vec<SampleRecord>,
}

impl Manifest {
    pub fn new(records: Vec<SampleRecord>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            records,
        }
    }

    pub fn read(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut records = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: SampleRecord = serde_json::from_str(&line).map_err(|e| {
                Error::Manifest(format!("{}:{}: {e}", path.display(), lineno + 1))
            })?;
            if rec.schema_version != SCHEMA_VERSION {
                return Err(Error::Manifest(format!(
                    "{}:{}: unsupported schema_version {}",
                    path.display(),
                    lineno + 1,
                    rec.schema_version
                )));
            }
            records.push(rec);
        }
        Ok(Self::new(records))
    }

    pub fn write(&self, root: &Path) -> Result<()> {
        let path = root.join(MANIFEST_FILE);
        let mut text = String::new();
        for rec in &self.records {
            text.push_str(&serde_json::to_string(rec)?);
            text.push('\n');
        }
        write_atomic(&path, text.as_bytes())
    }

    /// Structural checks, plus file existence when `root` is given.
    pub fn validate(&self, root: Option<&Path>) -> Result<()> {
        let mut device_of: HashMap<&str, &str> = HashMap::new();
        let mut ids = std::collections::HashSet::new();
        for rec in &self.records {
            rec.meta().check()?;
            if !ids.insert(rec.id.as_str()) {
                return Err(Error::Manifest(format!("duplicate sample id {}", rec.id)));
            }
            if rec.label == Label::Real && rec.device_type != NO_DISPLAY {
                return Err(Error::Manifest(format!(
                    "real sample {} has device_type {}",
                    rec.id, rec.device_type
                )));
            }
            if let Some(prev) = device_of.insert(&rec.display_id, &rec.device_type) {
                if prev != rec.device_type {
                    return Err(Error::Manifest(format!(
                        "display {} listed as both {prev} and {}",
                        rec.display_id, rec.device_type
                    )));
                }
            }
            if let Some(root) = root {
                let mut paths = vec![&rec.rgb_path, &rec.tof_path];
                paths.extend(rec.tof_raw_path.as_ref());
                for p in paths {
                    if !root.join(p).is_file() {
                        return Err(Error::Manifest(format!(
                            "sample {}: missing file {}",
                            rec.id,
                            root.join(p).display()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn display_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .records
            .iter()
            .filter(|r| r.label == Label::Display)
            .map(|r| r.display_id.clone())
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }
}

/// Fractions for (train, val, test).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn check(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|r| !(0.0..=1.0).contains(r))
            || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::InvalidArgument(format!(
                "split ratios must be in [0,1] and sum to 1, got {parts:?}"
            )));
        }
        Ok(())
    }
}

/// Assigns a split to each key; keys are `(object_category, display_id)`
/// groups and each group is divided by the ratios on its own.
pub fn assign_splits(
    groups: &[(String, String)],
    ratios: SplitRatios,
    seed: u64,
) -> Result<Vec<Split>> {
    ratios.check()?;
    if groups.is_empty() {
        return Err(Error::Empty("cannot split an empty dataset".into()));
    }
    let mut members: BTreeMap<&(String, String), Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        members.entry(g).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![Split::Train; groups.len()];
    for idx in members.values_mut() {
        idx.shuffle(&mut rng);
        let n = idx.len();
        let n_train = ((n as f64 * ratios.train).round() as usize).min(n);
        let n_val = ((n as f64 * ratios.val).round() as usize).min(n - n_train);
        for (pos, &i) in idx.iter().enumerate() {
            out[i] = if pos < n_train {
                Split::Train
            } else if pos < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    Ok(out)
}

pub fn split_dataset(manifest: &Manifest, ratios: SplitRatios, seed: u64) -> Result<Manifest> {
    let groups: Vec<(String, String)> = manifest
        .records
        .iter()
        .map(|r| (r.object_category.clone(), r.display_id.clone()))
        .collect();
    let splits = assign_splits(&groups, ratios, seed)?;
    let mut out = manifest.clone();
    for (rec, split) in out.records.iter_mut().zip(splits) {
        rec.split = Some(split);
    }
    Ok(out)
}

/// Same grouping rule applied to in-memory samples.
pub fn split_samples(samples: &mut [PairSample], ratios: SplitRatios, seed: u64) -> Result<()> {
    let groups: Vec<(String, String)> = samples
        .iter()
        .map(|s| (s.meta.object_category.clone(), s.meta.display_id.clone()))
        .collect();
    for (s, split) in samples.iter_mut().zip(assign_splits(&groups, ratios, seed)?) {
        s.meta.split = Some(split);
    }
    Ok(())
}

/// Resizing and cropping applied to pairs before they reach a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Preprocess {
    /// Target `(width, height)` applied at load time; `None` keeps the native size.
    pub resize: Option<(usize, usize)>,
    /// Square crop side: random while training, centered otherwise.
    pub crop: Option<usize>,
    pub conf_threshold: f64,
}

impl Default for Preprocess {
    fn default() -> Self {
        Self {
            resize: Some((240, 180)),
            crop: Some(160),
            conf_threshold: 0.5,
        }
    }
}

impl Preprocess {
    /// No resize and no crop.
    pub fn native() -> Self {
        Self {
            resize: None,
            crop: None,
            conf_threshold: 0.5,
        }
    }

    pub fn apply_resize(&self, sample: &PairSample) -> Result<PairSample> {
        match self.resize {
            Some((w, h)) => sample.resized(w, h),
            None => Ok(sample.clone()),
        }
    }

    /// Deterministic evaluation view: resize then center crop.
    pub fn eval_view(&self, sample: &PairSample) -> Result<PairSample> {
        let s = self.apply_resize(sample)?;
        match self.crop {
            Some(c) if c != s.width() || c != s.height() => s.center_cropped(c),
            _ => Ok(s),
        }
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_rgb_png(path: &Path, img: &RgbImage) -> Result<()> {
    ensure_parent(path)?;
    let hw = img.width * img.height;
    let mut buf = Vec::with_capacity(3 * hw);
    for i in 0..hw {
        for c in 0..3 {
            buf.push(to_u8(img.values[c * hw + i]));
        }
    }
    let out: ImageBuffer<Rgb<u8>, _> =
        ImageBuffer::from_raw(img.width as u32, img.height as u32, buf).expect("rgb buffer");
    out.save(path)?;
    Ok(())
}

pub fn write_tof_png(path: &Path, map: &ToFMap) -> Result<()> {
    ensure_parent(path)?;
    let buf: Vec<u8> = map.values.iter().map(|&v| to_u8(v)).collect();
    let out: ImageBuffer<Luma<u8>, _> =
        ImageBuffer::from_raw(map.width as u32, map.height as u32, buf).expect("tof buffer");
    out.save(path)?;
    Ok(())
}

pub fn write_raw_tof_png(path: &Path, raw: &RawToFMap) -> Result<()> {
    ensure_parent(path)?;
    raw.check()?;
    let out: ImageBuffer<Luma<u16>, _> =
        ImageBuffer::from_raw(raw.width as u32, raw.height as u32, raw.words.clone())
            .expect("raw buffer");
    out.save(path)?;
    Ok(())
}

fn open(path: &Path) -> Result<DynamicImage> {
    if !path.is_file() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        ));
    }
    Ok(image::open(path)?)
}

pub fn read_rgb_png(path: &Path) -> Result<RgbImage> {
    let img = open(path)?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut values = vec![0.0; 3 * w * h];
    for (i, px) in img.pixels().enumerate() {
        for c in 0..3 {
            values[c * w * h + i] = f64::from(px.0[c]) / 255.0;
        }
    }
    RgbImage::from_parts(w, h, values)
}

pub fn read_raw_tof_png(path: &Path) -> Result<RawToFMap> {
    match open(path)? {
        DynamicImage::ImageLuma16(img) => RawToFMap::new(
            img.width() as usize,
            img.height() as usize,
            img.into_raw(),
        ),
        other => Err(Error::InvalidArgument(format!(
            "{}: expected 16-bit single-channel PNG, got {:?}",
            path.display(),
            other.color()
        ))),
    }
}

/// Reads a ToF map: 8-bit maps are taken as refined, 16-bit maps are decoded
/// as raw sensor words and refined with `conf_threshold`.
pub fn read_tof_png(path: &Path, conf_threshold: f64) -> Result<ToFMap> {
    match open(path)? {
        DynamicImage::ImageLuma8(img) => {
            let (w, h) = (img.width() as usize, img.height() as usize);
            let values = img.into_raw().into_iter().map(|v| f64::from(v) / 255.0).collect();
            ToFMap::from_parts(w, h, values)
        }
        DynamicImage::ImageLuma16(img) => {
            let raw = RawToFMap::new(img.width() as usize, img.height() as usize, img.into_raw())?;
            Ok(refine_tof(&decode_raw_tof(&raw)?, conf_threshold))
        }
        other => Err(Error::InvalidArgument(format!(
            "{}: expected single-channel ToF PNG, got {:?}",
            path.display(),
            other.color()
        ))),
    }
}

pub fn load_sample(root: &Path, rec: &SampleRecord, pre: &Preprocess) -> Result<PairSample> {
    let rgb = read_rgb_png(&root.join(&rec.rgb_path))?;
    let tof = read_tof_png(&root.join(&rec.tof_path), pre.conf_threshold)?;
    let sample = PairSample::new(rec.meta(), rgb, tof)?;
    pre.apply_resize(&sample)
}

pub fn load_samples(root: &Path, manifest: &Manifest, pre: &Preprocess) -> Result<Vec<PairSample>> {
    manifest
        .records
        .iter()
        .map(|r| load_sample(root, r, pre))
        .collect()
}

pub fn sample_paths(id: &str) -> (PathBuf, PathBuf, PathBuf) {
    (
        PathBuf::from("rgb").join(format!("{id}.png")),
        PathBuf::from("tof").join(format!("{id}.png")),
        PathBuf::from("tof_raw").join(format!("{id}.png")),
    )
}
