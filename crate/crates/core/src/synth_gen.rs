//! Desk-scale synthetic RGB + ToF datasets.
//!
//! Real scenes are a background plane with several smooth Gaussian bumps in
//! depth and a textured, depth-shaded RGB image. Display scenes re-show a real
//! scene's RGB with an additive moiré term (the product of two sinusoidal
//! gratings, unique per display) while the ToF sensor sees only the flat
//! screen: a constant plane plus small Gaussian noise.
//!
//! All parameters here are stand-ins chosen to make the real/display depth
//! contrast and per-display moiré controllable; they are not measured from
//! physical captures.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data_model::{
    decode_raw_tof, encode_depth_map, refine_tof, sample_paths, split_samples, write_raw_tof_png,
    write_rgb_png, write_tof_png, DepthMap, Label, Manifest, PairSample, RawToFMap, RgbImage,
    SampleMeta, SampleRecord, SplitRatios, MAX_DEPTH_MM, NO_DISPLAY, SCHEMA_VERSION,
};
use crate::error::{Error, Result};

const CONF_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceType {
    Monitor,
    Laptop,
    Phone,
    Tablet,
    Projector,
}

impl DeviceType {
    pub const ALL: [DeviceType; 5] = [
        DeviceType::Monitor,
        DeviceType::Laptop,
        DeviceType::Phone,
        DeviceType::Tablet,
        DeviceType::Projector,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DeviceType::Monitor => "monitor",
            DeviceType::Laptop => "laptop",
            DeviceType::Phone => "phone",
            DeviceType::Tablet => "tablet",
            DeviceType::Projector => "projector",
        }
    }

    /// Screen technology group used for the display-type taxonomy.
    pub fn default_display_type(self) -> &'static str {
        match self {
            DeviceType::Monitor => "LED",
            DeviceType::Laptop | DeviceType::Tablet => "LCD",
            DeviceType::Phone => "OLED",
            DeviceType::Projector => "screen",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisplayProfile {
    pub display_id: String,
    pub device_type: DeviceType,
    pub display_type: String,
    /// Cycles per pixel, in `(0, 0.5)`.
    pub moire_freq_a: f64,
    pub moire_freq_b: f64,
    /// Radians.
    pub moire_angle_a: f64,
    pub moire_angle_b: f64,
    /// In `[0, 0.3]`.
    pub moire_amplitude: f64,
    pub depth_plane_mm: f64,
    pub depth_noise_std_mm: f64,
}

impl DisplayProfile {
    pub fn check(&self) -> Result<()> {
        let freq_ok = |f: f64| f > 0.0 && f < 0.5;
        if !freq_ok(self.moire_freq_a) || !freq_ok(self.moire_freq_b) {
            return Err(Error::InvalidArgument(format!(
                "display {}: moiré frequencies must be in (0, 0.5)",
                self.display_id
            )));
        }
        if !(0.0..=0.3).contains(&self.moire_amplitude) {
            return Err(Error::InvalidArgument(format!(
                "display {}: moiré amplitude must be in [0, 0.3]",
                self.display_id
            )));
        }
        if !(0.0..=f64::from(MAX_DEPTH_MM)).contains(&self.depth_plane_mm)
            || self.depth_noise_std_mm < 0.0
        {
            return Err(Error::InvalidArgument(format!(
                "display {}: depth plane or noise out of range",
                self.display_id
            )));
        }
        if self.display_id == NO_DISPLAY {
            return Err(Error::InvalidArgument("display id \"none\" is reserved".into()));
        }
        Ok(())
    }

    fn moire_key(&self) -> [u64; 4] {
        [
            self.moire_freq_a.to_bits(),
            self.moire_freq_b.to_bits(),
            self.moire_angle_a.to_bits(),
            self.moire_angle_b.to_bits(),
        ]
    }

    /// The additive moiré term at pixel `(x, y)`.
    pub fn moire(&self, x: f64, y: f64) -> f64 {
        let a = 2.0
            * PI
            * self.moire_freq_a
            * (x * self.moire_angle_a.cos() + y * self.moire_angle_a.sin());
        let b = 2.0
            * PI
            * self.moire_freq_b
            * (x * self.moire_angle_b.cos() + y * self.moire_angle_b.sin());
        self.moire_amplitude * a.cos() * b.cos()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n_objects: usize,
    pub samples_per_object: usize,
    pub profiles: Vec<DisplayProfile>,
    /// `(width, height)`.
    pub image_size: (usize, usize),
    pub seed: u64,
    #[serde(default)]
    pub split: SplitRatios,
}

impl SynthConfig {
    /// Config with `n_profiles` profiles from [`make_profiles`].
    pub fn desk(n_objects: usize, samples_per_object: usize, n_profiles: usize, size: (usize, usize), seed: u64) -> Self {
        Self {
            n_objects,
            samples_per_object,
            profiles: make_profiles(n_profiles, seed),
            image_size: size,
            seed,
            split: SplitRatios::default(),
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.n_objects == 0 || self.samples_per_object == 0 || self.profiles.is_empty() {
            return Err(Error::InvalidArgument(
                "n_objects, samples_per_object and profiles must all be non-empty".into(),
            ));
        }
        let (w, h) = self.image_size;
        if w < 2 || h < 2 || w % 2 != 0 || h % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "image size must be even and at least 2x2, got {w}x{h}"
            )));
        }
        let mut ids = std::collections::HashSet::new();
        let mut keys = std::collections::HashSet::new();
        for p in &self.profiles {
            p.check()?;
            if !ids.insert(&p.display_id) {
                return Err(Error::InvalidArgument(format!("duplicate display id {}", p.display_id)));
            }
            if !keys.insert(p.moire_key()) {
                return Err(Error::InvalidArgument(format!(
                    "display {} repeats another display's moiré parameters",
                    p.display_id
                )));
            }
        }
        self.split.check()
    }
}

/// splitmix64 finalizer over a sequence of words.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        let mut z = h ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

/// `n` displays with distinct moiré parameters, cycling through device types.
pub fn make_profiles(n: usize, seed: u64) -> Vec<DisplayProfile> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, 0xD15B]));
    let golden = 0.618_033_988_749_895;
    let offset: f64 = rng.random_range(0.0..1.0);
    (0..n)
        .map(|i| {
            let device = DeviceType::ALL[i % DeviceType::ALL.len()];
            let u = (offset + golden * i as f64).fract();
            let v = (offset + golden * golden * i as f64 + 0.37).fract();
            DisplayProfile {
                display_id: format!("d{i:02}_{}", device.as_str()),
                device_type: device,
                display_type: device.default_display_type().to_string(),
                moire_freq_a: 0.06 + 0.36 * u,
                moire_freq_b: 0.03 + 0.12 * v,
                moire_angle_a: PI * u + rng.random_range(-0.2..0.2),
                moire_angle_b: PI * v + rng.random_range(-0.2..0.2),
                moire_amplitude: rng.random_range(0.10..0.18),
                depth_plane_mm: rng.random_range(3050.0..3350.0),
                depth_noise_std_mm: rng.random_range(2.0..6.0),
            }
        })
        .collect()
}

fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

struct Bump {
    cx: f64,
    cy: f64,
    sigma: f64,
    amplitude: f64,
}

struct Grating {
    freq: f64,
    angle: f64,
    phase: f64,
    amplitude: f64,
}

fn real_scene_parts(object_id: u64, seed: u64, size: (usize, usize)) -> (PairSample, RawToFMap) {
    let (w, h) = size;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, object_id, 0x5CE7E]));
    let side = w.min(h) as f64;

    let baseline: f64 = rng.random_range(2600.0..3800.0);
    let bumps: Vec<Bump> = (0..rng.random_range(3..=8))
        .map(|_| {
            let sign = if rng.random_bool(0.7) { -1.0 } else { 1.0 };
            Bump {
                cx: rng.random_range(0.0..w as f64),
                cy: rng.random_range(0.0..h as f64),
                sigma: rng.random_range(0.10..0.30) * side,
                amplitude: sign * rng.random_range(200.0..2000.0),
            }
        })
        .collect();
    let sensor_noise = Normal::new(0.0, 4.0).expect("valid normal");
    let mut depth = vec![0.0; w * h];
    let mut confidence = vec![1.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut d = baseline;
            for b in &bumps {
                let r2 = (x as f64 - b.cx).powi(2) + (y as f64 - b.cy).powi(2);
                d += b.amplitude * (-r2 / (2.0 * b.sigma * b.sigma)).exp();
            }
            d += sensor_noise.sample(&mut rng);
            depth[y * w + x] = d.clamp(0.0, f64::from(MAX_DEPTH_MM));
            // sparse dropouts exercise confidence masking
            if rng.random_bool(0.01) {
                confidence[y * w + x] = 0.0;
            }
        }
    }
    let depth_map = DepthMap {
        width: w,
        height: h,
        depth,
        confidence,
    };
    let raw = encode_depth_map(&depth_map);
    let tof = refine_tof(&decode_raw_tof(&raw).expect("well-formed"), CONF_THRESHOLD);

    // texture: two base colors blended by a few gratings over the full
    // frequency band, then shaded by the depth gradient
    let base: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.30..0.70));
    let tint: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.15..0.15));
    let gratings: Vec<Grating> = (0..rng.random_range(2..=4))
        .map(|_| Grating {
            freq: rng.random_range(0.02..0.45),
            angle: rng.random_range(0.0..PI),
            phase: rng.random_range(0.0..2.0 * PI),
            amplitude: rng.random_range(0.02..0.10),
        })
        .collect();
    let mut rgb = vec![0.0; 3 * w * h];
    let d = &depth_map.depth;
    for y in 0..h {
        for x in 0..w {
            let (xf, yf) = (x as f64, y as f64);
            let pattern: f64 = gratings
                .iter()
                .map(|g| {
                    g.amplitude
                        * (2.0 * PI * g.freq * (xf * g.angle.cos() + yf * g.angle.sin()) + g.phase)
                            .sin()
                })
                .sum();
            let gx = d[y * w + (x + 1).min(w - 1)] - d[y * w + x.saturating_sub(1)];
            let gy = d[(y + 1).min(h - 1) * w + x] - d[y.saturating_sub(1) * w + x];
            // light from the upper left; 40 mm of relief per pixel is a steep slope
            let slope = (-gx - gy) / 80.0;
            let shade = 0.85 + 0.15 * (slope / (1.0 + slope.abs()));
            for c in 0..3 {
                let v = (base[c] + tint[c] * pattern.signum() * pattern.abs().sqrt() + pattern) * shade;
                rgb[c * w * h + y * w + x] = quantize(v);
            }
        }
    }
    let meta = SampleMeta {
        id: String::new(),
        label: Label::Real,
        display_id: NO_DISPLAY.into(),
        display_type: NO_DISPLAY.into(),
        device_type: NO_DISPLAY.into(),
        object_category: format!("object_{object_id:02}"),
        split: None,
    };
    let sample = PairSample::new(
        meta,
        RgbImage {
            width: w,
            height: h,
            values: rgb,
        },
        tof,
    )
    .expect("consistent synthetic sample");
    (sample, raw)
}

/// A real pair of object `object_id`; deterministic in `(object_id, seed)`.
pub fn gen_real_scene(object_id: u64, seed: u64, size: (usize, usize)) -> PairSample {
    let (mut s, _) = real_scene_parts(object_id, seed, size);
    s.meta.id = format!("object_{object_id:02}_s{seed:016x}_real");
    s
}

fn display_scene_parts(
    real: &PairSample,
    profile: &DisplayProfile,
    seed: u64,
) -> Result<(PairSample, RawToFMap)> {
    if real.label() != Label::Real {
        return Err(Error::Contract(format!(
            "display scenes are built from real pairs, got {} sample {}",
            real.label(),
            real.meta.id
        )));
    }
    profile.check()?;
    let (w, h) = (real.width(), real.height());
    let mut rgb = real.rgb.clone();
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                let i = c * w * h + y * w + x;
                rgb.values[i] = quantize(rgb.values[i] + profile.moire(x as f64, y as f64));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, 0xF1A7]));
    let depth: Vec<f64> = if profile.depth_noise_std_mm > 0.0 {
        let noise = Normal::new(0.0, profile.depth_noise_std_mm).expect("valid normal");
        (0..w * h)
            .map(|_| profile.depth_plane_mm + noise.sample(&mut rng))
            .collect()
    } else {
        vec![profile.depth_plane_mm; w * h]
    };
    let depth_map = DepthMap {
        width: w,
        height: h,
        depth,
        confidence: vec![1.0; w * h],
    };
    let raw = encode_depth_map(&depth_map);
    let tof = refine_tof(&decode_raw_tof(&raw)?, CONF_THRESHOLD);
    let meta = SampleMeta {
        id: real.meta.id.replace("_real", &format!("_{}", profile.display_id)),
        label: Label::Display,
        display_id: profile.display_id.clone(),
        display_type: profile.display_type.clone(),
        device_type: profile.device_type.as_str().into(),
        object_category: real.meta.object_category.clone(),
        split: None,
    };
    Ok((PairSample::new(meta, rgb, tof)?, raw))
}

/// Recapture of `real` on the display described by `profile`.
pub fn gen_display_scene(real: &PairSample, profile: &DisplayProfile, seed: u64) -> Result<PairSample> {
    Ok(display_scene_parts(real, profile, seed)?.0)
}

fn generate(config: &SynthConfig) -> Result<Vec<(PairSample, RawToFMap)>> {
    config.check()?;
    let mut out = Vec::new();
    for object in 0..config.n_objects {
        for view in 0..config.samples_per_object {
            let seed = mix_seed(&[config.seed, object as u64, view as u64]);
            let (mut real, raw) = real_scene_parts(object as u64, seed, config.image_size);
            real.meta.id = format!("object_{object:02}_v{view:03}_real");
            let displays = config
                .profiles
                .iter()
                .enumerate()
                .map(|(p, profile)| display_scene_parts(&real, profile, mix_seed(&[seed, p as u64 + 1])))
                .collect::<Result<Vec<_>>>()?;
            out.push((real, raw));
            out.extend(displays);
        }
    }
    let mut samples: Vec<PairSample> = out.iter().map(|(s, _)| s.clone()).collect();
    split_samples(&mut samples, config.split, config.seed)?;
    for ((s, _), split) in out.iter_mut().zip(samples) {
        s.meta.split = split.meta.split;
    }
    Ok(out)
}

/// Generates the dataset in memory, split tags assigned.
pub fn gen_samples(config: &SynthConfig) -> Result<Vec<PairSample>> {
    Ok(generate(config)?.into_iter().map(|(s, _)| s).collect())
}

/// Generates the dataset and writes it under `root` in the manifest layout.
pub fn gen_dataset(config: &SynthConfig, root: &Path) -> Result<Manifest> {
    let pairs = generate(config)?;
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut records = Vec::with_capacity(pairs.len());
    for (sample, raw) in &pairs {
        let (rgb_path, tof_path, raw_path) = sample_paths(&sample.meta.id);
        write_rgb_png(&root.join(&rgb_path), &sample.rgb)?;
        write_tof_png(&root.join(&tof_path), &sample.tof)?;
        write_raw_tof_png(&root.join(&raw_path), raw)?;
        let m = &sample.meta;
        records.push(SampleRecord {
            schema_version: SCHEMA_VERSION,
            id: m.id.clone(),
            rgb_path: rgb_path.to_string_lossy().into_owned(),
            tof_path: tof_path.to_string_lossy().into_owned(),
            tof_raw_path: Some(raw_path.to_string_lossy().into_owned()),
            label: m.label,
            display_id: m.display_id.clone(),
            display_type: m.display_type.clone(),
            device_type: m.device_type.clone(),
            object_category: m.object_category.clone(),
            split: m.split,
        });
    }
    let manifest = Manifest::new(records);
    manifest.validate(Some(root))?;
    manifest.write(root)?;
    Ok(manifest)
}
