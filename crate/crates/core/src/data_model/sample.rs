use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::maps::{crop, flip_horizontal, resize_map, rotate90, RgbImage, ToFMap};
use crate::error::{Error, Result};

pub const NO_DISPLAY: &str = "none";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Display,
}

impl Label {
    /// Class index used by the classifiers: real = 0, display = 1.
    pub fn index(self) -> usize {
        match self {
            Label::Real => 0,
            Label::Display => 1,
        }
    }

    pub fn is_display(self) -> bool {
        self == Label::Display
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Real => "real",
            Label::Display => "display",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Media metadata attached to every pair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub id: String,
    pub label: Label,
    pub display_id: String,
    pub display_type: String,
    pub device_type: String,
    pub object_category: String,
    pub split: Option<Split>,
}

impl SampleMeta {
    pub fn check(&self) -> Result<()> {
        let no_display = self.display_id == NO_DISPLAY;
        match (self.label, no_display) {
            (Label::Real, true) | (Label::Display, false) => Ok(()),
            _ => Err(Error::Manifest(format!(
                "sample {}: label {} with display_id {:?}",
                self.id, self.label, self.display_id
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairSample {
    pub meta: SampleMeta,
    pub rgb: RgbImage,
    pub tof: ToFMap,
}

impl PairSample {
    pub fn new(meta: SampleMeta, rgb: RgbImage, tof: ToFMap) -> Result<Self> {
        meta.check()?;
        if (rgb.width, rgb.height) != (tof.width, tof.height) {
            return Err(Error::Shape(format!(
                "sample {}: rgb {}x{} vs tof {}x{}",
                meta.id, rgb.width, rgb.height, tof.width, tof.height
            )));
        }
        Ok(Self { meta, rgb, tof })
    }

    pub fn label(&self) -> Label {
        self.meta.label
    }

    pub fn width(&self) -> usize {
        self.tof.width
    }

    pub fn height(&self) -> usize {
        self.tof.height
    }

    fn with_maps(&self, rgb: RgbImage, tof: ToFMap) -> PairSample {
        PairSample {
            meta: self.meta.clone(),
            rgb,
            tof,
        }
    }

    pub fn resized(&self, w: usize, h: usize) -> Result<PairSample> {
        Ok(self.with_maps(resize_map(&self.rgb, w, h)?, resize_map(&self.tof, w, h)?))
    }

    pub fn cropped(&self, x0: usize, y0: usize, size: usize) -> Result<PairSample> {
        Ok(self.with_maps(
            crop(&self.rgb, x0, y0, size, size)?,
            crop(&self.tof, x0, y0, size, size)?,
        ))
    }

    pub fn center_cropped(&self, size: usize) -> Result<PairSample> {
        check_crop(self, size)?;
        self.cropped((self.width() - size) / 2, (self.height() - size) / 2, size)
    }

    pub fn flipped(&self) -> PairSample {
        self.with_maps(flip_horizontal(&self.rgb), flip_horizontal(&self.tof))
    }

    pub fn rotated(&self, quarter_turns: u8) -> PairSample {
        self.with_maps(rotate90(&self.rgb, quarter_turns), rotate90(&self.tof, quarter_turns))
    }
}

fn check_crop(sample: &PairSample, size: usize) -> Result<()> {
    if size == 0 || size > sample.width().min(sample.height()) {
        return Err(Error::InvalidArgument(format!(
            "crop size {size} does not fit {}x{}",
            sample.width(),
            sample.height()
        )));
    }
    Ok(())
}

/// Offsets of a square crop window drawn uniformly from `rng`.
pub fn crop_offsets(
    width: usize,
    height: usize,
    size: usize,
    rng: &mut impl Rng,
) -> (usize, usize) {
    (
        rng.random_range(0..=width - size),
        rng.random_range(0..=height - size),
    )
}

/// Crops the same square window out of the RGB image and the ToF map.
pub fn random_crop_pair(sample: &PairSample, size: usize, seed: u64) -> Result<PairSample> {
    check_crop(sample, size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (x0, y0) = crop_offsets(sample.width(), sample.height(), size, &mut rng);
    sample.cropped(x0, y0, size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::maps::PlanarMap;

    pub(crate) fn blank(w: usize, h: usize) -> PairSample {
        PairSample::new(
            SampleMeta {
                id: "s".into(),
                label: Label::Real,
                display_id: NO_DISPLAY.into(),
                display_type: NO_DISPLAY.into(),
                device_type: NO_DISPLAY.into(),
                object_category: "obj".into(),
                split: None,
            },
            RgbImage::from_parts(w, h, vec![0.0; 3 * w * h]).unwrap(),
            ToFMap::from_parts(w, h, vec![0.0; w * h]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn label_display_id_consistency() {
        let mut s = blank(2, 2);
        s.meta.label = Label::Display;
        assert!(s.meta.check().is_err());
        s.meta.display_id = "d0".into();
        assert!(s.meta.check().is_ok());
    }

    #[test]
    fn mismatched_sizes_rejected() {
        let s = blank(2, 2);
        let tof = ToFMap::from_parts(1, 2, vec![0.0; 2]).unwrap();
        assert!(PairSample::new(s.meta.clone(), s.rgb.clone(), tof).is_err());
    }

    #[test]
    fn full_size_crop_is_identity() {
        let mut s = blank(4, 4);
        s.tof.values[5] = 0.7;
        assert_eq!(random_crop_pair(&s, 4, 9).unwrap(), s);
    }

    #[test]
    fn crop_is_deterministic_and_bounded() {
        let s = blank(180, 180);
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (x, y) = crop_offsets(180, 180, 160, &mut rng);
            assert!(x <= 20 && y <= 20);
        }
        assert_eq!(
            random_crop_pair(&s, 160, 3).unwrap(),
            random_crop_pair(&s, 160, 3).unwrap()
        );
        assert!(random_crop_pair(&s, 181, 3).is_err());
    }

    #[test]
    fn crop_uses_same_window_for_both_modalities() {
        let mut s = blank(30, 24);
        // marker at (17, 11) in every channel
        let (w, h) = (30, 24);
        s.tof.values[11 * w + 17] = 1.0;
        for c in 0..3 {
            s.rgb.values[c * w * h + 11 * w + 17] = 1.0;
        }
        for seed in 0..40 {
            let c = random_crop_pair(&s, 16, seed).unwrap();
            let tof_hit = c.tof.values.iter().position(|&v| v == 1.0);
            for ch in 0..3 {
                let rgb_hit = c.rgb.plane(ch).iter().position(|&v| v == 1.0);
                assert_eq!(tof_hit, rgb_hit);
            }
        }
    }
}
