//! Raw ToF sensor words and depth refinement.
//!
//! Each 16-bit word carries a 3-bit confidence code in bits 15..13 and a
//! 13-bit depth in millimeters in bits 12..0. Code 0 means full confidence,
//! code 1 means none, and codes 2..7 step linearly as `(code - 1) / 7`.

use serde::{Deserialize, Serialize};

use super::maps::ToFMap;
use crate::error::{Error, Result};

pub const DEPTH_BITS: u32 = 13;
pub const DEPTH_MASK: u16 = (1 << DEPTH_BITS) - 1;
/// Largest representable depth, in millimeters.
pub const MAX_DEPTH_MM: u16 = DEPTH_MASK;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawToFMap {
    pub width: usize,
    pub height: usize,
    /// Row-major sensor words.
    pub words: Vec<u16>,
}

impl RawToFMap {
    pub fn new(width: usize, height: usize, words: Vec<u16>) -> Result<Self> {
        let raw = Self {
            width,
            height,
            words,
        };
        raw.check()?;
        Ok(raw)
    }

    pub fn check(&self) -> Result<()> {
        if self.words.len() != self.width * self.height {
            return Err(Error::Shape(format!(
                "raw ToF map declared {}x{} but holds {} words",
                self.width,
                self.height,
                self.words.len()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    /// Millimeters, row-major.
    pub depth: Vec<f64>,
    /// In `[0, 1]`, row-major.
    pub confidence: Vec<f64>,
}

pub fn confidence_from_code(code: u8) -> f64 {
    match code {
        0 => 1.0,
        1 => 0.0,
        c => f64::from(c - 1) / 7.0,
    }
}

/// Inverse of [`confidence_from_code`] on its image; other values snap to the
/// nearest representable level.
pub fn code_from_confidence(confidence: f64) -> u8 {
    if confidence >= 1.0 {
        0
    } else if confidence <= 0.0 {
        1
    } else {
        ((confidence * 7.0).round() as u8).clamp(1, 6) + 1
    }
}

pub fn decode_tof_pixel(word: u16) -> (u16, f64) {
    let depth = word & DEPTH_MASK;
    let code = (word >> DEPTH_BITS) as u8;
    (depth, confidence_from_code(code))
}

pub fn encode_tof_pixel(depth_mm: u16, code: u8) -> u16 {
    debug_assert!(code < 8);
    (u16::from(code) << DEPTH_BITS) | (depth_mm & DEPTH_MASK)
}

pub fn decode_raw_tof(raw: &RawToFMap) -> Result<DepthMap> {
    raw.check()?;
    let (depth, confidence) = raw
        .words
        .iter()
        .map(|&w| {
            let (d, c) = decode_tof_pixel(w);
            (f64::from(d), c)
        })
        .unzip();
    Ok(DepthMap {
        width: raw.width,
        height: raw.height,
        depth,
        confidence,
    })
}

/// Quantizes a depth map back into sensor words (depth rounded and clamped).
pub fn encode_depth_map(depth: &DepthMap) -> RawToFMap {
    let words = depth
        .depth
        .iter()
        .zip(&depth.confidence)
        .map(|(&d, &c)| {
            let mm = d.round().clamp(0.0, f64::from(MAX_DEPTH_MM)) as u16;
            encode_tof_pixel(mm, code_from_confidence(c))
        })
        .collect();
    RawToFMap {
        width: depth.width,
        height: depth.height,
        words,
    }
}

/// Maps millimeters onto the 8-bit scale of one color channel.
pub fn depth_to_u8(depth_mm: f64) -> u8 {
    let d = depth_mm.clamp(0.0, f64::from(MAX_DEPTH_MM));
    (d * 255.0 / f64::from(MAX_DEPTH_MM)).round() as u8
}

/// Masks low-confidence pixels and rescales depth onto `[0, 1]` through the
/// fixed 13-bit range (no per-image normalization).
///
/// Pixels with confidence below `conf_threshold` take the mean depth of the
/// confident pixels, or 0 when there are none.
pub fn refine_tof(depth: &DepthMap, conf_threshold: f64) -> ToFMap {
    let confident = depth
        .depth
        .iter()
        .zip(&depth.confidence)
        .filter(|(_, &c)| c >= conf_threshold);
    let (sum, count) = confident.fold((0.0, 0usize), |(s, n), (&d, _)| (s + d, n + 1));
    let fill = if count > 0 { sum / count as f64 } else { 0.0 };
    let values = depth
        .depth
        .iter()
        .zip(&depth.confidence)
        .map(|(&d, &c)| {
            let d = if c >= conf_threshold { d } else { fill };
            f64::from(depth_to_u8(d)) / 255.0
        })
        .collect();
    ToFMap {
        width: depth.width,
        height: depth.height,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pixel_examples() {
        assert_eq!(decode_tof_pixel(0x0000), (0, 1.0));
        assert_eq!(decode_tof_pixel(0x2005), (5, 0.0));
        assert_eq!(decode_tof_pixel(0xFFFF), (8191, 6.0 / 7.0));
    }

    #[test]
    fn exhaustive_round_trip() {
        for w in 0..=u16::MAX {
            let (d, c) = decode_tof_pixel(w);
            assert_eq!(encode_tof_pixel(d, code_from_confidence(c)), w);
        }
    }

    #[test]
    fn raw_map_examples() {
        let m = decode_raw_tof(&RawToFMap::new(2, 2, vec![0; 4]).unwrap()).unwrap();
        assert_eq!(m.depth, vec![0.0; 4]);
        assert_eq!(m.confidence, vec![1.0; 4]);

        let m = decode_raw_tof(&RawToFMap::new(2, 1, vec![0x2005, 0x0007]).unwrap()).unwrap();
        assert_eq!(m.depth, vec![5.0, 7.0]);
        assert_eq!(m.confidence, vec![0.0, 1.0]);

        assert!(RawToFMap::new(2, 2, vec![0; 3]).is_err());
        let bad = RawToFMap {
            width: 2,
            height: 2,
            words: vec![0; 3],
        };
        assert!(matches!(decode_raw_tof(&bad), Err(Error::Shape(_))));
    }

    fn constant(depth: f64, conf: f64) -> DepthMap {
        DepthMap {
            width: 3,
            height: 2,
            depth: vec![depth; 6],
            confidence: vec![conf; 6],
        }
    }

    #[test]
    fn refine_examples() {
        assert!(refine_tof(&constant(8191.0, 1.0), 0.5).values.iter().all(|&v| v == 1.0));
        assert!(refine_tof(&constant(0.0, 1.0), 0.5).values.iter().all(|&v| v == 0.0));
        // round(4096 * 255 / 8191) = round(127.52) = 128
        assert!(refine_tof(&constant(4096.0, 1.0), 0.5)
            .values
            .iter()
            .all(|&v| v == 128.0 / 255.0));
    }

    #[test]
    fn refine_fills_unconfident_pixels() {
        let map = DepthMap {
            width: 3,
            height: 1,
            depth: vec![1000.0, 3000.0, 8000.0],
            confidence: vec![1.0, 1.0, 0.0],
        };
        let out = refine_tof(&map, 0.5);
        assert_eq!(out.values[2], f64::from(depth_to_u8(2000.0)) / 255.0);

        let none = refine_tof(&constant(5000.0, 0.0), 0.5);
        assert!(none.values.iter().all(|&v| v == 0.0));
    }
}
