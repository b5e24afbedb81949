//! Image and refined-ToF rasters plus the geometric operations applied to them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Refined ToF map, values in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToFMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

/// RGB image stored planar (`[3][height][width]`), values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

/// Shared view over planar rasters with a fixed channel count.
pub trait PlanarMap: Sized + Clone {
    const CHANNELS: usize;

    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn values(&self) -> &[f64];
    fn from_parts(width: usize, height: usize, values: Vec<f64>) -> Result<Self>;

    fn plane(&self, c: usize) -> &[f64] {
        let hw = self.width() * self.height();
        &self.values()[c * hw..(c + 1) * hw]
    }

    /// `[1, CHANNELS, height, width]` tensor.
    fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(
            [1, Self::CHANNELS, self.height(), self.width()],
            self.values().to_vec(),
        )
        .expect("planar map shape")
    }
}

fn check_len(width: usize, height: usize, channels: usize, len: usize) -> Result<()> {
    if width * height * channels != len {
        return Err(Error::Shape(format!(
            "{width}x{height}x{channels} raster needs {} values, got {len}",
            width * height * channels
        )));
    }
    Ok(())
}

impl PlanarMap for ToFMap {
    const CHANNELS: usize = 1;
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
    fn from_parts(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        check_len(width, height, 1, values.len())?;
        Ok(Self {
            width,
            height,
            values,
        })
    }
}

impl PlanarMap for RgbImage {
    const CHANNELS: usize = 3;
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
    fn from_parts(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        check_len(width, height, 3, values.len())?;
        Ok(Self {
            width,
            height,
            values,
        })
    }
}

impl RgbImage {
    /// ITU-R BT.601 luma.
    pub fn luminance(&self) -> ToFMap {
        let (r, g, b) = (self.plane(0), self.plane(1), self.plane(2));
        let values = (0..r.len())
            .map(|i| 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i])
            .collect();
        ToFMap {
            width: self.width,
            height: self.height,
            values,
        }
    }
}

/// Source coordinate for output index `i` under the pixel-center convention
/// (align-corners off), clamped at the borders.
fn sample_positions(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (pos.floor() as usize).min(src - 1);
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, pos - i0 as f64)
        })
        .collect()
}

/// Bilinear resize with pixel-center sampling; a same-size request returns
/// the input unchanged.
pub fn resize_map<M: PlanarMap>(map: &M, target_w: usize, target_h: usize) -> Result<M> {
    if target_w == 0 || target_h == 0 {
        return Err(Error::InvalidArgument(format!(
            "resize target must be positive, got {target_w}x{target_h}"
        )));
    }
    if target_w == map.width() && target_h == map.height() {
        return Ok(map.clone());
    }
    let xs = sample_positions(map.width(), target_w);
    let ys = sample_positions(map.height(), target_h);
    let w = map.width();
    let mut out = Vec::with_capacity(M::CHANNELS * target_w * target_h);
    for c in 0..M::CHANNELS {
        let plane = map.plane(c);
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
                let bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
                out.push((top * (1.0 - fy) + bottom * fy).clamp(0.0, 1.0));
            }
        }
    }
    M::from_parts(target_w, target_h, out)
}

pub fn crop<M: PlanarMap>(map: &M, x0: usize, y0: usize, w: usize, h: usize) -> Result<M> {
    if x0 + w > map.width() || y0 + h > map.height() || w == 0 || h == 0 {
        return Err(Error::InvalidArgument(format!(
            "crop {w}x{h} at ({x0},{y0}) exceeds {}x{}",
            map.width(),
            map.height()
        )));
    }
    let mut out = Vec::with_capacity(M::CHANNELS * w * h);
    for c in 0..M::CHANNELS {
        let plane = map.plane(c);
        for y in y0..y0 + h {
            out.extend_from_slice(&plane[y * map.width() + x0..y * map.width() + x0 + w]);
        }
    }
    M::from_parts(w, h, out)
}

pub fn flip_horizontal<M: PlanarMap>(map: &M) -> M {
    let (w, h) = (map.width(), map.height());
    let mut out = Vec::with_capacity(map.values().len());
    for c in 0..M::CHANNELS {
        let plane = map.plane(c);
        for y in 0..h {
            out.extend(plane[y * w..(y + 1) * w].iter().rev());
        }
    }
    M::from_parts(w, h, out).expect("flip keeps shape")
}

/// Rotates by `quarter_turns * 90°` counter-clockwise.
pub fn rotate90<M: PlanarMap>(map: &M, quarter_turns: u8) -> M {
    let mut cur = map.clone();
    for _ in 0..quarter_turns % 4 {
        let (w, h) = (cur.width(), cur.height());
        let mut out = Vec::with_capacity(cur.values().len());
        for c in 0..M::CHANNELS {
            let plane = cur.plane(c);
            // new[y'][x'] with new width h, new height w: new[y'][x'] = old[x'][w-1-y']
            for ny in 0..w {
                for nx in 0..h {
                    out.push(plane[nx * w + (w - 1 - ny)]);
                }
            }
        }
        cur = M::from_parts(h, w, out).expect("rotation shape");
    }
    cur
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tof(w: usize, h: usize, values: Vec<f64>) -> ToFMap {
        ToFMap::from_parts(w, h, values).unwrap()
    }

    #[test]
    fn downsample_constant() {
        let m = tof(4, 4, vec![0.5; 16]);
        let r = resize_map(&m, 2, 2).unwrap();
        assert_eq!(r.values, vec![0.5; 4]);
    }

    #[test]
    fn identity_resize_is_bit_equal() {
        let m = tof(3, 2, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        assert_eq!(resize_map(&m, 3, 2).unwrap(), m);
    }

    #[test]
    fn upsample_pixel_centers() {
        // 2x1 -> 4x1: sources at -0.25 (clamped), 0.25, 0.75, 1.25 (clamped)
        let m = tof(2, 1, vec![0.0, 1.0]);
        let r = resize_map(&m, 4, 1).unwrap();
        assert_eq!(r.values, vec![0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn resize_rejects_zero() {
        let m = tof(2, 1, vec![0.0, 1.0]);
        assert!(resize_map(&m, 0, 1).is_err());
    }

    #[test]
    fn rotate_and_flip() {
        let m = tof(2, 1, vec![1.0, 2.0]);
        let r = rotate90(&m, 1);
        assert_eq!((r.width, r.height), (1, 2));
        assert_eq!(r.values, vec![2.0, 1.0]);
        assert_eq!(rotate90(&m, 4), m);
        assert_eq!(flip_horizontal(&m).values, vec![2.0, 1.0]);
    }

    #[test]
    fn crop_window() {
        let m = tof(3, 3, (0..9).map(f64::from).collect());
        assert_eq!(crop(&m, 1, 1, 2, 2).unwrap().values, vec![4.0, 5.0, 7.0, 8.0]);
        assert!(crop(&m, 2, 0, 2, 2).is_err());
    }
}
