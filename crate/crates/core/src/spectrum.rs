//! Frequency-domain profiles of single-channel maps.
//!
//! A map is transformed with a 2-D DFT, its magnitude is shifted so that the
//! zero frequency sits at `(height / 2, width / 2)`, and the magnitudes are
//! averaged over rings of equal rounded radius. The 1-D profile keeps radii
//! `0..floor(min(h, w) / 2)`, i.e. only fully sampled rings.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::data_model::ToFMap;
use crate::error::{Error, Result};

/// DFT magnitude with the zero frequency moved to the center.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum2D {
    pub width: usize,
    pub height: usize,
    pub magnitude: Vec<f64>,
}

impl Spectrum2D {
    pub fn new(width: usize, height: usize, magnitude: Vec<f64>) -> Result<Self> {
        if magnitude.len() != width * height {
            return Err(Error::Shape(format!(
                "{width}x{height} spectrum needs {} bins, got {}",
                width * height,
                magnitude.len()
            )));
        }
        Ok(Self {
            width,
            height,
            magnitude,
        })
    }

    pub fn center(&self) -> (usize, usize) {
        (self.height / 2, self.width / 2)
    }
}

/// Radially averaged spectrum; index = integer radius.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumProfile {
    pub values: Vec<f64>,
}

/// Unshifted 2-D DFT of a row-major real map.
pub fn dft2(values: &[f64], width: usize, height: usize) -> Result<Vec<Complex<f64>>> {
    if width < 2 || height < 2 {
        return Err(Error::InvalidArgument(format!(
            "DFT needs at least 2x2, got {width}x{height}"
        )));
    }
    if values.len() != width * height {
        return Err(Error::Shape(format!(
            "{width}x{height} map needs {} values, got {}",
            width * height,
            values.len()
        )));
    }
    let mut planner = FftPlanner::<f64>::new();
    let row_fft = planner.plan_fft_forward(width);
    let col_fft = planner.plan_fft_forward(height);

    let mut buf: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    for row in buf.chunks_exact_mut(width) {
        row_fft.process(row);
    }
    let mut column = vec![Complex::new(0.0, 0.0); height];
    for x in 0..width {
        for y in 0..height {
            column[y] = buf[y * width + x];
        }
        col_fft.process(&mut column);
        for y in 0..height {
            buf[y * width + x] = column[y];
        }
    }
    Ok(buf)
}

pub fn dft2_magnitude(map: &ToFMap) -> Result<Spectrum2D> {
    let (w, h) = (map.width, map.height);
    let freq = dft2(&map.values, w, h)?;
    let mut magnitude = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let sy = (y + h / 2) % h;
            let sx = (x + w / 2) % w;
            magnitude[sy * w + sx] = freq[y * w + x].norm();
        }
    }
    Spectrum2D::new(w, h, magnitude)
}

pub fn profile_len(width: usize, height: usize) -> usize {
    width.min(height) / 2
}

pub fn azimuthal_average(spec: &Spectrum2D) -> SpectrumProfile {
    let len = profile_len(spec.width, spec.height);
    let (cy, cx) = spec.center();
    let mut sums = vec![0.0; len];
    let mut counts = vec![0usize; len];
    for y in 0..spec.height {
        let dy = y as f64 - cy as f64;
        for x in 0..spec.width {
            let dx = x as f64 - cx as f64;
            let r = (dy * dy + dx * dx).sqrt().round() as usize;
            if r < len {
                sums[r] += spec.magnitude[y * spec.width + x];
                counts[r] += 1;
            }
        }
    }
    let values = sums
        .into_iter()
        .zip(counts)
        .map(|(s, n)| if n == 0 { 0.0 } else { s / n as f64 })
        .collect();
    SpectrumProfile { values }
}

/// `log(1 + azimuthal_average(|DFT|))`.
pub fn power_spectrum_1d(map: &ToFMap) -> Result<SpectrumProfile> {
    let mut profile = azimuthal_average(&dft2_magnitude(map)?);
    profile.values.iter_mut().for_each(|v| *v = v.ln_1p());
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn map(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> ToFMap {
        let mut values = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                values.push(f(x, y));
            }
        }
        ToFMap {
            width: w,
            height: h,
            values,
        }
    }

    #[test]
    fn constant_map_concentrates_at_center() {
        let s = dft2_magnitude(&map(6, 4, |_, _| 0.5)).unwrap();
        let (cy, cx) = s.center();
        for y in 0..4 {
            for x in 0..6 {
                let v = s.magnitude[y * 6 + x];
                if (y, x) == (cy, cx) {
                    assert!((v - 12.0).abs() < 1e-12);
                } else {
                    assert!(v.abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_map_gives_zero_spectrum() {
        let s = dft2_magnitude(&map(4, 4, |_, _| 0.0)).unwrap();
        assert!(s.magnitude.iter().all(|&v| v == 0.0));
        let p = power_spectrum_1d(&map(4, 4, |_, _| 0.0)).unwrap();
        assert!(p.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cosine_gives_symmetric_peaks() {
        let s = dft2_magnitude(&map(8, 8, |x, _| (2.0 * PI * x as f64 / 8.0).cos())).unwrap();
        let (cy, cx) = s.center();
        assert!((s.magnitude[cy * 8 + cx + 1] - 32.0).abs() < 1e-9);
        assert!((s.magnitude[cy * 8 + cx - 1] - 32.0).abs() < 1e-9);
        let total: f64 = s.magnitude.iter().sum();
        assert!((total - 64.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_sizes_rejected() {
        assert!(dft2_magnitude(&map(1, 4, |_, _| 0.0)).is_err());
    }

    #[test]
    fn azimuthal_constant_and_delta() {
        let s = Spectrum2D::new(5, 6, vec![3.0; 30]).unwrap();
        assert_eq!(azimuthal_average(&s).values, vec![3.0, 3.0]);
        let mut d = vec![0.0; 36];
        d[3 * 6 + 3] = 7.0;
        let p = azimuthal_average(&Spectrum2D::new(6, 6, d).unwrap());
        assert_eq!(p.values, vec![7.0, 0.0, 0.0]);
    }

    #[test]
    fn constant_map_profile_only_at_origin() {
        let p = power_spectrum_1d(&map(8, 8, |_, _| 0.4)).unwrap();
        assert!(p.values[0] > 0.0);
        assert!(p.values[1..].iter().all(|&v| v.abs() < 1e-12));
        assert_eq!(p.values.len(), 4);
    }
}
