//! Linear SVM trained by full-batch hinge-loss subgradient descent.
//!
//! Features are standardized with training statistics first. The objective
//! is `reg/2 |w|^2 + mean(max(0, 1 - y (w.x + b)))` with `y = +1` for display.
//! A step that would raise the objective is rejected, so the objective never
//! increases across epochs.

use serde::{Deserialize, Serialize};

use crate::data_model::Label;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmConfig {
    pub reg: f64,
    pub epochs: usize,
    /// Step at epoch `t` is `step / sqrt(t)`.
    pub step: f64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            reg: 1e-3,
            epochs: 200,
            step: 1e-2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Objective after each epoch.
    pub objective: Vec<f64>,
}

fn sign(label: Label) -> f64 {
    if label.is_display() {
        1.0
    } else {
        -1.0
    }
}

fn objective(xs: &[Vec<f64>], ys: &[f64], w: &[f64], b: f64, reg: f64) -> f64 {
    let hinge: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (1.0 - y * (dot(w, x) + b)).max(0.0))
        .sum();
    0.5 * reg * dot(w, w) + hinge / xs.len() as f64
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl LinearSvm {
    pub fn fit(rows: &[Vec<f64>], labels: &[Label], config: &SvmConfig) -> Result<LinearSvm> {
        if rows.is_empty() || rows.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} rows vs {} labels",
                rows.len(),
                labels.len()
            )));
        }
        if labels.iter().all(|&l| l == labels[0]) {
            return Err(Error::Empty("SVM training needs both classes".into()));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Shape("rows must share one length".into()));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut scale = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in scale.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        scale.iter_mut().for_each(|s| *s = if *s > 1e-24 { s.sqrt() } else { 1.0 });

        let xs: Vec<Vec<f64>> = rows.iter().map(|r| standardize(r, &mean, &scale)).collect();
        let ys: Vec<f64> = labels.iter().map(|&l| sign(l)).collect();
        let mut w = vec![0.0; d];
        let mut b = 0.0;
        let mut current = objective(&xs, &ys, &w, b, config.reg);
        let mut trace = Vec::with_capacity(config.epochs);
        for t in 1..=config.epochs {
            let mut gw: Vec<f64> = w.iter().map(|wi| config.reg * wi).collect();
            let mut gb = 0.0;
            for (x, &y) in xs.iter().zip(&ys) {
                if y * (dot(&w, x) + b) < 1.0 {
                    for (g, xi) in gw.iter_mut().zip(x) {
                        *g -= y * xi / n;
                    }
                    gb -= y / n;
                }
            }
            let eta = config.step / (t as f64).sqrt();
            let cand_w: Vec<f64> = w.iter().zip(&gw).map(|(wi, g)| wi - eta * g).collect();
            let cand_b = b - eta * gb;
            let cand = objective(&xs, &ys, &cand_w, cand_b, config.reg);
            if cand <= current {
                w = cand_w;
                b = cand_b;
                current = cand;
            }
            trace.push(current);
        }
        Ok(LinearSvm {
            mean,
            scale,
            weights: w,
            bias: b,
            objective: trace,
        })
    }

    /// Signed margin; positive leans display.
    pub fn decision(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.weights.len() {
            return Err(Error::Shape(format!(
                "SVM expects {} features, got {}",
                self.weights.len(),
                row.len()
            )));
        }
        Ok(dot(&self.weights, &standardize(row, &self.mean, &self.scale)) + self.bias)
    }
}

fn standardize(row: &[f64], mean: &[f64], scale: &[f64]) -> Vec<f64> {
    row.iter().zip(mean).zip(scale).map(|((v, m), s)| (v - m) / s).collect()
}

/// Logistic squashing of a margin into a display probability.
pub fn margin_to_probability(margin: f64) -> f64 {
    1.0 / (1.0 + (-margin).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> (Vec<Vec<f64>>, Vec<Label>) {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..30 {
            let j = (i % 7) as f64 * 0.1;
            rows.push(vec![100.0 + j, 2.0 - j]);
            labels.push(Label::Real);
            rows.push(vec![104.0 - j, 1.0 + j]);
            labels.push(Label::Display);
        }
        (rows, labels)
    }

    #[test]
    fn separates_blobs_and_objective_is_monotone() {
        let (rows, labels) = blobs();
        let svm = LinearSvm::fit(&rows, &labels, &SvmConfig::default()).unwrap();
        for (r, l) in rows.iter().zip(&labels) {
            assert_eq!(svm.decision(r).unwrap() > 0.0, l.is_display());
        }
        assert_eq!(svm.objective.len(), 200);
        assert!(svm.objective.windows(2).all(|w| w[1] <= w[0]));
        assert!(svm.objective[199] < 1.0);
    }

    #[test]
    fn constant_feature_is_harmless() {
        let rows = vec![vec![1.0, 0.0], vec![1.0, 1.0]];
        // first feature has zero spread and keeps unit scale
        let svm = LinearSvm::fit(&rows, &[Label::Real, Label::Display], &SvmConfig::default()).unwrap();
        assert!(svm.weights.iter().all(|w| w.is_finite()));
        assert!(svm.decision(&[1.0]).is_err());
    }

    #[test]
    fn separable_line_and_label_symmetry() {
        let rows: Vec<Vec<f64>> = [-2.0, -1.0, 1.0, 2.0].iter().map(|&x| vec![x]).collect();
        let labels = [Label::Real, Label::Real, Label::Display, Label::Display];
        let svm = LinearSvm::fit(&rows, &labels, &SvmConfig::default()).unwrap();
        let flipped: Vec<Label> = labels
            .iter()
            .map(|l| if l.is_display() { Label::Real } else { Label::Display })
            .collect();
        let rev = LinearSvm::fit(&rows, &flipped, &SvmConfig::default()).unwrap();
        for (r, l) in rows.iter().zip(&labels) {
            let d = svm.decision(r).unwrap();
            assert_eq!(d > 0.0, l.is_display());
            assert!((d + rev.decision(r).unwrap()).abs() < 1e-12);
        }
        assert!(LinearSvm::fit(&rows, &[Label::Real; 4], &SvmConfig::default()).is_err());
    }

    #[test]
    fn zero_model_decides_zero() {
        let svm = LinearSvm {
            mean: vec![0.0; 3],
            scale: vec![1.0; 3],
            weights: vec![0.0; 3],
            bias: 0.0,
            objective: vec![],
        };
        assert_eq!(svm.decision(&[5.0, -1.0, 2.0]).unwrap(), 0.0);
    }

    #[test]
    fn probability_squash() {
        assert_eq!(margin_to_probability(0.0), 0.5);
        assert!(margin_to_probability(3.0) > 0.9);
    }
}
