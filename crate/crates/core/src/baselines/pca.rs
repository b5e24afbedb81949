use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Principal axes of a row-sample matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `k` unit-norm axes of length `d`, by decreasing explained variance.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
}

fn check_rows(rows: &[Vec<f64>]) -> Result<usize> {
    let d = rows.first().map(Vec::len).ok_or_else(|| Error::Empty("no rows".into()))?;
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::Shape("rows must share one non-zero length".into()));
    }
    Ok(d)
}

/// Sign convention: the largest-magnitude entry of each axis is positive.
fn canonical_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

impl Pca {
    /// Fits `k` axes. With fewer samples than dimensions the eigenproblem is
    /// solved on the `n × n` Gram matrix and mapped back.
    pub fn fit(rows: &[Vec<f64>], k: usize) -> Result<Pca> {
        let d = check_rows(rows)?;
        let n = rows.len();
        if n < 2 || k == 0 || k > d.min(n) {
            return Err(Error::InvalidArgument(format!(
                "cannot take {k} components from {n} samples of dimension {d}"
            )));
        }
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let x = DMatrix::from_fn(n, d, |i, j| rows[i][j] - mean[j]);
        let denom = (n.max(2) - 1) as f64;

        let gram = n < d;
        let sym = if gram { &x * x.transpose() } else { x.transpose() * &x };
        let eig = SymmetricEigen::new(sym);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

        let mut components: Vec<Vec<f64>> = Vec::with_capacity(k);
        let mut explained_variance = Vec::with_capacity(k);
        for &idx in order.iter().take(k) {
            let lambda = eig.eigenvalues[idx].max(0.0);
            let u = eig.eigenvectors.column(idx);
            let mut v: Vec<f64> = if gram {
                let back = x.transpose() * u;
                let norm = back.norm();
                if norm > 0.0 {
                    back.iter().map(|a| a / norm).collect()
                } else {
                    vec![0.0; d]
                }
            } else {
                u.iter().copied().collect()
            };
            // re-orthogonalize against earlier axes; the Gram route loses a
            // little orthogonality when eigenvalues are close
            for c in &components {
                let proj: f64 = c.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(c).for_each(|(x, a)| *x -= proj * a);
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                v.iter_mut().for_each(|x| *x /= norm);
            }
            canonical_sign(&mut v);
            components.push(v);
            explained_variance.push(lambda / denom);
        }
        Ok(Pca {
            mean,
            components,
            explained_variance,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.dim() {
            return Err(Error::Shape(format!(
                "PCA expects {} values, got {}",
                self.dim(),
                row.len()
            )));
        }
        Ok(self
            .components
            .iter()
            .map(|c| c.iter().zip(row).zip(&self.mean).map(|((a, x), m)| a * (x - m)).sum())
            .collect())
    }
}
