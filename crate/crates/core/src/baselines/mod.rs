//! Comparison detectors: PCA + SVM on ToF maps, SVM on ToF frequency
//! profiles, and a plain CNN on RGB or RGB + ToF input.

mod naive_cnn;
mod pca;
mod svm;

use serde::{Deserialize, Serialize};

use crate::data_model::{resize_map, Label, PairSample, ToFMap};
use crate::error::{Error, Result};
use crate::spectrum::power_spectrum_1d;

pub use naive_cnn::{train_naive_cnn, CnnConfig, CnnInput, NaiveCnn};
pub use pca::Pca;
pub use svm::{margin_to_probability, LinearSvm, SvmConfig};

/// ToF maps are shrunk to this `(width, height)` before PCA.
pub const PCA_GRID: (usize, usize) = (60, 45);
pub const PCA_COMPONENTS: usize = 2;

fn labels(samples: &[PairSample]) -> Vec<Label> {
    samples.iter().map(|s| s.label()).collect()
}

fn pca_row(tof: &ToFMap) -> Result<Vec<f64>> {
    Ok(resize_map(tof, PCA_GRID.0, PCA_GRID.1)?.values)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaSvm {
    pub pca: Pca,
    pub svm: LinearSvm,
}

impl PcaSvm {
    pub fn fit(samples: &[PairSample], config: &SvmConfig) -> Result<PcaSvm> {
        if samples.is_empty() {
            return Err(Error::Empty("no training pairs".into()));
        }
        let rows = samples.iter().map(|s| pca_row(&s.tof)).collect::<Result<Vec<_>>>()?;
        let pca = Pca::fit(&rows, PCA_COMPONENTS.min(rows.len()))?;
        let projected = rows.iter().map(|r| pca.transform(r)).collect::<Result<Vec<_>>>()?;
        let svm = LinearSvm::fit(&projected, &labels(samples), config)?;
        Ok(PcaSvm { pca, svm })
    }

    pub fn decision(&self, tof: &ToFMap) -> Result<f64> {
        self.svm.decision(&self.pca.transform(&pca_row(tof)?)?)
    }
}

/// Map whose spectrum feeds the frequency detector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreqModality {
    /// Luminance of the RGB image.
    Image,
    #[default]
    Tof,
}

impl FreqModality {
    fn profile(self, s: &PairSample) -> Result<Vec<f64>> {
        let map = match self {
            FreqModality::Image => s.rgb.luminance(),
            FreqModality::Tof => s.tof.clone(),
        };
        Ok(power_spectrum_1d(&map)?.values)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreqSvm {
    pub modality: FreqModality,
    pub svm: LinearSvm,
}

impl FreqSvm {
    pub fn fit(samples: &[PairSample], modality: FreqModality, config: &SvmConfig) -> Result<FreqSvm> {
        let rows = samples
            .iter()
            .map(|s| modality.profile(s))
            .collect::<Result<Vec<_>>>()?;
        Ok(FreqSvm {
            modality,
            svm: LinearSvm::fit(&rows, &labels(samples), config)?,
        })
    }

    pub fn decision(&self, sample: &PairSample) -> Result<f64> {
        self.svm.decision(&self.modality.profile(sample)?)
    }
}
