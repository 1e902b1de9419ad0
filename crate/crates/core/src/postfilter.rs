//! Wiener postfilter driven by the beamformer-output CDR.

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PostfilterParams {
    /// Overestimation factor; 0 disables the postfilter.
    pub mu: f64,
    /// Gain floor.
    pub g_min: f64,
}

impl Default for PostfilterParams {
    fn default() -> Self {
        Self { mu: 1.3, g_min: 0.1 }
    }
}

impl PostfilterParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidParameter(format!("mu must be >= 0, got {}", self.mu)));
        }
        if !(self.g_min > 0.0 && self.g_min < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "g_min must lie in (0, 1), got {}",
                self.g_min
            )));
        }
        Ok(())
    }

    /// Smallest SNR above which the gain leaves the floor.
    pub fn floor_threshold(&self) -> f64 {
        self.mu / (1.0 - self.g_min) - 1.0
    }
}

/// `G = max(1 - mu / (1 + snr), g_min)`.
pub fn wiener_gain(snr: f64, params: &PostfilterParams) -> f64 {
    let snr = snr.max(0.0);
    (1.0 - params.mu / (1.0 + snr)).max(params.g_min)
}

/// Real spectral gains `[frames x bins]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMask {
    pub g: Array2<f64>,
}

impl GainMask {
    pub fn from_snr(snr: &Array2<f64>, params: &PostfilterParams) -> Self {
        Self {
            g: snr.mapv(|s| wiener_gain(s, params)),
        }
    }

    pub fn unity(frames: usize, bins: usize) -> Self {
        Self {
            g: Array2::ones((frames, bins)),
        }
    }
}

/// `Y = G * Y_BF`, elementwise.
pub fn apply_gain(y_bf: &Array2<Complex64>, mask: &GainMask) -> Result<Array2<Complex64>> {
    if y_bf.dim() != mask.g.dim() {
        return Err(Error::DimensionMismatch(format!(
            "spectrum is {:?}, gain mask is {:?}",
            y_bf.dim(),
            mask.g.dim()
        )));
    }
    let mut out = y_bf.clone();
    out.zip_mut_with(&mask.g, |y, &g| *y *= g);
    Ok(out)
}
