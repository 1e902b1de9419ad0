//! Coherent-to-diffuse power ratio (CDR) estimation.
//!
//! Each microphone pair yields a CDR estimate from its short-time coherence
//! and the diffuse-field coherence of its spacing. The estimator needs no
//! knowledge of the source direction. Pair estimates are combined in the
//! diffuseness domain, and the combined input CDR is mapped to the
//! beamformer output with the diffuse-noise response `A = w^H J_diff w` of
//! the beamformer.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::beamformer::BeamformerWeights;
use crate::error::{Error, Result};
use crate::geometry::{diffuse_coherence, diffuse_coherence_matrix, ArrayGeometry, ChannelMask};
use crate::linalg::quadratic_form;
use crate::spectral::{SpectralAccumulator, DEFAULT_FORGETTING_FACTOR};
use crate::stft::{FrameParams, MultichannelSpectrum};

pub const DEFAULT_CDR_MAX: f64 = 1e4;

/// Coherence magnitudes are pulled inside the unit circle by this margin.
const COHERENCE_MARGIN: f64 = 1e-9;
const A_GAMMA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CdrParams {
    /// Forgetting factor of the recursive spectral averaging.
    pub lambda: f64,
    pub cdr_max: f64,
}

impl Default for CdrParams {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_FORGETTING_FACTOR,
            cdr_max: DEFAULT_CDR_MAX,
        }
    }
}

impl CdrParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.lambda) {
            return Err(Error::InvalidParameter(format!(
                "lambda must lie in [0, 1), got {}",
                self.lambda
            )));
        }
        if !(self.cdr_max > 0.0 && self.cdr_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "cdr_max must be finite and > 0, got {}",
                self.cdr_max
            )));
        }
        Ok(())
    }
}

/// DoA-independent CDR estimate for one microphone pair.
///
/// `gamma_x` is the measured short-time coherence, `gamma_n` the coherence of
/// the noise field (sinc model for a diffuse field). The result is clamped to
/// `[0, cdr_max]`.
pub fn estimate_cdr_pair(gamma_x: Complex64, gamma_n: f64, cdr_max: f64) -> f64 {
    let gamma_n = gamma_n.clamp(-1.0, 1.0);
    let mag = gamma_x.norm();
    let gamma_x = if mag > 1.0 - COHERENCE_MARGIN {
        gamma_x * ((1.0 - COHERENCE_MARGIN) / mag)
    } else {
        gamma_x
    };
    let re = gamma_x.re;
    let mag2 = gamma_x.norm_sqr();
    let gn2 = gamma_n * gamma_n;

    let radicand = gn2 * re * re - gn2 * mag2 + gn2 - 2.0 * gamma_n * re + mag2;
    let numerator = gamma_n * re - mag2 - radicand.max(0.0).sqrt();
    let cdr = numerator / (mag2 - 1.0);
    if cdr.is_nan() {
        return 0.0;
    }
    cdr.clamp(0.0, cdr_max)
}

/// `D = 1 / (1 + CDR)`.
pub fn diffuseness(cdr: f64) -> f64 {
    1.0 / (1.0 + cdr)
}

/// Inverse of [`diffuseness`], clamped to `[0, cdr_max]`.
pub fn cdr_from_diffuseness(d: f64, cdr_max: f64) -> f64 {
    if d <= 0.0 {
        return cdr_max;
    }
    ((1.0 - d) / d).clamp(0.0, cdr_max)
}

/// Average pair diffuseness and the resulting input CDR, `(D_mean, CDR_in)`.
pub fn average_input_cdr(pair_cdrs: &[f64], cdr_max: f64) -> Result<(f64, f64)> {
    if pair_cdrs.is_empty() {
        return Err(Error::NoValidPairs);
    }
    let mean = pair_cdrs.iter().map(|&c| diffuseness(c)).sum::<f64>() / pair_cdrs.len() as f64;
    Ok((mean, cdr_from_diffuseness(mean, cdr_max)))
}

/// Diffuse-noise power response `w^H J_diff(f) w` of the beamformer at bin
/// `bin` (center frequency `freq` Hz), floored at 1e-6.
pub fn correction_factor(weights: &BeamformerWeights, geom: &ArrayGeometry, bin: usize, freq: f64) -> Result<f64> {
    let w = weights.w.row(bin);
    if w.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::Consistency(format!("non-finite beamformer weight at bin {bin}")));
    }
    let j = diffuse_coherence_matrix(geom, freq, &weights.mask)?.mapv(|v| Complex64::new(v, 0.0));
    let a = quadratic_form(j.view(), w);
    if a.im.abs() > 1e-9 * a.re.abs().max(f64::MIN_POSITIVE) && a.im.abs() > 1e-15 {
        return Err(Error::Consistency(format!(
            "quadratic form w^H J w is not real at bin {bin}: {a}"
        )));
    }
    Ok(a.re.max(A_GAMMA_FLOOR))
}

/// `CDR_BF = CDR_in / A`, clamped to `[0, cdr_max]`.
pub fn cdr_at_beamformer_output(cdr_in: f64, a_gamma: f64, cdr_max: f64) -> f64 {
    (cdr_in / a_gamma.max(A_GAMMA_FLOOR)).clamp(0.0, cdr_max)
}

/// Per-bin correction factors for time-invariant weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionFactor {
    pub a_gamma: Array1<f64>,
}

impl CorrectionFactor {
    pub fn compute(weights: &BeamformerWeights, geom: &ArrayGeometry, params: &FrameParams) -> Result<Self> {
        if weights.num_bins() != params.num_bins() {
            return Err(Error::DimensionMismatch(format!(
                "weights have {} bins, frame parameters {}",
                weights.num_bins(),
                params.num_bins()
            )));
        }
        let a_gamma = (0..params.num_bins())
            .map(|f| correction_factor(weights, geom, f, params.bin_frequency(f)))
            .collect::<Result<Vec<_>>>()?;
        let a_gamma = Array1::from(a_gamma);
        if a_gamma.iter().any(|&a| a.is_nan() || a <= 0.0) {
            return Err(Error::Consistency("non-positive correction factor".into()));
        }
        Ok(Self { a_gamma })
    }

    pub fn min(&self) -> f64 {
        self.a_gamma.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.a_gamma.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.a_gamma.mean().unwrap_or(f64::NAN)
    }
}

/// CDR and diffuseness maps, `[frames x bins]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CdrEstimate {
    pub cdr: Array2<f64>,
    pub diffuseness: Array2<f64>,
}

impl CdrEstimate {
    fn from_cdr(cdr: Array2<f64>) -> Self {
        let diffuseness = cdr.mapv(diffuseness);
        Self { cdr, diffuseness }
    }

    /// Map an input-side estimate to the beamformer output.
    pub fn at_beamformer_output(&self, correction: &CorrectionFactor, cdr_max: f64) -> Result<Self> {
        let (frames, bins) = self.cdr.dim();
        if correction.a_gamma.len() != bins {
            return Err(Error::DimensionMismatch(format!(
                "estimate has {bins} bins, correction factor {}",
                correction.a_gamma.len()
            )));
        }
        let cdr = Array2::from_shape_fn((frames, bins), |(l, f)| {
            cdr_at_beamformer_output(self.cdr[[l, f]], correction.a_gamma[f], cdr_max)
        });
        Ok(Self::from_cdr(cdr))
    }
}

/// Input CDR for every frame and bin of a multichannel spectrum.
///
/// Coherence comes from recursively averaged spectra; every unordered pair of
/// active channels contributes one estimate. A time-frequency point with no
/// valid pair (all auto spectra zero) is treated as fully diffuse.
pub fn estimate_input_cdr(
    spectrum: &MultichannelSpectrum,
    geom: &ArrayGeometry,
    mask: &ChannelMask,
    params: &CdrParams,
) -> Result<CdrEstimate> {
    params.validate()?;
    let (frames, bins, channels) = spectrum.data.dim();
    if channels != geom.num_mics() || mask.len() != channels {
        return Err(Error::DimensionMismatch(format!(
            "spectrum has {channels} channels, geometry {}, mask {}",
            geom.num_mics(),
            mask.len()
        )));
    }
    let pairs = mask.pairs();
    if pairs.is_empty() {
        return Err(Error::TooFewChannels(mask.num_active()));
    }

    let c = geom.speed_of_sound();
    let freq = spectrum.params.bin_frequencies();
    // Diffuse coherence per (pair, bin) does not change over time.
    let gamma_n = Array2::from_shape_fn((pairs.len(), bins), |(p, f)| {
        let (n, m) = pairs[p];
        diffuse_coherence(geom.distance(n, m), freq[f], c)
    });

    let mut acc = SpectralAccumulator::new(bins, channels, params.lambda)?;
    let mut cdr = Array2::<f64>::zeros((frames, bins));
    let mut pair_cdrs = Vec::with_capacity(pairs.len());
    for l in 0..frames {
        acc.accumulate(spectrum.data.index_axis(ndarray::Axis(0), l))?;
        for f in 0..bins {
            pair_cdrs.clear();
            for (p, &(n, m)) in pairs.iter().enumerate() {
                if let Some(g) = acc.coherence(n, m, f) {
                    pair_cdrs.push(estimate_cdr_pair(g, gamma_n[[p, f]], params.cdr_max));
                }
            }
            cdr[[l, f]] = match average_input_cdr(&pair_cdrs, params.cdr_max) {
                Ok((_, v)) => v,
                Err(_) => 0.0,
            };
        }
    }
    Ok(CdrEstimate::from_cdr(cdr))
}
