//! Recursive auto/cross power spectra, short-time coherence and the
//! pre-utterance noise covariance.

use log::warn;
use ndarray::{Array3, ArrayView2, Axis};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::ChannelMask;
use crate::stft::MultichannelSpectrum;

pub const DEFAULT_FORGETTING_FACTOR: f64 = 0.68;

/// Exponentially averaged spectral matrices `Phi(l, f)`, one `N x N`
/// Hermitian matrix per bin.
#[derive(Debug, Clone)]
pub struct SpectralAccumulator {
    psd: Array3<Complex64>,
    lambda: f64,
    frame_count: usize,
}

impl SpectralAccumulator {
    pub fn new(num_bins: usize, num_channels: usize, lambda: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&lambda) {
            return Err(Error::InvalidParameter(format!(
                "forgetting factor must lie in [0, 1), got {lambda}"
            )));
        }
        Ok(Self {
            psd: Array3::zeros((num_bins, num_channels, num_channels)),
            lambda,
            frame_count: 0,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    pub fn num_bins(&self) -> usize {
        self.psd.dim().0
    }

    pub fn num_channels(&self) -> usize {
        self.psd.dim().1
    }

    /// `Phi(l) = lambda Phi(l-1) + (1 - lambda) x x^H`; the first frame sets
    /// `Phi(0) = x x^H`.
    pub fn accumulate(&mut self, frame: ArrayView2<'_, Complex64>) -> Result<()> {
        let (bins, channels) = frame.dim();
        if bins != self.num_bins() || channels != self.num_channels() {
            return Err(Error::DimensionMismatch(format!(
                "frame is {bins}x{channels}, accumulator is {}x{}",
                self.num_bins(),
                self.num_channels()
            )));
        }
        let (keep, add) = if self.frame_count == 0 {
            (0.0, 1.0)
        } else {
            (self.lambda, 1.0 - self.lambda)
        };
        for f in 0..bins {
            let x = frame.row(f);
            let mut phi = self.psd.index_axis_mut(Axis(0), f);
            for n in 0..channels {
                // Diagonal stays exactly real.
                phi[[n, n]] = Complex64::new(keep * phi[[n, n]].re + add * x[n].norm_sqr(), 0.0);
                for m in n + 1..channels {
                    let v = keep * phi[[n, m]] + add * x[n] * x[m].conj();
                    phi[[n, m]] = v;
                    phi[[m, n]] = v.conj();
                }
            }
        }
        self.frame_count += 1;
        Ok(())
    }

    /// `Phi_nm(f)`, with `Phi_nm = E[X_n X_m^*]`.
    pub fn cross(&self, n: usize, m: usize, f: usize) -> Complex64 {
        self.psd[[f, n, m]]
    }

    pub fn matrix(&self, f: usize) -> ArrayView2<'_, Complex64> {
        self.psd.index_axis(Axis(0), f)
    }

    /// Short-time coherence `Phi_nm / sqrt(Phi_nn Phi_mm)`, or `None` when an
    /// auto spectrum is zero and the coherence is undefined.
    pub fn coherence(&self, n: usize, m: usize, f: usize) -> Option<Complex64> {
        let denom = (self.psd[[f, n, n]].re * self.psd[[f, m, m]].re).sqrt();
        if denom > 0.0 && denom.is_finite() {
            Some(self.psd[[f, n, m]] / denom)
        } else {
            None
        }
    }
}

/// Noise spatial covariance estimated from a noise-only context block.
#[derive(Debug, Clone)]
pub struct NoiseCovariance {
    /// `[bins x N x N]`; rows and columns of masked channels are zero.
    pub s_nn: Array3<Complex64>,
    pub context_frames: usize,
    pub mask: ChannelMask,
}

impl NoiseCovariance {
    pub fn num_bins(&self) -> usize {
        self.s_nn.dim().0
    }

    pub fn matrix(&self, f: usize) -> ArrayView2<'_, Complex64> {
        self.s_nn.index_axis(Axis(0), f)
    }
}

/// Block average `(1 / L) sum_l x x^H` over the context frames.
pub fn estimate_noise_covariance(context: &MultichannelSpectrum, mask: &ChannelMask) -> Result<NoiseCovariance> {
    let (frames, bins, channels) = context.data.dim();
    if frames == 0 {
        return Err(Error::EmptyContext);
    }
    if mask.len() != channels {
        return Err(Error::DimensionMismatch(format!(
            "mask has {} channels, context has {channels}",
            mask.len()
        )));
    }
    let duration = (frames - 1) as f64 * context.params.hop as f64 / context.params.sample_rate as f64
        + context.params.frame_len as f64 / context.params.sample_rate as f64;
    if !(0.4..=0.8).contains(&duration) {
        warn!("noise context spans {duration:.3} s, outside the recommended 0.4-0.8 s");
    }

    let active = mask.active_indices();
    let mut s_nn = Array3::<Complex64>::zeros((bins, channels, channels));
    let scale = 1.0 / frames as f64;
    for l in 0..frames {
        for f in 0..bins {
            for &n in &active {
                let xn = context.data[[l, f, n]];
                for &m in &active {
                    s_nn[[f, n, m]] += xn * context.data[[l, f, m]].conj() * scale;
                }
            }
        }
    }
    Ok(NoiseCovariance {
        s_nn,
        context_frames: frames,
        mask: mask.clone(),
    })
}
