//! Half-overlap sine-window STFT analysis and overlap-add synthesis.
//!
//! The analysis and synthesis windows are both `sin(pi (k + 0.5) / K)`. At a
//! hop of `K / 2` their product sums to exactly one, so synthesis inverts
//! analysis everywhere except the first hop of the signal.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{s, Array2, Array3, ArrayView2, ArrayView3};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Sine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrameParams {
    pub frame_len: usize,
    pub hop: usize,
    pub sample_rate: u32,
    pub window: Window,
}

impl Default for FrameParams {
    fn default() -> Self {
        Self {
            frame_len: 1024,
            hop: 512,
            sample_rate: 16000,
            window: Window::Sine,
        }
    }
}

impl FrameParams {
    pub fn new(frame_len: usize, sample_rate: u32) -> Result<Self> {
        let params = Self {
            frame_len,
            hop: frame_len / 2,
            sample_rate,
            window: Window::Sine,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_len < 2 || !self.frame_len.is_multiple_of(2) {
            return Err(Error::InvalidFrameParams(format!(
                "frame_len must be even and >= 2, got {}",
                self.frame_len
            )));
        }
        if self.hop * 2 != self.frame_len {
            return Err(Error::InvalidFrameParams(format!(
                "hop must be frame_len / 2 = {}, got {}",
                self.frame_len / 2,
                self.hop
            )));
        }
        if self.sample_rate == 0 {
            return Err(Error::InvalidFrameParams("sample_rate must be > 0".into()));
        }
        Ok(())
    }

    pub fn num_bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    /// Center frequency of bin `k` in Hz.
    pub fn bin_frequency(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / self.frame_len as f64
    }

    pub fn bin_frequencies(&self) -> Vec<f64> {
        (0..self.num_bins()).map(|k| self.bin_frequency(k)).collect()
    }

    /// Number of frames produced for a signal of `len` samples.
    pub fn num_frames(&self, len: usize) -> usize {
        len.div_ceil(self.hop)
    }

    pub fn window(&self) -> Vec<f64> {
        sine_window(self.frame_len)
    }
}

pub fn sine_window(len: usize) -> Vec<f64> {
    (0..len).map(|k| (PI * (k as f64 + 0.5) / len as f64).sin()).collect()
}

/// Complex STFT tensor indexed `[frame, bin, channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelSpectrum {
    pub data: Array3<Complex64>,
    pub params: FrameParams,
}

impl MultichannelSpectrum {
    pub fn num_frames(&self) -> usize {
        self.data.dim().0
    }

    pub fn num_bins(&self) -> usize {
        self.data.dim().1
    }

    pub fn num_channels(&self) -> usize {
        self.data.dim().2
    }

    /// Frames `[start, end)` as a new spectrum.
    pub fn frames(&self, start: usize, end: usize) -> MultichannelSpectrum {
        MultichannelSpectrum {
            data: self.data.slice(s![start..end, .., ..]).to_owned(),
            params: self.params,
        }
    }

    pub fn channel(&self, n: usize) -> Array2<Complex64> {
        self.data.slice(s![.., .., n]).to_owned()
    }

    pub fn view(&self) -> ArrayView3<'_, Complex64> {
        self.data.view()
    }
}

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Plans {
    fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }
}

/// Analyze a `[samples x channels]` signal.
///
/// Frame `l` covers samples `[l * hop, l * hop + frame_len)`; the trailing
/// frame is zero-padded so that every sample after the first hop is covered
/// by two frames.
pub fn analyze(signal: ArrayView2<'_, f64>, params: &FrameParams) -> Result<MultichannelSpectrum> {
    params.validate()?;
    let (len, channels) = signal.dim();
    if len == 0 || channels == 0 {
        return Err(Error::EmptySignal);
    }
    if params.frame_len > len {
        return Err(Error::SignalTooShort {
            frame_len: params.frame_len,
            len,
        });
    }

    let k = params.frame_len;
    let num_frames = params.num_frames(len);
    let num_bins = params.num_bins();
    let window = params.window();
    let plans = Plans::new(k);

    let mut data = Array3::<Complex64>::zeros((num_frames, num_bins, channels));
    let mut buf = vec![Complex64::new(0.0, 0.0); k];
    let mut scratch = vec![Complex64::new(0.0, 0.0); plans.forward.get_inplace_scratch_len()];
    for ch in 0..channels {
        let column = signal.column(ch);
        for l in 0..num_frames {
            let start = l * params.hop;
            for (i, b) in buf.iter_mut().enumerate() {
                let t = start + i;
                let x = if t < len { column[t] } else { 0.0 };
                *b = Complex64::new(x * window[i], 0.0);
            }
            plans.forward.process_with_scratch(&mut buf, &mut scratch);
            for f in 0..num_bins {
                data[[l, f, ch]] = buf[f];
            }
        }
    }

    Ok(MultichannelSpectrum { data, params: *params })
}

/// Overlap-add synthesis of a single-channel `[frames x bins]` spectrum.
///
/// Returns `(frames - 1) * hop + frame_len` samples; callers trim to the
/// original length.
pub fn synthesize(spectrum: ArrayView2<'_, Complex64>, params: &FrameParams) -> Result<Vec<f64>> {
    params.validate()?;
    let (num_frames, num_bins) = spectrum.dim();
    if num_bins != params.num_bins() {
        return Err(Error::DimensionMismatch(format!(
            "spectrum has {num_bins} bins, frame length {} needs {}",
            params.frame_len,
            params.num_bins()
        )));
    }
    let k = params.frame_len;
    if num_frames == 0 {
        return Ok(Vec::new());
    }
    let window = params.window();
    let plans = Plans::new(k);
    let scale = 1.0 / k as f64;

    let mut out = vec![0.0; (num_frames - 1) * params.hop + k];
    let mut buf = vec![Complex64::new(0.0, 0.0); k];
    let mut scratch = vec![Complex64::new(0.0, 0.0); plans.inverse.get_inplace_scratch_len()];
    for l in 0..num_frames {
        // Hermitian extension; DC and Nyquist must be real for a real frame.
        buf[0] = Complex64::new(spectrum[[l, 0]].re, 0.0);
        buf[k / 2] = Complex64::new(spectrum[[l, k / 2]].re, 0.0);
        for f in 1..k / 2 {
            buf[f] = spectrum[[l, f]];
            buf[k - f] = spectrum[[l, f]].conj();
        }
        plans.inverse.process_with_scratch(&mut buf, &mut scratch);
        let start = l * params.hop;
        for i in 0..k {
            out[start + i] += buf[i].re * scale * window[i];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn white(len: usize, channels: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((len, channels), |_| rng.random::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn zero_signal_gives_zero_spectrum() {
        let x = Array2::<f64>::zeros((4096, 2));
        let spec = analyze(x.view(), &FrameParams::default()).unwrap();
        assert!(spec.data.iter().all(|c| c.norm() == 0.0));
        assert_eq!(spec.num_bins(), 513);
        assert_eq!(spec.num_frames(), 8);
    }

    #[test]
    fn rejects_short_and_empty() {
        let p = FrameParams::default();
        assert!(matches!(
            analyze(Array2::<f64>::zeros((0, 1)).view(), &p),
            Err(Error::EmptySignal)
        ));
        assert!(matches!(
            analyze(Array2::<f64>::zeros((1000, 1)).view(), &p),
            Err(Error::SignalTooShort { .. })
        ));
        assert!(FrameParams::new(1023, 16000).is_err());
        let bad = FrameParams {
            hop: 256,
            ..FrameParams::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn synthesize_rejects_wrong_bins() {
        let spec = Array2::<Complex64>::zeros((3, 100));
        assert!(synthesize(spec.view(), &FrameParams::default()).is_err());
    }

    #[test]
    fn zero_spectrum_synthesizes_to_zero() {
        let spec = Array2::<Complex64>::zeros((5, 513));
        let y = synthesize(spec.view(), &FrameParams::default()).unwrap();
        assert_eq!(y.len(), 4 * 512 + 1024);
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn white_noise_roundtrip() {
        let p = FrameParams::default();
        let x = white(16000, 1, 7);
        let spec = analyze(x.view(), &p).unwrap();
        let y = synthesize(spec.channel(0).view(), &p).unwrap();
        let (mut sig, mut err) = (0.0, 0.0);
        let mut max_abs: f64 = 0.0;
        for t in p.hop..16000 {
            sig += x[[t, 0]] * x[[t, 0]];
            err += (y[t] - x[[t, 0]]).powi(2);
            max_abs = max_abs.max((y[t] - x[[t, 0]]).abs());
        }
        let snr = 10.0 * (sig / err).log10();
        assert!(snr > 100.0, "roundtrip SNR {snr} dB");
        assert!(max_abs < 1e-6);
    }

    #[test]
    fn bin_centered_sinusoid_peaks_at_its_bin() {
        let p = FrameParams::default();
        let m = 37;
        let f = p.bin_frequency(m);
        let x = Array2::from_shape_fn((8192, 1), |(t, _)| {
            (2.0 * PI * f * t as f64 / p.sample_rate as f64).cos()
        });
        let spec = analyze(x.view(), &p).unwrap();
        let k = p.frame_len;
        let w = p.window();
        // Direct O(K) DFT of the windowed frame as the reference.
        let dft = |l: usize, bin: usize| -> Complex64 {
            (0..k)
                .map(|i| {
                    let v = x[[l * p.hop + i, 0]] * w[i];
                    Complex64::from_polar(v, -2.0 * PI * (bin * i) as f64 / k as f64)
                })
                .sum()
        };
        for l in 1..spec.num_frames() - 2 {
            let mags: Vec<f64> = (0..spec.num_bins()).map(|b| spec.data[[l, b, 0]].norm()).collect();
            let argmax = (0..mags.len()).max_by(|&a, &b| mags[a].total_cmp(&mags[b])).unwrap();
            assert_eq!(argmax, m);
            for bin in [m - 1, m, m + 1, 3 * m] {
                assert!((spec.data[[l, bin, 0]] - dft(l, bin)).norm() < 1e-8 * k as f64);
            }
            let near: f64 = mags[m - 1..=m + 1].iter().map(|v| v * v).sum();
            let total: f64 = mags.iter().map(|v| v * v).sum();
            assert!(near / total > 0.99);
        }
    }

    #[test]
    fn single_dc_frame_is_window_shaped() {
        let p = FrameParams::new(64, 16000).unwrap();
        let mut spec = Array2::<Complex64>::zeros((1, p.num_bins()));
        spec[[0, 0]] = Complex64::new(1.0, 0.0);
        let y = synthesize(spec.view(), &p).unwrap();
        let w = p.window();
        for k in 0..64 {
            assert!((y[k] - w[k] / 64.0).abs() < 1e-15);
        }

        // A constant frame passed through analysis and synthesis comes back
        // shaped by the squared window.
        let x = Array2::from_elem((64, 1), 1.0);
        let spec = analyze(x.view(), &p).unwrap();
        let first = spec.data.slice(s![0..1, .., 0]).to_owned();
        let y = synthesize(first.view(), &p).unwrap();
        for k in 0..64 {
            assert!((y[k] - w[k] * w[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn parseval_per_frame() {
        let p = FrameParams::new(256, 16000).unwrap();
        let x = white(2048, 1, 3);
        let spec = analyze(x.view(), &p).unwrap();
        let w = p.window();
        let k = p.frame_len;
        for l in 0..spec.num_frames() {
            let time: f64 = (0..k)
                .map(|i| {
                    let t = l * p.hop + i;
                    let v = if t < 2048 { x[[t, 0]] } else { 0.0 };
                    (v * w[i]).powi(2)
                })
                .sum();
            let freq: f64 = (0..p.num_bins())
                .map(|f| {
                    let weight = if f == 0 || f == k / 2 { 1.0 } else { 2.0 };
                    weight * spec.data[[l, f, 0]].norm_sqr()
                })
                .sum::<f64>()
                / k as f64;
            assert!((time - freq).abs() <= 1e-9 * time.max(1e-300));
        }
    }

    #[test]
    fn num_frames_covers_signal() {
        let p = FrameParams::default();
        assert_eq!(p.num_frames(1024), 2);
        assert_eq!(p.num_frames(1025), 3);
        assert_eq!(p.num_frames(16000), 32);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn roundtrip_interior_exact(seed in any::<u64>(), extra in 0usize..300, scale in 1e-3f64..1e3) {
            let p = FrameParams::new(128, 16000).unwrap();
            let len = 512 + extra;
            let x = white(len, 1, seed).mapv(|v| v * scale);
            let spec = analyze(x.view(), &p).unwrap();
            let y = synthesize(spec.channel(0).view(), &p).unwrap();
            let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for t in p.hop..len {
                prop_assert!((y[t] - x[[t, 0]]).abs() < 1e-6 * peak);
            }
        }

        #[test]
        fn analysis_is_linear(seed in any::<u64>(), a in -10.0f64..10.0, b in -10.0f64..10.0) {
            let p = FrameParams::new(64, 16000).unwrap();
            let x = white(300, 2, seed);
            let y = white(300, 2, seed.wrapping_add(1));
            let combo = &x * a + &y * b;
            let sx = analyze(x.view(), &p).unwrap();
            let sy = analyze(y.view(), &p).unwrap();
            let sc = analyze(combo.view(), &p).unwrap();
            for ((c, u), v) in sc.data.iter().zip(sx.data.iter()).zip(sy.data.iter()) {
                prop_assert!((c - (u * a + v * b)).norm() < 1e-9);
            }
        }
    }
}
