//! Synthetic acoustic scenes with known ground truth.
//!
//! A scene is a far-field point source, a spherically isotropic diffuse field
//! and spatially white sensor noise. Propagation applies the exact free-field
//! phase `exp(-j k^T p_n)` to the DFT of the whole signal, i.e. a circular
//! fractional delay, so the simulated channels match the steering model at
//! every frequency.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, Axis};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::cdr::DEFAULT_CDR_MAX;
use crate::error::{Error, Result};
use crate::geometry::{wavevector, ArrayGeometry, DoA};
use crate::stft::{analyze, FrameParams};

const DIFFUSE_CHUNKS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceSignal {
    /// Seeded white Gaussian noise.
    WhiteNoise,
    /// Seeded harmonic babble with syllable-like envelopes and pauses.
    SpeechLike,
    Samples(Vec<f64>),
}

/// Periodic on/off gating of the source, starting at the onset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub on_s: f64,
    pub off_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub geometry: ArrayGeometry,
    pub doa: DoA,
    pub source: SourceSignal,
    pub duration_s: f64,
    pub sample_rate: u32,
    /// Source is silent before this time.
    pub onset_s: f64,
    pub gate: Option<Gate>,
    /// Diffuse power relative to direct power, dB; `None` for no diffuse field.
    pub diffuse_to_direct_db: Option<f64>,
    /// Sensor noise power relative to direct power, dB; `None` for none.
    pub sensor_noise_db: Option<f64>,
    pub num_directions: usize,
    pub seed: u64,
    /// Framing used for the ground-truth maps.
    pub frame: FrameParams,
    pub cdr_max: f64,
}

impl SceneSpec {
    /// White-noise source at 0 dB direct-to-diffuse, no sensor noise.
    pub fn new(geometry: ArrayGeometry, doa: DoA, duration_s: f64) -> Self {
        Self {
            geometry,
            doa,
            source: SourceSignal::WhiteNoise,
            duration_s,
            sample_rate: 16000,
            onset_s: 0.0,
            gate: None,
            diffuse_to_direct_db: Some(0.0),
            sensor_noise_db: None,
            num_directions: 128,
            seed: 0,
            frame: FrameParams::default(),
            cdr_max: DEFAULT_CDR_MAX,
        }
    }

    pub fn num_samples(&self) -> usize {
        (self.duration_s * self.sample_rate as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "duration must be > 0, got {}",
                self.duration_s
            )));
        }
        if self.sample_rate == 0 {
            return Err(Error::InvalidParameter("sample rate must be > 0".into()));
        }
        for (name, v) in [
            ("diffuse", self.diffuse_to_direct_db),
            ("sensor noise", self.sensor_noise_db),
        ] {
            if let Some(v) = v {
                if !v.is_finite() {
                    return Err(Error::InvalidParameter(format!("{name} level must be finite")));
                }
            }
        }
        if self.num_directions == 0 {
            return Err(Error::InvalidParameter("need at least one diffuse direction".into()));
        }
        if let Some(g) = self.gate {
            if !(g.on_s > 0.0 && g.off_s >= 0.0) {
                return Err(Error::InvalidParameter("gate needs on > 0 and off >= 0".into()));
            }
        }
        if self.frame.sample_rate != self.sample_rate {
            return Err(Error::InvalidParameter("frame sample rate differs from scene".into()));
        }
        self.frame.validate()
    }
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// Short-time direct-to-diffuse power ratio `[frames x bins]`,
    /// channel-averaged, clamped to `[0, cdr_max]`.
    pub cdr: Array2<f64>,
    /// Direct-to-diffuse ratio per bin over the whole scene.
    pub cdr_per_bin: Array1<f64>,
    /// STFT of the (gated) source signal, `[frames x bins]`.
    pub source_stft: Array2<Complex64>,
    pub doa: DoA,
}

#[derive(Debug, Clone)]
pub struct Scene {
    /// `[samples x channels]`.
    pub mixture: Array2<f64>,
    pub direct: Array2<f64>,
    pub diffuse: Array2<f64>,
    pub sensor: Array2<f64>,
    /// Dry source as seen at the array origin.
    pub source: Vec<f64>,
    pub truth: GroundTruth,
}

impl Scene {
    /// Everything except the direct component.
    pub fn noise(&self) -> Array2<f64> {
        &self.diffuse + &self.sensor
    }
}

/// Add the propagated plane wave with spectrum `spec` to each channel
/// accumulator.
fn propagate_into(spec: &[Complex64], geom: &ArrayGeometry, doa: &DoA, fs: f64, acc: &mut [Vec<Complex64>]) {
    let len = spec.len();
    let half = len / 2;
    let c = geom.speed_of_sound();
    // The phase is linear in the bin index: phase(k) = k * step for the
    // positive bins, mirrored with conjugation for the negative ones.
    let k1 = wavevector(doa, fs / len as f64, c);
    let mut phasors = vec![Complex64::new(1.0, 0.0); half + 1];
    for (ch, p) in geom.positions().iter().enumerate() {
        let step = -(k1[0] * p[0] + k1[1] * p[1] + k1[2] * p[2]);
        let rot = Complex64::from_polar(1.0, step);
        for k in 1..=half {
            phasors[k] = if k % 256 == 0 {
                Complex64::from_polar(1.0, step * k as f64)
            } else {
                phasors[k - 1] * rot
            };
        }
        let out = &mut acc[ch];
        for k in 0..=half {
            if len.is_multiple_of(2) && k == half {
                // Nyquist bin must stay real.
                out[k] += spec[k] * phasors[k].re;
            } else {
                out[k] += spec[k] * phasors[k];
            }
        }
        for k in half + 1..len {
            out[k] += spec[k] * phasors[len - k].conj();
        }
    }
}

fn inverse_real(spectra: Vec<Vec<Complex64>>) -> Array2<f64> {
    let channels = spectra.len();
    let len = spectra[0].len();
    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(len);
    let mut out = Array2::<f64>::zeros((len, channels));
    for (ch, mut buf) in spectra.into_iter().enumerate() {
        ifft.process(&mut buf);
        for t in 0..len {
            out[[t, ch]] = buf[t].re / len as f64;
        }
    }
    out
}

fn forward(signal: &[f64]) -> Vec<Complex64> {
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(signal.len());
    let mut buf: Vec<Complex64> = signal.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.process(&mut buf);
    buf
}

/// Propagate `signal` as a plane wave from `doa` to every microphone.
pub fn generate_point_source(geom: &ArrayGeometry, doa: &DoA, signal: &[f64], sample_rate: u32) -> Result<Array2<f64>> {
    if signal.is_empty() {
        return Err(Error::EmptySignal);
    }
    let spec = forward(signal);
    let mut acc = vec![vec![Complex64::new(0.0, 0.0); signal.len()]; geom.num_mics()];
    propagate_into(&spec, geom, doa, sample_rate as f64, &mut acc);
    Ok(inverse_real(acc))
}

/// `count` directions spread evenly over the sphere (Fibonacci lattice).
pub fn fibonacci_directions(count: usize) -> Vec<DoA> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
            DoA::new(golden * i as f64, z.clamp(-1.0, 1.0).acos())
        })
        .collect()
}

fn white_noise(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

/// Spherically isotropic noise: a superposition of `num_directions`
/// independent white plane waves, scaled to unit average channel power.
pub fn generate_diffuse_field(
    geom: &ArrayGeometry,
    num_samples: usize,
    sample_rate: u32,
    num_directions: usize,
    seed: u64,
) -> Result<Array2<f64>> {
    if num_samples == 0 {
        return Err(Error::EmptySignal);
    }
    if num_directions == 0 {
        return Err(Error::InvalidParameter("need at least one direction".into()));
    }
    let directions = fibonacci_directions(num_directions);
    let chunk = num_directions.div_ceil(DIFFUSE_CHUNKS);
    let channels = geom.num_mics();
    let fs = sample_rate as f64;

    // Fixed chunking and in-order reduction keep the result independent of
    // the thread count.
    let partials: Vec<Vec<Vec<Complex64>>> = directions
        .par_chunks(chunk)
        .enumerate()
        .map(|(c, dirs)| {
            let mut acc = vec![vec![Complex64::new(0.0, 0.0); num_samples]; channels];
            for (i, doa) in dirs.iter().enumerate() {
                let index = (c * chunk + i) as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(index + 1);
                let spec = forward(&white_noise(num_samples, &mut rng));
                propagate_into(&spec, geom, doa, fs, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = vec![vec![Complex64::new(0.0, 0.0); num_samples]; channels];
    for part in partials {
        for (t, p) in total.iter_mut().zip(part) {
            for (a, b) in t.iter_mut().zip(p) {
                *a += b;
            }
        }
    }
    let mut field = inverse_real(total);
    let power = mean_power(&field);
    if power > 0.0 {
        field /= power.sqrt();
    }
    Ok(field)
}

/// Mean square over all samples and channels.
pub fn mean_power(x: &Array2<f64>) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// Harmonic babble: voiced syllables of 120-350 ms with a drifting pitch,
/// separated by short pauses. Normalized to unit RMS over the whole signal.
pub fn speech_like(len: usize, sample_rate: u32, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let fs = sample_rate as f64;
    let mut out = vec![0.0; len];
    let mut t = (rng.random::<f64>() * 0.1 * fs) as usize;
    while t < len {
        let dur = ((0.12 + 0.23 * rng.random::<f64>()) * fs) as usize;
        let f0 = 100.0 + 120.0 * rng.random::<f64>();
        let drift = (rng.random::<f64>() - 0.5) * 0.4;
        let level = 0.5 + rng.random::<f64>();
        let max_h = ((4000.0 / f0) as usize).max(1);
        let phase: Vec<f64> = (0..max_h).map(|_| rng.random::<f64>() * 2.0 * PI).collect();
        let end = (t + dur).min(len);
        let mut base = 0.0;
        for (i, o) in out[t..end].iter_mut().enumerate() {
            let u = i as f64 / dur as f64;
            let pitch = f0 * (1.0 + drift * u);
            base += 2.0 * PI * pitch / fs;
            let env = (PI * u).sin().powi(2) * level;
            let mut v = 0.0;
            for (h, p) in phase.iter().enumerate() {
                let k = (h + 1) as f64;
                v += (k * base + p).sin() / k;
            }
            *o = env * v;
        }
        let gap = ((0.04 + 0.16 * rng.random::<f64>()) * fs) as usize;
        t = end + gap;
    }
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / len.max(1) as f64).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|v| *v /= rms);
    }
    out
}

fn build_source(spec: &SceneSpec, len: usize) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut s = match &spec.source {
        SourceSignal::WhiteNoise => white_noise(len, &mut rng),
        SourceSignal::SpeechLike => speech_like(len, spec.sample_rate, &mut rng),
        SourceSignal::Samples(v) => {
            if v.is_empty() {
                return Err(Error::EmptySignal);
            }
            let mut v = v.clone();
            v.resize(len, 0.0);
            v
        }
    };
    let fs = spec.sample_rate as f64;
    let onset = (spec.onset_s * fs).round().max(0.0) as usize;
    for v in s.iter_mut().take(onset.min(len)) {
        *v = 0.0;
    }
    if let Some(g) = spec.gate {
        let period = g.on_s + g.off_s;
        for (t, v) in s.iter_mut().enumerate().skip(onset) {
            let local = ((t - onset) as f64 / fs) % period;
            if local >= g.on_s {
                *v = 0.0;
            }
        }
    }
    Ok(s)
}

/// Generate a scene and its ground truth.
pub fn mix_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let len = spec.num_samples();
    if len < spec.frame.frame_len {
        return Err(Error::SignalTooShort {
            frame_len: spec.frame.frame_len,
            len,
        });
    }
    let geom = &spec.geometry;
    let channels = geom.num_mics();
    let source = build_source(spec, len)?;
    let direct = generate_point_source(geom, &spec.doa, &source, spec.sample_rate)?;
    let direct_power = mean_power(&direct);
    let reference = if direct_power > 0.0 { direct_power } else { 1.0 };

    let diffuse = match spec.diffuse_to_direct_db {
        Some(db) => {
            let field = generate_diffuse_field(
                geom,
                len,
                spec.sample_rate,
                spec.num_directions,
                spec.seed.wrapping_add(0x9E37_79B9),
            )?;
            field * (reference * db_to_power(db)).sqrt()
        }
        None => Array2::zeros((len, channels)),
    };
    let sensor = match spec.sensor_noise_db {
        Some(db) => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(0x7F4A_7C15));
            let scale = (reference * db_to_power(db)).sqrt();
            Array2::from_shape_fn((len, channels), |_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                v * scale
            })
        }
        None => Array2::zeros((len, channels)),
    };
    let mixture = &direct + &diffuse + &sensor;

    let truth = ground_truth(spec, &source, &direct, &diffuse)?;
    Ok(Scene {
        mixture,
        direct,
        diffuse,
        sensor,
        source,
        truth,
    })
}

fn db_to_power(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

fn ground_truth(spec: &SceneSpec, source: &[f64], direct: &Array2<f64>, diffuse: &Array2<f64>) -> Result<GroundTruth> {
    let params = &spec.frame;
    let d = analyze(direct.view(), params)?;
    let n = analyze(diffuse.view(), params)?;
    let (frames, bins, _) = d.data.dim();
    let pd = d.data.mapv(|v| v.norm_sqr()).mean_axis(Axis(2)).expect("channels > 0");
    let pn = n.data.mapv(|v| v.norm_sqr()).mean_axis(Axis(2)).expect("channels > 0");
    let ratio = |num: f64, den: f64| {
        if den > 0.0 {
            (num / den).clamp(0.0, spec.cdr_max)
        } else {
            spec.cdr_max
        }
    };
    let cdr = Array2::from_shape_fn((frames, bins), |(l, f)| ratio(pd[[l, f]], pn[[l, f]]));
    let sum_d = pd.sum_axis(Axis(0));
    let sum_n = pn.sum_axis(Axis(0));
    let cdr_per_bin = Array1::from_shape_fn(bins, |f| ratio(sum_d[f], sum_n[f]));
    let src = Array2::from_shape_vec((source.len(), 1), source.to_vec()).expect("shape");
    let source_stft = analyze(src.view(), params)?.channel(0);
    Ok(GroundTruth {
        cdr,
        cdr_per_bin,
        source_stft,
        doa: spec.doa,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::diffuse_coherence;
    use crate::stft::analyze;

    fn white(len: usize, seed: u64) -> Vec<f64> {
        white_noise(len, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn coincident_mics_copy_source() {
        let geom = ArrayGeometry::new_unchecked(vec![[0.0; 3]; 3], 343.0);
        let s = white(1000, 1);
        let x = generate_point_source(&geom, &DoA::from_degrees(40.0, 70.0), &s, 16000).unwrap();
        for ch in 0..3 {
            for t in 0..1000 {
                assert!((x[[t, ch]] - s[t]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn broadside_has_no_delay() {
        let geom = ArrayGeometry::linear(4, 0.05).unwrap();
        let s = white(2001, 2);
        let x = generate_point_source(&geom, &DoA::broadside(), &s, 16000).unwrap();
        for ch in 1..4 {
            for t in 0..2001 {
                assert!((x[[t, ch]] - x[[t, 0]]).abs() < 1e-12);
            }
        }
        assert!(generate_point_source(&geom, &DoA::broadside(), &[], 16000).is_err());
    }

    #[test]
    fn endfire_delay_by_cross_correlation() {
        // 0.343 m at 343 m/s is 1 ms = 16 samples; the mic nearer the source
        // (+x) leads.
        let geom = ArrayGeometry::new(vec![[0.0; 3], [0.343, 0.0, 0.0]], 343.0).unwrap();
        let s = white(8000, 3);
        let x = generate_point_source(&geom, &DoA::from_degrees(0.0, 90.0), &s, 16000).unwrap();
        let xcorr = |lag: i64| -> f64 {
            (100..7900)
                .map(|t| x[[t as usize, 1]] * x[[(t + lag) as usize, 0]])
                .sum()
        };
        let best = (-40..=40).max_by(|&a, &b| xcorr(a).total_cmp(&xcorr(b))).unwrap();
        assert_eq!(best, 16);
    }

    #[test]
    fn fibonacci_directions_are_balanced() {
        let dirs = fibonacci_directions(128);
        let mut mean = [0.0; 3];
        for d in &dirs {
            let u = d.unit_vector();
            for i in 0..3 {
                mean[i] += u[i] / 128.0;
            }
        }
        assert!(mean.iter().all(|v| v.abs() < 0.02), "{mean:?}");
    }

    fn coherence_curve(x: &Array2<f64>, frame: usize) -> Vec<Complex64> {
        let p = FrameParams::new(frame, 16000).unwrap();
        let spec = analyze(x.view(), &p).unwrap();
        (0..p.num_bins())
            .map(|f| {
                let (mut s01, mut s00, mut s11) = (Complex64::new(0.0, 0.0), 0.0, 0.0);
                for l in 0..spec.num_frames() {
                    let a = spec.data[[l, f, 0]];
                    let b = spec.data[[l, f, 1]];
                    s01 += a * b.conj();
                    s00 += a.norm_sqr();
                    s11 += b.norm_sqr();
                }
                s01 / (s00 * s11).sqrt()
            })
            .collect()
    }

    #[test]
    fn single_direction_is_fully_coherent() {
        let geom = ArrayGeometry::linear(2, 0.1).unwrap();
        let x = generate_diffuse_field(&geom, 16000, 16000, 1, 5).unwrap();
        // Long frames so the inter-mic delay barely biases the estimate. The
        // real-valued Nyquist bin cannot carry a fractional delay, so stay
        // below 7 kHz.
        let coh = coherence_curve(&x, 1024);
        for g in &coh[1..448] {
            assert!(g.norm() > 0.99, "{}", g.norm());
        }
        assert!((mean_power(&x) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coincident_pair_diffuse_coherence_is_one() {
        let geom = ArrayGeometry::new_unchecked(vec![[0.0; 3], [0.0; 3]], 343.0);
        let x = generate_diffuse_field(&geom, 16000, 16000, 32, 6).unwrap();
        let coh = coherence_curve(&x, 256);
        for g in &coh[1..coh.len() - 1] {
            assert!((g.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn diffuse_field_follows_sinc_model() {
        // Welch-averaged magnitude-squared coherence against sinc^2.
        let geom = ArrayGeometry::linear(2, 0.1).unwrap();
        let x = generate_diffuse_field(&geom, 160_000, 16000, 128, 7).unwrap();
        let coh = coherence_curve(&x, 256);
        let p = FrameParams::new(256, 16000).unwrap();
        let mut err = 0.0;
        let mut count = 0;
        for (f, g) in coh.iter().enumerate() {
            let hz = p.bin_frequency(f);
            if (100.0..=4000.0).contains(&hz) {
                err += (g.norm_sqr() - diffuse_coherence(0.1, hz, 343.0).powi(2)).abs();
                count += 1;
            }
        }
        let mae = err / count as f64;
        assert!(mae < 0.05, "MSC mean absolute error {mae}");
    }

    #[test]
    fn clean_scene_truth_is_capped() {
        let mut spec = SceneSpec::new(ArrayGeometry::linear(3, 0.05).unwrap(), DoA::broadside(), 0.5);
        spec.diffuse_to_direct_db = None;
        let scene = mix_scene(&spec).unwrap();
        assert!(scene.truth.cdr.iter().all(|&v| v == spec.cdr_max));
        assert_eq!(scene.mixture, scene.direct);
    }

    #[test]
    fn equal_power_scene_has_unit_cdr() {
        let spec = SceneSpec::new(ArrayGeometry::tablet_five(), DoA::from_degrees(30.0, 90.0), 4.0);
        let scene = mix_scene(&spec).unwrap();
        let realized = 10.0 * (mean_power(&scene.direct) / mean_power(&scene.diffuse)).log10();
        assert!(realized.abs() < 0.5);
        let bins = scene.truth.cdr_per_bin.len();
        for f in 8..bins - 8 {
            let db = 10.0 * scene.truth.cdr_per_bin[f].log10();
            assert!(db.abs() < 1.5, "bin {f}: {db} dB");
        }
    }

    #[test]
    fn power_calibration_and_determinism() {
        let mut spec = SceneSpec::new(ArrayGeometry::tablet_five(), DoA::from_degrees(200.0, 90.0), 2.0);
        spec.diffuse_to_direct_db = Some(-6.0);
        spec.sensor_noise_db = Some(-20.0);
        spec.source = SourceSignal::SpeechLike;
        spec.seed = 42;
        let a = mix_scene(&spec).unwrap();
        let b = mix_scene(&spec).unwrap();
        assert_eq!(a.mixture, b.mixture);
        let ddr = 10.0 * (mean_power(&a.diffuse) / mean_power(&a.direct)).log10();
        assert!((ddr + 6.0).abs() < 0.5);
        let snr = 10.0 * (mean_power(&a.sensor) / mean_power(&a.direct)).log10();
        assert!((snr + 20.0).abs() < 0.5);
    }

    #[test]
    fn onset_and_gate_silence_the_source() {
        let mut spec = SceneSpec::new(ArrayGeometry::linear(2, 0.05).unwrap(), DoA::broadside(), 3.0);
        spec.onset_s = 0.5;
        spec.gate = Some(Gate { on_s: 1.0, off_s: 0.5 });
        let scene = mix_scene(&spec).unwrap();
        assert!(scene.source[..8000].iter().all(|&v| v == 0.0));
        assert!(scene.source[8000..24000].iter().any(|&v| v != 0.0));
        assert!(scene.source[24000..32000].iter().all(|&v| v == 0.0));
        assert!(scene.source[32000..].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn invalid_specs() {
        let mut spec = SceneSpec::new(ArrayGeometry::linear(2, 0.05).unwrap(), DoA::broadside(), 0.0);
        assert!(mix_scene(&spec).is_err());
        spec.duration_s = 1.0;
        spec.diffuse_to_direct_db = Some(f64::NAN);
        assert!(mix_scene(&spec).is_err());
    }
}
