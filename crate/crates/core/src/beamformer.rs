//! MVDR beamformer.
//!
//! Weights minimize `w^H S_nn w` subject to `w^H d = 1`. The noise covariance
//! is diagonally loaded by `delta * tr(S_nn) / N` before solving.

use ndarray::{s, Array1, Array2, ArrayView2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{steering_vector, ArrayGeometry, ChannelMask, DoA};
use crate::linalg::{cholesky, cholesky_solve};
use crate::spectral::NoiseCovariance;
use crate::stft::{FrameParams, MultichannelSpectrum};

pub const DEFAULT_LOADING: f64 = 1e-3;

/// Per-bin weights over the active channels of `mask`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerWeights {
    /// `[bins x active channels]`.
    pub w: Array2<Complex64>,
    pub mask: ChannelMask,
    pub doa: Option<DoA>,
}

impl BeamformerWeights {
    pub fn num_bins(&self) -> usize {
        self.w.nrows()
    }

    pub fn active(&self) -> Vec<usize> {
        self.mask.active_indices()
    }

    /// Weights of bin `f`, expanded to all channels (zeros for masked ones).
    pub fn full(&self, f: usize) -> Array1<Complex64> {
        let mut out = Array1::zeros(self.mask.len());
        for (a, n) in self.active().into_iter().enumerate() {
            out[n] = self.w[[f, a]];
        }
        out
    }

    /// Delay-and-sum weights `d / N` for a look direction.
    pub fn delay_and_sum(geom: &ArrayGeometry, doa: DoA, params: &FrameParams, mask: &ChannelMask) -> Result<Self> {
        let active = mask.active_indices();
        if active.len() < 2 {
            return Err(Error::TooFewChannels(active.len()));
        }
        let scale = 1.0 / active.len() as f64;
        let mut w = Array2::zeros((params.num_bins(), active.len()));
        for f in 0..params.num_bins() {
            let d = steering_vector(geom, &doa, params.bin_frequency(f));
            for (a, &n) in active.iter().enumerate() {
                w[[f, a]] = d[n] * scale;
            }
        }
        Ok(Self {
            w,
            mask: mask.clone(),
            doa: Some(doa),
        })
    }
}

/// Steering vectors `[bins x N]` for a look direction.
pub fn steering_matrix(geom: &ArrayGeometry, doa: &DoA, params: &FrameParams) -> Array2<Complex64> {
    let mut d = Array2::zeros((params.num_bins(), geom.num_mics()));
    for f in 0..params.num_bins() {
        d.row_mut(f)
            .assign(&steering_vector(geom, doa, params.bin_frequency(f)));
    }
    d
}

/// MVDR weights for steering vectors `steering` (`[bins x N]`).
///
/// `loading` is the relative diagonal loading; with `loading == 0` a singular
/// covariance is an error. Bins whose active covariance is entirely zero fall
/// back to delay-and-sum when loading is enabled.
pub fn mvdr_weights(
    cov: &NoiseCovariance,
    steering: ArrayView2<'_, Complex64>,
    loading: f64,
) -> Result<BeamformerWeights> {
    let mask = &cov.mask;
    let active = mask.active_indices();
    if active.len() < 2 {
        return Err(Error::TooFewChannels(active.len()));
    }
    let (bins, channels) = steering.dim();
    if bins != cov.num_bins() || channels != mask.len() {
        return Err(Error::DimensionMismatch(format!(
            "steering is {bins}x{channels}, covariance is {}x{}",
            cov.num_bins(),
            mask.len()
        )));
    }
    if !(loading >= 0.0 && loading.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "diagonal loading must be >= 0, got {loading}"
        )));
    }

    let na = active.len();
    let mut w = Array2::<Complex64>::zeros((bins, na));
    let mut r = Array2::<Complex64>::zeros((na, na));
    let mut d = Array1::<Complex64>::zeros(na);
    for f in 0..bins {
        let s_nn = cov.matrix(f);
        for (a, &n) in active.iter().enumerate() {
            d[a] = steering[[f, n]];
            for (b, &m) in active.iter().enumerate() {
                r[[a, b]] = s_nn[[n, m]];
            }
        }
        let trace: f64 = (0..na).map(|a| r[[a, a]].re).sum();
        if trace <= 0.0 {
            if loading == 0.0 {
                return Err(Error::SingularCovariance { bin: f });
            }
            r.fill(Complex64::new(0.0, 0.0));
            r.diag_mut().fill(Complex64::new(1.0, 0.0));
        } else {
            let load = loading * trace / na as f64;
            for a in 0..na {
                r[[a, a]] += load;
            }
        }
        let l = cholesky(r.view(), 1e-12).ok_or(Error::SingularCovariance { bin: f })?;
        let z = cholesky_solve(&l, d.view());
        let denom: Complex64 = d.iter().zip(z.iter()).map(|(di, zi)| di.conj() * zi).sum();
        // d^H R^-1 d is real and positive for Hermitian positive definite R.
        let denom = denom.re;
        if !(denom > 0.0 && denom.is_finite()) {
            return Err(Error::SingularCovariance { bin: f });
        }
        w.slice_mut(s![f, ..]).assign(&z.mapv(|v| v / denom));
    }
    Ok(BeamformerWeights {
        w,
        mask: mask.clone(),
        doa: None,
    })
}

/// MVDR weights steered at `doa`.
pub fn mvdr_for_doa(
    cov: &NoiseCovariance,
    geom: &ArrayGeometry,
    doa: DoA,
    params: &FrameParams,
    loading: f64,
) -> Result<BeamformerWeights> {
    let steering = steering_matrix(geom, &doa, params);
    let mut weights = mvdr_weights(cov, steering.view(), loading)?;
    weights.doa = Some(doa);
    Ok(weights)
}

/// `Y_BF(l, f) = w^H(f) x(l, f)`.
pub fn apply_weights(weights: &BeamformerWeights, spectrum: &MultichannelSpectrum) -> Result<Array2<Complex64>> {
    let (frames, bins, channels) = spectrum.data.dim();
    if channels != weights.mask.len() || bins != weights.num_bins() {
        return Err(Error::DimensionMismatch(format!(
            "spectrum has {bins} bins x {channels} channels, weights expect {} x {}",
            weights.num_bins(),
            weights.mask.len()
        )));
    }
    let active = weights.active();
    let mut y = Array2::<Complex64>::zeros((frames, bins));
    for l in 0..frames {
        for f in 0..bins {
            let mut acc = Complex64::new(0.0, 0.0);
            for (a, &n) in active.iter().enumerate() {
                acc += weights.w[[f, a]].conj() * spectrum.data[[l, f, n]];
            }
            y[[l, f]] = acc;
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::quadratic_form;
    use ndarray::{Array3, Axis};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn cov_from(mats: Vec<Array2<Complex64>>, mask: ChannelMask) -> NoiseCovariance {
        let n = mats[0].nrows();
        let mut s_nn = Array3::zeros((mats.len(), n, n));
        for (f, m) in mats.into_iter().enumerate() {
            s_nn.index_axis_mut(Axis(0), f).assign(&m);
        }
        NoiseCovariance {
            s_nn,
            context_frames: 1,
            mask,
        }
    }

    fn random_hpd(rng: &mut ChaCha8Rng, n: usize) -> Array2<Complex64> {
        let b = Array2::from_shape_fn((n, n + 1), |_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        b.dot(&b.t().mapv(|v| v.conj()))
    }

    fn unit_phases(rng: &mut ChaCha8Rng, n: usize) -> Array2<Complex64> {
        Array2::from_shape_fn((1, n), |_| {
            Complex64::from_polar(1.0, rng.random::<f64>() * std::f64::consts::TAU)
        })
    }

    #[test]
    fn identity_covariance_gives_delay_and_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = unit_phases(&mut rng, 4);
        let cov = cov_from(vec![Array2::eye(4)], ChannelMask::all(4));
        let w = mvdr_weights(&cov, d.view(), 0.0).unwrap();
        for a in 0..4 {
            assert!((w.w[[0, a]] - d[[0, a]] / 4.0).norm() < 1e-14);
        }
    }

    #[test]
    fn two_mic_hand_inversion() {
        let s = Array2::from_shape_vec((2, 2), vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(4.0, 0.0)]).unwrap();
        let cov = cov_from(vec![s], ChannelMask::all(2));
        let d = Array2::from_elem((1, 2), c(1.0, 0.0));
        let w = mvdr_weights(&cov, d.view(), 0.0).unwrap();
        assert!((w.w[[0, 0]] - 0.8).norm() < 1e-14);
        assert!((w.w[[0, 1]] - 0.2).norm() < 1e-14);
    }

    #[test]
    fn singular_without_loading_is_error() {
        let v = [c(1.0, 0.0), c(0.0, 1.0), c(1.0, 1.0)];
        let s = Array2::from_shape_fn((3, 3), |(i, j)| v[i] * v[j].conj());
        let cov = cov_from(vec![s], ChannelMask::all(3));
        let d = Array2::from_elem((1, 3), c(1.0, 0.0));
        assert!(matches!(
            mvdr_weights(&cov, d.view(), 0.0),
            Err(Error::SingularCovariance { bin: 0 })
        ));
        let w = mvdr_weights(&cov, d.view(), 1e-3).unwrap();
        let resp: Complex64 = (0..3).map(|a| w.w[[0, a]].conj() * d[[0, a]]).sum();
        assert!((resp - 1.0).norm() < 1e-8);

        let zero = cov_from(vec![Array2::zeros((3, 3))], ChannelMask::all(3));
        assert!(mvdr_weights(&zero, d.view(), 0.0).is_err());
        let w = mvdr_weights(&zero, d.view(), 1e-3).unwrap();
        assert!((w.w[[0, 1]] - 1.0 / 3.0).norm() < 1e-14);
    }

    #[test]
    fn masked_channel_is_ignored() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let geom = ArrayGeometry::tablet_five();
        let params = FrameParams::new(64, 16000).unwrap();
        let mask = ChannelMask::excluding(5, &[2]).unwrap();
        let mats: Vec<_> = (0..params.num_bins()).map(|_| random_hpd(&mut rng, 5)).collect();
        let cov = cov_from(mats, mask.clone());
        let w = mvdr_for_doa(&cov, &geom, DoA::from_degrees(30.0, 90.0), &params, 1e-3).unwrap();
        assert_eq!(w.w.ncols(), 4);
        assert_eq!(w.full(3)[2], c(0.0, 0.0));

        let mut data = Array3::from_shape_fn((6, params.num_bins(), 5), |_| c(rng.random(), rng.random()));
        let spec = MultichannelSpectrum {
            data: data.clone(),
            params,
        };
        let y1 = apply_weights(&w, &spec).unwrap();
        data.slice_mut(s![.., .., 2]).fill(c(0.0, 0.0));
        let y2 = apply_weights(&w, &MultichannelSpectrum { data, params }).unwrap();
        assert_eq!(y1, y2);
    }

    #[test]
    fn apply_plane_wave_and_zero() {
        let geom = ArrayGeometry::tablet_five();
        let params = FrameParams::new(64, 16000).unwrap();
        let doa = DoA::from_degrees(120.0, 90.0);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mats: Vec<_> = (0..params.num_bins()).map(|_| random_hpd(&mut rng, 5)).collect();
        let cov = cov_from(mats, ChannelMask::all(5));
        let w = mvdr_for_doa(&cov, &geom, doa, &params, 1e-3).unwrap();
        let d = steering_matrix(&geom, &doa, &params);
        let src = Array2::from_shape_fn((4, params.num_bins()), |_| {
            c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let data = Array3::from_shape_fn((4, params.num_bins(), 5), |(l, f, n)| d[[f, n]] * src[[l, f]]);
        let y = apply_weights(&w, &MultichannelSpectrum { data, params }).unwrap();
        for (a, b) in y.iter().zip(src.iter()) {
            assert!((a - b).norm() <= 1e-6 * b.norm().max(1e-12));
        }
        let zero = MultichannelSpectrum {
            data: Array3::zeros((2, params.num_bins(), 5)),
            params,
        };
        assert!(apply_weights(&w, &zero).unwrap().iter().all(|v| v.norm() == 0.0));
        let wrong = MultichannelSpectrum {
            data: Array3::zeros((2, params.num_bins(), 4)),
            params,
        };
        assert!(apply_weights(&w, &wrong).is_err());
    }

    #[test]
    fn delay_and_sum_on_equal_channels() {
        let geom = ArrayGeometry::linear(2, 0.1).unwrap();
        let params = FrameParams::new(32, 16000).unwrap();
        let mask = ChannelMask::all(2);
        let w = BeamformerWeights::delay_and_sum(&geom, DoA::broadside(), &params, &mask).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let common = Array2::from_shape_fn((3, params.num_bins()), |_| c(rng.random(), rng.random()));
        let data = Array3::from_shape_fn((3, params.num_bins(), 2), |(l, f, _)| common[[l, f]]);
        let y = apply_weights(&w, &MultichannelSpectrum { data, params }).unwrap();
        for (a, b) in y.iter().zip(common.iter()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn distortionless_for_random_covariances(seed in any::<u64>(), n in 2usize..7, loading in prop_oneof![Just(0.0), 1e-6f64..1e-1]) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cov = cov_from(vec![random_hpd(&mut rng, n)], ChannelMask::all(n));
            let d = unit_phases(&mut rng, n);
            let w = mvdr_weights(&cov, d.view(), loading).unwrap();
            let resp: Complex64 = (0..n).map(|a| w.w[[0, a]].conj() * d[[0, a]]).sum();
            prop_assert!((resp - 1.0).norm() < 1e-8);
            prop_assert!(w.w.iter().all(|v| v.re.is_finite() && v.im.is_finite()));
        }

        #[test]
        fn minimum_noise_power(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_hpd(&mut rng, 3);
            let cov = cov_from(vec![s.clone()], ChannelMask::all(3));
            let d = unit_phases(&mut rng, 3);
            let w = mvdr_weights(&cov, d.view(), 0.0).unwrap();
            let w0 = w.w.row(0).to_owned();
            let p0 = quadratic_form(s.view(), w0.view()).re;
            let dv = d.row(0).to_owned();
            for _ in 0..200 {
                // Perturb along the constraint's null space: v^H d = 0.
                let v = Array1::from_shape_fn(3, |_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
                let proj: Complex64 = dv.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum::<Complex64>() / 3.0;
                let v = &v - &dv.mapv(|x| x * proj);
                let alt = &w0 + &v;
                let p = quadratic_form(s.view(), alt.view()).re;
                prop_assert!(p0 <= p * (1.0 + 1e-12));
            }
        }
    }
}
