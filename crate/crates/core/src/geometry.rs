//! Array geometry, plane-wave propagation and spatial coherence models.
//!
//! Angles follow the usual array-processing convention: azimuth is measured
//! in the x-y plane from the x axis, elevation from the z axis, and
//! `(90 deg, 90 deg)` points along +y (broadside to an array laid out on the
//! x axis).

use std::f64::consts::PI;
use std::path::Path;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SPEED_OF_SOUND: f64 = 343.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    positions: Vec<[f64; 3]>,
    speed_of_sound: f64,
}

#[derive(Deserialize)]
struct GeometryFile {
    positions: Vec<[f64; 3]>,
    #[serde(default = "default_c")]
    speed_of_sound: f64,
}

fn default_c() -> f64 {
    DEFAULT_SPEED_OF_SOUND
}

impl ArrayGeometry {
    pub fn new(positions: Vec<[f64; 3]>, speed_of_sound: f64) -> Result<Self> {
        if positions.len() < 2 {
            return Err(Error::InvalidGeometry(format!(
                "need at least 2 microphones, got {}",
                positions.len()
            )));
        }
        if !(speed_of_sound.is_finite() && speed_of_sound > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "speed of sound must be positive, got {speed_of_sound}"
            )));
        }
        if positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGeometry("non-finite position".into()));
        }
        for n in 0..positions.len() {
            for m in n + 1..positions.len() {
                if distance(&positions[n], &positions[m]) <= 0.0 {
                    return Err(Error::InvalidGeometry(format!("microphones {n} and {m} coincide")));
                }
            }
        }
        Ok(Self {
            positions,
            speed_of_sound,
        })
    }

    /// Like [`ArrayGeometry::new`] but allows coincident microphones.
    ///
    /// Only useful for degenerate test scenes.
    pub fn new_unchecked(positions: Vec<[f64; 3]>, speed_of_sound: f64) -> Self {
        Self {
            positions,
            speed_of_sound,
        }
    }

    /// Uniform linear array on the x axis, centered at the origin.
    pub fn linear(num_mics: usize, spacing: f64) -> Result<Self> {
        let offset = (num_mics as f64 - 1.0) * spacing / 2.0;
        let positions = (0..num_mics).map(|n| [n as f64 * spacing - offset, 0.0, 0.0]).collect();
        Self::new(positions, DEFAULT_SPEED_OF_SOUND)
    }

    /// Five forward-facing microphones of a tablet-sized frame (20 cm x
    /// 19 cm), in the x-y plane and centered at the origin.
    pub fn tablet_five() -> Self {
        Self::new(
            vec![
                [-0.10, 0.095, 0.0],
                [0.10, 0.095, 0.0],
                [-0.10, -0.095, 0.0],
                [0.0, -0.095, 0.0],
                [0.10, -0.095, 0.0],
            ],
            DEFAULT_SPEED_OF_SOUND,
        )
        .expect("static geometry is valid")
    }

    /// Load from a TOML file with `positions = [[x, y, z], ...]` (meters) and
    /// an optional `speed_of_sound`.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: GeometryFile =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::new(file.positions, file.speed_of_sound)
    }

    pub fn num_mics(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn speed_of_sound(&self) -> f64 {
        self.speed_of_sound
    }

    pub fn distance(&self, n: usize, m: usize) -> f64 {
        distance(&self.positions[n], &self.positions[m])
    }

    /// `p_n - p_m`.
    pub fn baseline(&self, n: usize, m: usize) -> [f64; 3] {
        let (a, b) = (&self.positions[n], &self.positions[m]);
        [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
    }
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Direction of arrival, angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoA {
    pub azimuth: f64,
    pub elevation: f64,
}

impl DoA {
    /// Normalizes azimuth into `[0, 2 pi)` and clamps elevation to `[0, pi]`.
    pub fn new(azimuth: f64, elevation: f64) -> Self {
        Self {
            azimuth: azimuth.rem_euclid(2.0 * PI),
            elevation: elevation.clamp(0.0, PI),
        }
    }

    pub fn from_degrees(azimuth: f64, elevation: f64) -> Self {
        Self::new(azimuth.to_radians(), elevation.to_radians())
    }

    pub fn broadside() -> Self {
        Self::from_degrees(90.0, 90.0)
    }

    pub fn azimuth_deg(&self) -> f64 {
        self.azimuth.to_degrees()
    }

    pub fn elevation_deg(&self) -> f64 {
        self.elevation.to_degrees()
    }

    /// Unit vector pointing from the array towards the source.
    pub fn unit_vector(&self) -> [f64; 3] {
        let (st, ct) = self.elevation.sin_cos();
        let (sp, cp) = self.azimuth.sin_cos();
        [st * cp, st * sp, ct]
    }
}

/// Wavevector `k = -(2 pi f / c) u` of a plane wave arriving from `doa`.
pub fn wavevector(doa: &DoA, f: f64, c: f64) -> [f64; 3] {
    let scale = -2.0 * PI * f / c;
    let u = doa.unit_vector();
    [scale * u[0], scale * u[1], scale * u[2]]
}

/// Free-field steering vector `h_n = exp(-j k^T p_n)`.
pub fn steering_vector(geom: &ArrayGeometry, doa: &DoA, f: f64) -> Array1<Complex64> {
    let k = wavevector(doa, f, geom.speed_of_sound);
    geom.positions
        .iter()
        .map(|p| Complex64::from_polar(1.0, -dot(&k, p)))
        .collect()
}

/// Unnormalized sinc, `sin(x) / x`.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Coherence of a spherically isotropic field between two omnidirectional
/// microphones `d` meters apart.
pub fn diffuse_coherence(d: f64, f: f64, c: f64) -> f64 {
    sinc(2.0 * PI * f * d / c)
}

/// Coherence of a single plane wave with time difference of arrival `tdoa`.
pub fn direct_coherence(tdoa: f64, f: f64) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * f * tdoa)
}

/// Diffuse-field coherence matrix restricted to the active channels.
pub fn diffuse_coherence_matrix(geom: &ArrayGeometry, f: f64, mask: &ChannelMask) -> Result<Array2<f64>> {
    let active = mask.active_indices();
    if active.len() < 2 {
        return Err(Error::TooFewChannels(active.len()));
    }
    let n = active.len();
    let mut j = Array2::<f64>::eye(n);
    for a in 0..n {
        for b in a + 1..n {
            let v = diffuse_coherence(geom.distance(active[a], active[b]), f, geom.speed_of_sound);
            j[[a, b]] = v;
            j[[b, a]] = v;
        }
    }
    Ok(j)
}

/// Which microphones take part in processing. Failing microphones are
/// excluded by clearing their flag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelMask(Vec<bool>);

impl ChannelMask {
    pub fn all(n: usize) -> Self {
        Self(vec![true; n])
    }

    pub fn from_flags(flags: Vec<bool>) -> Self {
        Self(flags)
    }

    /// All of `n` channels except those listed.
    pub fn excluding(n: usize, excluded: &[usize]) -> Result<Self> {
        let mut flags = vec![true; n];
        for &e in excluded {
            if e >= n {
                return Err(Error::InvalidParameter(format!(
                    "excluded channel {e} out of range (have {n})"
                )));
            }
            flags[e] = false;
        }
        Ok(Self(flags))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_active(&self, n: usize) -> bool {
        self.0.get(n).copied().unwrap_or(false)
    }

    pub fn active_indices(&self) -> Vec<usize> {
        self.0.iter().enumerate().filter_map(|(i, &a)| a.then_some(i)).collect()
    }

    pub fn num_active(&self) -> usize {
        self.0.iter().filter(|&&a| a).count()
    }

    /// Unordered pairs `(n, m)`, `n < m`, of active channels.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let active = self.active_indices();
        let mut out = Vec::with_capacity(active.len() * active.len().saturating_sub(1) / 2);
        for (i, &n) in active.iter().enumerate() {
            for &m in &active[i + 1..] {
                out.push((n, m));
            }
        }
        out
    }

    pub fn flags(&self) -> &[bool] {
        &self.0
    }
}
