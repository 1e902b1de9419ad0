//! SRP-PHAT grid search for the look direction.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wavevector, ArrayGeometry, ChannelMask, DoA};
use crate::stft::MultichannelSpectrum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoAGrid {
    /// Candidate azimuths, degrees.
    pub azimuths: Vec<f64>,
    /// Candidate elevations, degrees.
    pub elevations: Vec<f64>,
}

impl Default for DoAGrid {
    /// Azimuth 0..355 deg in 5 deg steps at elevation 90 deg.
    fn default() -> Self {
        Self::azimuth_scan(5.0, 90.0).expect("default grid is valid")
    }
}

impl DoAGrid {
    pub fn new(azimuths: Vec<f64>, elevations: Vec<f64>) -> Result<Self> {
        if azimuths.is_empty() || elevations.is_empty() {
            return Err(Error::InvalidGrid("grid must not be empty".into()));
        }
        if azimuths.iter().chain(&elevations).any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("non-finite angle".into()));
        }
        Ok(Self { azimuths, elevations })
    }

    /// Full azimuth circle at one elevation.
    pub fn azimuth_scan(step_deg: f64, elevation_deg: f64) -> Result<Self> {
        if !(step_deg > 0.0 && step_deg <= 360.0) {
            return Err(Error::InvalidGrid(format!("step must be in (0, 360], got {step_deg}")));
        }
        let count = (360.0 / step_deg).round() as usize;
        let azimuths = (0..count.max(1)).map(|i| i as f64 * step_deg).collect();
        Self::new(azimuths, vec![elevation_deg])
    }

    /// Regular grid over azimuth and elevation.
    pub fn regular(az_step_deg: f64, el_step_deg: f64) -> Result<Self> {
        if el_step_deg.is_nan() || el_step_deg <= 0.0 {
            return Err(Error::InvalidGrid(format!("step must be > 0, got {el_step_deg}")));
        }
        let mut grid = Self::azimuth_scan(az_step_deg, 0.0)?;
        let count = (180.0 / el_step_deg).floor() as usize;
        grid.elevations = (0..=count).map(|i| i as f64 * el_step_deg).collect();
        Ok(grid)
    }

    pub fn len(&self) -> usize {
        self.azimuths.len() * self.elevations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Candidates in elevation-major order.
    pub fn candidates(&self) -> Vec<DoA> {
        self.elevations
            .iter()
            .flat_map(|&el| self.azimuths.iter().map(move |&az| DoA::from_degrees(az, el)))
            .collect()
    }

    /// Smallest azimuth step, degrees (360 for a single azimuth).
    pub fn azimuth_step(&self) -> f64 {
        if self.azimuths.len() < 2 {
            return 360.0;
        }
        let mut sorted = self.azimuths.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone)]
pub struct SrpPhatResult {
    pub doa: DoA,
    /// Index of `doa` in [`DoAGrid::candidates`].
    pub index: usize,
    /// Score per candidate, `[elevations x azimuths]`.
    pub scores: Array2<f64>,
    /// Number of (pair, frame, bin) terms that entered the score.
    pub terms: usize,
}

/// Steered response power with phase transform.
///
/// `freq_range` limits the bins that are scored, in Hz. Ties go to the lowest
/// candidate index.
pub fn srp_phat(
    spectrum: &MultichannelSpectrum,
    geom: &ArrayGeometry,
    grid: &DoAGrid,
    mask: &ChannelMask,
    freq_range: (f64, f64),
) -> Result<SrpPhatResult> {
    let (frames, bins, channels) = spectrum.data.dim();
    if channels != geom.num_mics() || mask.len() != channels {
        return Err(Error::DimensionMismatch(format!(
            "spectrum has {channels} channels, geometry {}, mask {}",
            geom.num_mics(),
            mask.len()
        )));
    }
    if mask.num_active() < 2 {
        return Err(Error::TooFewChannels(mask.num_active()));
    }
    if frames == 0 {
        return Err(Error::EmptySignal);
    }
    if grid.is_empty() {
        return Err(Error::InvalidGrid("grid must not be empty".into()));
    }

    let params = &spectrum.params;
    let scored_bins: Vec<usize> = (0..bins)
        .filter(|&f| {
            let hz = params.bin_frequency(f);
            hz >= freq_range.0 && hz <= freq_range.1
        })
        .collect();
    let pairs = mask.pairs();

    // PHAT-weighted cross spectra summed over frames; the steering term does
    // not depend on the frame.
    let mut phat = Array2::<Complex64>::zeros((pairs.len(), scored_bins.len()));
    let mut terms = 0usize;
    for (p, &(n, m)) in pairs.iter().enumerate() {
        for (i, &f) in scored_bins.iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for l in 0..frames {
                let cross = spectrum.data[[l, f, n]] * spectrum.data[[l, f, m]].conj();
                let mag = cross.norm();
                if mag > 0.0 && mag.is_finite() {
                    acc += cross / mag;
                    terms += 1;
                }
            }
            phat[[p, i]] = acc;
        }
    }
    if terms == 0 {
        return Err(Error::NoPhaseInformation);
    }

    let baselines: Vec<[f64; 3]> = pairs.iter().map(|&(n, m)| geom.baseline(n, m)).collect();
    let freqs: Vec<f64> = scored_bins.iter().map(|&f| params.bin_frequency(f)).collect();
    let c = geom.speed_of_sound();
    let candidates = grid.candidates();
    let scores: Vec<f64> = candidates
        .par_iter()
        .map(|doa| {
            let mut score = 0.0;
            for (i, &hz) in freqs.iter().enumerate() {
                let k = wavevector(doa, hz, c);
                for (p, b) in baselines.iter().enumerate() {
                    let phase = k[0] * b[0] + k[1] * b[1] + k[2] * b[2];
                    score += (phat[[p, i]] * Complex64::from_polar(1.0, phase)).re;
                }
            }
            score
        })
        .collect();

    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    let scores = Array2::from_shape_vec((grid.elevations.len(), grid.azimuths.len()), scores)
        .expect("candidate count matches grid shape");
    Ok(SrpPhatResult {
        doa: candidates[best],
        index: best,
        scores,
        terms,
    })
}

/// Absolute azimuth difference on the circle, degrees.
pub fn azimuth_error_deg(a: &DoA, b: &DoA) -> f64 {
    let d = (a.azimuth - b.azimuth).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d).to_degrees()
}
