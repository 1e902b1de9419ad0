//! End-to-end front-end: STFT, look direction, MVDR, CDR postfilter, ISTFT.

mod batch;
mod config;
pub mod export;
pub mod wav;

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use ndarray::{Array2, Axis};
use num_complex::Complex64;
use serde::Serialize;

pub use batch::{run_batch, BatchReport, Manifest, Utterance, UtteranceOutcome};
pub use config::{
    BeamformerConfig, DoaMode, ExportConfig, GeometrySource, NoiseContext, PipelineConfig, PostfilterConfig,
};

use crate::beamformer::{apply_weights, mvdr_for_doa, BeamformerWeights};
use crate::cdr::{estimate_input_cdr, CdrEstimate, CorrectionFactor};
use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, ChannelMask, DoA};
use crate::localization::{srp_phat, SrpPhatResult};
use crate::postfilter::{apply_gain, GainMask};
use crate::spectral::estimate_noise_covariance;
use crate::stft::{analyze, synthesize, FrameParams, MultichannelSpectrum};

#[derive(Debug, Clone, Serialize)]
pub struct StageTiming {
    pub stage: &'static str,
    pub ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DoaSource {
    Fixed,
    SrpPhat,
}

/// Intermediate and final signals of one pipeline run.
#[derive(Debug, Clone)]
pub struct Enhanced {
    /// Enhanced time signal, same length as the input.
    pub output: Vec<f64>,
    /// Beamformer output spectrum `[frames x bins]`.
    pub y_bf: Array2<Complex64>,
    /// Postfiltered spectrum `[frames x bins]`.
    pub y: Array2<Complex64>,
    pub gains: GainMask,
    /// Input-side CDR; `None` when the postfilter is disabled.
    pub cdr_in: Option<CdrEstimate>,
    /// CDR and diffuseness at the beamformer output.
    pub cdr_bf: Option<CdrEstimate>,
    pub correction: Option<CorrectionFactor>,
    pub weights: BeamformerWeights,
    pub doa: DoA,
    pub doa_source: DoaSource,
    pub srp: Option<SrpPhatResult>,
    pub mask: ChannelMask,
    /// Frame range `[start, end)` used for the noise covariance.
    pub context_frames: (usize, usize),
    pub timings: Vec<StageTiming>,
}

/// Frames lying entirely within `[start_s, end_s)`. Falls back to frames
/// starting in the interval when it is shorter than one frame.
pub fn context_frame_range(
    params: &FrameParams,
    num_samples: usize,
    (start_s, end_s): (f64, f64),
) -> Result<(usize, usize)> {
    let fs = params.sample_rate as f64;
    let duration = num_samples as f64 / fs;
    let slack = 0.5 / fs;
    if !(start_s >= -slack && end_s <= duration + slack && start_s < end_s) {
        return Err(Error::ContextOutOfBounds {
            start: start_s,
            end: end_s,
            duration,
        });
    }
    let s0 = (start_s * fs).round().max(0.0) as usize;
    let s1 = ((end_s * fs).round() as usize).min(num_samples);
    let frames = params.num_frames(num_samples);
    let first = s0.div_ceil(params.hop);
    let mut last = first;
    while last < frames && last * params.hop + params.frame_len <= s1 {
        last += 1;
    }
    if last == first {
        while last < frames && last * params.hop < s1 {
            last += 1;
        }
    }
    if last == first {
        return Err(Error::EmptyContext);
    }
    Ok((first, last))
}

struct Timer {
    start: Instant,
    stages: Vec<StageTiming>,
}

impl Timer {
    fn new() -> Self {
        Self {
            start: Instant::now(),
            stages: Vec::new(),
        }
    }

    fn lap(&mut self, stage: &'static str) {
        let now = Instant::now();
        self.stages.push(StageTiming {
            stage,
            ms: (now - self.start).as_secs_f64() * 1e3,
        });
        self.start = now;
    }
}

/// Run the front-end on an in-memory signal `[samples x channels]`.
pub fn enhance(config: &PipelineConfig, signal: &Array2<f64>, sample_rate: u32) -> Result<Enhanced> {
    let geom = config.validate()?;
    enhance_with_geometry(config, &geom, signal, sample_rate)
}

fn enhance_with_geometry(
    config: &PipelineConfig,
    geom: &ArrayGeometry,
    signal: &Array2<f64>,
    sample_rate: u32,
) -> Result<Enhanced> {
    if sample_rate != config.sample_rate {
        return Err(Error::SampleRateMismatch {
            expected: config.sample_rate,
            found: sample_rate,
        });
    }
    let (num_samples, channels) = signal.dim();
    if channels < 2 {
        return Err(Error::TooFewChannels(channels));
    }
    if channels != geom.num_mics() {
        return Err(Error::DimensionMismatch(format!(
            "signal has {channels} channels, geometry has {} microphones",
            geom.num_mics()
        )));
    }
    let params = config.frame_params()?;
    let mask = config.channel_mask(channels)?;
    let mut timer = Timer::new();

    let spectrum = analyze(signal.view(), &params)?;
    timer.lap("stft");

    let (doa, doa_source, srp) = match &config.doa {
        DoaMode::Fixed { azimuth, elevation } => (DoA::from_degrees(*azimuth, *elevation), DoaSource::Fixed, None),
        mode @ DoaMode::SrpPhat { f_min, f_max, .. } => {
            let grid = mode.grid()?.expect("srp-phat mode has a grid");
            let res = srp_phat(&spectrum, geom, &grid, &mask, (*f_min, *f_max))?;
            info!(
                "srp-phat look direction: azimuth {:.1} deg, elevation {:.1} deg",
                res.doa.azimuth_deg(),
                res.doa.elevation_deg()
            );
            (res.doa, DoaSource::SrpPhat, Some(res))
        }
    };
    timer.lap("doa");

    let context_frames = context_frame_range(&params, num_samples, config.noise_context.interval())?;
    let weights = if config.beamformer.enabled {
        let context: MultichannelSpectrum = spectrum.frames(context_frames.0, context_frames.1);
        let cov = estimate_noise_covariance(&context, &mask)?;
        mvdr_for_doa(&cov, geom, doa, &params, config.beamformer.loading)?
    } else {
        reference_weights(&mask, config.beamformer.reference_channel, params.num_bins())?
    };
    let y_bf = apply_weights(&weights, &spectrum)?;
    timer.lap("beamformer");

    let (gains, cdr_in, cdr_bf, correction) = if config.postfilter.enabled {
        let cdr_params = config.cdr_params();
        let cdr_in = estimate_input_cdr(&spectrum, geom, &mask, &cdr_params)?;
        let correction = CorrectionFactor::compute(&weights, geom, &params)?;
        let cdr_bf = cdr_in.at_beamformer_output(&correction, cdr_params.cdr_max)?;
        timer.lap("cdr");
        let gains = GainMask::from_snr(&cdr_bf.cdr, &config.postfilter.params());
        (gains, Some(cdr_in), Some(cdr_bf), Some(correction))
    } else {
        (GainMask::unity(y_bf.nrows(), y_bf.ncols()), None, None, None)
    };
    let y = apply_gain(&y_bf, &gains)?;
    timer.lap("postfilter");

    let mut output = synthesize(y.view(), &params)?;
    output.truncate(num_samples);
    timer.lap("istft");

    Ok(Enhanced {
        output,
        y_bf,
        y,
        gains,
        cdr_in,
        cdr_bf,
        correction,
        weights,
        doa,
        doa_source,
        srp,
        mask,
        context_frames,
        timings: timer.stages,
    })
}

/// Unit weight on one channel, used when beamforming is disabled.
fn reference_weights(mask: &ChannelMask, reference: usize, bins: usize) -> Result<BeamformerWeights> {
    let active = mask.active_indices();
    let pos = active
        .iter()
        .position(|&n| n == reference)
        .ok_or_else(|| Error::InvalidParameter(format!("reference channel {reference} is excluded")))?;
    let mut w = Array2::zeros((bins, active.len()));
    w.column_mut(pos).fill(Complex64::new(1.0, 0.0));
    Ok(BeamformerWeights {
        w,
        mask: mask.clone(),
        doa: None,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DoaReport {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub source: DoaSource,
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrectionSummary {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub input: PathBuf,
    pub output: PathBuf,
    pub sample_rate: u32,
    pub num_samples: usize,
    pub num_channels: usize,
    pub active_channels: Vec<usize>,
    pub num_frames: usize,
    pub context_frames: (usize, usize),
    pub doa: DoaReport,
    pub a_gamma: Option<CorrectionSummary>,
    pub mean_diffuseness: Option<f64>,
    pub exports: Vec<PathBuf>,
    pub timings: Vec<StageTiming>,
}

/// Enhance one WAV file and write the mono result plus requested exports.
pub fn run(config: &PipelineConfig, input: impl AsRef<Path>, output: impl AsRef<Path>) -> Result<Report> {
    let (input, output) = (input.as_ref(), output.as_ref());
    let geom = config.validate()?;
    let (signal, sample_rate) = wav::read_wav(input)?;
    let enhanced = enhance_with_geometry(config, &geom, &signal, sample_rate)?;
    wav::write_mono(output, &enhanced.output, sample_rate)?;
    let exports = write_exports(config, output, &enhanced)?;
    info!(
        "{} -> {} ({} frames)",
        input.display(),
        output.display(),
        enhanced.y.nrows()
    );

    Ok(Report {
        input: input.to_path_buf(),
        output: output.to_path_buf(),
        sample_rate,
        num_samples: signal.nrows(),
        num_channels: signal.ncols(),
        active_channels: enhanced.mask.active_indices(),
        num_frames: enhanced.y.nrows(),
        context_frames: enhanced.context_frames,
        doa: DoaReport {
            azimuth_deg: enhanced.doa.azimuth_deg(),
            elevation_deg: enhanced.doa.elevation_deg(),
            source: enhanced.doa_source,
        },
        a_gamma: enhanced.correction.as_ref().map(|c| CorrectionSummary {
            min: c.min(),
            mean: c.mean(),
            max: c.max(),
        }),
        mean_diffuseness: enhanced.cdr_bf.as_ref().and_then(|c| c.diffuseness.mean()),
        exports,
        timings: enhanced.timings,
    })
}

fn write_exports(config: &PipelineConfig, output: &Path, enhanced: &Enhanced) -> Result<Vec<PathBuf>> {
    let ex = &config.export;
    if !ex.any() {
        return Ok(Vec::new());
    }
    let dir = match &ex.dir {
        Some(d) => d.clone(),
        None => output.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let stem = output.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let mut written = Vec::new();
    let mut put = |suffix: &str, m: &Array2<f64>| -> Result<()> {
        let path = dir.join(format!("{stem}.{suffix}.txt"));
        export::write_matrix(&path, m.view(), Some(suffix))?;
        written.push(path);
        Ok(())
    };
    if ex.beamformer_spectrogram {
        put("ybf_db", &export::magnitude_db(&enhanced.y_bf))?;
    }
    if ex.output_spectrogram {
        put("y_db", &export::magnitude_db(&enhanced.y))?;
    }
    if ex.diffuseness {
        match &enhanced.cdr_bf {
            Some(c) => put("diffuseness", &c.diffuseness)?,
            None => warn!("diffuseness export skipped: postfilter is disabled"),
        }
    }
    if ex.gains {
        put("gains", &enhanced.gains.g)?;
    }
    if ex.pseudo_spectrum {
        match &enhanced.srp {
            Some(srp) => put("srp", &srp.scores)?,
            None => warn!("pseudo-spectrum export skipped: look direction is fixed"),
        }
    }
    Ok(written)
}

/// Mean over frames of `m` where `select[l]` holds.
pub fn mean_over_frames(m: &Array2<f64>, select: impl Fn(usize) -> bool) -> Option<f64> {
    let rows: Vec<f64> = m
        .axis_iter(Axis(0))
        .enumerate()
        .filter(|(l, _)| select(*l))
        .flat_map(|(_, r)| r.to_vec())
        .collect();
    if rows.is_empty() {
        None
    } else {
        Some(rows.iter().sum::<f64>() / rows.len() as f64)
    }
}
