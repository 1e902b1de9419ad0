use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::beamformer::DEFAULT_LOADING;
use crate::cdr::CdrParams;
use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, ChannelMask, DoA, DEFAULT_SPEED_OF_SOUND};
use crate::localization::DoAGrid;
use crate::postfilter::PostfilterParams;
use crate::stft::FrameParams;

/// Where the microphone positions come from. Exactly one of `positions` and
/// `file` must be set; relative files resolve against the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default = "default_c")]
    pub speed_of_sound: f64,
}

fn default_c() -> f64 {
    DEFAULT_SPEED_OF_SOUND
}

impl GeometrySource {
    pub fn resolve(&self) -> Result<ArrayGeometry> {
        match (&self.positions, &self.file) {
            (Some(p), None) => ArrayGeometry::new(p.clone(), self.speed_of_sound),
            (None, Some(f)) => ArrayGeometry::from_file(f),
            (Some(_), Some(_)) => Err(Error::Config("geometry: set either positions or file, not both".into())),
            (None, None) => Err(Error::Config("geometry: positions or file required".into())),
        }
    }
}

/// Noise-only interval used for the noise covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum NoiseContext {
    /// Absolute interval in seconds.
    Interval { start: f64, end: f64 },
    /// The `seconds` immediately before `utterance_start`.
    PreUtterance { utterance_start: f64, seconds: f64 },
}

impl Default for NoiseContext {
    fn default() -> Self {
        NoiseContext::Interval { start: 0.0, end: 0.5 }
    }
}

impl NoiseContext {
    pub fn interval(&self) -> (f64, f64) {
        match *self {
            NoiseContext::Interval { start, end } => (start, end),
            NoiseContext::PreUtterance {
                utterance_start,
                seconds,
            } => (utterance_start - seconds, utterance_start),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DoaMode {
    /// Fixed look direction in degrees.
    Fixed { azimuth: f64, elevation: f64 },
    SrpPhat {
        #[serde(default = "default_az_step")]
        azimuth_step: f64,
        #[serde(default = "default_elevations")]
        elevations: Vec<f64>,
        #[serde(default = "default_f_min")]
        f_min: f64,
        #[serde(default = "default_f_max")]
        f_max: f64,
    },
}

fn default_az_step() -> f64 {
    5.0
}
fn default_elevations() -> Vec<f64> {
    vec![90.0]
}
fn default_f_min() -> f64 {
    125.0
}
fn default_f_max() -> f64 {
    3500.0
}

impl Default for DoaMode {
    fn default() -> Self {
        DoaMode::SrpPhat {
            azimuth_step: default_az_step(),
            elevations: default_elevations(),
            f_min: default_f_min(),
            f_max: default_f_max(),
        }
    }
}

impl DoaMode {
    pub fn fixed(doa: DoA) -> Self {
        DoaMode::Fixed {
            azimuth: doa.azimuth_deg(),
            elevation: doa.elevation_deg(),
        }
    }

    pub fn grid(&self) -> Result<Option<DoAGrid>> {
        match self {
            DoaMode::Fixed { .. } => Ok(None),
            DoaMode::SrpPhat {
                azimuth_step,
                elevations,
                ..
            } => {
                let mut grid = DoAGrid::azimuth_scan(*azimuth_step, 90.0)?;
                grid.elevations = elevations.clone();
                Ok(Some(DoAGrid::new(grid.azimuths, grid.elevations)?))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamformerConfig {
    /// When false the reference channel passes through unchanged.
    pub enabled: bool,
    /// Relative diagonal loading of the noise covariance.
    pub loading: f64,
    pub reference_channel: usize,
}

impl Default for BeamformerConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            loading: DEFAULT_LOADING,
            reference_channel: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PostfilterConfig {
    pub enabled: bool,
    pub mu: f64,
    pub g_min: f64,
    /// Reserved for time-frequency smoothing of the gains; must stay false.
    pub smoothing: bool,
}

impl Default for PostfilterConfig {
    fn default() -> Self {
        let p = PostfilterParams::default();
        Self {
            enabled: true,
            mu: p.mu,
            g_min: p.g_min,
            smoothing: false,
        }
    }
}

impl PostfilterConfig {
    pub fn params(&self) -> PostfilterParams {
        PostfilterParams {
            mu: self.mu,
            g_min: self.g_min,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExportConfig {
    /// Directory for matrix exports; defaults to the output file's directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    pub beamformer_spectrogram: bool,
    pub output_spectrogram: bool,
    pub diffuseness: bool,
    pub gains: bool,
    pub pseudo_spectrum: bool,
}

impl ExportConfig {
    pub fn any(&self) -> bool {
        self.beamformer_spectrogram || self.output_spectrogram || self.diffuseness || self.gains || self.pseudo_spectrum
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub geometry: GeometrySource,
    #[serde(default = "default_sample_rate")]
    pub sample_rate: u32,
    #[serde(default = "default_frame_len")]
    pub frame_len: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_cdr_max")]
    pub cdr_max: f64,
    #[serde(default)]
    pub noise_context: NoiseContext,
    #[serde(default)]
    pub doa: DoaMode,
    /// Channels to leave out (failing microphones), zero-based.
    #[serde(default)]
    pub excluded_channels: Vec<usize>,
    #[serde(default)]
    pub beamformer: BeamformerConfig,
    #[serde(default)]
    pub postfilter: PostfilterConfig,
    #[serde(default)]
    pub export: ExportConfig,
}

fn default_sample_rate() -> u32 {
    16000
}
fn default_frame_len() -> usize {
    1024
}
fn default_lambda() -> f64 {
    CdrParams::default().lambda
}
fn default_cdr_max() -> f64 {
    CdrParams::default().cdr_max
}

impl PipelineConfig {
    pub fn with_geometry(geometry: ArrayGeometry) -> Self {
        Self {
            geometry: GeometrySource {
                positions: Some(geometry.positions().to_vec()),
                file: None,
                speed_of_sound: geometry.speed_of_sound(),
            },
            sample_rate: default_sample_rate(),
            frame_len: default_frame_len(),
            lambda: default_lambda(),
            cdr_max: default_cdr_max(),
            noise_context: NoiseContext::default(),
            doa: DoaMode::default(),
            excluded_channels: Vec::new(),
            beamformer: BeamformerConfig::default(),
            postfilter: PostfilterConfig::default(),
            export: ExportConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Load a config file. Relative geometry and export paths are resolved
    /// against the file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        if let Some(f) = &cfg.geometry.file {
            if f.is_relative() {
                cfg.geometry.file = Some(base.join(f));
            }
        }
        if let Some(d) = &cfg.export.dir {
            if d.is_relative() {
                cfg.export.dir = Some(base.join(d));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn frame_params(&self) -> Result<FrameParams> {
        FrameParams::new(self.frame_len, self.sample_rate)
    }

    pub fn cdr_params(&self) -> CdrParams {
        CdrParams {
            lambda: self.lambda,
            cdr_max: self.cdr_max,
        }
    }

    pub fn channel_mask(&self, channels: usize) -> Result<ChannelMask> {
        ChannelMask::excluding(channels, &self.excluded_channels)
    }

    /// Check every parameter range without touching the input audio.
    pub fn validate(&self) -> Result<ArrayGeometry> {
        let geom = self.geometry.resolve()?;
        self.frame_params()?;
        self.cdr_params().validate()?;
        self.postfilter.params().validate()?;
        if self.postfilter.smoothing {
            return Err(Error::Config("gain smoothing is not supported".into()));
        }
        if !(self.beamformer.loading >= 0.0 && self.beamformer.loading.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "loading must be >= 0, got {}",
                self.beamformer.loading
            )));
        }
        if self.beamformer.reference_channel >= geom.num_mics() {
            return Err(Error::InvalidParameter(format!(
                "reference channel {} out of range",
                self.beamformer.reference_channel
            )));
        }
        let (start, end) = self.noise_context.interval();
        if !(start.is_finite() && end.is_finite() && end > start) {
            return Err(Error::InvalidParameter(format!(
                "noise context [{start}, {end}] is empty"
            )));
        }
        let mask = self.channel_mask(geom.num_mics())?;
        if mask.num_active() < 2 {
            return Err(Error::TooFewChannels(mask.num_active()));
        }
        self.doa.grid()?;
        Ok(geom)
    }
}
