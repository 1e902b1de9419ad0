use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::error;

use cdrfront::geometry::{ArrayGeometry, DoA};
use cdrfront::pipeline::{
    export, run, run_batch, wav, DoaMode, GeometrySource, Manifest, NoiseContext, PipelineConfig,
};
use cdrfront::simulator::{mix_scene, Gate, SceneSpec, SourceSignal};
use cdrfront::stft::FrameParams;
use cdrfront::Error;

const EXIT_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(
    name = "cdrfront",
    version,
    about = "MVDR beamformer with CDR-based Wiener postfilter"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enhance one multichannel WAV file.
    Enhance {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Enhance every utterance listed in a TOML manifest.
    Batch {
        #[arg(short, long)]
        manifest: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Generate a synthetic scene with ground truth.
    Simulate(SimulateArgs),
    /// Print a complete config for the built-in five-microphone array.
    DefaultConfig,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML pipeline config.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Geometry TOML file; overrides the config's geometry.
    #[arg(long)]
    geometry: Option<PathBuf>,
    #[arg(long)]
    sample_rate: Option<u32>,
    #[arg(long)]
    frame_len: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    cdr_max: Option<f64>,
    #[arg(long)]
    loading: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    g_min: Option<f64>,
    /// Fixed look azimuth in degrees; requires --elevation or defaults to 90.
    #[arg(long)]
    azimuth: Option<f64>,
    #[arg(long)]
    elevation: Option<f64>,
    /// Localize with SRP-PHAT instead of a fixed direction.
    #[arg(long, conflicts_with = "azimuth")]
    srp_phat: bool,
    /// Noise context as START:END seconds.
    #[arg(long, value_parser = parse_interval)]
    context: Option<(f64, f64)>,
    /// Noise context as the given seconds before --utterance-start.
    #[arg(long, requires = "utterance_start", conflicts_with = "context")]
    pre_utterance: Option<f64>,
    #[arg(long)]
    utterance_start: Option<f64>,
    /// Comma-separated zero-based channels to ignore.
    #[arg(long, value_delimiter = ',')]
    exclude: Option<Vec<usize>>,
    #[arg(long)]
    no_beamformer: bool,
    #[arg(long)]
    no_postfilter: bool,
    #[arg(long)]
    export_dir: Option<PathBuf>,
    /// Matrices to export.
    #[arg(long, value_enum, value_delimiter = ',')]
    export: Vec<ExportKind>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportKind {
    BeamformerSpectrogram,
    OutputSpectrogram,
    Diffuseness,
    Gains,
    PseudoSpectrum,
    All,
}

fn parse_interval(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or("expected START:END")?;
    let a = a.trim().parse::<f64>().map_err(|e| e.to_string())?;
    let b = b.trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok((a, b))
}

impl ConfigArgs {
    fn load(&self) -> cdrfront::Result<PipelineConfig> {
        let mut cfg = match (&self.config, &self.geometry) {
            (Some(path), _) => PipelineConfig::from_file(path)?,
            (None, Some(_)) => PipelineConfig::with_geometry(ArrayGeometry::tablet_five()),
            (None, None) => return Err(Error::Config("either --config or --geometry is required".into())),
        };
        if let Some(g) = &self.geometry {
            cfg.geometry = GeometrySource {
                positions: None,
                file: Some(g.clone()),
                speed_of_sound: cfg.geometry.speed_of_sound,
            };
        }
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value {
                    $field = v;
                }
            };
        }
        set!(cfg.sample_rate, self.sample_rate);
        set!(cfg.frame_len, self.frame_len);
        set!(cfg.lambda, self.lambda);
        set!(cfg.cdr_max, self.cdr_max);
        set!(cfg.beamformer.loading, self.loading);
        set!(cfg.postfilter.mu, self.mu);
        set!(cfg.postfilter.g_min, self.g_min);
        set!(cfg.excluded_channels, self.exclude.clone());
        if self.azimuth.is_some() || self.elevation.is_some() {
            let (az, el) = match cfg.doa {
                DoaMode::Fixed { azimuth, elevation } => (azimuth, elevation),
                DoaMode::SrpPhat { .. } => (90.0, 90.0),
            };
            cfg.doa = DoaMode::Fixed {
                azimuth: self.azimuth.unwrap_or(az),
                elevation: self.elevation.unwrap_or(el),
            };
        }
        if self.srp_phat && !matches!(cfg.doa, DoaMode::SrpPhat { .. }) {
            cfg.doa = DoaMode::default();
        }
        if let Some((start, end)) = self.context {
            cfg.noise_context = NoiseContext::Interval { start, end };
        }
        if let (Some(seconds), Some(utterance_start)) = (self.pre_utterance, self.utterance_start) {
            cfg.noise_context = NoiseContext::PreUtterance {
                utterance_start,
                seconds,
            };
        }
        if self.no_beamformer {
            cfg.beamformer.enabled = false;
        }
        if self.no_postfilter {
            cfg.postfilter.enabled = false;
        }
        if let Some(d) = &self.export_dir {
            cfg.export.dir = Some(d.clone());
        }
        for kind in &self.export {
            let ex = &mut cfg.export;
            match kind {
                ExportKind::BeamformerSpectrogram => ex.beamformer_spectrogram = true,
                ExportKind::OutputSpectrogram => ex.output_spectrogram = true,
                ExportKind::Diffuseness => ex.diffuseness = true,
                ExportKind::Gains => ex.gains = true,
                ExportKind::PseudoSpectrum => ex.pseudo_spectrum = true,
                ExportKind::All => {
                    ex.beamformer_spectrogram = true;
                    ex.output_spectrogram = true;
                    ex.diffuseness = true;
                    ex.gains = true;
                    ex.pseudo_spectrum = true;
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceKind {
    White,
    Speech,
}

#[derive(Args)]
struct SimulateArgs {
    /// Output multichannel WAV; the ground-truth CDR matrix is written next to
    /// it as `<stem>.truth.txt`.
    #[arg(short, long)]
    output: PathBuf,
    /// Geometry TOML file (default: built-in five-microphone array).
    #[arg(long)]
    geometry: Option<PathBuf>,
    #[arg(long, default_value_t = 90.0)]
    azimuth: f64,
    #[arg(long, default_value_t = 90.0)]
    elevation: f64,
    #[arg(long, default_value_t = 5.0)]
    duration: f64,
    #[arg(long, default_value_t = 16000)]
    sample_rate: u32,
    #[arg(long, value_enum, default_value = "speech")]
    source: SourceKind,
    /// Source onset in seconds.
    #[arg(long, default_value_t = 0.5)]
    onset: f64,
    /// Gate the source: seconds on.
    #[arg(long, requires = "gate_off")]
    gate_on: Option<f64>,
    /// Gate the source: seconds off.
    #[arg(long, requires = "gate_on")]
    gate_off: Option<f64>,
    /// Diffuse-to-direct power ratio in dB.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    diffuse_db: f64,
    /// Sensor noise relative to direct power in dB.
    #[arg(long, allow_negative_numbers = true)]
    sensor_db: Option<f64>,
    #[arg(long, default_value_t = 128)]
    directions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write `<stem>.direct.wav`, `<stem>.noise.wav` and `<stem>.source.wav`.
    #[arg(long)]
    components: bool,
}

fn simulate(args: &SimulateArgs) -> cdrfront::Result<()> {
    let geometry = match &args.geometry {
        Some(p) => ArrayGeometry::from_file(p)?,
        None => ArrayGeometry::tablet_five(),
    };
    let mut spec = SceneSpec::new(geometry, DoA::from_degrees(args.azimuth, args.elevation), args.duration);
    spec.sample_rate = args.sample_rate;
    spec.frame = FrameParams::new(FrameParams::default().frame_len, args.sample_rate)?;
    spec.source = match args.source {
        SourceKind::White => SourceSignal::WhiteNoise,
        SourceKind::Speech => SourceSignal::SpeechLike,
    };
    spec.onset_s = args.onset;
    spec.gate = args
        .gate_on
        .zip(args.gate_off)
        .map(|(on_s, off_s)| Gate { on_s, off_s });
    spec.diffuse_to_direct_db = Some(args.diffuse_db);
    spec.sensor_noise_db = args.sensor_db;
    spec.num_directions = args.directions;
    spec.seed = args.seed;
    let scene = mix_scene(&spec)?;

    wav::write_wav(&args.output, &scene.mixture, spec.sample_rate)?;
    let sidecar = |suffix: &str| sibling(&args.output, suffix);
    export::write_matrix(sidecar("truth.txt"), scene.truth.cdr.view(), Some("cdr"))?;
    if args.components {
        wav::write_wav(sidecar("direct.wav"), &scene.direct, spec.sample_rate)?;
        wav::write_wav(sidecar("noise.wav"), &scene.noise(), spec.sample_rate)?;
        wav::write_mono(sidecar("source.wav"), &scene.source, spec.sample_rate)?;
    }
    Ok(())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scene");
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn emit_json(value: &impl serde::Serialize, path: Option<&Path>) -> cdrfront::Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    match path {
        Some(p) => std::fs::write(p, text + "\n").map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => {
            // A closed pipe (e.g. `| head`) is not an error worth reporting.
            let mut out = std::io::stdout().lock();
            match writeln!(out, "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Io {
                    path: PathBuf::from("<stdout>"),
                    source: e,
                }),
                _ => Ok(()),
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Enhance {
            input,
            output,
            cfg,
            report,
        } => {
            let config = match cfg.load() {
                Ok(c) => c,
                Err(e) => {
                    error!("{e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            match run(&config, &input, &output).and_then(|r| emit_json(&r, report.as_deref())) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    error!("{}: {e}", input.display());
                    ExitCode::from(EXIT_FAILED)
                }
            }
        }
        Command::Batch { manifest, cfg, report } => {
            let config = match cfg.load() {
                Ok(c) => c,
                Err(e) => {
                    error!("{e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            let manifest = match Manifest::from_file(&manifest) {
                Ok(m) => m,
                Err(e) => {
                    error!("{e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            let result = run_batch(&config, &manifest);
            if let Err(e) = emit_json(&result, report.as_deref()) {
                error!("{e}");
                return ExitCode::from(EXIT_FAILED);
            }
            if result.all_succeeded() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAILED)
            }
        }
        Command::Simulate(args) => match simulate(&args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e @ (Error::InvalidParameter(_) | Error::InvalidGeometry(_) | Error::Config(_))) => {
                error!("{e}");
                ExitCode::from(EXIT_CONFIG)
            }
            Err(e) => {
                error!("{e}");
                ExitCode::from(EXIT_FAILED)
            }
        },
        Command::DefaultConfig => {
            print!(
                "{}",
                PipelineConfig::with_geometry(ArrayGeometry::tablet_five()).to_toml_string()
            );
            ExitCode::SUCCESS
        }
    }
}
