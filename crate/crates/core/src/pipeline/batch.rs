use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run, NoiseContext, PipelineConfig, Report};
use crate::error::{Error, Result};

/// One manifest entry. Per-utterance fields override the shared config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Utterance {
    pub input: PathBuf,
    pub output: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_context: Option<NoiseContext>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excluded_channels: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default, rename = "utterance")]
    pub utterances: Vec<Utterance>,
}

impl Manifest {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("manifest: {e}")))
    }

    /// Load a manifest; relative paths resolve against its directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for u in &mut m.utterances {
            for p in [&mut u.input, &mut u.output] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct UtteranceOutcome {
    pub input: PathBuf,
    pub output: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<Report>,
}

impl UtteranceOutcome {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct BatchReport {
    pub utterances: Vec<UtteranceOutcome>,
    pub succeeded: usize,
    pub failed: usize,
}

impl BatchReport {
    pub fn all_succeeded(&self) -> bool {
        self.failed == 0
    }
}

/// Process every utterance concurrently. Failures are recorded per entry and
/// never abort the rest of the batch.
pub fn run_batch(config: &PipelineConfig, manifest: &Manifest) -> BatchReport {
    let utterances: Vec<UtteranceOutcome> = manifest
        .utterances
        .par_iter()
        .map(|u| {
            let mut cfg = config.clone();
            if let Some(ctx) = u.noise_context {
                cfg.noise_context = ctx;
            }
            if let Some(ex) = &u.excluded_channels {
                cfg.excluded_channels = ex.clone();
            }
            let (report, error) = match run(&cfg, &u.input, &u.output) {
                Ok(r) => (Some(r), None),
                Err(e) => {
                    log::error!("{}: {e}", u.input.display());
                    (None, Some(e.to_string()))
                }
            };
            UtteranceOutcome {
                input: u.input.clone(),
                output: u.output.clone(),
                error,
                report,
            }
        })
        .collect();
    let failed = utterances.iter().filter(|u| !u.succeeded()).count();
    BatchReport {
        succeeded: utterances.len() - failed,
        failed,
        utterances,
    }
}
