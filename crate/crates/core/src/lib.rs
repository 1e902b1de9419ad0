//! Multichannel speech enhancement front-end.
//!
//! The processing chain is STFT analysis, an MVDR beamformer steered at the
//! desired talker, and a single-channel Wiener postfilter whose gains are
//! driven by a DoA-independent estimate of the coherent-to-diffuse power
//! ratio (CDR). A synthetic scene generator with known ground truth is
//! included for verification.
//!
//! ```no_run
//! use cdrfront::prelude::*;
//!
//! let geometry = ArrayGeometry::tablet_five();
//! let spec = SceneSpec::new(geometry.clone(), DoA::from_degrees(60.0, 90.0), 4.0);
//! let scene = mix_scene(&spec).unwrap();
//! let config = PipelineConfig::with_geometry(geometry);
//! let out = enhance(&config, &scene.mixture, 16000).unwrap();
//! println!("{} samples", out.output.len());
//! ```

pub mod beamformer;
pub mod cdr;
pub mod error;
pub mod geometry;
pub(crate) mod linalg;
pub mod localization;
pub mod pipeline;
pub mod postfilter;
pub mod simulator;
pub mod spectral;
pub mod stft;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::beamformer::{apply_weights, mvdr_weights, BeamformerWeights};
    pub use crate::cdr::{
        average_input_cdr, cdr_at_beamformer_output, correction_factor, diffuseness, estimate_cdr_pair, CdrEstimate,
        CdrParams, CorrectionFactor,
    };
    pub use crate::geometry::{
        diffuse_coherence, diffuse_coherence_matrix, direct_coherence, steering_vector, wavevector, ArrayGeometry,
        ChannelMask, DoA,
    };
    pub use crate::localization::{srp_phat, DoAGrid, SrpPhatResult};
    pub use crate::pipeline::{enhance, Enhanced, PipelineConfig};
    pub use crate::postfilter::{apply_gain, wiener_gain, GainMask, PostfilterParams};
    pub use crate::simulator::{mix_scene, Scene, SceneSpec, SourceSignal};
    pub use crate::spectral::{estimate_noise_covariance, NoiseCovariance, SpectralAccumulator};
    pub use crate::stft::{analyze, synthesize, FrameParams, MultichannelSpectrum};
    pub use crate::{Error, Result};
}
