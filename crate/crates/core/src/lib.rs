//! Weakly supervised localization of salient frames in multivariate motion
//! time series.
//!
//! A feed-forward classifier is trained on trial-level labels only. The
//! gradient of its loss with respect to the input is then aggregated per
//! frame, min-max normalized over a pool of frames, and thresholded: frames
//! scoring above the threshold are flagged as compensatory. Frame-level
//! labels are used only to evaluate and calibrate that threshold.
//!
//! ```text
//! keypoints -> displacement features -> padded T_max x F -> classifier
//!           -> dL/dx -> per-frame |grad| sums -> pooled [0,1] scores -> threshold sweep
//! ```

pub mod data;
pub mod error;
pub mod eval;
pub mod nn;
pub mod pipeline;
pub mod saliency;
pub mod seed;
pub mod synth;

pub use data::{DatasetManifest, FeatureTrial, JointLayout, KeypointTrial, Label};
pub use error::{Error, Result};
pub use eval::{FilterMode, ThresholdSweepReport};
pub use nn::{Architecture, TrainConfig, TrainedModel};
pub use saliency::{FrameScoreTrack, PooledScoreSet, SaliencyMatrix};
pub use synth::SynthConfig;
