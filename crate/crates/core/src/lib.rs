//! Counterfactual editing of synthetic brain images with masked diffusion.
//!
//! The crate covers the noise schedule and diffusion steps, mask-conditioned
//! denoisers (an exact Bayes denoiser over a per-pixel Gaussian-mixture prior
//! and a small trainable CNN), a brain phantom with a known indirect lesion
//! effect, four editing methods, the evaluation metrics, and the experiment
//! harness used by the `cfd` command line tool.

// `!(x > 0.0)` style checks are how NaN gets rejected during validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod denoiser;
pub mod diffusion;
pub mod editing;
pub mod error;
pub mod harness;
pub mod image;
pub mod metrics;
pub mod morphology;
pub mod phantom;
pub mod rng;
pub mod schedule;

pub use denoiser::{AnalyticDenoiser, Conditioning, Denoiser, DenoiserInput, TinyDenoiser, TinyDenoiserWeights};
pub use editing::{EditConfig, EditResult, Method, Triplet};
pub use error::{Error, Result, WeightsError};
pub use harness::{ExperimentConfig, RunManifest};
pub use image::Image;
pub use metrics::{dice, frechet_distance, FeatureSet};
pub use morphology::{dilate, Mask, MaskSet};
pub use phantom::{PhantomParams, PhantomSample, Side};
pub use rng::SeededRng;
pub use schedule::{NoiseSchedule, SigmaMode};
