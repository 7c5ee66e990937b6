//! The noise predictor `eps(x_t, c, t)` and its implementations.
//!
//! Conditioning is plain channel concatenation: the current state `x_t`, the
//! brain mask, the pathology mask, then any extra channels (the inpainting
//! variant adds the masked prior scan and the inpaint mask).

mod analytic;
mod io;
mod tiny;
mod train;

pub use analytic::{analytic_epsilon, AnalyticDenoiser, Component, PixelwiseGaussianPrior, PriorModel};
pub use io::{load_weights, load_weights_for_channels, read_weights, save_weights, write_weights};
pub use tiny::{Gradients, TinyDenoiser, TinyDenoiserWeights, TENSOR_NAMES};
pub use train::{batch_loss_and_gradients, train, Example, TrainConfig, TrainOutcome};

use crate::diffusion::forward_marginal;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::morphology::Mask;
use crate::rng::SeededRng;
use crate::schedule::NoiseSchedule;

/// Channels before any extras: `x_t`, brain, pathology.
pub const BASE_CHANNELS: usize = 3;

/// Everything a denoiser sees at one reverse step.
#[derive(Debug, Clone, Copy)]
pub struct DenoiserInput<'a> {
    pub x_t: &'a Image,
    pub brain: &'a Mask,
    pub pathology: &'a Mask,
    pub t: usize,
    pub extra: &'a [Image],
}

impl DenoiserInput<'_> {
    pub fn channels(&self) -> usize {
        BASE_CHANNELS + self.extra.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.x_t.shape()
    }

    /// Checks that every channel has the shape of `x_t` and the channel
    /// count matches `expected`.
    pub fn validate(&self, expected: usize) -> Result<()> {
        if self.channels() != expected {
            return Err(Error::Channels {
                expected,
                found: self.channels(),
            });
        }
        let shape = self.shape();
        if self.brain.shape() != shape {
            return Err(Error::Shape {
                expected: shape,
                found: self.brain.shape(),
            });
        }
        if self.pathology.shape() != shape {
            return Err(Error::Shape {
                expected: shape,
                found: self.pathology.shape(),
            });
        }
        for e in self.extra {
            e.ensure_shape(shape)?;
        }
        Ok(())
    }
}

/// The conditioning signal `c` held fixed along a reverse chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditioning {
    pub brain: Mask,
    pub pathology: Mask,
    pub extra: Vec<Image>,
}

impl Conditioning {
    pub fn new(brain: Mask, pathology: Mask) -> Self {
        Self {
            brain,
            pathology,
            extra: Vec::new(),
        }
    }

    /// Adds the inpainting channels `(1 - m) * x0` and `m`.
    pub fn with_known_region(mut self, x0: &Image, inpaint: &Mask) -> Result<Self> {
        self.extra = vec![x0.masked_out(inpaint)?, inpaint.to_image()];
        Ok(self)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.brain.shape()
    }

    pub fn channels(&self) -> usize {
        BASE_CHANNELS + self.extra.len()
    }

    pub fn input<'a>(&'a self, x_t: &'a Image, t: usize) -> DenoiserInput<'a> {
        DenoiserInput {
            x_t,
            brain: &self.brain,
            pathology: &self.pathology,
            t,
            extra: &self.extra,
        }
    }
}

pub trait Denoiser: Send + Sync {
    fn input_channels(&self) -> usize;

    fn predict(&self, input: &DenoiserInput<'_>) -> Result<Image>;
}

impl<D: Denoiser + ?Sized> Denoiser for Box<D> {
    fn input_channels(&self) -> usize {
        (**self).input_channels()
    }

    fn predict(&self, input: &DenoiserInput<'_>) -> Result<Image> {
        (**self).predict(input)
    }
}

impl<D: Denoiser + ?Sized> Denoiser for std::sync::Arc<D> {
    fn input_channels(&self) -> usize {
        (**self).input_channels()
    }

    fn predict(&self, input: &DenoiserInput<'_>) -> Result<Image> {
        (**self).predict(input)
    }
}

/// A clean image together with its conditioning.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub x0: Image,
    pub cond: Conditioning,
}

/// Per-sample squared noise-prediction error, averaged over pixels. For each
/// sample `t` is uniform on `1..=T` and the noise comes from the forward
/// marginal; the denoiser itself consumes no randomness, so two denoisers
/// evaluated from the same seed see identical `(t, eps)` draws.
pub fn denoising_losses(
    denoiser: &dyn Denoiser,
    batch: &[TrainingSample],
    schedule: &NoiseSchedule,
    rng: &mut SeededRng,
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::Empty("denoising loss batch"));
    }
    batch
        .iter()
        .map(|sample| {
            let t = 1 + rng.below(schedule.steps());
            let (x_t, eps) = forward_marginal(&sample.x0, t, schedule, rng)?;
            let eps_hat = denoiser.predict(&sample.cond.input(&x_t, t))?;
            eps_hat.ensure_shape(eps.shape())?;
            let sq: f64 = eps
                .pixels()
                .iter()
                .zip(eps_hat.pixels())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            Ok(sq / eps.len() as f64)
        })
        .collect()
}

pub fn denoising_loss(
    denoiser: &dyn Denoiser,
    batch: &[TrainingSample],
    schedule: &NoiseSchedule,
    rng: &mut SeededRng,
) -> Result<f64> {
    let losses = denoising_losses(denoiser, batch, schedule, rng)?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}
