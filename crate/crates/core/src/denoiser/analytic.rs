//! Closed-form noise prediction under a known per-pixel Gaussian-mixture prior.

use super::{Denoiser, DenoiserInput, BASE_CHANNELS};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::schedule::NoiseSchedule;

/// One mixture component of a pixel's prior. `std = 0` is a point mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: f64,
    pub std: f64,
}

impl Component {
    pub fn single(mean: f64, std: f64) -> Self {
        Self {
            weight: 1.0,
            mean,
            std,
        }
    }
}

/// Independent per-pixel Gaussian mixtures stored flat: the components of
/// pixel `i` are `components[offsets[i]..offsets[i + 1]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelwiseGaussianPrior {
    height: usize,
    width: usize,
    offsets: Vec<usize>,
    components: Vec<Component>,
}

impl PixelwiseGaussianPrior {
    /// Starts an empty prior; pixels are appended in row-major order.
    pub fn builder(height: usize, width: usize) -> PriorBuilder {
        let mut offsets = Vec::with_capacity(height * width + 1);
        offsets.push(0);
        PriorBuilder {
            prior: Self {
                height,
                width,
                offsets,
                components: Vec::with_capacity(height * width),
            },
        }
    }

    /// Same single Gaussian at every pixel.
    pub fn uniform(height: usize, width: usize, mean: f64, std: f64) -> Result<Self> {
        let mut b = Self::builder(height, width);
        for _ in 0..height * width {
            b.push_pixel(&[Component::single(mean, std)])?;
        }
        b.finish()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixel(&self, i: usize) -> &[Component] {
        &self.components[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn pixel_at(&self, y: usize, x: usize) -> &[Component] {
        self.pixel(y * self.width + x)
    }

    pub fn mean_image(&self) -> Image {
        let px = (0..self.height * self.width)
            .map(|i| self.pixel(i).iter().map(|c| c.weight * c.mean).sum())
            .collect();
        Image::from_raw(self.height, self.width, px)
    }
}

pub struct PriorBuilder {
    prior: PixelwiseGaussianPrior,
}

impl PriorBuilder {
    /// Appends one pixel. Zero-weight components are dropped.
    pub fn push_pixel(&mut self, comps: &[Component]) -> Result<()> {
        let mut total = 0.0;
        for c in comps {
            if !(c.weight >= 0.0) || !c.mean.is_finite() || !(c.std >= 0.0) || !c.std.is_finite() {
                return Err(Error::Parameter(format!("invalid mixture component {c:?}")));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        self.prior
            .components
            .extend(comps.iter().filter(|c| c.weight > 0.0).copied());
        self.prior.offsets.push(self.prior.components.len());
        Ok(())
    }

    pub fn finish(self) -> Result<PixelwiseGaussianPrior> {
        let expected = self.prior.height * self.prior.width;
        if self.prior.offsets.len() != expected + 1 {
            return Err(Error::Parameter(format!(
                "prior has {} pixels, expected {expected}",
                self.prior.offsets.len() - 1
            )));
        }
        Ok(self.prior)
    }
}

/// Bayes-optimal noise prediction: `(x_t - sqrt(ab) m*) / sqrt(1 - ab)` with
/// `m* = E[x0 | x_t]` under the prior.
///
/// Component `k` contributes the conjugate posterior mean
/// `(mu_k (1 - ab) + sqrt(ab) s_k^2 x_t) / (1 - ab + ab s_k^2)`, weighted by its
/// responsibility under the marginal `N(sqrt(ab) mu_k, ab s_k^2 + 1 - ab)`.
/// Responsibilities are normalised in log space.
pub fn analytic_epsilon(
    input: &DenoiserInput<'_>,
    prior: &PixelwiseGaussianPrior,
    schedule: &NoiseSchedule,
) -> Result<Image> {
    if input.t == 0 {
        return Err(Error::Domain(
            "analytic noise prediction is undefined at t = 0".into(),
        ));
    }
    schedule.check_step(input.t)?;
    input.x_t.ensure_shape(prior.shape())?;

    let ab = schedule.alpha_bar(input.t);
    let sab = ab.sqrt();
    let one_m = 1.0 - ab;
    let inv_noise = 1.0 / one_m.sqrt();
    let mut out = Vec::with_capacity(input.x_t.len());
    let mut logr = [0.0f64; 8];
    let mut heap = Vec::new();

    for (i, &x) in input.x_t.pixels().iter().enumerate() {
        let comps = prior.pixel(i);
        let m_star = match comps {
            [] => {
                return Err(Error::Domain(format!("prior undefined at pixel {i}")));
            }
            [c] => (c.mean * one_m + sab * c.std * c.std * x) / (one_m + ab * c.std * c.std),
            _ => {
                let lr: &mut [f64] = if comps.len() <= logr.len() {
                    &mut logr[..comps.len()]
                } else {
                    heap.resize(comps.len(), 0.0);
                    &mut heap[..]
                };
                let mut max = f64::NEG_INFINITY;
                for (l, c) in lr.iter_mut().zip(comps) {
                    let var = ab * c.std * c.std + one_m;
                    let d = x - sab * c.mean;
                    *l = c.weight.ln() - 0.5 * var.ln() - d * d / (2.0 * var);
                    max = max.max(*l);
                }
                let mut norm = 0.0;
                let mut acc = 0.0;
                for (l, c) in lr.iter().zip(comps) {
                    let r = (l - max).exp();
                    let s2 = c.std * c.std;
                    norm += r;
                    acc += r * (c.mean * one_m + sab * s2 * x) / (one_m + ab * s2);
                }
                acc / norm
            }
        };
        out.push((x - sab * m_star) * inv_noise);
    }
    Ok(Image::from_raw(input.x_t.height(), input.x_t.width(), out))
}

/// Source of the per-pixel prior given the conditioning channels.
pub trait PriorModel: Send + Sync {
    fn input_channels(&self) -> usize;

    fn prior(&self, input: &DenoiserInput<'_>) -> Result<PixelwiseGaussianPrior>;
}

/// A fixed prior that ignores the conditioning.
impl PriorModel for PixelwiseGaussianPrior {
    fn input_channels(&self) -> usize {
        BASE_CHANNELS
    }

    fn prior(&self, _input: &DenoiserInput<'_>) -> Result<PixelwiseGaussianPrior> {
        Ok(self.clone())
    }
}

#[derive(Debug, Clone)]
pub struct AnalyticDenoiser<P> {
    prior: P,
    schedule: NoiseSchedule,
}

impl<P: PriorModel> AnalyticDenoiser<P> {
    pub fn new(prior: P, schedule: NoiseSchedule) -> Self {
        Self { prior, schedule }
    }

    pub fn prior_model(&self) -> &P {
        &self.prior
    }
}

impl<P: PriorModel> Denoiser for AnalyticDenoiser<P> {
    fn input_channels(&self) -> usize {
        self.prior.input_channels()
    }

    fn predict(&self, input: &DenoiserInput<'_>) -> Result<Image> {
        input.validate(self.input_channels())?;
        let prior = self.prior.prior(input)?;
        analytic_epsilon(input, &prior, &self.schedule)
    }
}
