//! Forward corruption and ancestral reverse steps, generic over the denoiser.

use crate::denoiser::{Conditioning, Denoiser};
use crate::error::Result;
use crate::image::Image;
use crate::rng::SeededRng;
use crate::schedule::NoiseSchedule;

/// Draws from `N(sqrt(1 - beta) x, beta I)`.
pub fn forward_jump(x: &Image, beta: f64, rng: &mut SeededRng) -> Image {
    let keep = (1.0 - beta).sqrt();
    let noise = beta.sqrt();
    x.map(|v| keep * v + noise * rng.normal())
}

/// One forward step `q(x_t | x_{t-1})`.
pub fn forward_step(
    x_prev: &Image,
    t: usize,
    schedule: &NoiseSchedule,
    rng: &mut SeededRng,
) -> Result<Image> {
    schedule.check_step(t)?;
    Ok(forward_jump(x_prev, schedule.beta(t), rng))
}

/// Closed-form corruption `x_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps`.
/// Returns `(x_t, eps)`; at `t = 0` the noise is identically zero and no
/// random numbers are consumed.
pub fn forward_marginal(
    x0: &Image,
    t: usize,
    schedule: &NoiseSchedule,
    rng: &mut SeededRng,
) -> Result<(Image, Image)> {
    schedule.check_level(t)?;
    let (h, w) = x0.shape();
    if t == 0 {
        return Ok((x0.clone(), Image::zeros(h, w)));
    }
    let mut eps = vec![0.0; x0.len()];
    rng.fill_normal(&mut eps);
    let eps = Image::from_raw(h, w, eps);
    let x_t = noised(x0, &eps, schedule.alpha_bar(t));
    Ok((x_t, eps))
}

pub(crate) fn noised(x0: &Image, eps: &Image, alpha_bar: f64) -> Image {
    let a = alpha_bar.sqrt();
    let b = (1.0 - alpha_bar).sqrt();
    let pixels = x0
        .pixels()
        .iter()
        .zip(eps.pixels())
        .map(|(x, e)| a * x + b * e)
        .collect();
    Image::from_raw(x0.height(), x0.width(), pixels)
}

/// `1/sqrt(alpha_t) * (x_t - beta_t / sqrt(1 - ab_t) * eps_hat)`.
pub fn posterior_mean(
    x_t: &Image,
    eps_hat: &Image,
    t: usize,
    schedule: &NoiseSchedule,
) -> Result<Image> {
    schedule.check_step(t)?;
    eps_hat.ensure_shape(x_t.shape())?;
    let inv_sqrt_alpha = 1.0 / schedule.alpha(t).sqrt();
    let coef = schedule.beta(t) / (1.0 - schedule.alpha_bar(t)).sqrt();
    let pixels = x_t
        .pixels()
        .iter()
        .zip(eps_hat.pixels())
        .map(|(x, e)| inv_sqrt_alpha * (x - coef * e))
        .collect();
    Ok(Image::from_raw(x_t.height(), x_t.width(), pixels))
}

/// `x_{t-1} = mu_hat + sigma_t z`, with `z = 0` at `t = 1`. No random numbers
/// are consumed when `sigma_t = 0` or `t = 1`.
pub fn reverse_step(
    x_t: &Image,
    eps_hat: &Image,
    t: usize,
    schedule: &NoiseSchedule,
    rng: &mut SeededRng,
) -> Result<Image> {
    let mut mean = posterior_mean(x_t, eps_hat, t, schedule)?;
    let sigma = schedule.sigma(t)?;
    if t > 1 && sigma > 0.0 {
        for v in mean.pixels_mut() {
            *v += sigma * rng.normal();
        }
    }
    Ok(mean)
}

pub fn standard_normal_image(height: usize, width: usize, rng: &mut SeededRng) -> Image {
    let mut px = vec![0.0; height * width];
    rng.fill_normal(&mut px);
    Image::from_raw(height, width, px)
}

/// Runs the reverse chain from `x_start` at level `t_start` down to 0.
pub fn denoise_from(
    denoiser: &dyn Denoiser,
    cond: &Conditioning,
    x_start: Image,
    t_start: usize,
    schedule: &NoiseSchedule,
    rng: &mut SeededRng,
) -> Result<Image> {
    schedule.check_level(t_start)?;
    x_start.ensure_shape(cond.shape())?;
    let mut x = x_start;
    for t in (1..=t_start).rev() {
        let eps_hat = denoiser.predict(&cond.input(&x, t))?;
        x = reverse_step(&x, &eps_hat, t, schedule, rng)?;
    }
    Ok(x)
}

/// Generates a new image: `x_T ~ N(0, I)` followed by the full reverse chain.
pub fn sample(
    denoiser: &dyn Denoiser,
    cond: &Conditioning,
    schedule: &NoiseSchedule,
    rng: &mut SeededRng,
) -> Result<Image> {
    let (h, w) = cond.shape();
    let x_t = standard_normal_image(h, w, rng);
    denoise_from(denoiser, cond, x_t, schedule.steps(), schedule, rng)
}
