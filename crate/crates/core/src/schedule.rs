//! Linear noise schedules and the coefficients derived from them.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SigmaMode {
    /// Posterior standard deviation `sqrt((1 - ab[t-1]) / (1 - ab[t]) * beta[t])`.
    #[default]
    Ddpm,
    /// Deterministic reverse process.
    Ddim,
}

/// `beta`, `alpha` and `alpha_bar` indexed by timestep. Index 0 of `beta` and
/// `alpha` is unused padding so that `beta[t]` reads like the math;
/// `alpha_bar[0] = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    steps: usize,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    sigma_mode: SigmaMode,
}

impl NoiseSchedule {
    /// Linear betas from `beta_start` to `beta_end`, both endpoints included.
    pub fn linear(
        steps: usize,
        beta_start: f64,
        beta_end: f64,
        sigma_mode: SigmaMode,
    ) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("schedule steps must be >= 1".into()));
        }
        if !(beta_start > 0.0) {
            return Err(Error::Config(format!(
                "beta_start must be > 0, got {beta_start}"
            )));
        }
        if !(beta_end < 1.0) {
            return Err(Error::Config(format!("beta_end must be < 1, got {beta_end}")));
        }
        if beta_start > beta_end {
            return Err(Error::Config(format!(
                "beta_start {beta_start} exceeds beta_end {beta_end}"
            )));
        }
        let mut beta = vec![0.0; steps + 1];
        for (t, b) in beta.iter_mut().enumerate().skip(1) {
            *b = if steps == 1 {
                beta_start
            } else {
                let f = (t - 1) as f64 / (steps - 1) as f64;
                beta_start + f * (beta_end - beta_start)
            };
        }
        let alpha: Vec<f64> = beta
            .iter()
            .enumerate()
            .map(|(t, b)| if t == 0 { 1.0 } else { 1.0 - b })
            .collect();
        let mut alpha_bar = vec![1.0; steps + 1];
        for t in 1..=steps {
            alpha_bar[t] = alpha_bar[t - 1] * alpha[t];
        }
        Ok(Self {
            steps,
            beta,
            alpha,
            alpha_bar,
            sigma_mode,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn sigma_mode(&self) -> SigmaMode {
        self.sigma_mode
    }

    pub fn with_sigma_mode(mut self, mode: SigmaMode) -> Self {
        self.sigma_mode = mode;
        self
    }

    pub(crate) fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps {
            return Err(Error::TimestepOutOfRange {
                t,
                min: 1,
                max: self.steps,
            });
        }
        Ok(())
    }

    pub(crate) fn check_level(&self, t: usize) -> Result<()> {
        if t > self.steps {
            return Err(Error::TimestepOutOfRange {
                t,
                min: 0,
                max: self.steps,
            });
        }
        Ok(())
    }

    /// `beta[t]` for `1 <= t <= T`; `beta[0]` is defined as `beta[1]`.
    pub fn beta(&self, t: usize) -> f64 {
        if t == 0 {
            self.beta[1]
        } else {
            self.beta[t]
        }
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta[1..]
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// Reverse-process noise scale at step `t`.
    pub fn sigma(&self, t: usize) -> Result<f64> {
        self.check_step(t)?;
        Ok(match self.sigma_mode {
            SigmaMode::Ddim => 0.0,
            SigmaMode::Ddpm => {
                let var = (1.0 - self.alpha_bar[t - 1]) / (1.0 - self.alpha_bar[t]) * self.beta[t];
                var.sqrt()
            }
        })
    }
}
