//! Minibatch SGD with momentum on the noise-prediction objective.

use super::tiny::{accumulate, Gradients, TinyDenoiserWeights};
use super::{Conditioning, TrainingSample};
use crate::diffusion::forward_marginal;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::SeededRng;
use crate::schedule::NoiseSchedule;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 1e-3,
            momentum: 0.9,
            batch_size: 16,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// One noised training input with its regression target.
#[derive(Debug, Clone)]
pub struct Example<'a> {
    pub x_t: Image,
    pub eps: Image,
    pub t: usize,
    pub cond: &'a Conditioning,
}

impl<'a> Example<'a> {
    /// Draws `t ~ U{1..T}` and the forward-marginal noise for `sample`.
    pub fn draw(
        sample: &'a TrainingSample,
        schedule: &NoiseSchedule,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let t = 1 + rng.below(schedule.steps());
        let (x_t, eps) = forward_marginal(&sample.x0, t, schedule, rng)?;
        Ok(Self {
            x_t,
            eps,
            t,
            cond: &sample.cond,
        })
    }
}

/// Mean over examples of the per-pixel mean squared error, and its gradient.
pub fn batch_loss_and_gradients(
    weights: &TinyDenoiserWeights,
    examples: &[Example<'_>],
) -> Result<(f64, Gradients)> {
    if examples.is_empty() {
        return Err(Error::Empty("training batch"));
    }
    let mut grads = Gradients::zeros_like(weights);
    let mut loss = 0.0;
    let scale = 1.0 / examples.len() as f64;
    for ex in examples {
        let input = ex.cond.input(&ex.x_t, ex.t);
        let acts = weights.forward_full(&input)?;
        let n = ex.eps.len() as f64;
        let mut d_out = Vec::with_capacity(acts.out.len());
        let mut sq = 0.0;
        for (o, e) in acts.out.iter().zip(ex.eps.pixels()) {
            let r = o - e;
            sq += r * r;
            d_out.push(2.0 * r * scale / n);
        }
        loss += sq / n * scale;
        let mut part = Gradients::zeros_like(weights);
        weights.backward(&acts, &d_out, ex.x_t.shape(), &mut part);
        accumulate(&mut grads, &part);
    }
    Ok((loss, grads))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: TinyDenoiserWeights,
    /// Mean minibatch loss per epoch.
    pub epoch_losses: Vec<f64>,
}

pub fn train(
    mut weights: TinyDenoiserWeights,
    dataset: &[TrainingSample],
    schedule: &NoiseSchedule,
    config: &TrainConfig,
    rng: &mut SeededRng,
) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("training dataset"));
    }
    if let Some(s) = dataset.iter().find(|s| s.cond.channels() != weights.in_channels()) {
        return Err(Error::Channels {
            expected: weights.in_channels(),
            found: s.cond.channels(),
        });
    }
    if schedule.steps() > weights.max_step() {
        return Err(Error::Config(format!(
            "schedule has {} steps but the embedding table covers {}",
            schedule.steps(),
            weights.max_step()
        )));
    }

    let mut velocity = Gradients::zeros_like(&weights);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let examples = chunk
                .iter()
                .map(|&i| Example::draw(&dataset[i], schedule, rng))
                .collect::<Result<Vec<_>>>()?;
            let (loss, grads) = batch_loss_and_gradients(&weights, &examples)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            for ((w, v), g) in weights
                .tensors_mut()
                .into_iter()
                .zip(velocity.tensors.iter_mut())
                .zip(&grads.tensors)
            {
                for ((wi, vi), gi) in w.iter_mut().zip(v.iter_mut()).zip(g) {
                    *vi = config.momentum * *vi + gi;
                    *wi -= config.learning_rate * *vi;
                }
            }
            total += loss;
            batches += 1;
        }
        let epoch_loss = total / batches as f64;
        if !epoch_loss.is_finite() || weights.validate().is_err() {
            return Err(Error::Diverged {
                epoch,
                loss: epoch_loss,
            });
        }
        log::debug!("epoch {epoch}: loss {epoch_loss:.5}");
        epoch_losses.push(epoch_loss);
    }
    Ok(TrainOutcome {
        weights,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morphology::Mask;
    use crate::schedule::SigmaMode;

    fn dataset(n: usize, rng: &mut SeededRng) -> Vec<TrainingSample> {
        (0..n)
            .map(|_| {
                let p = Mask::from_fn(8, 8, |y, x| (2..4).contains(&y) && (3..6).contains(&x));
                let x0 = Image::from_fn(8, 8, |y, x| {
                    if p.get(y, x) {
                        0.45
                    } else {
                        0.65 + 0.02 * rng.normal()
                    }
                });
                TrainingSample {
                    x0,
                    cond: Conditioning::new(Mask::full(8, 8), p),
                }
            })
            .collect()
    }

    fn schedule() -> NoiseSchedule {
        NoiseSchedule::linear(20, 1e-3, 0.2, SigmaMode::Ddpm).unwrap()
    }

    fn central_difference(
        weights: &TinyDenoiserWeights,
        examples: &[Example<'_>],
        tensor: usize,
        index: usize,
        h: f64,
    ) -> f64 {
        let mut plus = weights.clone();
        plus.tensors_mut()[tensor][index] += h;
        let mut minus = weights.clone();
        minus.tensors_mut()[tensor][index] -= h;
        let lp = batch_loss_and_gradients(&plus, examples).unwrap().0;
        let lm = batch_loss_and_gradients(&minus, examples).unwrap().0;
        (lp - lm) / (2.0 * h)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = SeededRng::new(21);
        let s = schedule();
        let data = dataset(3, &mut rng);
        let mut w = TinyDenoiserWeights::init(3, 3, 4, 20, &mut rng);
        w.conv1_b.iter_mut().for_each(|v| *v = 0.1 * rng.normal());
        let examples: Vec<_> = data
            .iter()
            .map(|d| Example::draw(d, &s, &mut rng).unwrap())
            .collect();
        let (_, grads) = batch_loss_and_gradients(&w, &examples).unwrap();
        for (k, name) in super::super::TENSOR_NAMES.iter().enumerate() {
            for i in (0..grads.tensors[k].len()).step_by(5) {
                let fd = central_difference(&w, &examples, k, i, 1e-5);
                let an = grads.tensors[k][i];
                let tol = 1e-6 + 1e-4 * an.abs().max(fd.abs());
                assert!((an - fd).abs() <= tol, "{name}[{i}]: {an} vs {fd}");
            }
        }
    }

    #[test]
    fn zero_learning_rate_leaves_weights_unchanged() {
        let mut rng = SeededRng::new(3);
        let s = schedule();
        let data = dataset(5, &mut rng);
        let w = TinyDenoiserWeights::init(3, 4, 4, 20, &mut rng);
        let cfg = TrainConfig {
            epochs: 1,
            learning_rate: 0.0,
            momentum: 0.9,
            batch_size: 2,
        };
        let out = train(w.clone(), &data, &s, &cfg, &mut rng).unwrap();
        assert_eq!(out.weights, w);
        assert_eq!(out.epoch_losses.len(), 1);
    }

    #[test]
    fn zero_epochs_returns_initialisation() {
        let mut rng = SeededRng::new(3);
        let s = schedule();
        let data = dataset(2, &mut rng);
        let w = TinyDenoiserWeights::init(3, 4, 4, 20, &mut rng);
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let out = train(w.clone(), &data, &s, &cfg, &mut rng).unwrap();
        assert_eq!(out.weights, w);
        assert!(out.epoch_losses.is_empty());
    }

    #[test]
    fn divergence_reports_epoch() {
        let mut rng = SeededRng::new(4);
        let s = schedule();
        let data = dataset(4, &mut rng);
        let w = TinyDenoiserWeights::init(3, 4, 4, 20, &mut rng);
        let cfg = TrainConfig {
            epochs: 50,
            learning_rate: 1e6,
            momentum: 0.9,
            batch_size: 2,
        };
        match train(w, &data, &s, &cfg, &mut rng) {
            Err(Error::Diverged { epoch, .. }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut rng = SeededRng::new(5);
        let s = schedule();
        let w = TinyDenoiserWeights::init(5, 4, 4, 20, &mut rng);
        let data = dataset(2, &mut rng);
        assert!(matches!(
            train(w.clone(), &[], &s, &TrainConfig::default(), &mut rng),
            Err(Error::Empty(_))
        ));
        assert!(matches!(
            train(w, &data, &s, &TrainConfig::default(), &mut rng),
            Err(Error::Channels { .. })
        ));
        let bad = TrainConfig {
            learning_rate: -1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn training_reduces_loss() {
        let mut rng = SeededRng::new(6);
        let s = schedule();
        let data = dataset(16, &mut rng);
        let w = TinyDenoiserWeights::init(3, 4, 8, 20, &mut rng);
        let cfg = TrainConfig {
            epochs: 60,
            learning_rate: 0.02,
            momentum: 0.9,
            batch_size: 4,
        };
        let out = train(w, &data, &s, &cfg, &mut rng).unwrap();
        let head: f64 = out.epoch_losses[..10].iter().sum::<f64>() / 10.0;
        let tail: f64 = out.epoch_losses[50..].iter().sum::<f64>() / 10.0;
        assert!(tail < head, "{head} -> {tail}");
    }
}
