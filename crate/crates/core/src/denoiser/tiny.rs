//! Three-layer 3x3 convolutional noise predictor with hand-written backprop.
//!
//! ```text
//! pre1 = conv1(input) + proj * table[t]     h1 = silu(pre1)
//! pre2 = conv2(h1)                          h2 = silu(pre2)
//! out  = conv3(h2)
//! ```
//! All convolutions use zero padding so the spatial size is preserved. The
//! sinusoidal `table` is fixed; the projection to hidden channels is learned.

use super::{Denoiser, DenoiserInput};
use crate::error::{Error, Result, WeightsError};
use crate::image::Image;
use crate::rng::SeededRng;

pub const TENSOR_NAMES: [&str; 7] = [
    "conv1.weight",
    "conv1.bias",
    "time.proj",
    "conv2.weight",
    "conv2.bias",
    "conv3.weight",
    "conv3.bias",
];

#[derive(Debug, Clone, PartialEq)]
pub struct TinyDenoiserWeights {
    pub(crate) in_channels: usize,
    pub(crate) hidden: usize,
    pub(crate) embed_dim: usize,
    /// `(steps + 1) x embed_dim`, row `t` embeds timestep `t`.
    pub(crate) table: Vec<f64>,
    pub(crate) conv1_w: Vec<f64>,
    pub(crate) conv1_b: Vec<f64>,
    pub(crate) time_proj: Vec<f64>,
    pub(crate) conv2_w: Vec<f64>,
    pub(crate) conv2_b: Vec<f64>,
    pub(crate) conv3_w: Vec<f64>,
    pub(crate) conv3_b: Vec<f64>,
}

pub(crate) fn sinusoidal_table(steps: usize, dim: usize) -> Vec<f64> {
    let mut table = vec![0.0; (steps + 1) * dim];
    for t in 0..=steps {
        for j in 0..dim / 2 {
            let freq = 1.0 / 10_000f64.powf(2.0 * j as f64 / dim as f64);
            table[t * dim + 2 * j] = (t as f64 * freq).sin();
            table[t * dim + 2 * j + 1] = (t as f64 * freq).cos();
        }
    }
    table
}

impl TinyDenoiserWeights {
    /// Gaussian fan-in initialisation; biases start at zero.
    pub fn init(
        in_channels: usize,
        hidden: usize,
        embed_dim: usize,
        steps: usize,
        rng: &mut SeededRng,
    ) -> Self {
        let mut w = Self::zeros(in_channels, hidden, embed_dim, steps);
        let mut fill = |v: &mut [f64], fan_in: usize| {
            let scale = (1.0 / fan_in as f64).sqrt();
            for x in v {
                *x = scale * rng.normal();
            }
        };
        fill(&mut w.conv1_w, 9 * in_channels);
        fill(&mut w.time_proj, embed_dim);
        fill(&mut w.conv2_w, 9 * hidden);
        fill(&mut w.conv3_w, 9 * hidden);
        w
    }

    pub fn zeros(in_channels: usize, hidden: usize, embed_dim: usize, steps: usize) -> Self {
        Self {
            in_channels,
            hidden,
            embed_dim,
            table: sinusoidal_table(steps, embed_dim),
            conv1_w: vec![0.0; hidden * in_channels * 9],
            conv1_b: vec![0.0; hidden],
            time_proj: vec![0.0; hidden * embed_dim],
            conv2_w: vec![0.0; hidden * hidden * 9],
            conv2_b: vec![0.0; hidden],
            conv3_w: vec![0.0; hidden * 9],
            conv3_b: vec![0.0; 1],
        }
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    /// Largest timestep the embedding table covers.
    pub fn max_step(&self) -> usize {
        self.table.len() / self.embed_dim - 1
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn tensors(&self) -> [&[f64]; 7] {
        [
            &self.conv1_w,
            &self.conv1_b,
            &self.time_proj,
            &self.conv2_w,
            &self.conv2_b,
            &self.conv3_w,
            &self.conv3_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 7] {
        [
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.time_proj,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.conv3_w,
            &mut self.conv3_b,
        ]
    }

    /// Expected shape of each trainable tensor, in `TENSOR_NAMES` order.
    pub fn tensor_shapes(&self) -> [Vec<usize>; 7] {
        let (c, h, e) = (self.in_channels, self.hidden, self.embed_dim);
        [
            vec![h, c, 3, 3],
            vec![h],
            vec![h, e],
            vec![h, h, 3, 3],
            vec![h],
            vec![1, h, 3, 3],
            vec![1],
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub(crate) fn validate(&self) -> std::result::Result<(), WeightsError> {
        if self.in_channels == 0 || self.hidden == 0 || self.embed_dim == 0 {
            return Err(WeightsError::Shape("zero-sized dimension".into()));
        }
        if self.table.len() % self.embed_dim != 0 || self.table.len() < self.embed_dim {
            return Err(WeightsError::Shape(format!(
                "embedding table of {} values is not a multiple of {}",
                self.table.len(),
                self.embed_dim
            )));
        }
        for ((name, tensor), shape) in TENSOR_NAMES
            .iter()
            .zip(self.tensors())
            .zip(self.tensor_shapes())
        {
            let n: usize = shape.iter().product();
            if tensor.len() != n {
                return Err(WeightsError::Shape(format!(
                    "{name} has {} values, shape {shape:?} needs {n}",
                    tensor.len()
                )));
            }
            if tensor.iter().any(|v| !v.is_finite()) {
                return Err(WeightsError::NonFinite(name));
            }
        }
        Ok(())
    }
}

/// Gradients in `TENSOR_NAMES` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: [Vec<f64>; 7],
}

impl Gradients {
    pub fn zeros_like(w: &TinyDenoiserWeights) -> Self {
        Self {
            tensors: w.tensors().map(|t| vec![0.0; t.len()]),
        }
    }

    fn add(&mut self, other: &Gradients) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

fn silu(z: f64) -> f64 {
    z / (1.0 + (-z).exp())
}

fn silu_grad(z: f64) -> f64 {
    let s = 1.0 / (1.0 + (-z).exp());
    s * (1.0 + z * (1.0 - s))
}

/// 3x3 same-padding convolution, channel-major buffers.
fn conv3x3(input: &[f64], cin: usize, h: usize, w: usize, weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let cout = bias.len();
    let n = h * w;
    let mut out = vec![0.0; cout * n];
    for o in 0..cout {
        out[o * n..(o + 1) * n].fill(bias[o]);
        for c in 0..cin {
            let src = &input[c * n..(c + 1) * n];
            for ky in 0..3 {
                for kx in 0..3 {
                    let k = weight[((o * cin + c) * 3 + ky) * 3 + kx];
                    if k == 0.0 {
                        continue;
                    }
                    let (y0, y1) = (1usize.saturating_sub(ky), (h + 1 - ky).min(h));
                    let (x0, x1) = (1usize.saturating_sub(kx), (w + 1 - kx).min(w));
                    for y in y0..y1 {
                        let sy = y + ky - 1;
                        let dst = &mut out[o * n + y * w + x0..o * n + y * w + x1];
                        let s = &src[sy * w + x0 + kx - 1..sy * w + x1 + kx - 1];
                        for (d, v) in dst.iter_mut().zip(s) {
                            *d += k * v;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates weight and bias gradients; returns the input gradient when
/// `want_input` is set.
#[allow(clippy::too_many_arguments)]
fn conv3x3_backward(
    input: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    d_out: &[f64],
    d_weight: &mut [f64],
    d_bias: &mut [f64],
    want_input: bool,
) -> Option<Vec<f64>> {
    let cout = d_bias.len();
    let n = h * w;
    let mut d_in = want_input.then(|| vec![0.0; cin * n]);
    for o in 0..cout {
        let go = &d_out[o * n..(o + 1) * n];
        d_bias[o] += go.iter().sum::<f64>();
        for c in 0..cin {
            let src = &input[c * n..(c + 1) * n];
            for ky in 0..3 {
                for kx in 0..3 {
                    let widx = ((o * cin + c) * 3 + ky) * 3 + kx;
                    let (y0, y1) = (1usize.saturating_sub(ky), (h + 1 - ky).min(h));
                    let (x0, x1) = (1usize.saturating_sub(kx), (w + 1 - kx).min(w));
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let sy = y + ky - 1;
                        let g = &go[y * w + x0..y * w + x1];
                        let s = &src[sy * w + x0 + kx - 1..sy * w + x1 + kx - 1];
                        acc += g.iter().zip(s).map(|(a, b)| a * b).sum::<f64>();
                    }
                    d_weight[widx] += acc;
                    if let Some(d_in) = d_in.as_mut() {
                        let k = weight[widx];
                        for y in y0..y1 {
                            let sy = y + ky - 1;
                            let g = &go[y * w + x0..y * w + x1];
                            let d = &mut d_in[c * n + sy * w + x0 + kx - 1
                                ..c * n + sy * w + x1 + kx - 1];
                            for (di, gi) in d.iter_mut().zip(g) {
                                *di += k * gi;
                            }
                        }
                    }
                }
            }
        }
    }
    d_in
}

pub(crate) struct Activations {
    input: Vec<f64>,
    pre1: Vec<f64>,
    h1: Vec<f64>,
    pre2: Vec<f64>,
    h2: Vec<f64>,
    pub(crate) out: Vec<f64>,
    t: usize,
}

pub(crate) fn stack_channels(input: &DenoiserInput<'_>) -> Vec<f64> {
    let n = input.x_t.len();
    let mut buf = Vec::with_capacity(input.channels() * n);
    buf.extend_from_slice(input.x_t.pixels());
    buf.extend(input.brain.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }));
    buf.extend(input.pathology.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }));
    for e in input.extra {
        buf.extend_from_slice(e.pixels());
    }
    buf
}

impl TinyDenoiserWeights {
    fn check_input(&self, input: &DenoiserInput<'_>) -> Result<()> {
        input.validate(self.in_channels)?;
        if input.t > self.max_step() {
            return Err(Error::TimestepOutOfRange {
                t: input.t,
                min: 0,
                max: self.max_step(),
            });
        }
        Ok(())
    }

    pub(crate) fn forward_full(&self, input: &DenoiserInput<'_>) -> Result<Activations> {
        self.check_input(input)?;
        let (h, w) = input.shape();
        let n = h * w;
        let hid = self.hidden;
        let x = stack_channels(input);

        let mut pre1 = conv3x3(&x, self.in_channels, h, w, &self.conv1_w, &self.conv1_b);
        let row = &self.table[input.t * self.embed_dim..(input.t + 1) * self.embed_dim];
        for o in 0..hid {
            let shift: f64 = self.time_proj[o * self.embed_dim..(o + 1) * self.embed_dim]
                .iter()
                .zip(row)
                .map(|(a, b)| a * b)
                .sum();
            for v in &mut pre1[o * n..(o + 1) * n] {
                *v += shift;
            }
        }
        let h1: Vec<f64> = pre1.iter().map(|&z| silu(z)).collect();
        let pre2 = conv3x3(&h1, hid, h, w, &self.conv2_w, &self.conv2_b);
        let h2: Vec<f64> = pre2.iter().map(|&z| silu(z)).collect();
        let out = conv3x3(&h2, hid, h, w, &self.conv3_w, &self.conv3_b);
        Ok(Activations {
            input: x,
            pre1,
            h1,
            pre2,
            h2,
            out,
            t: input.t,
        })
    }

    /// Forward pass producing the noise estimate.
    pub fn forward(&self, input: &DenoiserInput<'_>) -> Result<Image> {
        let (h, w) = input.shape();
        let acts = self.forward_full(input)?;
        Ok(Image::from_raw(h, w, acts.out))
    }

    /// Backpropagates `d_out` (gradient of the loss w.r.t. the output image)
    /// and adds the parameter gradients into `grads`.
    pub(crate) fn backward(
        &self,
        acts: &Activations,
        d_out: &[f64],
        shape: (usize, usize),
        grads: &mut Gradients,
    ) {
        let (h, w) = shape;
        let n = h * w;
        let hid = self.hidden;
        let [g_w1, g_b1, g_proj, g_w2, g_b2, g_w3, g_b3] = &mut grads.tensors;

        let d_h2 = conv3x3_backward(&acts.h2, hid, h, w, &self.conv3_w, d_out, g_w3, g_b3, true)
            .expect("input gradient requested");
        let d_pre2: Vec<f64> = d_h2
            .iter()
            .zip(&acts.pre2)
            .map(|(g, &z)| g * silu_grad(z))
            .collect();
        let d_h1 = conv3x3_backward(&acts.h1, hid, h, w, &self.conv2_w, &d_pre2, g_w2, g_b2, true)
            .expect("input gradient requested");
        let d_pre1: Vec<f64> = d_h1
            .iter()
            .zip(&acts.pre1)
            .map(|(g, &z)| g * silu_grad(z))
            .collect();
        conv3x3_backward(
            &acts.input,
            self.in_channels,
            h,
            w,
            &self.conv1_w,
            &d_pre1,
            g_w1,
            g_b1,
            false,
        );
        let row = &self.table[acts.t * self.embed_dim..(acts.t + 1) * self.embed_dim];
        for o in 0..hid {
            let s: f64 = d_pre1[o * n..(o + 1) * n].iter().sum();
            for (g, r) in g_proj[o * self.embed_dim..(o + 1) * self.embed_dim]
                .iter_mut()
                .zip(row)
            {
                *g += s * r;
            }
        }
    }

    /// Upper bound on `||forward(input)||_2` from weight norms. Uses
    /// `|silu(z)| <= |z|` and `||conv(x)|| <= 3 ||W||_F ||x||` for a 3x3
    /// zero-padded convolution.
    pub fn output_norm_bound(&self, input: &DenoiserInput<'_>) -> f64 {
        let fro = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let n = input.x_t.len() as f64;
        let x_norm = fro(&stack_channels(input));
        let row = &self.table[input.t * self.embed_dim..(input.t + 1) * self.embed_dim];
        let shift_norm = (0..self.hidden)
            .map(|o| {
                let s: f64 = self.time_proj[o * self.embed_dim..(o + 1) * self.embed_dim]
                    .iter()
                    .zip(row)
                    .map(|(a, b)| a * b)
                    .sum();
                s * s
            })
            .sum::<f64>()
            .sqrt();
        let h1 = 3.0 * fro(&self.conv1_w) * x_norm + (fro(&self.conv1_b) + shift_norm) * n.sqrt();
        let h2 = 3.0 * fro(&self.conv2_w) * h1 + fro(&self.conv2_b) * n.sqrt();
        3.0 * fro(&self.conv3_w) * h2 + fro(&self.conv3_b) * n.sqrt()
    }
}

/// The trained network behind the `Denoiser` interface.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyDenoiser {
    weights: TinyDenoiserWeights,
}

impl TinyDenoiser {
    pub fn new(weights: TinyDenoiserWeights) -> Self {
        Self { weights }
    }

    pub fn weights(&self) -> &TinyDenoiserWeights {
        &self.weights
    }
}

impl Denoiser for TinyDenoiser {
    fn input_channels(&self) -> usize {
        self.weights.in_channels
    }

    fn predict(&self, input: &DenoiserInput<'_>) -> Result<Image> {
        self.weights.forward(input)
    }
}

pub(crate) fn accumulate(total: &mut Gradients, part: &Gradients) {
    total.add(part);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morphology::Mask;

    fn input_fixture(rng: &mut SeededRng) -> (Image, Mask, Mask, Vec<Image>) {
        let x = Image::from_fn(6, 5, |_, _| rng.normal());
        let b = Mask::from_fn(6, 5, |y, x| y > 0 && x > 0);
        let p = Mask::from_fn(6, 5, |y, x| y == 2 && x == 2);
        let extra = vec![Image::from_fn(6, 5, |_, _| rng.uniform()), p.to_image()];
        (x, b, p, extra)
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mut rng = SeededRng::new(0);
        let (x, b, p, _) = input_fixture(&mut rng);
        let w = TinyDenoiserWeights::zeros(3, 4, 8, 10);
        let input = DenoiserInput {
            x_t: &x,
            brain: &b,
            pathology: &p,
            t: 4,
            extra: &[],
        };
        let out = w.forward(&input).unwrap();
        assert!(out.pixels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = SeededRng::new(1);
        let (x, b, p, extra) = input_fixture(&mut rng);
        let w = TinyDenoiserWeights::init(5, 4, 8, 10, &mut rng);
        let input = DenoiserInput {
            x_t: &x,
            brain: &b,
            pathology: &p,
            t: 7,
            extra: &extra,
        };
        let a = w.forward(&input).unwrap();
        let c = w.forward(&input).unwrap();
        assert_eq!(
            a.pixels().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            c.pixels().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn output_bounded_by_weight_norms() {
        let mut rng = SeededRng::new(2);
        for _ in 0..10 {
            let (x, b, p, extra) = input_fixture(&mut rng);
            let mut w = TinyDenoiserWeights::init(5, 6, 8, 20, &mut rng);
            for t in w.tensors_mut() {
                for v in t.iter_mut() {
                    *v *= 0.3;
                }
            }
            w.conv1_b.iter_mut().for_each(|v| *v = 0.1 * rng.normal());
            w.conv3_b[0] = 0.2;
            let input = DenoiserInput {
                x_t: &x,
                brain: &b,
                pathology: &p,
                t: 13,
                extra: &extra,
            };
            let out = w.forward(&input).unwrap();
            assert!(out.is_finite());
            assert!(out.l2_norm() <= w.output_norm_bound(&input));
        }
    }

    #[test]
    fn channel_mismatch_rejected() {
        let mut rng = SeededRng::new(3);
        let (x, b, p, extra) = input_fixture(&mut rng);
        let w = TinyDenoiserWeights::init(3, 4, 8, 10, &mut rng);
        let input = DenoiserInput {
            x_t: &x,
            brain: &b,
            pathology: &p,
            t: 1,
            extra: &extra,
        };
        assert!(matches!(
            w.forward(&input),
            Err(Error::Channels {
                expected: 3,
                found: 5
            })
        ));
    }

    #[test]
    fn timestep_beyond_table_rejected() {
        let mut rng = SeededRng::new(3);
        let (x, b, p, _) = input_fixture(&mut rng);
        let w = TinyDenoiserWeights::init(3, 4, 8, 10, &mut rng);
        let input = DenoiserInput {
            x_t: &x,
            brain: &b,
            pathology: &p,
            t: 11,
            extra: &[],
        };
        assert!(matches!(
            w.forward(&input),
            Err(Error::TimestepOutOfRange { .. })
        ));
    }

    // Brute-force convolution for a single output pixel.
    #[test]
    fn conv_matches_direct_sum() {
        let mut rng = SeededRng::new(4);
        let (cin, cout, h, w) = (2, 3, 4, 5);
        let input: Vec<f64> = (0..cin * h * w).map(|_| rng.normal()).collect();
        let weight: Vec<f64> = (0..cout * cin * 9).map(|_| rng.normal()).collect();
        let bias: Vec<f64> = (0..cout).map(|_| rng.normal()).collect();
        let out = conv3x3(&input, cin, h, w, &weight, &bias);
        for o in 0..cout {
            for y in 0..h {
                for x in 0..w {
                    let mut s = bias[o];
                    for c in 0..cin {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let (sy, sx) = (y as isize + ky as isize - 1, x as isize + kx as isize - 1);
                                if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w {
                                    s += weight[((o * cin + c) * 3 + ky) * 3 + kx]
                                        * input[c * h * w + sy as usize * w + sx as usize];
                                }
                            }
                        }
                    }
                    assert!((out[o * h * w + y * w + x] - s).abs() < 1e-12);
                }
            }
        }
    }
}
