//! Counterfactual editing: MedEdit, naive RePaint, SDEdit and Palette-style
//! inpainting.
//!
//! The inpaint mask `m` marks the regenerated region (`m = 1`); every method
//! except SDEdit returns the prior scan bit-for-bit where `m = 0`.

use std::fmt;
use std::str::FromStr;

use crate::denoiser::{Conditioning, Denoiser, BASE_CHANNELS};
use crate::diffusion::{denoise_from, forward_jump, forward_marginal, reverse_step, sample, standard_normal_image};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::morphology::{check_pathology, dilate, Mask};
use crate::rng::SeededRng;
use crate::schedule::NoiseSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    MedEdit,
    NaiveRePaint,
    SdEdit,
    Palette,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::MedEdit,
        Method::NaiveRePaint,
        Method::SdEdit,
        Method::Palette,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::MedEdit => "mededit",
            Method::NaiveRePaint => "naive_repaint",
            Method::SdEdit => "sdedit",
            Method::Palette => "palette",
        }
    }

    /// Whether the method leaves pixels outside `m` untouched.
    pub fn preserves_known_region(self) -> bool {
        self != Method::SdEdit
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EditConfig {
    pub method: Method,
    /// Dilation kernel side length; used by MedEdit and Palette.
    pub k: usize,
    /// Resampling count `U`; used by MedEdit and naive RePaint.
    pub resample: usize,
    /// SDEdit only.
    pub encoding_ratio: f64,
    pub seed: u64,
    /// Record the state after every reverse step.
    pub trace: bool,
}

impl EditConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            k: 7,
            resample: if method == Method::NaiveRePaint { 3 } else { 4 },
            encoding_ratio: 0.2,
            seed: 0,
            trace: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if matches!(self.method, Method::MedEdit | Method::Palette) {
            check_kernel(self.k)?;
        }
        if matches!(self.method, Method::MedEdit | Method::NaiveRePaint) && self.resample == 0 {
            return Err(Error::Parameter("resample count U must be >= 1".into()));
        }
        if self.method == Method::SdEdit {
            check_ratio(self.encoding_ratio)?;
        }
        Ok(())
    }
}

fn check_kernel(k: usize) -> Result<()> {
    if k == 0 || k % 2 == 0 {
        return Err(Error::Parameter(format!("kernel size must be odd and >= 1, got {k}")));
    }
    Ok(())
}

fn check_ratio(ratio: f64) -> Result<()> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Parameter(format!(
            "encoding ratio must lie in (0, 1], got {ratio}"
        )));
    }
    Ok(())
}

/// The prior scan and the masks describing the requested edit.
#[derive(Debug, Clone, Copy)]
pub struct Triplet<'a> {
    pub prior: &'a Image,
    pub brain: &'a Mask,
    pub pathology: &'a Mask,
}

impl Triplet<'_> {
    fn validate(&self) -> Result<()> {
        self.prior.ensure_shape(self.brain.shape())?;
        check_pathology(self.brain, self.pathology)
    }

    fn conditioning(&self) -> Conditioning {
        Conditioning::new(self.brain.clone(), self.pathology.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EditResult {
    pub counterfactual: Image,
    pub inpaint: Mask,
    /// `x_{t-1}` after each reverse step, from `t = T` down to `t = 1`.
    pub trace: Option<Vec<Image>>,
}

/// Runs the configured method with an rng seeded from `config.seed`.
pub fn edit(
    config: &EditConfig,
    triplet: &Triplet<'_>,
    denoiser: &dyn Denoiser,
    schedule: &NoiseSchedule,
) -> Result<EditResult> {
    config.validate()?;
    let mut rng = SeededRng::new(config.seed);
    let rng = &mut rng;
    match config.method {
        Method::MedEdit => {
            let m = dilate(triplet.pathology, config.k)?;
            repaint(triplet, m, denoiser, schedule, config.resample, rng, config.trace)
        }
        Method::NaiveRePaint => repaint(
            triplet,
            triplet.pathology.clone(),
            denoiser,
            schedule,
            config.resample,
            rng,
            config.trace,
        ),
        Method::SdEdit => sdedit(triplet, denoiser, schedule, config.encoding_ratio, rng),
        Method::Palette => palette_inpaint(triplet, denoiser, schedule, config.k, rng),
    }
}

/// MedEdit: RePaint-style inpainting of `m = dilate(p, k)` with a
/// mask-conditioned denoiser and `U` resampling passes per step.
pub fn mededit(
    triplet: &Triplet<'_>,
    denoiser: &dyn Denoiser,
    schedule: &NoiseSchedule,
    k: usize,
    resample: usize,
    rng: &mut SeededRng,
) -> Result<EditResult> {
    check_kernel(k)?;
    triplet.validate()?;
    let m = dilate(triplet.pathology, k)?;
    repaint(triplet, m, denoiser, schedule, resample, rng, false)
}

/// MedEdit with `m = p`.
pub fn naive_repaint(
    triplet: &Triplet<'_>,
    denoiser: &dyn Denoiser,
    schedule: &NoiseSchedule,
    resample: usize,
    rng: &mut SeededRng,
) -> Result<EditResult> {
    repaint(triplet, triplet.pathology.clone(), denoiser, schedule, resample, rng, false)
}

/// The resampling loop shared by MedEdit and naive RePaint.
pub fn repaint(
    triplet: &Triplet<'_>,
    inpaint: Mask,
    denoiser: &dyn Denoiser,
    schedule: &NoiseSchedule,
    resample: usize,
    rng: &mut SeededRng,
    trace: bool,
) -> Result<EditResult> {
    triplet.validate()?;
    if resample == 0 {
        return Err(Error::Parameter("resample count U must be >= 1".into()));
    }
    if inpaint.shape() != triplet.brain.shape() {
        return Err(Error::Shape {
            expected: triplet.brain.shape(),
            found: inpaint.shape(),
        });
    }
    let x0 = triplet.prior;
    let cond = triplet.conditioning();
    let (h, w) = x0.shape();
    let mut snapshots = trace.then(Vec::new);
    let mut x = standard_normal_image(h, w, rng);
    for t in (1..=schedule.steps()).rev() {
        for u in 1..=resample {
            let (known, _) = forward_marginal(x0, t - 1, schedule, rng)?;
            let eps_hat = denoiser.predict(&cond.input(&x, t))?;
            let unknown = reverse_step(&x, &eps_hat, t, schedule, rng)?;
            let prev = known.select(&inpaint, &unknown)?;
            if u < resample && t > 1 {
                x = forward_jump(&prev, schedule.beta(t - 1), rng);
            } else {
                // At t = 1 further passes would recompute the same
                // deterministic x_0 from an unchanged x_1.
                x = prev;
                break;
            }
        }
        if let Some(s) = snapshots.as_mut() {
            s.push(x.clone());
        }
    }
    Ok(EditResult {
        counterfactual: x,
        inpaint,
        trace: snapshots,
    })
}

/// Number of forward steps SDEdit applies for a given ratio.
pub fn encoding_steps(ratio: f64, schedule: &NoiseSchedule) -> usize {
    (ratio * schedule.steps() as f64).round() as usize
}

/// SDEdit: noise the whole scan to `t* = round(ratio * T)` and denoise it
/// conditionally. Nothing is blended back; the recorded mask is the brain.
pub fn sdedit(
    triplet: &Triplet<'_>,
    denoiser: &dyn Denoiser,
    schedule: &NoiseSchedule,
    encoding_ratio: f64,
    rng: &mut SeededRng,
) -> Result<EditResult> {
    check_ratio(encoding_ratio)?;
    triplet.validate()?;
    let t_star = encoding_steps(encoding_ratio, schedule);
    let (x_start, _) = forward_marginal(triplet.prior, t_star, schedule, rng)?;
    let counterfactual = denoise_from(denoiser, &triplet.conditioning(), x_start, t_star, schedule, rng)?;
    Ok(EditResult {
        counterfactual,
        inpaint: triplet.brain.clone(),
        trace: None,
    })
}

/// Palette-style inpainting of `m = dilate(p, k)`: one denoiser call per step
/// with the known region `(1 - m) x0` and `m` as extra input channels.
pub fn palette_inpaint(
    triplet: &Triplet<'_>,
    denoiser: &dyn Denoiser,
    schedule: &NoiseSchedule,
    k: usize,
    rng: &mut SeededRng,
) -> Result<EditResult> {
    palette_with_context(triplet, triplet.prior, denoiser, schedule, k, rng)
}

/// Palette with an arbitrary image standing in for the known-region channel.
/// Passing zeros gives the context ablation; the output is still blended
/// with the true prior outside `m`.
pub fn palette_with_context(
    triplet: &Triplet<'_>,
    context: &Image,
    denoiser: &dyn Denoiser,
    schedule: &NoiseSchedule,
    k: usize,
    rng: &mut SeededRng,
) -> Result<EditResult> {
    check_kernel(k)?;
    triplet.validate()?;
    context.ensure_shape(triplet.prior.shape())?;
    if denoiser.input_channels() != BASE_CHANNELS + 2 {
        return Err(Error::Channels {
            expected: BASE_CHANNELS + 2,
            found: denoiser.input_channels(),
        });
    }
    let m = dilate(triplet.pathology, k)?;
    let cond = triplet.conditioning().with_known_region(context, &m)?;
    let generated = sample(denoiser, &cond, schedule, rng)?;
    Ok(EditResult {
        counterfactual: triplet.prior.select(&m, &generated)?,
        inpaint: m,
        trace: None,
    })
}
