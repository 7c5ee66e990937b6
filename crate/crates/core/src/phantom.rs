//! Synthetic brain phantoms with a known indirect lesion effect.
//!
//! An elliptical brain holds two circular ventricles placed symmetrically
//! about the vertical midline. A lesion is a union of one to three disks
//! placed around one ventricle; that (ipsilateral) ventricle's radius grows by
//! `gain * lesion_area / 100` pixels. Ventricles take precedence over lesion
//! disks, so the final lesion is disjoint from the enlarged ventricle.
//! Pixel centres sit at `(x + 0.5, y + 0.5)`.

use crate::denoiser::{Component, DenoiserInput, PixelwiseGaussianPrior, PriorModel, BASE_CHANNELS};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::morphology::{check_pathology, Mask};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }

    fn index(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomParams {
    pub height: usize,
    pub width: usize,
    /// Horizontal and vertical brain semi-axes in pixels.
    pub brain_axes: (f64, f64),
    /// Each semi-axis is perturbed uniformly by up to this many pixels.
    pub brain_jitter: f64,
    /// Horizontal distance of each ventricle centre from the midline.
    pub ventricle_offset: f64,
    pub ventricle_radius: f64,
    /// Radius increase in pixels per 100 lesion pixels.
    pub gain: f64,
    pub background_level: f64,
    pub ventricle_level: f64,
    pub lesion_level: f64,
    pub tissue_level: f64,
    /// Noise on the (noise-free) background.
    pub background_noise: f64,
    /// Noise on tissue, ventricle and lesion pixels.
    pub tissue_noise: f64,
    pub lesion_disks: (usize, usize),
    pub lesion_disk_radius: (f64, f64),
    /// Distance of lesion disk centres beyond the base ventricle edge.
    pub lesion_distance: (f64, f64),
    pub lesion_area: (usize, usize),
    pub max_retries: usize,
}

impl Default for PhantomParams {
    fn default() -> Self {
        Self {
            height: 32,
            width: 32,
            brain_axes: (12.0, 14.0),
            brain_jitter: 1.0,
            ventricle_offset: 5.0,
            ventricle_radius: 2.5,
            gain: 2.5,
            background_level: 0.0,
            ventricle_level: 0.25,
            lesion_level: 0.45,
            tissue_level: 0.65,
            background_noise: 0.0,
            tissue_noise: 0.02,
            lesion_disks: (1, 3),
            lesion_disk_radius: (1.5, 3.0),
            lesion_distance: (1.5, 5.0),
            lesion_area: (6, 90),
            max_retries: 200,
        }
    }
}

/// Minimum separation between any two intensity levels.
pub const MIN_LEVEL_GAP: f64 = 0.15;

impl PhantomParams {
    /// Defaults rescaled to a square image of side `size`.
    pub fn scaled(size: usize) -> Self {
        let base = Self::default();
        let f = size as f64 / base.width as f64;
        let area_f = f * f;
        Self {
            height: size,
            width: size,
            brain_axes: (base.brain_axes.0 * f, base.brain_axes.1 * f),
            brain_jitter: base.brain_jitter * f,
            ventricle_offset: base.ventricle_offset * f,
            ventricle_radius: base.ventricle_radius * f,
            gain: base.gain / f,
            lesion_disk_radius: (base.lesion_disk_radius.0 * f, base.lesion_disk_radius.1 * f),
            lesion_distance: (base.lesion_distance.0 * f, base.lesion_distance.1 * f),
            lesion_area: (
                (base.lesion_area.0 as f64 * area_f).round() as usize,
                (base.lesion_area.1 as f64 * area_f).round() as usize,
            ),
            ..base
        }
    }

    pub fn levels(&self) -> [f64; 4] {
        [
            self.background_level,
            self.ventricle_level,
            self.lesion_level,
            self.tissue_level,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.height == 0 || self.width == 0 {
            return bad("phantom size must be positive".into());
        }
        let levels = self.levels();
        if levels.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return bad(format!("intensity levels must lie in [0, 1]: {levels:?}"));
        }
        for i in 0..4 {
            for j in i + 1..4 {
                if (levels[i] - levels[j]).abs() < MIN_LEVEL_GAP - 1e-12 {
                    return bad(format!(
                        "intensity levels {} and {} closer than {MIN_LEVEL_GAP}",
                        levels[i], levels[j]
                    ));
                }
            }
        }
        if !(self.gain >= 0.0) {
            return bad(format!("enlargement gain must be >= 0, got {}", self.gain));
        }
        if !(self.background_noise >= 0.0) || !(self.tissue_noise >= 0.0) {
            return bad("noise levels must be >= 0".into());
        }
        if !(self.ventricle_radius > 0.0) || !(self.brain_axes.0 > 0.0) || !(self.brain_axes.1 > 0.0)
        {
            return bad("brain axes and ventricle radius must be positive".into());
        }
        if self.brain_jitter < 0.0 || self.brain_jitter >= self.brain_axes.0.min(self.brain_axes.1) {
            return bad(format!("brain jitter {} out of range", self.brain_jitter));
        }
        if self.max_ventricle_radius() >= self.ventricle_offset {
            return bad(format!(
                "largest enlarged ventricle radius {} crosses the midline (offset {})",
                self.max_ventricle_radius(),
                self.ventricle_offset
            ));
        }
        if self.ventricle_offset + self.max_ventricle_radius()
            > self.brain_axes.0 - self.brain_jitter
        {
            return bad("ventricles do not fit inside the brain".into());
        }
        let (d0, d1) = self.lesion_disks;
        if d0 == 0 || d0 > d1 {
            return bad(format!("lesion disk count range {d0}..={d1} is invalid"));
        }
        let ordered = |(a, b): (f64, f64)| a >= 0.0 && a <= b;
        if !ordered(self.lesion_disk_radius) || !ordered(self.lesion_distance) {
            return bad("lesion radius and distance ranges must be ordered and >= 0".into());
        }
        if self.lesion_area.0 == 0 || self.lesion_area.0 > self.lesion_area.1 {
            return bad(format!("lesion area range {:?} is invalid", self.lesion_area));
        }
        if self.max_retries == 0 {
            return bad("max_retries must be >= 1".into());
        }
        Ok(())
    }

    pub fn center(&self) -> (f64, f64) {
        (self.width as f64 / 2.0, self.height as f64 / 2.0)
    }

    pub fn ventricle_center(&self, side: Side) -> (f64, f64) {
        let (cx, cy) = self.center();
        match side {
            Side::Left => (cx - self.ventricle_offset, cy),
            Side::Right => (cx + self.ventricle_offset, cy),
        }
    }

    /// Ipsilateral ventricle radius for a lesion of `area` pixels.
    pub fn enlarged_radius(&self, area: usize) -> f64 {
        self.ventricle_radius + self.gain * area as f64 / 100.0
    }

    pub fn max_ventricle_radius(&self) -> f64 {
        self.enlarged_radius(self.lesion_area.1)
    }

    pub fn side_of_column(&self, x: usize) -> Side {
        if (x as f64 + 0.5) < self.center().0 {
            Side::Left
        } else {
            Side::Right
        }
    }

    /// Side of a pathology mask from its centroid; `None` when empty.
    pub fn lesion_side(&self, pathology: &Mask) -> Option<Side> {
        pathology.centroid_x().map(|cx| {
            if cx < self.center().0 {
                Side::Left
            } else {
                Side::Right
            }
        })
    }

    /// Ventricle radii `[left, right]` implied by a pathology mask.
    pub fn ventricle_radii(&self, pathology: &Mask) -> [f64; 2] {
        let mut radii = [self.ventricle_radius; 2];
        if let Some(side) = self.lesion_side(pathology) {
            radii[side.index()] = self.enlarged_radius(pathology.area());
        }
        radii
    }

    fn distance_to(&self, side: Side, y: usize, x: usize) -> f64 {
        let (vx, vy) = self.ventricle_center(side);
        let (dx, dy) = (x as f64 + 0.5 - vx, y as f64 + 0.5 - vy);
        (dx * dx + dy * dy).sqrt()
    }
}

pub fn disk_mask(height: usize, width: usize, center: (f64, f64), radius: f64) -> Mask {
    let r2 = radius * radius;
    Mask::from_fn(height, width, |y, x| {
        let (dx, dy) = (x as f64 + 0.5 - center.0, y as f64 + 0.5 - center.1);
        dx * dx + dy * dy <= r2
    })
}

pub fn ellipse_mask(height: usize, width: usize, center: (f64, f64), axes: (f64, f64)) -> Mask {
    Mask::from_fn(height, width, |y, x| {
        let (dx, dy) = (
            (x as f64 + 0.5 - center.0) / axes.0,
            (y as f64 + 0.5 - center.1) / axes.1,
        );
        dx * dx + dy * dy <= 1.0
    })
}

/// Both ventricles for the given radii, clipped to the brain.
pub fn ventricle_mask(params: &PhantomParams, brain: &Mask, radii: [f64; 2]) -> Mask {
    let (h, w) = (params.height, params.width);
    let left = disk_mask(h, w, params.ventricle_center(Side::Left), radii[0]);
    let right = disk_mask(h, w, params.ventricle_center(Side::Right), radii[1]);
    left.union(&right)
        .and_then(|v| v.intersect(brain))
        .expect("masks share the phantom shape")
}

/// Pixel count of the ipsilateral ventricle implied by `(brain, pathology)`.
pub fn expected_ventricle_area(params: &PhantomParams, brain: &Mask, pathology: &Mask) -> Result<usize> {
    let side = params
        .lesion_side(pathology)
        .ok_or_else(|| Error::Metric("lesion side undeterminable: pathology mask is empty".into()))?;
    let r = params.enlarged_radius(pathology.area());
    let disk = disk_mask(params.height, params.width, params.ventricle_center(side), r);
    disk.overlap(brain)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Label {
    Background,
    Ventricle,
    Lesion,
    Tissue,
}

impl PhantomParams {
    fn label_level(&self, label: Label) -> (f64, f64) {
        match label {
            Label::Background => (self.background_level, self.background_noise),
            Label::Ventricle => (self.ventricle_level, self.tissue_noise),
            Label::Lesion => (self.lesion_level, self.tissue_noise),
            Label::Tissue => (self.tissue_level, self.tissue_noise),
        }
    }
}

fn labels(brain: &Mask, ventricles: &Mask, pathology: &Mask) -> Vec<Label> {
    brain
        .bits()
        .iter()
        .zip(ventricles.bits())
        .zip(pathology.bits())
        .map(|((&b, &v), &p)| match (b, v, p) {
            (false, _, _) => Label::Background,
            (true, true, _) => Label::Ventricle,
            (true, false, true) => Label::Lesion,
            (true, false, false) => Label::Tissue,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSample {
    pub image: Image,
    pub brain: Mask,
    pub pathology: Mask,
    pub ventricles: Mask,
    pub lesion_side: Option<Side>,
    /// Ventricle radii `[left, right]`.
    pub ventricle_radii: [f64; 2],
    /// Ipsilateral ventricle area; the left ventricle for healthy samples.
    pub true_ventricle_area: usize,
}

impl PhantomSample {
    pub fn lesion_area(&self) -> usize {
        self.pathology.area()
    }
}

fn draw_brain(params: &PhantomParams, rng: &mut SeededRng) -> Mask {
    let j = params.brain_jitter;
    let ax = params.brain_axes.0 + rng.uniform_range(-j, j);
    let ay = params.brain_axes.1 + rng.uniform_range(-j, j);
    ellipse_mask(params.height, params.width, params.center(), (ax, ay))
}

/// Candidate lesion for `side`, or `None` when it misses the area range.
fn draw_lesion(params: &PhantomParams, brain: &Mask, side: Side, rng: &mut SeededRng) -> Option<Mask> {
    let (h, w) = (params.height, params.width);
    let (vx, vy) = params.ventricle_center(side);
    let (d0, d1) = params.lesion_disks;
    let n = d0 + rng.below(d1 - d0 + 1);
    let mut raw = Mask::empty(h, w);
    for _ in 0..n {
        let angle = rng.uniform_range(0.0, std::f64::consts::TAU);
        let dist = params.ventricle_radius
            + rng.uniform_range(params.lesion_distance.0, params.lesion_distance.1);
        let radius = rng.uniform_range(params.lesion_disk_radius.0, params.lesion_disk_radius.1);
        let c = (vx + dist * angle.cos(), vy + dist * angle.sin());
        raw = raw.union(&disk_mask(h, w, c, radius)).ok()?;
    }
    let hemisphere = Mask::from_fn(h, w, |_, x| params.side_of_column(x) == side);
    let other = match side {
        Side::Left => Side::Right,
        Side::Right => Side::Left,
    };
    let contra = disk_mask(h, w, params.ventricle_center(other), params.ventricle_radius);
    let raw = raw
        .intersect(brain)
        .and_then(|m| m.intersect(&hemisphere))
        .and_then(|m| m.difference(&contra))
        .ok()?;
    // Carving with the radius implied by the uncarved area over-carves, so
    // the final lesion's own (smaller) enlarged ventricle cannot touch it.
    let base = disk_mask(h, w, (vx, vy), params.ventricle_radius);
    let uncarved = raw.difference(&base).ok()?.area();
    let carve = disk_mask(h, w, (vx, vy), params.enlarged_radius(uncarved));
    let lesion = raw.difference(&carve).ok()?;
    let area = lesion.area();
    (area >= params.lesion_area.0 && area <= params.lesion_area.1).then_some(lesion)
}

/// Draws one phantom. All randomness comes from `rng`.
pub fn generate(params: &PhantomParams, with_lesion: bool, rng: &mut SeededRng) -> Result<PhantomSample> {
    params.validate()?;
    let (h, w) = (params.height, params.width);
    let brain = draw_brain(params, rng);
    let (pathology, side) = if with_lesion {
        let side = if rng.below(2) == 0 { Side::Left } else { Side::Right };
        let mut found = None;
        for _ in 0..params.max_retries {
            if let Some(l) = draw_lesion(params, &brain, side, rng) {
                found = Some(l);
                break;
            }
        }
        let lesion = found.ok_or_else(|| {
            Error::Generation(format!(
                "no lesion within area range {:?} after {} attempts",
                params.lesion_area, params.max_retries
            ))
        })?;
        (lesion, Some(side))
    } else {
        (Mask::empty(h, w), None)
    };

    let radii = params.ventricle_radii(&pathology);
    let ventricles = ventricle_mask(params, &brain, radii);
    let labels = labels(&brain, &ventricles, &pathology);
    let pixels = labels
        .iter()
        .map(|&l| {
            let (mean, std) = params.label_level(l);
            if std > 0.0 {
                (mean + std * rng.normal()).clamp(0.0, 1.0)
            } else {
                mean
            }
        })
        .collect();
    let ipsi = side.unwrap_or(Side::Left);
    let true_ventricle_area = disk_mask(h, w, params.ventricle_center(ipsi), radii[ipsi.index()])
        .overlap(&brain)?;
    Ok(PhantomSample {
        image: Image::from_raw(h, w, pixels),
        brain,
        pathology,
        ventricles,
        lesion_side: side,
        ventricle_radii: radii,
        true_ventricle_area,
    })
}

/// Exact per-pixel distribution of the phantom given `(brain, pathology)`.
pub fn conditional_prior(brain: &Mask, pathology: &Mask, params: &PhantomParams) -> Result<PixelwiseGaussianPrior> {
    if brain.shape() != (params.height, params.width) {
        return Err(Error::Shape {
            expected: (params.height, params.width),
            found: brain.shape(),
        });
    }
    check_pathology(brain, pathology)?;
    let ventricles = ventricle_mask(params, brain, params.ventricle_radii(pathology));
    let mut builder = PixelwiseGaussianPrior::builder(params.height, params.width);
    for label in labels(brain, &ventricles, pathology) {
        let (mean, std) = params.label_level(label);
        builder.push_pixel(&[Component::single(mean, std)])?;
    }
    builder.finish()
}

/// Mask-conditioned prior `(x_t, b, p)`: the phantom's own generative model.
#[derive(Debug, Clone)]
pub struct ConditionalPrior {
    pub params: PhantomParams,
}

impl PriorModel for ConditionalPrior {
    fn input_channels(&self) -> usize {
        BASE_CHANNELS
    }

    fn prior(&self, input: &DenoiserInput<'_>) -> Result<PixelwiseGaussianPrior> {
        conditional_prior(input.brain, input.pathology, &self.params)
    }
}

/// Prior for the inpainting variant, which also sees the known region
/// `(1 - m) x0` and `m`.
///
/// Known pixels are point masses at their given values. Inside `m` the
/// ventricle radius on each side is treated as unknown: a uniform prior over a
/// quarter-pixel grid is updated with the likelihood of the known pixels, and
/// each unknown pixel becomes a ventricle/non-ventricle mixture under that
/// posterior. The anatomy is therefore read from the visible context rather
/// than from the lesion-size law, which is what an inpainting model trained
/// on consistent context learns to do.
#[derive(Debug, Clone)]
pub struct ContextPrior {
    pub params: PhantomParams,
}

impl ContextPrior {
    pub const RADIUS_STEP: f64 = 0.25;

    pub fn radius_candidates(&self) -> Vec<f64> {
        let p = &self.params;
        let lo = (p.ventricle_radius - 1.0).max(Self::RADIUS_STEP);
        let hi = (p.max_ventricle_radius() + 1.0).min(p.ventricle_offset - 1e-9);
        let n = ((hi - lo) / Self::RADIUS_STEP).floor() as usize;
        (0..=n).map(|i| lo + i as f64 * Self::RADIUS_STEP).collect()
    }

    /// Posterior weights over `radius_candidates()` for one side.
    pub fn radius_posterior(
        &self,
        side: Side,
        brain: &Mask,
        pathology: &Mask,
        known: &Image,
        inpaint: &Mask,
    ) -> Vec<f64> {
        let p = &self.params;
        let candidates = self.radius_candidates();
        let reach = candidates.last().copied().unwrap_or(0.0) + 1.0;
        let s = p.tissue_noise.max(1e-3);
        let mut loglik = vec![0.0; candidates.len()];
        for y in 0..p.height {
            for x in 0..p.width {
                if inpaint.get(y, x) || !brain.get(y, x) || p.side_of_column(x) != side {
                    continue;
                }
                let d = p.distance_to(side, y, x);
                if d > reach {
                    continue;
                }
                let v = known.get(y, x);
                let other = if pathology.get(y, x) {
                    p.lesion_level
                } else {
                    p.tissue_level
                };
                for (ll, &r) in loglik.iter_mut().zip(&candidates) {
                    let mean = if d <= r { p.ventricle_level } else { other };
                    *ll -= (v - mean) * (v - mean) / (2.0 * s * s);
                }
            }
        }
        let max = loglik.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut w: Vec<f64> = loglik.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= z);
        w
    }
}

impl PriorModel for ContextPrior {
    fn input_channels(&self) -> usize {
        BASE_CHANNELS + 2
    }

    fn prior(&self, input: &DenoiserInput<'_>) -> Result<PixelwiseGaussianPrior> {
        let p = &self.params;
        check_pathology(input.brain, input.pathology)?;
        let known = &input.extra[0];
        let inpaint = Mask::from_binary_image(&input.extra[1])?;
        let candidates = self.radius_candidates();
        let posterior = [Side::Left, Side::Right]
            .map(|s| self.radius_posterior(s, input.brain, input.pathology, known, &inpaint));

        let mut builder = PixelwiseGaussianPrior::builder(p.height, p.width);
        for y in 0..p.height {
            for x in 0..p.width {
                if !inpaint.get(y, x) {
                    builder.push_pixel(&[Component::single(known.get(y, x), 0.0)])?;
                    continue;
                }
                if !input.brain.get(y, x) {
                    let (mean, std) = p.label_level(Label::Background);
                    builder.push_pixel(&[Component::single(mean, std)])?;
                    continue;
                }
                let side = p.side_of_column(x);
                let d = p.distance_to(side, y, x);
                let w_vent: f64 = candidates
                    .iter()
                    .zip(&posterior[side.index()])
                    .filter(|(&r, _)| d <= r)
                    .map(|(_, w)| w)
                    .sum::<f64>()
                    .clamp(0.0, 1.0);
                let other = if input.pathology.get(y, x) {
                    Label::Lesion
                } else {
                    Label::Tissue
                };
                let (vm, vs) = p.label_level(Label::Ventricle);
                let (om, os) = p.label_level(other);
                builder.push_pixel(&[
                    Component {
                        weight: w_vent,
                        mean: vm,
                        std: vs,
                    },
                    Component {
                        weight: 1.0 - w_vent,
                        mean: om,
                        std: os,
                    },
                ])?;
            }
        }
        builder.finish()
    }
}

/// Rank-based split into the smallest quarter, the middle half and the
/// largest quarter (`round(n / 4)` each end, ties broken by input order).
#[derive(Debug, Clone, PartialEq)]
pub struct Stratification {
    pub small: Vec<usize>,
    pub medium: Vec<usize>,
    pub large: Vec<usize>,
    /// Linearly interpolated 25th and 75th percentiles of the areas.
    pub q25: f64,
    pub q75: f64,
}

fn percentile(sorted: &[usize], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let f = pos - lo as f64;
    sorted[lo] as f64 * (1.0 - f) + sorted[hi] as f64 * f
}

pub fn stratify(areas: &[usize]) -> Result<Stratification> {
    if areas.is_empty() {
        return Err(Error::Empty("stratification input"));
    }
    let mut order: Vec<usize> = (0..areas.len()).collect();
    order.sort_by_key(|&i| (areas[i], i));
    let n = areas.len();
    let quarter = ((n as f64) / 4.0).round() as usize;
    let quarter = quarter.min(n / 2);
    let mut sorted: Vec<usize> = areas.to_vec();
    sorted.sort_unstable();
    let mut small = order[..quarter].to_vec();
    let mut medium = order[quarter..n - quarter].to_vec();
    let mut large = order[n - quarter..].to_vec();
    small.sort_unstable();
    medium.sort_unstable();
    large.sort_unstable();
    Ok(Stratification {
        small,
        medium,
        large,
        q25: percentile(&sorted, 0.25),
        q75: percentile(&sorted, 0.75),
    })
}
