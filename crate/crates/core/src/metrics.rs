//! Evaluation metrics: Dice, a Fréchet distance over fixed random features,
//! a threshold lesion segmenter, and the indirect-effect score.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::morphology::{dilate, Mask};
use crate::phantom::{expected_ventricle_area, PhantomParams};
use crate::rng::SeededRng;

/// `2 |a ∩ b| / (|a| + |b|)`, and 1.0 when both masks are empty.
pub fn dice(a: &Mask, b: &Mask) -> Result<f64> {
    let overlap = a.overlap(b)?;
    let total = a.area() + b.area();
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * overlap as f64 / total as f64)
}

pub const DEFAULT_FEATURE_DIM: usize = 64;

/// A fixed Gaussian random projection from flattened images to `dim`
/// features. Entries are `N(0, 1 / input_len)`, drawn row-major from the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureProjection {
    seed: u64,
    dim: usize,
    input_len: usize,
    matrix: Vec<f64>,
}

impl FeatureProjection {
    pub fn new(seed: u64, dim: usize, input_len: usize) -> Result<Self> {
        if dim == 0 || input_len == 0 {
            return Err(Error::Parameter("projection dimensions must be positive".into()));
        }
        let mut rng = SeededRng::new(seed);
        let scale = 1.0 / (input_len as f64).sqrt();
        let matrix = (0..dim * input_len).map(|_| scale * rng.normal()).collect();
        Ok(Self {
            seed,
            dim,
            input_len,
            matrix,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn project(&self, image: &Image) -> Result<Vec<f64>> {
        if image.len() != self.input_len {
            return Err(Error::Shape {
                expected: (self.input_len, 1),
                found: (image.len(), 1),
            });
        }
        Ok(self
            .matrix
            .chunks_exact(self.input_len)
            .map(|row| row.iter().zip(image.pixels()).map(|(a, b)| a * b).sum())
            .collect())
    }
}

/// Gaussian moment summary of a feature sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub n: usize,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl FeatureSet {
    /// Builds a set from known moments, e.g. for closed-form comparisons.
    pub fn from_moments(n: usize, mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::Metric(format!(
                "covariance is {}x{} but the mean has length {d}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Metric("non-finite moments".into()));
        }
        let scale = cov.amax().max(1.0);
        if (&cov - cov.transpose()).amax() > 1e-10 * scale {
            return Err(Error::Metric("covariance is not symmetric".into()));
        }
        Ok(Self { n, mean, cov })
    }

    /// Sample mean and unbiased covariance of feature rows.
    pub fn from_features(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or(Error::Empty("feature sample"))?;
        let d = first.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Metric("feature rows differ in length".into()));
        }
        let n = rows.len();
        if n < d {
            log::warn!("{n} samples for {d} features: covariance is rank deficient");
        }
        let mut mean = DVector::zeros(d);
        for r in rows {
            mean += DVector::from_column_slice(r);
        }
        mean /= n as f64;
        let mut cov = DMatrix::zeros(d, d);
        for r in rows {
            let c = DVector::from_column_slice(r) - &mean;
            cov.ger(1.0, &c, &c, 1.0);
        }
        if n > 1 {
            cov /= (n - 1) as f64;
        }
        let cov = (&cov + cov.transpose()) * 0.5;
        Self::from_moments(n, mean, cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Projects every image with `projection` and summarises the features.
pub fn extract_features_with(images: &[Image], projection: &FeatureProjection) -> Result<FeatureSet> {
    let first = images.first().ok_or(Error::Empty("image list"))?;
    let shape = first.shape();
    let rows = images
        .iter()
        .map(|im| {
            im.ensure_shape(shape)?;
            projection.project(im)
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureSet::from_features(&rows)
}

/// Features through the default 64-dimensional projection for `projection_seed`.
pub fn extract_features(images: &[Image], projection_seed: u64) -> Result<FeatureSet> {
    let first = images.first().ok_or(Error::Empty("image list"))?;
    let projection = FeatureProjection::new(projection_seed, DEFAULT_FEATURE_DIM, first.len())?;
    extract_features_with(images, &projection)
}

const EIGEN_CLIP: f64 = 1e-10;

fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.amax().max(1.0);
    if eig.eigenvalues.iter().any(|&l| l < -EIGEN_CLIP * scale * 1e4) {
        log::warn!("covariance has a markedly negative eigenvalue; clipping");
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// `|mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2))`.
///
/// The trace of the product root is computed as `tr((A^(1/2) B A^(1/2))^(1/2))`,
/// which has the same eigenvalues as `S_a S_b` but is symmetric.
pub fn frechet_distance(a: &FeatureSet, b: &FeatureSet) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Metric(format!(
            "feature dimensions differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let finite = |s: &FeatureSet| s.mean.iter().chain(s.cov.iter()).all(|v| v.is_finite());
    if !finite(a) || !finite(b) {
        return Err(Error::Metric("non-finite feature moments".into()));
    }
    let diff = &a.mean - &b.mean;
    let root_a = psd_sqrt(&a.cov)?;
    let middle = &root_a * &b.cov * &root_a;
    let middle = (&middle + middle.transpose()) * 0.5;
    let cross: f64 = SymmetricEigen::new(middle)
        .eigenvalues
        .iter()
        .map(|&l| l.max(0.0).sqrt())
        .sum();
    let fd = diff.norm_squared() + a.cov.trace() + b.cov.trace() - 2.0 * cross;
    Ok(fd.max(0.0))
}

fn half_gap(params: &PhantomParams, level: f64) -> f64 {
    params
        .levels()
        .iter()
        .filter(|&&l| l != level)
        .map(|l| (l - level).abs())
        .fold(f64::INFINITY, f64::min)
        / 2.0
}

/// Brain pixels within half the nearest level gap of `level`.
fn window(image: &Image, brain: &Mask, level: f64, half: f64) -> Result<Mask> {
    image.ensure_shape(brain.shape())?;
    let (h, w) = image.shape();
    Ok(Mask::from_fn(h, w, |y, x| {
        brain.get(y, x) && (image.get(y, x) - level).abs() < half
    }))
}

pub const MIN_LESION_COMPONENT: usize = 3;

/// Threshold segmenter: lesion-level pixels inside the brain, with
/// 8-connected components smaller than three pixels removed.
pub fn segment_lesion(image: &Image, brain: &Mask, params: &PhantomParams) -> Result<Mask> {
    let level = params.lesion_level;
    let raw = window(image, brain, level, half_gap(params, level))?;
    Ok(raw.remove_small_components(MIN_LESION_COMPONENT))
}

/// Ventricle-level pixels inside the brain.
pub fn segment_ventricles(image: &Image, brain: &Mask, params: &PhantomParams) -> Result<Mask> {
    let level = params.ventricle_level;
    window(image, brain, level, half_gap(params, level))
}

/// `|measured - expected|` ipsilateral ventricle area in pixels. The measured
/// area counts ventricle-level brain pixels in the lesion's hemisphere; the
/// expected area rasterises the enlargement law for `p`.
pub fn indirect_effect_error(
    counterfactual: &Image,
    brain: &Mask,
    pathology: &Mask,
    params: &PhantomParams,
) -> Result<f64> {
    let expected = expected_ventricle_area(params, brain, pathology)?;
    let side = params
        .lesion_side(pathology)
        .expect("expected_ventricle_area checked the side");
    let ventricles = segment_ventricles(counterfactual, brain, params)?;
    let (h, w) = ventricles.shape();
    let measured = (0..h)
        .flat_map(|y| (0..w).map(move |x| (y, x)))
        .filter(|&(y, x)| ventricles.get(y, x) && params.side_of_column(x) == side)
        .count();
    Ok(measured.abs_diff(expected) as f64)
}

/// Mean absolute deviation from the prior over `brain \ dilate(p, k)`.
pub fn healthy_tissue_mae(
    counterfactual: &Image,
    prior: &Image,
    brain: &Mask,
    pathology: &Mask,
    k: usize,
) -> Result<Option<f64>> {
    let region = brain.difference(&dilate(pathology, k)?)?;
    counterfactual.mean_abs_diff_in(prior, &region)
}
