//! Binary masks and the dilation that defines the inpainting region.
//!
//! A kernel size `k` is the full side length of the structuring element, so
//! `k = 1` is the identity and the element reaches `(k - 1) / 2` pixels.

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 || bits.len() != height * width {
            return Err(Error::Parameter(format!(
                "{height}x{width} mask needs {} entries, got {}",
                height * width,
                bits.len()
            )));
        }
        Ok(Self {
            height,
            width,
            bits,
        })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![true; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(y, x));
            }
        }
        Self {
            height,
            width,
            bits,
        }
    }

    /// Thresholds an image at 0.5. Fails unless every pixel is exactly 0 or 1.
    pub fn from_binary_image(image: &Image) -> Result<Self> {
        let mut bits = Vec::with_capacity(image.len());
        for &v in image.pixels() {
            if v == 0.0 {
                bits.push(false);
            } else if v == 1.0 {
                bits.push(true);
            } else {
                return Err(Error::Mask(format!("mask value {v} is not 0 or 1")));
            }
        }
        Mask::new(image.height(), image.width(), bits)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn to_image(&self) -> Image {
        Image::from_raw(
            self.height,
            self.width,
            self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
    }

    fn ensure_same(&self, other: &Mask) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape {
                expected: self.shape(),
                found: other.shape(),
            });
        }
        Ok(())
    }

    fn zip_with(&self, other: &Mask, f: impl Fn(bool, bool) -> bool) -> Result<Mask> {
        self.ensure_same(other)?;
        Ok(Mask {
            height: self.height,
            width: self.width,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn intersect(&self, other: &Mask) -> Result<Mask> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn union(&self, other: &Mask) -> Result<Mask> {
        self.zip_with(other, |a, b| a || b)
    }

    /// Pixels set in `self` but not in `other`.
    pub fn difference(&self, other: &Mask) -> Result<Mask> {
        self.zip_with(other, |a, b| a && !b)
    }

    pub fn complement(&self) -> Mask {
        Mask {
            height: self.height,
            width: self.width,
            bits: self.bits.iter().map(|&b| !b).collect(),
        }
    }

    pub fn is_subset_of(&self, other: &Mask) -> Result<bool> {
        self.ensure_same(other)?;
        Ok(self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b))
    }

    pub fn overlap(&self, other: &Mask) -> Result<usize> {
        self.ensure_same(other)?;
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .filter(|(&a, &b)| a && b)
            .count())
    }

    /// Mean column coordinate of the set pixels (pixel centres at `x + 0.5`).
    pub fn centroid_x(&self) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(y, x) {
                    sum += x as f64 + 0.5;
                    n += 1;
                }
            }
        }
        (n > 0).then(|| sum / n as f64)
    }

    /// Drops 8-connected components smaller than `min_size` pixels.
    pub fn remove_small_components(&self, min_size: usize) -> Mask {
        let mut out = self.clone();
        let mut seen = vec![false; self.bits.len()];
        let mut stack = Vec::new();
        let mut component = Vec::new();
        for start in 0..self.bits.len() {
            if !self.bits[start] || seen[start] {
                continue;
            }
            component.clear();
            seen[start] = true;
            stack.push(start);
            while let Some(i) = stack.pop() {
                component.push(i);
                let (y, x) = ((i / self.width) as isize, (i % self.width) as isize);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (ny, nx) = (y + dy, x + dx);
                        if ny < 0
                            || nx < 0
                            || ny >= self.height as isize
                            || nx >= self.width as isize
                        {
                            continue;
                        }
                        let j = ny as usize * self.width + nx as usize;
                        if self.bits[j] && !seen[j] {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
            if component.len() < min_size {
                for &i in &component {
                    out.bits[i] = false;
                }
            }
        }
        out
    }

    /// Run-length encoding as alternating run lengths, starting with a run of
    /// zeros (possibly of length 0).
    pub fn to_rle(&self) -> Vec<usize> {
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0;
        for &b in &self.bits {
            if b == current {
                len += 1;
            } else {
                runs.push(len);
                current = b;
                len = 1;
            }
        }
        runs.push(len);
        runs
    }

    pub fn from_rle(height: usize, width: usize, runs: &[usize]) -> Result<Mask> {
        let mut bits = Vec::with_capacity(height * width);
        let mut value = false;
        for &run in runs {
            bits.extend(std::iter::repeat(value).take(run));
            value = !value;
        }
        if bits.len() != height * width {
            return Err(Error::Mask(format!(
                "run lengths cover {} pixels, expected {}",
                bits.len(),
                height * width
            )));
        }
        Mask::new(height, width, bits)
    }
}

/// Brain mask `b`, pathology mask `p`, and the region `m` to regenerate.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    pub brain: Mask,
    pub pathology: Mask,
    pub inpaint: Mask,
}

impl MaskSet {
    /// Validates shapes and `p ⊆ b`, and derives `m = dilate(p, k)`.
    pub fn new(brain: Mask, pathology: Mask, k: usize) -> Result<Self> {
        check_pathology(&brain, &pathology)?;
        let inpaint = dilate(&pathology, k)?;
        Ok(Self {
            brain,
            pathology,
            inpaint,
        })
    }
}

pub(crate) fn check_pathology(brain: &Mask, pathology: &Mask) -> Result<()> {
    if !pathology.is_subset_of(brain)? {
        return Err(Error::Mask(
            "pathology mask extends outside the brain mask".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StructuringElement {
    /// k x k square (Chebyshev ball).
    #[default]
    Square,
    /// Euclidean disk of radius `(k - 1) / 2`.
    Disk,
}

fn radius_for(k: usize) -> Result<usize> {
    if k == 0 || k % 2 == 0 {
        return Err(Error::Parameter(format!(
            "dilation kernel size must be odd and >= 1, got {k}"
        )));
    }
    Ok((k - 1) / 2)
}

/// Square dilation with a `k x k` element.
pub fn dilate(mask: &Mask, k: usize) -> Result<Mask> {
    dilate_with(mask, k, StructuringElement::Square)
}

pub fn dilate_with(mask: &Mask, k: usize, element: StructuringElement) -> Result<Mask> {
    let r = radius_for(k)?;
    if r == 0 {
        return Ok(mask.clone());
    }
    Ok(match element {
        StructuringElement::Square => dilate_square(mask, r),
        StructuringElement::Disk => dilate_disk(mask, r),
    })
}

// Separable: a horizontal then a vertical running-window OR, each O(n * k).
fn dilate_square(mask: &Mask, r: usize) -> Mask {
    let (h, w) = mask.shape();
    let mut rows = vec![false; h * w];
    for y in 0..h {
        let row = &mask.bits[y * w..(y + 1) * w];
        // count of set pixels in the window [x - r, x + r]
        let mut count: usize = row[..r.min(w - 1) + 1].iter().filter(|&&b| b).count();
        for x in 0..w {
            rows[y * w + x] = count > 0;
            if x + r + 1 < w && row[x + r + 1] {
                count += 1;
            }
            if x >= r && row[x - r] {
                count -= 1;
            }
        }
    }
    let mut out = vec![false; h * w];
    for x in 0..w {
        let mut count: usize = (0..=r.min(h - 1)).filter(|&y| rows[y * w + x]).count();
        for y in 0..h {
            out[y * w + x] = count > 0;
            if y + r + 1 < h && rows[(y + r + 1) * w + x] {
                count += 1;
            }
            if y >= r && rows[(y - r) * w + x] {
                count -= 1;
            }
        }
    }
    Mask {
        height: h,
        width: w,
        bits: out,
    }
}

fn dilate_disk(mask: &Mask, r: usize) -> Mask {
    let (h, w) = mask.shape();
    let ri = r as isize;
    let offsets: Vec<(isize, isize)> = (-ri..=ri)
        .flat_map(|dy| (-ri..=ri).map(move |dx| (dy, dx)))
        .filter(|(dy, dx)| dy * dy + dx * dx <= ri * ri)
        .collect();
    let mut out = Mask::empty(h, w);
    for y in 0..h {
        for x in 0..w {
            if !mask.get(y, x) {
                continue;
            }
            for &(dy, dx) in &offsets {
                let (ny, nx) = (y as isize + dy, x as isize + dx);
                if ny >= 0 && nx >= 0 && (ny as usize) < h && (nx as usize) < w {
                    out.set(ny as usize, nx as usize, true);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use proptest::prelude::*;

    fn brute_dilate(mask: &Mask, k: usize) -> Mask {
        let r = ((k - 1) / 2) as isize;
        let (h, w) = mask.shape();
        Mask::from_fn(h, w, |y, x| {
            let mut hit = false;
            for sy in 0..h {
                for sx in 0..w {
                    let (dy, dx) = (sy as isize - y as isize, sx as isize - x as isize);
                    if dy.abs() <= r && dx.abs() <= r && mask.get(sy, sx) {
                        hit = true;
                    }
                }
            }
            hit
        })
    }

    fn random_mask(rng: &mut SeededRng, h: usize, w: usize, density: f64) -> Mask {
        Mask::from_fn(h, w, |_, _| rng.uniform() < density)
    }

    #[test]
    fn k1_is_identity() {
        let mut rng = SeededRng::new(1);
        let m = random_mask(&mut rng, 9, 7, 0.3);
        assert_eq!(dilate(&m, 1).unwrap(), m);
    }

    #[test]
    fn single_pixel_k3_gives_block() {
        let mut m = Mask::empty(5, 5);
        m.set(2, 2, true);
        let d = dilate(&m, 3).unwrap();
        let expected = Mask::from_fn(5, 5, |y, x| (1..=3).contains(&y) && (1..=3).contains(&x));
        assert_eq!(d, expected);
        assert_eq!(d.area(), 9);
    }

    #[test]
    fn random_32_k5_matches_brute_force() {
        let mut rng = SeededRng::new(5);
        let m = random_mask(&mut rng, 32, 32, 0.05);
        assert_eq!(dilate(&m, 5).unwrap(), brute_dilate(&m, 5));
    }

    #[test]
    fn kernel_larger_than_image() {
        let mut m = Mask::empty(3, 4);
        m.set(0, 0, true);
        assert_eq!(dilate(&m, 11).unwrap(), Mask::full(3, 4));
    }

    #[test]
    fn even_or_zero_kernel_rejected() {
        let m = Mask::empty(4, 4);
        assert!(matches!(dilate(&m, 0), Err(Error::Parameter(_))));
        assert!(matches!(dilate(&m, 4), Err(Error::Parameter(_))));
    }

    #[test]
    fn disk_element_is_round() {
        let mut m = Mask::empty(9, 9);
        m.set(4, 4, true);
        let d = dilate_with(&m, 5, StructuringElement::Disk).unwrap();
        // radius 2 disk: 13 lattice points
        assert_eq!(d.area(), 13);
        assert!(!d.get(2, 2));
        assert!(d.get(2, 4));
    }

    #[test]
    fn mask_ops_basics() {
        let e = Mask::empty(3, 3);
        assert_eq!(e.area(), 0);
        let mut rng = SeededRng::new(2);
        let a = random_mask(&mut rng, 6, 6, 0.5);
        assert!(a.intersect(&a.complement()).unwrap().is_empty());
        assert!(matches!(
            a.union(&Mask::empty(3, 3)),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn small_components_removed() {
        let mut m = Mask::empty(6, 6);
        m.set(0, 0, true);
        m.set(0, 1, true);
        for (y, x) in [(3, 3), (3, 4), (4, 4)] {
            m.set(y, x, true);
        }
        let cleaned = m.remove_small_components(3);
        assert_eq!(cleaned.area(), 3);
        assert!(!cleaned.get(0, 0));
    }

    #[test]
    fn rle_round_trip() {
        let mut rng = SeededRng::new(4);
        let m = random_mask(&mut rng, 5, 8, 0.4);
        assert_eq!(Mask::from_rle(5, 8, &m.to_rle()).unwrap(), m);
        assert!(Mask::from_rle(5, 8, &[3, 2]).is_err());
    }

    #[test]
    fn maskset_rejects_pathology_outside_brain() {
        let brain = Mask::from_fn(4, 4, |y, _| y < 2);
        let p = Mask::from_fn(4, 4, |y, x| y == 3 && x == 0);
        assert!(matches!(MaskSet::new(brain, p, 3), Err(Error::Mask(_))));
    }

    fn arb_mask(h: usize, w: usize) -> impl Strategy<Value = Mask> {
        proptest::collection::vec(proptest::bool::weighted(0.1), h * w)
            .prop_map(move |bits| Mask::new(h, w, bits).unwrap())
    }

    proptest! {
        #[test]
        fn de_morgan(a in arb_mask(7, 5), b in arb_mask(7, 5)) {
            let lhs = a.union(&b).unwrap().complement();
            let rhs = a.complement().intersect(&b.complement()).unwrap();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn dilation_is_monotone(p in arb_mask(12, 12), k in 0usize..4, extra in 0usize..3) {
            let k = 2 * k + 1;
            let k2 = k + 2 * extra;
            let d = dilate(&p, k).unwrap();
            let d2 = dilate(&p, k2).unwrap();
            prop_assert!(p.is_subset_of(&d).unwrap());
            prop_assert!(d.is_subset_of(&d2).unwrap());
        }

        #[test]
        fn dilation_composes(p in arb_mask(14, 11), k in 0usize..4) {
            let k = 2 * k + 1;
            let twice = dilate(&dilate(&p, k).unwrap(), k).unwrap();
            prop_assert_eq!(twice, dilate(&p, 2 * k - 1).unwrap());
        }

        #[test]
        fn square_matches_brute_force(p in arb_mask(10, 13), k in 0usize..5) {
            let k = 2 * k + 1;
            prop_assert_eq!(dilate(&p, k).unwrap(), brute_dilate(&p, k));
        }

        #[test]
        fn translation_equivariant_in_interior(y in 4usize..8, x in 4usize..8, dy in 0usize..3, dx in 0usize..3) {
            let n = 20;
            let mut a = Mask::empty(n, n);
            a.set(y, x, true);
            a.set(y + 1, x, true);
            let mut b = Mask::empty(n, n);
            b.set(y + dy, x + dx, true);
            b.set(y + 1 + dy, x + dx, true);
            let da = dilate(&a, 5).unwrap();
            let db = dilate(&b, 5).unwrap();
            for yy in 0..n - dy {
                for xx in 0..n - dx {
                    prop_assert_eq!(da.get(yy, xx), db.get(yy + dy, xx + dx));
                }
            }
        }
    }
}
