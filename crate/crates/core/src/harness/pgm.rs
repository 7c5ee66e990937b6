//! Binary 8-bit PGM (P5). Intensities in `[0, 1]` map to `round(255 v)`
//! after clamping; masks are written as 0 / 255.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::morphology::Mask;

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode(image: &Image) -> Vec<u8> {
    let (h, w) = image.shape();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(image.pixels().iter().map(|&v| quantize(v)));
    out
}

pub fn encode_mask(mask: &Mask) -> Vec<u8> {
    encode(&mask.to_image())
}

fn token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (*pos > start).then(|| &bytes[start..*pos])
}

/// Decodes a P5 file with maxval 255 into `[0, 1]` intensities.
pub fn decode(bytes: &[u8], path: &Path) -> Result<Image> {
    if bytes.get(..2) != Some(b"P5") {
        return Err(Error::format(path, "not a binary PGM (P5)"));
    }
    let mut pos = 2;
    let mut number = |what: &str| -> Result<usize> {
        let t = token(bytes, &mut pos).ok_or_else(|| Error::format(path, format!("missing {what}")))?;
        std::str::from_utf8(t)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(path, format!("bad {what}")))
    };
    let w = number("width")?;
    let h = number("height")?;
    let maxval = number("maxval")?;
    if maxval != 255 {
        return Err(Error::format(path, format!("maxval {maxval} unsupported")));
    }
    // exactly one whitespace byte separates the header from the raster
    let start = pos + 1;
    let raster = bytes.get(start..).unwrap_or(&[]);
    if raster.len() != w * h {
        return Err(Error::format(
            path,
            format!("expected {} pixels, found {}", w * h, raster.len()),
        ));
    }
    Image::new(h, w, raster.iter().map(|&b| b as f64 / 255.0).collect())
}

pub fn read(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let img = read(&path)?;
    let (h, w) = img.shape();
    Ok(Mask::from_fn(h, w, |y, x| img.get(y, x) >= 0.5))
}

/// Positive and negative parts of `after - before`, for two-colour
/// difference displays.
pub fn signed_difference(before: &Image, after: &Image) -> Result<(Image, Image)> {
    after.ensure_shape(before.shape())?;
    let (h, w) = before.shape();
    let pos = Image::from_fn(h, w, |y, x| (after.get(y, x) - before.get(y, x)).max(0.0));
    let neg = Image::from_fn(h, w, |y, x| (before.get(y, x) - after.get(y, x)).max(0.0));
    Ok((pos, neg))
}

/// Images placed left to right with a one-pixel white separator.
pub fn side_by_side(images: &[&Image]) -> Result<Image> {
    let first = images.first().ok_or(Error::Empty("panel images"))?;
    let (h, w) = first.shape();
    for im in images {
        im.ensure_shape((h, w))?;
    }
    let n = images.len();
    let total = n * w + n.saturating_sub(1);
    Ok(Image::from_fn(h, total, |y, x| {
        let (i, col) = (x / (w + 1), x % (w + 1));
        if col == w {
            1.0
        } else {
            images[i].get(y, col)
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_quantized() {
        let im = Image::from_fn(3, 5, |y, x| (y * 5 + x) as f64 / 14.0);
        let back = decode(&encode(&im), Path::new("mem")).unwrap();
        assert_eq!(back.shape(), (3, 5));
        assert!(back.max_abs_diff(&im) <= 0.5 / 255.0 + 1e-12);
        let again = decode(&encode(&back), Path::new("mem")).unwrap();
        assert_eq!(again, back);
    }

    #[test]
    fn out_of_range_values_are_clamped() {
        assert_eq!(quantize(-0.3), 0);
        assert_eq!(quantize(1.7), 255);
        assert_eq!(quantize(0.5), 128);
    }

    #[test]
    fn header_comments_and_errors() {
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend([0u8, 255]);
        let im = decode(&bytes, Path::new("x")).unwrap();
        assert_eq!(im.pixels(), &[0.0, 1.0]);
        assert!(decode(b"P2\n1 1\n255\n0", Path::new("x")).is_err());
        assert!(decode(b"P5\n2 2\n255\n\x00", Path::new("x")).is_err());
        assert!(decode(b"P5\n1 1\n65535\n\x00\x00", Path::new("x")).is_err());
    }

    #[test]
    fn masks_and_panels() {
        let m = Mask::from_fn(4, 4, |y, x| y == x);
        let img = decode(&encode_mask(&m), Path::new("m")).unwrap();
        assert_eq!(Mask::from_fn(4, 4, |y, x| img.get(y, x) >= 0.5), m);
        let a = Image::zeros(2, 2);
        let b = Image::filled(2, 2, 0.5);
        let p = side_by_side(&[&a, &b]).unwrap();
        assert_eq!(p.shape(), (2, 5));
        assert_eq!(p.get(0, 2), 1.0);
        assert_eq!(p.get(1, 4), 0.5);
        let (pos, neg) = signed_difference(&b, &a).unwrap();
        assert_eq!(pos, Image::zeros(2, 2));
        assert_eq!(neg, b);
    }
}
