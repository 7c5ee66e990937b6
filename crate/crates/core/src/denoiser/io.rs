//! Weight file format, all integers and floats little-endian:
//!
//! ```text
//! magic      4 bytes  "CFD1"
//! version    u16      1
//! in_ch      u32
//! hidden     u32
//! embed_dim  u32
//! table_rows u32      steps + 1
//! n_tensors  u32      8 (embedding table first, then TENSOR_NAMES order)
//! per tensor: rank u32, then rank x u32 dims
//! payload    f64 values of every tensor, in table order
//! ```

use std::io::Write;
use std::path::Path;

use super::tiny::{TinyDenoiserWeights, TENSOR_NAMES};
use crate::error::{Error, Result, WeightsError};

const MAGIC: [u8; 4] = *b"CFD1";
const VERSION: u16 = 1;

pub fn write_weights(weights: &TinyDenoiserWeights, out: &mut impl Write) -> std::io::Result<()> {
    let rows = weights.table.len() / weights.embed_dim;
    out.write_all(&MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    for v in [weights.in_channels, weights.hidden, weights.embed_dim, rows] {
        out.write_all(&(v as u32).to_le_bytes())?;
    }
    let mut shapes = vec![vec![rows, weights.embed_dim]];
    shapes.extend(weights.tensor_shapes());
    out.write_all(&(shapes.len() as u32).to_le_bytes())?;
    for shape in &shapes {
        out.write_all(&(shape.len() as u32).to_le_bytes())?;
        for &d in shape {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
    }
    for tensor in std::iter::once(weights.table.as_slice()).chain(weights.tensors()) {
        for v in tensor {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn save_weights(weights: &TinyDenoiserWeights, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_weights(weights, &mut buf).expect("writing to a Vec cannot fail");
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> std::result::Result<&[u8], WeightsError> {
        if self.pos + n > self.bytes.len() {
            return Err(WeightsError::Truncated {
                needed: self.pos + n,
                available: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> std::result::Result<u16, WeightsError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> std::result::Result<usize, WeightsError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64s(&mut self, n: usize) -> std::result::Result<Vec<f64>, WeightsError> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| {
            WeightsError::Shape("tensor size overflows".into())
        })?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn read_weights(bytes: &[u8]) -> std::result::Result<TinyDenoiserWeights, WeightsError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if magic != MAGIC {
        return Err(WeightsError::BadMagic(magic));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(WeightsError::Version {
            found: version,
            expected: VERSION,
        });
    }
    let in_channels = r.u32()?;
    let hidden = r.u32()?;
    let embed_dim = r.u32()?;
    let rows = r.u32()?;
    if in_channels == 0 || hidden == 0 || embed_dim == 0 || rows == 0 {
        return Err(WeightsError::Shape("zero-sized dimension in header".into()));
    }
    let count = r.u32()?;
    if count != TENSOR_NAMES.len() + 1 {
        return Err(WeightsError::Shape(format!(
            "expected {} tensors, header lists {count}",
            TENSOR_NAMES.len() + 1
        )));
    }
    let mut template = TinyDenoiserWeights::zeros(in_channels, hidden, embed_dim, rows - 1);
    let mut expected = vec![vec![rows, embed_dim]];
    expected.extend(template.tensor_shapes());
    for (i, want) in expected.iter().enumerate() {
        let rank = r.u32()?;
        if rank > 8 {
            return Err(WeightsError::Shape(format!("tensor {i} has rank {rank}")));
        }
        let dims = (0..rank).map(|_| r.u32()).collect::<std::result::Result<Vec<_>, _>>()?;
        if &dims != want {
            return Err(WeightsError::Shape(format!(
                "tensor {i} has shape {dims:?}, header implies {want:?}"
            )));
        }
    }
    template.table = r.f64s(rows * embed_dim)?;
    for (tensor, shape) in template.tensors_mut().into_iter().zip(&expected[1..]) {
        let values = r.f64s(shape.iter().product())?;
        tensor.copy_from_slice(&values);
    }
    if r.pos != bytes.len() {
        return Err(WeightsError::Shape(format!(
            "{} trailing bytes after payload",
            bytes.len() - r.pos
        )));
    }
    template.validate()?;
    Ok(template)
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<TinyDenoiserWeights> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(read_weights(&bytes)?)
}

/// Loads weights for a model that feeds `channels` input channels.
pub fn load_weights_for_channels(
    path: impl AsRef<Path>,
    channels: usize,
) -> Result<TinyDenoiserWeights> {
    let w = load_weights(path)?;
    if w.in_channels() != channels {
        return Err(WeightsError::ChannelCount {
            expected: channels,
            found: w.in_channels(),
        }
        .into());
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn sample() -> TinyDenoiserWeights {
        let mut rng = SeededRng::new(9);
        TinyDenoiserWeights::init(3, 4, 6, 12, &mut rng)
    }

    fn bytes(w: &TinyDenoiserWeights) -> Vec<u8> {
        let mut buf = Vec::new();
        write_weights(w, &mut buf).unwrap();
        buf
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let w = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.cfd");
        save_weights(&w, &path).unwrap();
        let back = load_weights(&path).unwrap();
        for (a, b) in w.tensors().iter().zip(back.tensors()) {
            assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(back, w);
    }

    #[test]
    fn corrupted_header_is_reported() {
        let mut buf = bytes(&sample());
        buf[4] = 7;
        assert_eq!(
            read_weights(&buf),
            Err(WeightsError::Version {
                found: 7,
                expected: 1
            })
        );
        buf[0] = b'X';
        assert!(matches!(read_weights(&buf), Err(WeightsError::BadMagic(_))));
    }

    #[test]
    fn truncation_is_reported() {
        let buf = bytes(&sample());
        for cut in [3, 10, 30, buf.len() - 1] {
            assert!(
                matches!(read_weights(&buf[..cut]), Err(WeightsError::Truncated { .. })),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn inconsistent_shape_table_is_reported() {
        let mut buf = bytes(&sample());
        // first dim of conv1.weight: header(26) + table shape(12) + rank(4)
        let off = 26 + 12 + 4;
        buf[off..off + 4].copy_from_slice(&5u32.to_le_bytes());
        assert!(matches!(read_weights(&buf), Err(WeightsError::Shape(_))));
    }

    #[test]
    fn channel_count_mismatch_names_both() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.cfd");
        save_weights(&sample(), &path).unwrap();
        let err = load_weights_for_channels(&path, 5).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('5') && msg.contains('3'), "{msg}");
    }
}
