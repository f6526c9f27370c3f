use std::fs;
use std::io::Write;
use std::path::Path;

use super::{NumericError, ParamStore, Tensor};

const MAGIC: &[u8; 8] = b"AMRCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Serializes names, shapes, values, Adam moments and the step counter.
/// All numbers are little-endian.
pub fn write_checkpoint(store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + store.n_scalars() * 24);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&store.step.to_le_bytes());
    out.extend_from_slice(&(store.params.len() as u32).to_le_bytes());
    for p in &store.params {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.value.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(p.value.cols() as u32).to_le_bytes());
        for xs in [p.value.data(), &p.m, &p.v] {
            for x in xs {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NumericError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| NumericError::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NumericError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, NumericError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, NumericError> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| NumericError::Checkpoint("size overflow".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

/// Parses a checkpoint into a fresh store.
pub fn read_checkpoint(bytes: &[u8]) -> Result<ParamStore, NumericError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(NumericError::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(NumericError::Checkpoint(format!("unsupported version {version}")));
    }
    let step = r.u64()?;
    let count = r.u32()? as usize;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|e| NumericError::Checkpoint(e.to_string()))?;
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let n = rows * cols;
        let id = store.register(name, Tensor::new(rows, cols, r.f64s(n)?)?)?;
        let p = &mut store.params[id.0];
        p.m = r.f64s(n)?;
        p.v = r.f64s(n)?;
    }
    if r.pos != bytes.len() {
        return Err(NumericError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    store.step = step;
    Ok(store)
}

/// Writes to a sibling temporary file and renames it into place.
pub fn save_checkpoint(store: &ParamStore, path: &Path) -> Result<(), NumericError> {
    let tmp = path.with_extension("ckpt.tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&write_checkpoint(store))?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Loads a checkpoint and checks that it holds exactly the parameters of
/// `expected` (same names, order and shapes).
pub fn load_checkpoint(path: &Path, expected: &ParamStore) -> Result<ParamStore, NumericError> {
    let store = read_checkpoint(&fs::read(path)?)?;
    if store.len() != expected.len() {
        return Err(NumericError::Checkpoint(format!(
            "{} parameters in file, model has {}",
            store.len(),
            expected.len()
        )));
    }
    for (a, b) in store.params.iter().zip(&expected.params) {
        if a.name != b.name || a.value.shape() != b.value.shape() {
            return Err(NumericError::Checkpoint(format!(
                "parameter `{}` {:?} does not match model parameter `{}` {:?}",
                a.name,
                a.value.shape(),
                b.name,
                b.value.shape()
            )));
        }
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{Adam, Gradients};

    fn sample() -> ParamStore {
        let mut s = ParamStore::new();
        s.register("w", Tensor::from_fn(2, 3, |r, c| (r as f64 - c as f64) * 0.1 + f64::EPSILON)).unwrap();
        s.register("b", Tensor::row_vector(vec![1e-300, -0.0, 3.5])).unwrap();
        let mut g = Gradients::zeros(&s);
        g.grads[0] = Tensor::from_fn(2, 3, |r, c| (r + c) as f64);
        s.adam_step(&g, &Adam::default());
        s
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let s = sample();
        let back = read_checkpoint(&write_checkpoint(&s)).unwrap();
        assert_eq!(write_checkpoint(&back), write_checkpoint(&s));
        assert_eq!(back.step(), 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&s, &path).unwrap();
        let loaded = load_checkpoint(&path, &s).unwrap();
        assert_eq!(write_checkpoint(&loaded), write_checkpoint(&s));
    }

    #[test]
    fn corrupt_inputs_fail() {
        let bytes = write_checkpoint(&sample());
        assert!(read_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(read_checkpoint(&extra).is_err());
    }

    #[test]
    fn mismatched_model_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&sample(), &path).unwrap();
        let mut other = ParamStore::new();
        other.register("w", Tensor::zeros(3, 2)).unwrap();
        other.register("b", Tensor::zeros(1, 3)).unwrap();
        assert!(load_checkpoint(&path, &other).is_err());
    }
}
