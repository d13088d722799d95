//! Binary parameter manifest.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "RSPARAMS"
//! version  u32
//! count    u32
//! repeated count times:
//!   name_len u32, name (UTF-8), frozen u8,
//!   ndim u32, dims u64 × ndim,
//!   values f64 × product(dims)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{NnError, Result};
use crate::tensor::{ParamStore, Tensor};

pub const MAGIC: &[u8; 8] = b"RSPARAMS";
pub const VERSION: u32 = 1;

pub fn write_params<W: Write>(store: &ParamStore, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(store.len() as u32).to_le_bytes())?;
    for id in store.ids() {
        let name = store.name(id).as_bytes();
        let t = store.get(id);
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&[store.is_frozen(id) as u8])?;
        w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| NnError::Checkpoint(format!("truncated manifest: {e}")))?;
    Ok(buf)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    read_array::<4, _>(r).map(u32::from_le_bytes)
}

pub fn read_params<R: Read>(mut r: R) -> Result<ParamStore> {
    let magic = read_array::<8, _>(&mut r)?;
    if &magic != MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let count = read_u32(&mut r)?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)
            .map_err(|e| NnError::Checkpoint(format!("truncated name: {e}")))?;
        let name = String::from_utf8(name)
            .map_err(|_| NnError::Checkpoint("parameter name is not UTF-8".into()))?;
        let frozen = read_array::<1, _>(&mut r)?[0] != 0;
        let ndim = read_u32(&mut r)? as usize;
        let shape = (0..ndim)
            .map(|_| read_array::<8, _>(&mut r).map(|b| u64::from_le_bytes(b) as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let values = (0..n)
            .map(|_| read_array::<8, _>(&mut r).map(f64::from_le_bytes))
            .collect::<Result<Vec<_>>>()?;
        if store.id(&name).is_some() {
            return Err(NnError::Checkpoint(format!("duplicate parameter `{name}`")));
        }
        let id = store.add(name, Tensor::new(shape, values)?);
        store.set_frozen(id, frozen);
    }
    Ok(store)
}

pub fn save_params(store: &ParamStore, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_params(store, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_params(path: impl AsRef<Path>) -> Result<ParamStore> {
    read_params(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bitwise() {
        let mut s = ParamStore::new();
        s.add("a.weight", Tensor::new(vec![2, 2], vec![0.1, -1e-300, f64::MAX, 3.0]).unwrap());
        let b = s.add("a.bias", Tensor::new(vec![1], vec![-0.0]).unwrap());
        s.set_frozen(b, true);
        let mut buf = Vec::new();
        write_params(&s, &mut buf).unwrap();
        let back = read_params(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        for id in s.ids() {
            let other = back.id(s.name(id)).unwrap();
            assert_eq!(back.get(other).shape(), s.get(id).shape());
            let x: Vec<u64> = s.get(id).data().iter().map(|v| v.to_bits()).collect();
            let y: Vec<u64> = back.get(other).data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(x, y);
        }
        assert!(back.is_frozen(back.id("a.bias").unwrap()));
    }

    #[test]
    fn rejects_wrong_magic_and_truncation() {
        assert!(matches!(
            read_params(&b"NOTPARAMS000000000"[..]),
            Err(NnError::Checkpoint(_))
        ));
        let mut s = ParamStore::new();
        s.add("w", Tensor::zeros(vec![4]));
        let mut buf = Vec::new();
        write_params(&s, &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_params(buf.as_slice()), Err(NnError::Checkpoint(_))));
    }
}
