//! Binary tensor container used for checkpoints and dataset shards.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    b"SVLB"
//! version  u32 (= 1)
//! count    u32
//! count × { name_len u16, name utf-8, rank u8, dims u64 × rank, payload f64 × prod(dims) }
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{ParamSet, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SVLB";
pub const FORMAT_VERSION: u32 = 1;

pub fn write_tensors<'a, W: Write>(
    mut w: W,
    tensors: impl ExactSizeIterator<Item = (&'a str, &'a Tensor)>,
) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    let count =
        u32::try_from(tensors.len()).map_err(|_| Error::Contract("too many tensors for one container".into()))?;
    w.write_all(&count.to_le_bytes())?;
    for (name, t) in tensors {
        let bytes = name.as_bytes();
        let len = u16::try_from(bytes.len()).map_err(|_| Error::Contract(format!("tensor name too long: {name}")))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(bytes)?;
        let rank = u8::try_from(t.rank()).map_err(|_| Error::Contract(format!("rank too large for `{name}`")))?;
        w.write_all(&[rank])?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_tensors<R: Read>(mut r: R, origin: &Path) -> Result<Vec<(String, Tensor)>> {
    let bad = |msg: String| Error::parse(origin, msg);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad(format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let count = read_u32(&mut r)?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let mut len = [0u8; 2];
        r.read_exact(&mut len)?;
        let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| bad(format!("tensor name: {e}")))?;
        let mut rank = [0u8; 1];
        r.read_exact(&mut rank)?;
        let mut shape = Vec::with_capacity(rank[0] as usize);
        for _ in 0..rank[0] {
            let mut d = [0u8; 8];
            r.read_exact(&mut d)?;
            shape.push(u64::from_le_bytes(d) as usize);
        }
        let n: usize = shape.iter().product();
        let mut raw = vec![0u8; n * 8];
        r.read_exact(&mut raw)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| bad(format!("tensor `{name}`: {e}")))?;
        out.push((name, t));
    }
    Ok(out)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn save_tensors(path: &Path, tensors: &[(String, Tensor)]) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    write_tensors(w, tensors.iter().map(|(k, v)| (k.as_str(), v)))
}

pub fn load_tensors(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let r = BufReader::new(File::open(path)?);
    read_tensors(r, path)
}

pub fn save_params(path: &Path, params: &ParamSet) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    let items: Vec<_> = params.iter().collect();
    write_tensors(w, items.into_iter())
}

pub fn load_params(path: &Path) -> Result<ParamSet> {
    Ok(load_tensors(path)?.into_iter().collect())
}
