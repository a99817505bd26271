//! Binary parameter checkpoints.
//!
//! Layout: the magic `XMDW1`, then one record per parameter in lexicographic
//! name order until end of file:
//!
//! ```text
//! u32 LE   name length in bytes
//! [u8]     UTF-8 name
//! u32 LE   rank
//! u64 LE   extent, repeated `rank` times
//! f64 LE   payload, product(extents) values, row-major
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 5] = b"XMDW1";

const MAX_NAME_LEN: usize = 4096;
const MAX_RANK: usize = 8;

pub fn encode<'a>(params: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Vec<u8> {
    let sorted: BTreeMap<&str, &Tensor> = params.into_iter().collect();
    let mut out = MAGIC.to_vec();
    for (name, t) in sorted {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    rest: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        if self.rest.len() < n {
            return None;
        }
        let (head, tail) = self.rest.split_at(n);
        self.rest = tail;
        Some(head)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4)
            .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8)
            .map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<BTreeMap<String, Tensor>> {
    let bad = |msg: String| Error::format(path, msg);
    let truncated = |what: &str| Error::format(path, format!("truncated while reading {what}"));
    let rest = bytes
        .strip_prefix(MAGIC.as_slice())
        .ok_or_else(|| bad("missing XMDW1 magic".into()))?;
    let mut cur = Cursor { rest };
    let mut out = BTreeMap::new();
    let mut last: Option<String> = None;
    while !cur.rest.is_empty() {
        let name_len = cur.u32().ok_or_else(|| truncated("name length"))? as usize;
        if name_len == 0 || name_len > MAX_NAME_LEN {
            return Err(bad(format!("implausible name length {name_len}")));
        }
        let name = std::str::from_utf8(cur.take(name_len).ok_or_else(|| truncated("name"))?)
            .map_err(|_| bad("parameter name is not UTF-8".into()))?
            .to_string();
        if last.as_ref().is_some_and(|l| *l >= name) {
            return Err(bad(format!("parameter {name} out of lexicographic order")));
        }
        let rank = cur.u32().ok_or_else(|| truncated("rank"))? as usize;
        if rank == 0 || rank > MAX_RANK {
            return Err(bad(format!("parameter {name}: implausible rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let d = cur.u64().ok_or_else(|| truncated("extent"))?;
            shape.push(usize::try_from(d).map_err(|_| bad(format!("extent {d} too large")))?);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n > 0 && n <= cur.rest.len() / 8)
            .ok_or_else(|| {
                bad(format!(
                    "parameter {name}: bad or truncated extents {shape:?}"
                ))
            })?;
        let payload = cur.take(n * 8).ok_or_else(|| truncated("payload"))?;
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| bad(e.to_string()))?;
        last = Some(name.clone());
        out.insert(name, t);
    }
    Ok(out)
}

pub fn save(path: &Path, params: BTreeMap<String, Tensor>) -> Result<()> {
    let bytes = encode(params.iter().map(|(k, v)| (k.as_str(), v)));
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<BTreeMap<String, Tensor>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
