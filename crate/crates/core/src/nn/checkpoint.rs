//! Binary parameter checkpoints.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic     8 bytes  "C2FCKPT\0"
//! version   u32      1
//! n_meta    u32
//!   key     u32 length + UTF-8 bytes
//!   value   u32 length + UTF-8 bytes
//! n_blocks  u32
//!   name    u32 length + UTF-8 bytes
//!   dtype   u8       1 = f64
//!   ndim    u8
//!   dims    ndim x u64
//!   values  prod(dims) x f64, row-major
//!   adam    u8       0 = absent, 1 = present
//!     step  u64
//!     m     prod(dims) x f64
//!     v     prod(dims) x f64
//! ```
//!
//! Trailing bytes after the last block are an error.

use std::collections::BTreeMap;
use std::path::Path;

use super::optim::{Adam, AdamSlot};
use super::params::{ParamStore, Tensor};
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"C2FCKPT\0";
pub const VERSION: u32 = 1;
const DTYPE_F64: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub params: ParamStore,
    /// Adam moments, one slot per parameter in store order.
    pub adam: Vec<Option<AdamSlot>>,
}

impl Checkpoint {
    pub fn new(meta: BTreeMap<String, String>, params: ParamStore, adam: Option<&Adam>) -> Self {
        let n = params.len();
        let adam = match adam {
            Some(a) => {
                let mut s = a.slots.clone();
                s.resize(n, None);
                s
            }
            None => vec![None; n],
        };
        Checkpoint { meta, params, adam }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        for (k, v) in &self.meta {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for id in self.params.ids() {
            let t = self.params.get(id);
            put_str(&mut out, self.params.name(id));
            out.push(DTYPE_F64);
            out.push(t.shape.len() as u8);
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            put_f64s(&mut out, &t.data);
            match self.adam.get(id.index()).and_then(Option::as_ref) {
                Some(slot) => {
                    out.push(1);
                    out.extend_from_slice(&slot.step.to_le_bytes());
                    put_f64s(&mut out, &slot.m);
                    put_f64s(&mut out, &slot.v);
                }
                None => out.push(0),
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(8)?;
        if magic != MAGIC {
            return Err(r.err(0, "not a checkpoint file (bad magic)"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.err(8, &format!("unsupported checkpoint version {version}")));
        }
        let mut meta = BTreeMap::new();
        for _ in 0..r.u32()? {
            let k = r.string()?;
            let v = r.string()?;
            meta.insert(k, v);
        }
        let mut params = ParamStore::new();
        let mut adam = Vec::new();
        for _ in 0..r.u32()? {
            let at = r.pos;
            let name = r.string()?;
            if params.id(&name).is_some() {
                return Err(r.err(at, &format!("duplicate parameter {name}")));
            }
            let dtype = r.u8()?;
            if dtype != DTYPE_F64 {
                return Err(r.err(r.pos - 1, &format!("unsupported dtype {dtype}")));
            }
            let ndim = r.u8()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u64()? as usize);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .filter(|&n| n <= bytes.len() / 8)
                .ok_or_else(|| r.err(at, &format!("implausible shape {shape:?} for {name}")))?;
            let data = r.f64s(n)?;
            params.add(&name, Tensor { shape, data });
            let slot = match r.u8()? {
                0 => None,
                1 => {
                    let step = r.u64()?;
                    let m = r.f64s(n)?;
                    let v = r.f64s(n)?;
                    Some(AdamSlot { step, m, v })
                }
                f => return Err(r.err(r.pos - 1, &format!("bad optimizer flag {f}"))),
            };
            adam.push(slot);
        }
        if r.pos != bytes.len() {
            return Err(r.err(r.pos, "trailing bytes after last block"));
        }
        Ok(Checkpoint { meta, params, adam })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Copy values into `store`, which must hold exactly the same names and
    /// shapes in the same order.
    pub fn restore_into(&self, store: &mut ParamStore) -> Result<()> {
        if store.len() != self.params.len() {
            return Err(Error::shape(
                "checkpoint parameter count",
                &[store.len()],
                &[self.params.len()],
            ));
        }
        for id in self.params.ids() {
            let (name, src) = (self.params.name(id), self.params.get(id));
            if store.name(id) != name {
                return Err(Error::data(format!(
                    "checkpoint parameter {name} where {} was expected",
                    store.name(id)
                )));
            }
            let dst = store.get_mut(id);
            if dst.shape != src.shape {
                return Err(Error::shape(format!("checkpoint parameter {name}"), &dst.shape, &src.shape));
            }
            dst.data.copy_from_slice(&src.data);
        }
        Ok(())
    }

    pub fn adam(&self, lr: f64) -> Adam {
        let mut a = Adam::new(&self.params, lr);
        a.slots = self.adam.clone();
        a
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn put_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, offset: usize, message: &str) -> Error {
        Error::Checkpoint {
            offset: offset as u64,
            message: message.to_string(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(self.pos, "unexpected end of file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let at = self.pos;
        let n = self.u32()? as usize;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| self.err(at, "string is not UTF-8"))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let b = self.take(n.checked_mul(8).ok_or_else(|| self.err(self.pos, "size overflow"))?)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}
