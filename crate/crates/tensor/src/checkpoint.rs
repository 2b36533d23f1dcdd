//! Single-file parameter container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    4 bytes  b"DCKP"
//! version  u32      currently 1
//! count    u32      number of entries
//! entry*   count times:
//!   name_len u32, name (UTF-8, name_len bytes)
//!   ndim     u32, dims (u64 × ndim)
//!   values   f64 × prod(dims), IEEE-754 binary64
//! ```
//!
//! Entries keep insertion order, so saving the same model twice yields
//! byte-identical files.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Result, TensorError};
use crate::param::Parameter;

pub const MAGIC: [u8; 4] = *b"DCKP";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    entries: Vec<Entry>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: &[usize], values: Vec<f64>) {
        let name = name.into();
        assert_eq!(shape.iter().product::<usize>(), values.len(), "entry {name}");
        let entry = Entry {
            name,
            shape: shape.to_vec(),
            values,
        };
        match self.entries.iter_mut().find(|e| e.name == entry.name) {
            Some(slot) => *slot = entry,
            None => self.entries.push(entry),
        }
    }

    pub fn from_params(params: &[Parameter]) -> Self {
        let mut ck = Self::new();
        for p in params {
            ck.insert(p.name(), p.shape(), p.tensor().to_vec());
        }
        ck
    }

    pub fn get(&self, name: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    /// Copies stored values into matching parameters. Every parameter must
    /// be present with an identical shape.
    pub fn load_into(&self, params: &[Parameter]) -> Result<()> {
        for p in params {
            let e = self
                .get(p.name())
                .ok_or_else(|| TensorError::Format(format!("missing entry `{}`", p.name())))?;
            if e.shape != p.shape() {
                return Err(TensorError::Format(format!(
                    "entry `{}` has shape {:?}, parameter expects {:?}",
                    p.name(),
                    e.shape,
                    p.shape()
                )));
            }
            p.assign(&e.values);
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.extend_from_slice(&(e.shape.len() as u32).to_le_bytes());
            for &d in &e.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &e.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(&mut bytes, &mut magic)?;
        if magic != MAGIC {
            return Err(TensorError::Format(format!("bad magic {magic:?}")));
        }
        let version = read_u32(&mut bytes)?;
        if version != VERSION {
            return Err(TensorError::Format(format!("unsupported version {version}")));
        }
        let count = read_u32(&mut bytes)?;
        let mut ck = Checkpoint::new();
        for _ in 0..count {
            let len = read_u32(&mut bytes)? as usize;
            let mut name = vec![0u8; len];
            read_exact(&mut bytes, &mut name)?;
            let name = String::from_utf8(name)
                .map_err(|_| TensorError::Format("entry name is not UTF-8".into()))?;
            let ndim = read_u32(&mut bytes)? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                let mut b = [0u8; 8];
                read_exact(&mut bytes, &mut b)?;
                shape.push(u64::from_le_bytes(b) as usize);
            }
            let n: usize = shape.iter().product();
            if n.saturating_mul(8) > bytes.len() {
                return Err(TensorError::Format(format!("entry `{name}` truncated")));
            }
            let values = (0..n)
                .map(|_| {
                    let mut b = [0u8; 8];
                    read_exact(&mut bytes, &mut b).map(|_| f64::from_le_bytes(b))
                })
                .collect::<Result<Vec<_>>>()?;
            ck.entries.push(Entry { name, shape, values });
        }
        if !bytes.is_empty() {
            return Err(TensorError::Format(format!("{} trailing bytes", bytes.len())));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

fn read_exact(src: &mut &[u8], dst: &mut [u8]) -> Result<()> {
    src.read_exact(dst)
        .map_err(|_| TensorError::Format("unexpected end of checkpoint".into()))
}

fn read_u32(src: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(src, &mut b)?;
    Ok(u32::from_le_bytes(b))
}
