//! Versioned binary checkpoint container.
//!
//! Layout: `b"RDLM"`, format version (`u32` LE), header length (`u64` LE), a
//! JSON header, then every tensor as contiguous little-endian `f64`. The
//! header carries caller metadata (architecture, epoch, config hash) and the
//! tensor table.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::optim::Adam;
use crate::param::{prefixed, Module};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"RDLM";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    meta: Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: Value,
    names: Vec<String>,
    tensors: std::collections::HashMap<String, (Vec<usize>, Vec<f64>)>,
}

impl Checkpoint {
    pub fn new(meta: Value) -> Self {
        Self {
            meta,
            names: Vec::new(),
            tensors: Default::default(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: &[usize], data: Vec<f64>) {
        let name = name.into();
        assert_eq!(shape.iter().product::<usize>(), data.len(), "{name}");
        if self.tensors.insert(name.clone(), (shape.to_vec(), data)).is_none() {
            self.names.push(name);
        }
    }

    pub fn get(&self, name: &str) -> Result<(&[usize], &[f64])> {
        self.tensors
            .get(name)
            .map(|(s, d)| (s.as_slice(), d.as_slice()))
            .ok_or_else(|| Error::checkpoint(format!("missing tensor {name}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn put_module<M: Module>(&mut self, prefix: &str, m: &M) {
        for p in m.params() {
            self.insert(prefixed(prefix, &p.name), &p.shape, p.value.clone());
        }
        for b in m.buffers() {
            self.insert(prefixed(prefix, &b.name), &b.shape, b.value.clone());
        }
    }

    /// Overwrites parameters and buffers of `m`; every tensor must be present
    /// with a matching shape.
    pub fn load_module<M: Module>(&self, prefix: &str, m: &mut M) -> Result<()> {
        for p in m.params_mut() {
            let (shape, data) = self.get(&prefixed(prefix, &p.name))?;
            if shape != p.shape.as_slice() {
                return Err(Error::checkpoint(format!("{}: stored {shape:?}, expected {:?}", p.name, p.shape)));
            }
            p.value.copy_from_slice(data);
        }
        for b in m.buffers_mut() {
            let (shape, data) = self.get(&prefixed(prefix, &b.name))?;
            if shape != b.shape.as_slice() {
                return Err(Error::checkpoint(format!("{}: stored {shape:?}, expected {:?}", b.name, b.shape)));
            }
            b.value.copy_from_slice(data);
        }
        Ok(())
    }

    pub fn put_adam(&mut self, prefix: &str, opt: &Adam) {
        let hyper = vec![opt.lr, opt.beta1, opt.beta2, opt.eps, opt.t as f64, opt.m.len() as f64];
        self.insert(format!("{prefix}.adam"), &[hyper.len()], hyper);
        for (k, (m, v)) in opt.m.iter().zip(&opt.v).enumerate() {
            self.insert(format!("{prefix}.adam.m{k}"), &[m.len()], m.clone());
            self.insert(format!("{prefix}.adam.v{k}"), &[v.len()], v.clone());
        }
    }

    pub fn load_adam(&self, prefix: &str) -> Result<Adam> {
        let (_, h) = self.get(&format!("{prefix}.adam"))?;
        if h.len() != 6 {
            return Err(Error::checkpoint(format!("{prefix}.adam: malformed optimizer header")));
        }
        let mut opt = Adam::new(h[0]);
        opt.beta1 = h[1];
        opt.beta2 = h[2];
        opt.eps = h[3];
        opt.t = h[4] as u64;
        for k in 0..h[5] as usize {
            opt.m.push(self.get(&format!("{prefix}.adam.m{k}"))?.1.to_vec());
            opt.v.push(self.get(&format!("{prefix}.adam.v{k}"))?.1.to_vec());
        }
        Ok(opt)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut offset = 0;
        let mut entries = Vec::with_capacity(self.names.len());
        for n in &self.names {
            let (shape, data) = &self.tensors[n];
            entries.push(TensorEntry {
                name: n.clone(),
                shape: shape.clone(),
                offset,
            });
            offset += data.len();
        }
        let header = serde_json::to_vec(&Header {
            meta: self.meta.clone(),
            tensors: entries,
        })
        .map_err(|e| Error::checkpoint(e.to_string()))?;
        let mut out = Vec::with_capacity(16 + header.len() + offset * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for n in &self.names {
            for v in &self.tensors[n].1 {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(Error::checkpoint("not a checkpoint file (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::checkpoint(format!(
                "format version {version}, this build reads {FORMAT_VERSION}"
            )));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = bytes
            .get(16..16 + hlen)
            .ok_or_else(|| Error::checkpoint("truncated header"))?;
        let header: Header = serde_json::from_slice(body).map_err(|e| Error::checkpoint(e.to_string()))?;
        let blob = &bytes[16 + hlen..];
        let mut ck = Checkpoint::new(header.meta);
        for e in header.tensors {
            let n: usize = e.shape.iter().product();
            let start = e.offset * 8;
            let raw = blob
                .get(start..start + n * 8)
                .ok_or_else(|| Error::checkpoint(format!("tensor {} runs past the end of the file", e.name)))?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            ck.insert(e.name, &e.shape, data);
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let io = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let mut f = std::fs::File::create(path).map_err(io)?;
        f.write_all(&self.to_bytes()?).map_err(io)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}
