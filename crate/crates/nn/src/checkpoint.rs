//! Single-file checkpoint container.
//!
//! Layout: the 6-byte magic `PPOSG1`, a little-endian `u64` manifest
//! length, the JSON manifest, then a blob of little-endian `f32` tensors.
//! The manifest lists each tensor's name, shape and byte offset into the
//! blob, plus a free-form `meta` document for non-tensor state.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::{NnError, Params, Result, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"PPOSG1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u32,
    meta: Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: Value,
    tensors: Vec<(String, Tensor<f32>)>,
}

impl Default for Checkpoint {
    fn default() -> Self {
        Self::new(Value::Null)
    }
}

impl Checkpoint {
    pub fn new(meta: Value) -> Self {
        Self {
            meta,
            tensors: Vec::new(),
        }
    }

    /// Inserts or replaces a tensor, keeping first-insertion order.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<f32>) {
        let name = name.into();
        match self.tensors.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = tensor,
            None => self.tensors.push((name, tensor)),
        }
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<f32>> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| NnError::MissingTensor(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.iter().any(|(n, _)| n == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|(n, _)| n.as_str())
    }

    pub fn insert_params<P: Params<f32>>(&mut self, prefix: &str, net: &P) {
        for (name, t) in net.named_params() {
            self.insert(format!("{prefix}.{name}"), t.clone());
        }
    }

    /// Fills `net` from tensors stored under `prefix`; shapes must match.
    pub fn load_params<P: Params<f32>>(&self, prefix: &str, net: &mut P) -> Result<()> {
        let names: Vec<String> = net
            .named_params()
            .into_iter()
            .map(|(n, _)| format!("{prefix}.{n}"))
            .collect();
        for (name, dst) in names.iter().zip(net.params_mut()) {
            let src = self.get(name)?;
            if src.shape() != dst.shape() {
                return Err(NnError::ShapeMismatch {
                    op: "Checkpoint::load_params",
                    expected: dst.shape().to_vec(),
                    actual: src.shape().to_vec(),
                });
            }
            *dst = src.clone();
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut entries = Vec::with_capacity(self.tensors.len());
        let mut offset = 0u64;
        for (name, t) in &self.tensors {
            entries.push(TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                offset,
            });
            offset += 4 * t.len() as u64;
        }
        let manifest = serde_json::to_vec(&Manifest {
            version: CHECKPOINT_VERSION,
            meta: self.meta.clone(),
            tensors: entries,
        })?;
        let mut out = Vec::with_capacity(14 + manifest.len() + offset as usize);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        for (_, t) in &self.tensors {
            for x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 14 || &bytes[..6] != CHECKPOINT_MAGIC {
            let found = String::from_utf8_lossy(&bytes[..bytes.len().min(6)]).into_owned();
            return Err(NnError::Format(format!(
                "expected magic PPOSG1, found {found:?}"
            )));
        }
        let len = u64::from_le_bytes(bytes[6..14].try_into().expect("8 bytes")) as usize;
        let body = bytes
            .get(14..14 + len)
            .ok_or_else(|| NnError::Format("truncated manifest".into()))?;
        let manifest: Manifest = serde_json::from_slice(body)?;
        if manifest.version != CHECKPOINT_VERSION {
            return Err(NnError::Format(format!(
                "unsupported checkpoint version {} (this build reads {})",
                manifest.version, CHECKPOINT_VERSION
            )));
        }
        let blob = &bytes[14 + len..];
        let mut tensors = Vec::with_capacity(manifest.tensors.len());
        for entry in manifest.tensors {
            let count: usize = entry.shape.iter().product();
            let start = entry.offset as usize;
            let raw = blob.get(start..start + 4 * count).ok_or_else(|| {
                NnError::Format(format!("tensor `{}` extends past end of file", entry.name))
            })?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            tensors.push((entry.name, Tensor::from_vec(&entry.shape, data)?));
        }
        Ok(Self {
            meta: manifest.meta,
            tensors,
        })
    }

    /// Writes through a temporary file so readers never see a partial checkpoint.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("partial");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
