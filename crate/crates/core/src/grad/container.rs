//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes  "STLPCKPT"
//! hlen    u32      length of the JSON header in bytes
//! header  hlen     UTF-8 JSON: {"version", "dtype", "tensors": [{"name", "shape", "offset"}], "meta"}
//! data    ...      f64 little-endian payload; `offset` counts elements from the start of data
//! ```

use std::io::{Read, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Tensor;

const MAGIC: &[u8; 8] = b"STLPCKPT";
pub const CONTAINER_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint container (bad magic)")]
    BadMagic,
    #[error("unsupported container version {0}")]
    Version(u32),
    #[error("unsupported dtype {0:?}")]
    Dtype(String),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("missing tensor {0:?}")]
    Missing(String),
    #[error("tensor {name:?} has shape {found:?}, expected {expected:?}")]
    Shape {
        name: String,
        found: (usize, usize),
        expected: (usize, usize),
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    dtype: String,
    tensors: Vec<TensorEntry>,
    #[serde(default)]
    meta: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub value: Tensor,
}

/// Decoded container contents.
#[derive(Debug, Clone, Default)]
pub struct Container {
    pub tensors: Vec<NamedTensor>,
    pub meta: serde_json::Value,
}

impl Container {
    pub fn push(&mut self, name: impl Into<String>, value: &Tensor) {
        self.tensors.push(NamedTensor {
            name: name.into(),
            value: value.clone(),
        });
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, ContainerError> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .map(|t| &t.value)
            .ok_or_else(|| ContainerError::Missing(name.to_string()))
    }

    /// Fetches a tensor and checks its shape.
    pub fn take_shaped(
        &self,
        name: &str,
        expected: (usize, usize),
    ) -> Result<Tensor, ContainerError> {
        let t = self.get(name)?;
        if t.dim() != expected {
            return Err(ContainerError::Shape {
                name: name.to_string(),
                found: t.dim(),
                expected,
            });
        }
        Ok(t.clone())
    }
}

pub fn write_container<W: Write>(mut w: W, container: &Container) -> Result<(), ContainerError> {
    let mut offset = 0;
    let mut entries = Vec::with_capacity(container.tensors.len());
    for t in &container.tensors {
        let (r, c) = t.value.dim();
        entries.push(TensorEntry {
            name: t.name.clone(),
            shape: [r, c],
            offset,
        });
        offset += r * c;
    }
    let header = Header {
        version: CONTAINER_VERSION,
        dtype: "f64".into(),
        tensors: entries,
        meta: container.meta.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| ContainerError::Header(e.to_string()))?;
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    for t in &container.tensors {
        for v in t.value.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_container<R: Read>(mut r: R) -> Result<Container, ContainerError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(ContainerError::BadMagic);
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut json)?;
    let header: Header =
        serde_json::from_slice(&json).map_err(|e| ContainerError::Header(e.to_string()))?;
    if header.version != CONTAINER_VERSION {
        return Err(ContainerError::Version(header.version));
    }
    if header.dtype != "f64" {
        return Err(ContainerError::Dtype(header.dtype));
    }
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    if data.len() % 8 != 0 {
        return Err(ContainerError::Header(
            "payload is not a whole number of f64".into(),
        ));
    }
    let values: Vec<f64> = data
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect();
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for e in header.tensors {
        let n = e.shape[0] * e.shape[1];
        let slice = values.get(e.offset..e.offset + n).ok_or_else(|| {
            ContainerError::Header(format!("tensor {:?} overruns payload", e.name))
        })?;
        let value = Array2::from_shape_vec((e.shape[0], e.shape[1]), slice.to_vec())
            .map_err(|err| ContainerError::Header(err.to_string()))?;
        tensors.push(NamedTensor {
            name: e.name,
            value,
        });
    }
    Ok(Container {
        tensors,
        meta: header.meta,
    })
}
