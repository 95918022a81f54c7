//! Binary checkpoint format.
//!
//! ```text
//! b"LSG1" | u64 LE header length | JSON header | f32 LE payload
//! ```
//!
//! The payload holds every parameter in header order, followed, when
//! `optimizer_state` is set, by the Adam first moments and then the second
//! moments in the same order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::param::ParamStore;
use super::scalar::Scalar;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"LSG1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub dtype: String,
    pub params: Vec<ParamEntry>,
    pub optimizer_state: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adam_step: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adam_config: Option<AdamConfig>,
}

pub fn encode<T: Scalar>(store: &ParamStore<T>, adam: Option<&Adam<T>>) -> Result<Vec<u8>> {
    let header = Header {
        dtype: "f32".into(),
        params: store
            .iter()
            .map(|p| ParamEntry {
                name: p.name.clone(),
                shape: p.tensor.shape().to_vec(),
                trainable: p.trainable,
            })
            .collect(),
        optimizer_state: adam.is_some(),
        adam_step: adam.map(|a| a.step),
        adam_config: adam.map(|a| a.config),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(12 + json.len() + 4 * store.scalar_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    let mut put = |vals: &[T]| {
        for v in vals {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    };
    for p in store.iter() {
        put(p.tensor.data());
    }
    if let Some(a) = adam {
        for m in &a.m {
            put(m);
        }
        for v in &a.v {
            put(v);
        }
    }
    Ok(out)
}

fn bad(message: impl Into<String>) -> Error {
    Error::Format {
        path: Default::default(),
        message: message.into(),
    }
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<(ParamStore<T>, Option<Adam<T>>)> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(bad("missing LSG1 magic"));
    }
    let hlen = u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(12..12 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body)?;
    if header.dtype != "f32" {
        return Err(bad(format!("unsupported dtype {}", header.dtype)));
    }
    let mut cursor = 12 + hlen;
    let mut take = |n: usize| -> Result<Vec<T>> {
        let raw = bytes
            .get(cursor..cursor + 4 * n)
            .ok_or_else(|| bad("truncated payload"))?;
        cursor += 4 * n;
        Ok(raw
            .chunks_exact(4)
            .map(|c| T::lit(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64))
            .collect())
    };
    let mut store = ParamStore::new();
    for e in &header.params {
        let n = e.shape.iter().product();
        store.add(e.name.clone(), Tensor::new(&e.shape, take(n)?)?, e.trainable)?;
    }
    let adam = if header.optimizer_state {
        let sizes: Vec<usize> = header.params.iter().map(|e| e.shape.iter().product()).collect();
        let m = sizes.iter().map(|&n| take(n)).collect::<Result<Vec<_>>>()?;
        let v = sizes.iter().map(|&n| take(n)).collect::<Result<Vec<_>>>()?;
        Some(Adam {
            config: header.adam_config.unwrap_or_default(),
            step: header.adam_step.unwrap_or(0),
            m,
            v,
        })
    } else {
        None
    };
    if cursor != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - cursor)));
    }
    Ok((store, adam))
}

pub fn save<T: Scalar>(path: &Path, store: &ParamStore<T>, adam: Option<&Adam<T>>) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, encode(store, adam)?)?;
    Ok(())
}

pub fn load<T: Scalar>(path: &Path) -> Result<(ParamStore<T>, Option<Adam<T>>)> {
    let bytes = std::fs::read(path)?;
    decode(&bytes).map_err(|e| match e {
        Error::Format { message, .. } => Error::Format {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}
