//! Reader for the safetensors container: an 8-byte little-endian header
//! length, a UTF-8 JSON header mapping tensor names to dtype/shape/offsets,
//! then the raw little-endian tensor bytes.

use std::collections::{BTreeMap, HashMap};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A dense `f32` tensor in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

#[derive(Debug, Deserialize)]
struct Entry {
    dtype: String,
    shape: Vec<usize>,
    data_offsets: [usize; 2],
}

/// All tensors of one container, converted to `f32`.
#[derive(Debug, Clone)]
pub struct TensorStore {
    tensors: HashMap<String, Tensor>,
    metadata: BTreeMap<String, String>,
    header_digest: String,
}

impl TensorStore {
    pub fn from_tensors(tensors: HashMap<String, Tensor>) -> Self {
        let mut names: Vec<_> = tensors.keys().cloned().collect();
        names.sort();
        let mut hasher = Sha256::new();
        for name in &names {
            hasher.update(name.as_bytes());
            hasher.update(format!("{:?}", tensors[name].shape).as_bytes());
        }
        Self {
            tensors,
            metadata: BTreeMap::new(),
            header_digest: hex(&hasher.finalize()),
        }
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::CorruptContainer(format!(
                "file is {} bytes, too small for a header",
                bytes.len()
            )));
        }
        let header_len = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
        let data_start = 8usize
            .checked_add(header_len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| {
                Error::CorruptContainer(format!(
                    "header length {header_len} exceeds file size {}",
                    bytes.len()
                ))
            })?;
        let header_bytes = &bytes[8..data_start];
        let header: serde_json::Map<String, serde_json::Value> =
            serde_json::from_slice(header_bytes)
                .map_err(|e| Error::CorruptContainer(format!("header is not valid JSON: {e}")))?;
        let data = &bytes[data_start..];

        let mut metadata = BTreeMap::new();
        let mut tensors = HashMap::new();
        for (name, value) in header {
            if name == "__metadata__" {
                if let serde_json::Value::Object(meta) = value {
                    for (k, v) in meta {
                        let v = v
                            .as_str()
                            .map(str::to_owned)
                            .unwrap_or_else(|| v.to_string());
                        metadata.insert(k, v);
                    }
                }
                continue;
            }
            let entry: Entry = serde_json::from_value(value).map_err(|e| {
                Error::CorruptContainer(format!("bad header entry for `{name}`: {e}"))
            })?;
            let tensor = decode(&name, &entry, data)?;
            tensors.insert(name, tensor);
        }

        Ok(Self {
            tensors,
            metadata,
            header_digest: hex(&Sha256::digest(header_bytes)),
        })
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn take(&mut self, name: &str) -> Option<Tensor> {
        self.tensors.remove(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    /// SHA-256 of the JSON header, hex encoded. Identifies a checkpoint
    /// without hashing the full payload.
    pub fn header_digest(&self) -> &str {
        &self.header_digest
    }

    /// Serialises tensors back into a container (F32 only). Tensor order
    /// is by name so the output is deterministic.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut names: Vec<&String> = self.tensors.keys().collect();
        names.sort();
        let mut header = serde_json::Map::new();
        let mut offset = 0usize;
        for name in &names {
            let t = &self.tensors[*name];
            let end = offset + t.numel() * 4;
            header.insert(
                (*name).clone(),
                serde_json::json!({"dtype": "F32", "shape": t.shape, "data_offsets": [offset, end]}),
            );
            offset = end;
        }
        let header = serde_json::to_vec(&header).expect("header serialises");
        let mut out = Vec::with_capacity(8 + header.len() + offset);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for name in names {
            for v in &self.tensors[name].data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }
}

fn dtype_size(dtype: &str) -> Option<usize> {
    match dtype {
        "F32" => Some(4),
        "F16" | "BF16" => Some(2),
        _ => None,
    }
}

fn decode(name: &str, entry: &Entry, data: &[u8]) -> Result<Tensor> {
    let size = dtype_size(&entry.dtype).ok_or_else(|| Error::UnsupportedDtype {
        name: name.to_owned(),
        dtype: entry.dtype.clone(),
    })?;
    let numel: usize = entry.shape.iter().product();
    let [start, end] = entry.data_offsets;
    let available = end.min(data.len()).saturating_sub(start) / size;
    if start > end || end > data.len() || end - start != numel * size {
        return Err(Error::ShapeMismatch {
            name: name.to_owned(),
            expected: entry.shape.clone(),
            found: vec![available],
        });
    }
    let raw = &data[start..end];
    let values = match entry.dtype.as_str() {
        "F32" => raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
        "F16" => raw
            .chunks_exact(2)
            .map(|c| half::f16::from_le_bytes([c[0], c[1]]).to_f32())
            .collect(),
        "BF16" => raw
            .chunks_exact(2)
            .map(|c| half::bf16::from_le_bytes([c[0], c[1]]).to_f32())
            .collect(),
        _ => unreachable!("checked by dtype_size"),
    };
    Ok(Tensor::new(entry.shape.clone(), values))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
