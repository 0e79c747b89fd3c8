//! Reader and writer for the safetensors checkpoint container.
//!
//! Layout: an 8-byte little-endian header length `N`, then `N` bytes of JSON
//! mapping each tensor name to `{"dtype", "shape", "data_offsets"}` (offsets
//! relative to the end of the header, plus an optional `"__metadata__"`
//! string map), then the packed data buffer.
//!
//! Files written here have names sorted lexicographically, a compact header
//! without padding and data blocks in header order, so equal inputs always
//! serialize to identical bytes and the file size is exactly
//! `8 + header + Σ data`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};

const METADATA_KEY: &str = "__metadata__";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Dtype {
    Bool,
    U8,
    I8,
    F8E5M2,
    F8E4M3,
    I16,
    U16,
    F16,
    BF16,
    I32,
    U32,
    F32,
    F64,
    I64,
    U64,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::Bool | Dtype::U8 | Dtype::I8 | Dtype::F8E5M2 | Dtype::F8E4M3 => 1,
            Dtype::I16 | Dtype::U16 | Dtype::F16 | Dtype::BF16 => 2,
            Dtype::I32 | Dtype::U32 | Dtype::F32 => 4,
            Dtype::F64 | Dtype::I64 | Dtype::U64 => 8,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Dtype::Bool => "BOOL",
            Dtype::U8 => "U8",
            Dtype::I8 => "I8",
            Dtype::F8E5M2 => "F8_E5M2",
            Dtype::F8E4M3 => "F8_E4M3",
            Dtype::I16 => "I16",
            Dtype::U16 => "U16",
            Dtype::F16 => "F16",
            Dtype::BF16 => "BF16",
            Dtype::I32 => "I32",
            Dtype::U32 => "U32",
            Dtype::F32 => "F32",
            Dtype::F64 => "F64",
            Dtype::I64 => "I64",
            Dtype::U64 => "U64",
        }
    }
}

impl FromStr for Dtype {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "BOOL" => Dtype::Bool,
            "U8" => Dtype::U8,
            "I8" => Dtype::I8,
            "F8_E5M2" => Dtype::F8E5M2,
            "F8_E4M3" => Dtype::F8E4M3,
            "I16" => Dtype::I16,
            "U16" => Dtype::U16,
            "F16" => Dtype::F16,
            "BF16" => Dtype::BF16,
            "I32" => Dtype::I32,
            "U32" => Dtype::U32,
            "F32" => Dtype::F32,
            "F64" => Dtype::F64,
            "I64" => Dtype::I64,
            "U64" => Dtype::U64,
            other => return Err(format!("unknown dtype {other:?}")),
        })
    }
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A raw little-endian tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorEntry {
    dtype: Dtype,
    shape: Vec<usize>,
    data: Vec<u8>,
}

impl TensorEntry {
    pub fn new(dtype: Dtype, shape: Vec<usize>, data: Vec<u8>) -> Result<TensorEntry> {
        let expected = byte_len(dtype, &shape)
            .ok_or_else(|| Error::Container(format!("shape {shape:?} overflows")))?;
        if data.len() != expected {
            return Err(Error::Container(format!(
                "{dtype} tensor of shape {shape:?} needs {expected} bytes, got {}",
                data.len()
            )));
        }
        Ok(TensorEntry { dtype, shape, data })
    }

    pub fn from_f32(shape: Vec<usize>, values: &[f32]) -> Result<TensorEntry> {
        let data = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        TensorEntry::new(Dtype::F32, shape, data)
    }

    pub fn to_f32(&self) -> Option<Vec<f32>> {
        (self.dtype == Dtype::F32).then(|| {
            self.data
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect()
        })
    }

    pub fn dtype(&self) -> Dtype {
        self.dtype
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    /// Number of elements; 1 for a scalar.
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

fn byte_len(dtype: Dtype, shape: &[usize]) -> Option<usize> {
    shape
        .iter()
        .try_fold(dtype.size(), |acc, &d| acc.checked_mul(d))
}

/// Named tensors plus optional string metadata.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TensorFile {
    pub entries: BTreeMap<String, TensorEntry>,
    pub metadata: Option<BTreeMap<String, String>>,
}

impl TensorFile {
    pub fn new() -> TensorFile {
        TensorFile::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, entry: TensorEntry) -> Result<()> {
        let name = name.into();
        if name.is_empty() || name == METADATA_KEY {
            return Err(Error::tensor(&name, "reserved or empty tensor name"));
        }
        self.entries.insert(name, entry);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&TensorEntry> {
        self.entries.get(name)
    }

    pub fn total_params(&self) -> u64 {
        self.entries.values().map(|e| e.numel() as u64).sum()
    }

    /// Sum of tensor data bytes; the in-memory footprint of the weights.
    pub fn data_bytes(&self) -> u64 {
        self.entries.values().map(|e| e.data.len() as u64).sum()
    }

    /// The JSON header exactly as [`write_tensor_file`] emits it.
    pub fn header_bytes(&self) -> Vec<u8> {
        let mut header = BTreeMap::new();
        let mut offset = 0usize;
        for (name, entry) in &self.entries {
            let end = offset + entry.data.len();
            header.insert(
                name.as_str(),
                HeaderValue::Tensor {
                    dtype: entry.dtype.as_str(),
                    shape: &entry.shape,
                    data_offsets: [offset, end],
                },
            );
            offset = end;
        }
        if let Some(meta) = &self.metadata {
            header.insert(METADATA_KEY, HeaderValue::Metadata(meta));
        }
        serde_json::to_vec(&header).expect("header serializes")
    }

    /// On-disk size of this file once written.
    pub fn serialized_size(&self) -> u64 {
        8 + self.header_bytes().len() as u64 + self.data_bytes()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header = self.header_bytes();
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        for entry in self.entries.values() {
            w.write_all(&entry.data)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.serialized_size() as usize);
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    /// Parses a container from a reader, copying each data block straight
    /// into its tensor. `total_len`, when known, bounds the header size.
    pub fn read_from<R: Read>(mut r: R, total_len: Option<u64>) -> Result<TensorFile> {
        let mut len_bytes = [0u8; 8];
        r.read_exact(&mut len_bytes)
            .map_err(|_| Error::Container("truncated: missing header length".into()))?;
        let header_len = u64::from_le_bytes(len_bytes);
        if let Some(total) = total_len {
            if header_len > total.saturating_sub(8) {
                return Err(Error::Container(format!(
                    "truncated: header length {header_len} exceeds file size {total}"
                )));
            }
        }
        let header_len = usize::try_from(header_len)
            .map_err(|_| Error::Container("header length overflows".into()))?;
        let mut header = Vec::new();
        r.by_ref()
            .take(header_len as u64)
            .read_to_end(&mut header)
            .map_err(|e| Error::Container(format!("reading header: {e}")))?;
        if header.len() != header_len {
            return Err(Error::Container("truncated: incomplete header".into()));
        }
        let header: Map<String, Value> = serde_json::from_slice(&header)
            .map_err(|e| Error::Container(format!("header is not a JSON object: {e}")))?;

        let mut metadata = None;
        let mut specs = Vec::with_capacity(header.len());
        for (name, value) in header {
            if name == METADATA_KEY {
                let meta: BTreeMap<String, String> = serde_json::from_value(value)
                    .map_err(|e| Error::Container(format!("__metadata__: {e}")))?;
                metadata = Some(meta);
                continue;
            }
            specs.push(parse_spec(name, value)?);
        }
        specs.sort_by_key(|s| s.begin);

        let mut tf = TensorFile {
            entries: BTreeMap::new(),
            metadata,
        };
        let mut cursor = 0usize;
        for spec in specs {
            if spec.begin != cursor {
                let why = if spec.begin < cursor {
                    "data_offsets overlap another tensor"
                } else {
                    "data_offsets leave a gap in the data buffer"
                };
                return Err(Error::tensor(&spec.name, why));
            }
            let len = spec.end - spec.begin;
            let mut data = Vec::new();
            r.by_ref()
                .take(len as u64)
                .read_to_end(&mut data)
                .map_err(|e| Error::tensor(&spec.name, format!("reading data: {e}")))?;
            if data.len() != len {
                return Err(Error::tensor(&spec.name, "truncated data block"));
            }
            cursor = spec.end;
            tf.entries.insert(
                spec.name,
                TensorEntry {
                    dtype: spec.dtype,
                    shape: spec.shape,
                    data,
                },
            );
        }
        let mut trailing = [0u8; 1];
        match r.read(&mut trailing) {
            Ok(0) => Ok(tf),
            Ok(_) => Err(Error::Container(
                "data buffer extends past the last tensor".into(),
            )),
            Err(e) => Err(Error::Container(format!("reading data: {e}"))),
        }
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<TensorFile> {
        TensorFile::read_from(bytes, Some(bytes.len() as u64))
    }
}

#[derive(Serialize)]
#[serde(untagged)]
enum HeaderValue<'a> {
    Tensor {
        dtype: &'static str,
        shape: &'a [usize],
        data_offsets: [usize; 2],
    },
    Metadata(&'a BTreeMap<String, String>),
}

struct Spec {
    name: String,
    dtype: Dtype,
    shape: Vec<usize>,
    begin: usize,
    end: usize,
}

fn parse_spec(name: String, value: Value) -> Result<Spec> {
    if name.is_empty() {
        return Err(Error::tensor(&name, "empty tensor name"));
    }
    let obj = value
        .as_object()
        .ok_or_else(|| Error::tensor(&name, "entry is not an object"))?;
    let dtype = obj
        .get("dtype")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::tensor(&name, "missing dtype"))?
        .parse::<Dtype>()
        .map_err(|e| Error::tensor(&name, e))?;
    let shape = obj
        .get("shape")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::tensor(&name, "missing shape"))?
        .iter()
        .map(|d| d.as_u64().and_then(|d| usize::try_from(d).ok()))
        .collect::<Option<Vec<usize>>>()
        .ok_or_else(|| Error::tensor(&name, "shape must hold non-negative integers"))?;
    let offsets = obj
        .get("data_offsets")
        .and_then(Value::as_array)
        .filter(|a| a.len() == 2)
        .and_then(|a| {
            let begin = usize::try_from(a[0].as_u64()?).ok()?;
            let end = usize::try_from(a[1].as_u64()?).ok()?;
            Some((begin, end))
        })
        .ok_or_else(|| Error::tensor(&name, "data_offsets must be [begin, end]"))?;
    let (begin, end) = offsets;
    if end < begin {
        return Err(Error::tensor(&name, "data_offsets end before begin"));
    }
    let expected = byte_len(dtype, &shape).ok_or_else(|| Error::tensor(&name, "shape overflows"))?;
    if end - begin != expected {
        return Err(Error::tensor(
            &name,
            format!(
                "shape {shape:?} of {dtype} needs {expected} bytes but data_offsets span {}",
                end - begin
            ),
        ));
    }
    Ok(Spec {
        name,
        dtype,
        shape,
        begin,
        end,
    })
}

pub fn read_tensor_file(path: impl AsRef<Path>) -> Result<TensorFile> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    TensorFile::read_from(BufReader::new(file), Some(len))
}

pub fn write_tensor_file(tf: &TensorFile, path: impl AsRef<Path>) -> Result<()> {
    crate::io::write_atomic(path.as_ref(), |w| tf.write_to(w))
}
