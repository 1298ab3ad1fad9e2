//! Tensor bundles: a directory holding `manifest.json` and one raw
//! little-endian file per tensor.
//!
//! ```json
//! {
//!   "format": "hgpipe-bundle",
//!   "version": 1,
//!   "tensors": [
//!     {"name": "image", "file": "image.bin", "dtype": "i8", "shape": [3, 8, 16],
//!      "bits": 4, "scale": 0.142857, "zero_point": 0}
//!   ]
//! }
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::quant::QuantTensor;
use crate::{Error, Result};

pub const MANIFEST: &str = "manifest.json";
const FORMAT: &str = "hgpipe-bundle";
const VERSION: u32 = 1;
/// Upper bound on elements per tensor accepted from a manifest.
const MAX_ELEMENTS: usize = 1 << 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    I8,
    I32,
    F32,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::I8 => 1,
            DType::I32 | DType::F32 => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub file: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bits: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero_point: Option<i32>,
}

impl TensorEntry {
    pub fn elements(&self) -> Result<usize> {
        self.shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n <= MAX_ELEMENTS)
            .ok_or_else(|| Error::Format(format!("tensor `{}` is too large", self.name)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub tensors: Vec<TensorEntry>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

fn safe_file_name(name: &str) -> bool {
    !name.is_empty()
        && name != "."
        && name != ".."
        && name != MANIFEST
        && name.chars().all(|c| c.is_ascii_alphanumeric() || "._-".contains(c))
}

/// Parses and validates a manifest.
pub fn parse_manifest(text: &str) -> Result<Manifest> {
    let m: Manifest = serde_json::from_str(text)?;
    if m.format != FORMAT {
        return Err(Error::Format(format!("unknown format `{}`", m.format)));
    }
    if m.version != VERSION {
        return Err(Error::Format(format!("unsupported version {}", m.version)));
    }
    let mut names = std::collections::HashSet::new();
    let mut files = std::collections::HashSet::new();
    for t in &m.tensors {
        if t.name.is_empty() || !names.insert(t.name.as_str()) {
            return Err(Error::Format(format!("empty or duplicate tensor name `{}`", t.name)));
        }
        if !safe_file_name(&t.file) || !files.insert(t.file.as_str()) {
            return Err(Error::Format(format!("bad or duplicate file name `{}`", t.file)));
        }
        t.elements()?;
        if let Some(bits) = t.bits {
            let max = match t.dtype {
                DType::I8 => 8,
                DType::I32 => 31,
                DType::F32 => return Err(Error::Format(format!("`{}`: f32 tensors carry no bit width", t.name))),
            };
            if !(2..=max).contains(&bits) {
                return Err(Error::Format(format!("`{}`: bits {bits} invalid for {:?}", t.name, t.dtype)));
            }
        }
        if let Some(s) = t.scale {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Format(format!("`{}`: scale must be positive", t.name)));
            }
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    I8(Vec<i8>),
    I32(Vec<i32>),
    F32(Vec<f32>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::I8(_) => DType::I8,
            TensorData::I32(_) => DType::I32,
            TensorData::F32(_) => DType::F32,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::I8(v) => v.len(),
            TensorData::I32(v) => v.len(),
            TensorData::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn to_bytes(&self) -> Vec<u8> {
        match self {
            TensorData::I8(v) => v.iter().map(|&x| x as u8).collect(),
            TensorData::I32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            TensorData::F32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        }
    }
}

/// Decodes the raw bytes of one tensor, checking length and bit width.
pub fn decode_tensor(entry: &TensorEntry, bytes: &[u8]) -> Result<TensorData> {
    let n = entry.elements()?;
    if bytes.len() != n * entry.dtype.size() {
        return Err(Error::Format(format!(
            "`{}`: expected {} bytes, found {}",
            entry.name,
            n * entry.dtype.size(),
            bytes.len()
        )));
    }
    let data = match entry.dtype {
        DType::I8 => TensorData::I8(bytes.iter().map(|&b| b as i8).collect()),
        DType::I32 => TensorData::I32(
            bytes
                .chunks_exact(4)
                .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        DType::F32 => {
            let v: Vec<f32> = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Format(format!("`{}`: non-finite value", entry.name)));
            }
            TensorData::F32(v)
        }
    };
    if let Some(bits) = entry.bits {
        let (lo, hi) = crate::quant::qrange(bits);
        let ok = match &data {
            TensorData::I8(v) => v.iter().all(|&x| (lo..=hi).contains(&(x as i32))),
            TensorData::I32(v) => v.iter().all(|x| (lo..=hi).contains(x)),
            TensorData::F32(_) => true,
        };
        if !ok {
            return Err(Error::Format(format!("`{}`: value outside {bits}-bit range", entry.name)));
        }
    }
    Ok(data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: TensorData,
    pub bits: Option<u32>,
    pub scale: Option<f64>,
    pub zero_point: Option<i32>,
}

impl Tensor {
    pub fn f32(shape: Vec<usize>, values: impl IntoIterator<Item = f64>) -> Self {
        Self {
            shape,
            data: TensorData::F32(values.into_iter().map(|v| v as f32).collect()),
            bits: None,
            scale: None,
            zero_point: None,
        }
    }

    /// Stores a quantized tensor as `i8` when it fits, otherwise `i32`.
    pub fn from_quant(q: &QuantTensor) -> Self {
        let data = if q.bits() <= 8 {
            TensorData::I8(q.data().iter().map(|&v| v as i8).collect())
        } else {
            TensorData::I32(q.data().to_vec())
        };
        Self {
            shape: q.shape().to_vec(),
            data,
            bits: Some(q.bits()),
            scale: Some(q.scale()),
            zero_point: Some(q.zero_point()),
        }
    }

    pub fn to_quant(&self) -> Result<QuantTensor> {
        let data = match &self.data {
            TensorData::I8(v) => v.iter().map(|&x| x as i32).collect(),
            TensorData::I32(v) => v.clone(),
            TensorData::F32(_) => return Err(Error::Format("f32 tensor is not quantized".into())),
        };
        let bits = self.bits.ok_or_else(|| Error::Format("quantized tensor needs `bits`".into()))?;
        let scale = self.scale.ok_or_else(|| Error::Format("quantized tensor needs `scale`".into()))?;
        QuantTensor::new(data, self.shape.clone(), bits, scale, self.zero_point.unwrap_or(0))
    }

    /// Real values: f32 as stored, integers through scale and zero point.
    pub fn to_f64(&self) -> Vec<f64> {
        let (s, z) = (self.scale.unwrap_or(1.0), self.zero_point.unwrap_or(0) as f64);
        match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::I8(v) => v.iter().map(|&x| (x as f64 - z) * s).collect(),
            TensorData::I32(v) => v.iter().map(|&x| (x as f64 - z) * s).collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Bundle {
    pub tensors: BTreeMap<String, Tensor>,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl Bundle {
    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Format(format!("bundle has no tensor `{name}`")))
    }

    fn file_name(name: &str) -> String {
        let stem: String = name
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
            .collect();
        format!("{stem}.bin")
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            format: FORMAT.into(),
            version: VERSION,
            tensors: self
                .tensors
                .iter()
                .map(|(name, t)| TensorEntry {
                    name: name.clone(),
                    file: Self::file_name(name),
                    dtype: t.data.dtype(),
                    shape: t.shape.clone(),
                    bits: t.bits,
                    scale: t.scale,
                    zero_point: t.zero_point,
                })
                .collect(),
            metadata: self.metadata.clone(),
        }
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = self.manifest();
        for (entry, t) in manifest.tensors.iter().zip(self.tensors.values()) {
            if t.data.len() != entry.elements()? {
                return Err(Error::ShapeMismatch(format!("tensor `{}` data does not match its shape", entry.name)));
            }
            let path = dir.join(&entry.file);
            fs::write(&path, t.data.to_bytes()).map_err(|e| Error::io(&path, e))?;
        }
        let path = dir.join(MANIFEST);
        fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
    }

    pub fn read(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest = parse_manifest(&text)?;
        let mut bundle = Bundle {
            metadata: manifest.metadata.clone(),
            ..Default::default()
        };
        for entry in manifest.tensors {
            let path = dir.join(&entry.file);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let data = decode_tensor(&entry, &bytes)?;
            bundle.insert(
                entry.name,
                Tensor {
                    shape: entry.shape,
                    data,
                    bits: entry.bits,
                    scale: entry.scale,
                    zero_point: entry.zero_point,
                },
            );
        }
        Ok(bundle)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(dtype: DType, shape: Vec<usize>) -> TensorEntry {
        TensorEntry {
            name: "t".into(),
            file: "t.bin".into(),
            dtype,
            shape,
            bits: None,
            scale: None,
            zero_point: None,
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = Bundle::default();
        b.insert("w.0", Tensor::f32(vec![2, 2], [0.5, -1.0, 2.0, 0.25]));
        let q = QuantTensor::new(vec![-8, 7, 0], vec![3], 4, 0.1, 0).unwrap();
        b.insert("q", Tensor::from_quant(&q));
        b.insert(
            "acc",
            Tensor {
                shape: vec![2],
                data: TensorData::I32(vec![-70000, 123456]),
                bits: None,
                scale: Some(0.5),
                zero_point: None,
            },
        );
        b.metadata.insert("seed".into(), 7.into());
        b.write(dir.path()).unwrap();
        let back = Bundle::read(dir.path()).unwrap();
        assert_eq!(back, b);
        assert_eq!(back.get("q").unwrap().to_quant().unwrap(), q);
        assert_eq!(back.get("acc").unwrap().to_f64(), vec![-35000.0, 61728.0]);
    }

    #[test]
    fn decode_checks_length_and_range() {
        let e = entry(DType::I32, vec![2]);
        assert!(decode_tensor(&e, &[0; 7]).is_err());
        assert_eq!(decode_tensor(&e, &[1, 0, 0, 0, 255, 255, 255, 255]).unwrap(), TensorData::I32(vec![1, -1]));
        let mut e = entry(DType::I8, vec![2]);
        e.bits = Some(4);
        assert!(decode_tensor(&e, &[7, 8]).is_err());
        assert!(decode_tensor(&e, &[7, 0xf8]).is_ok());
        let e = entry(DType::F32, vec![1]);
        assert!(decode_tensor(&e, &f32::NAN.to_le_bytes()).is_err());
    }

    #[test]
    fn manifest_validation() {
        let ok = r#"{"format":"hgpipe-bundle","version":1,"tensors":[{"name":"a","file":"a.bin","dtype":"i8","shape":[2]}]}"#;
        assert!(parse_manifest(ok).is_ok());
        for bad in [
            ok.replace("hgpipe-bundle", "npz"),
            ok.replace("\"version\":1", "\"version\":2"),
            ok.replace("a.bin", "../a.bin"),
            ok.replace("a.bin", "manifest.json"),
            ok.replace("[2]", "[4294967296, 4294967296]"),
            ok.replace("\"shape\"", "\"bits\":9,\"shape\""),
            ok.replace("\"shape\"", "\"scale\":-1,\"shape\""),
            ok.replace("\"dtype\"", "\"colour\":1,\"dtype\""),
            "not json".to_string(),
        ] {
            assert!(parse_manifest(&bad).is_err(), "{bad}");
        }
        let dup = r#"{"format":"hgpipe-bundle","version":1,"tensors":[
            {"name":"a","file":"a.bin","dtype":"i8","shape":[2]},
            {"name":"a","file":"b.bin","dtype":"i8","shape":[2]}]}"#;
        assert!(parse_manifest(dup).is_err());
    }

    #[test]
    fn missing_files_are_io_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(Bundle::read(dir.path()), Err(Error::Io { .. })));
    }
}
