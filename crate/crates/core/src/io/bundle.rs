//! Array bundles: a directory with `manifest.json` and one little-endian row-major blob per
//! array. Complex values are stored as interleaved `(re, im)` pairs; booleans as one byte.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::numerics::{ComplexArray, RealArray};

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq)]
pub struct BoolArray {
    pub shape: Vec<usize>,
    pub data: Vec<bool>,
}

impl BoolArray {
    pub fn new(shape: Vec<usize>, data: Vec<bool>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Shape(format!("shape {shape:?} for {} booleans", data.len())));
        }
        Ok(Self { shape, data })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BundleArray {
    F64(RealArray),
    C128(ComplexArray),
    Bool(BoolArray),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F64,
    C128,
    Bool,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Self::F64 => 8,
            Self::C128 => 16,
            Self::Bool => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    pub byte_order: String,
    pub file: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    arrays: Vec<ManifestEntry>,
    #[serde(default)]
    metadata: Map<String, Value>,
}

/// Named arrays plus free-form JSON metadata, kept in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ArrayBundle {
    arrays: Vec<(String, BundleArray)>,
    metadata: Map<String, Value>,
}

fn check_name(name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && !name.starts_with('.')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if !ok {
        return Err(Error::Format(format!("invalid array name {name:?}")));
    }
    Ok(())
}

impl ArrayBundle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, array: BundleArray) -> Result<()> {
        check_name(name)?;
        if self.arrays.iter().any(|(n, _)| n == name) {
            return Err(Error::Format(format!("duplicate array name {name:?}")));
        }
        self.arrays.push((name.to_string(), array));
        Ok(())
    }

    pub fn insert_real(&mut self, name: &str, a: RealArray) -> Result<()> {
        self.insert(name, BundleArray::F64(a))
    }

    pub fn insert_complex(&mut self, name: &str, a: ComplexArray) -> Result<()> {
        self.insert(name, BundleArray::C128(a))
    }

    pub fn insert_bool(&mut self, name: &str, shape: Vec<usize>, data: Vec<bool>) -> Result<()> {
        self.insert(name, BundleArray::Bool(BoolArray::new(shape, data)?))
    }

    /// Stacks equally shaped arrays along a new leading axis.
    pub fn insert_stack(&mut self, name: &str, items: &[RealArray]) -> Result<()> {
        let inner = items.first().map_or(vec![0], |a| a.shape().to_vec());
        if items.iter().any(|a| a.shape() != inner.as_slice()) {
            return Err(Error::Shape(format!("cannot stack {name:?}: shapes differ")));
        }
        let mut shape = vec![items.len()];
        shape.extend(&inner);
        let data = items.iter().flat_map(|a| a.data().iter().copied()).collect();
        self.insert_real(name, RealArray::new(shape, data)?)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.arrays.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Result<&BundleArray> {
        self.arrays
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, a)| a)
            .ok_or_else(|| Error::Format(format!("bundle has no array {name:?}")))
    }

    pub fn real(&self, name: &str) -> Result<&RealArray> {
        match self.get(name)? {
            BundleArray::F64(a) => Ok(a),
            _ => Err(Error::Format(format!("array {name:?} is not f64"))),
        }
    }

    pub fn complex(&self, name: &str) -> Result<&ComplexArray> {
        match self.get(name)? {
            BundleArray::C128(a) => Ok(a),
            _ => Err(Error::Format(format!("array {name:?} is not c128"))),
        }
    }

    pub fn boolean(&self, name: &str) -> Result<&BoolArray> {
        match self.get(name)? {
            BundleArray::Bool(a) => Ok(a),
            _ => Err(Error::Format(format!("array {name:?} is not bool"))),
        }
    }

    /// Splits a stacked array back into its leading-axis slices.
    pub fn unstack(&self, name: &str) -> Result<Vec<RealArray>> {
        let a = self.real(name)?;
        let (&n, inner) = a.shape().split_first().ok_or_else(|| Error::Format(format!("{name:?} is 0-d")))?;
        let len: usize = inner.iter().product();
        (0..n).map(|i| RealArray::new(inner.to_vec(), a.data()[i * len..(i + 1) * len].to_vec())).collect()
    }

    pub fn set_meta<T: Serialize>(&mut self, key: &str, value: &T) -> Result<()> {
        self.metadata.insert(key.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    pub fn meta<T: DeserializeOwned>(&self, key: &str) -> Result<T> {
        let v = self.metadata.get(key).ok_or_else(|| Error::Format(format!("bundle has no metadata {key:?}")))?;
        Ok(serde_json::from_value(v.clone())?)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut entries = Vec::with_capacity(self.arrays.len());
        for (name, array) in &self.arrays {
            let file = format!("{name}.bin");
            let (dtype, shape, bytes) = encode(array);
            fs::write(dir.join(&file), bytes)?;
            entries.push(ManifestEntry { name: name.clone(), dtype, shape, byte_order: "little-endian".into(), file });
        }
        let manifest = Manifest { arrays: entries, metadata: self.metadata.clone() };
        fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST))?)?;
        let mut bundle = Self { arrays: Vec::new(), metadata: manifest.metadata };
        for e in manifest.arrays {
            if e.byte_order != "little-endian" {
                return Err(Error::Format(format!("{}: unsupported byte order {:?}", e.name, e.byte_order)));
            }
            check_name(&e.name)?;
            if Path::new(&e.file).components().count() != 1 {
                return Err(Error::Format(format!("{}: blob path {:?} leaves the bundle", e.name, e.file)));
            }
            let bytes = fs::read(dir.join(&e.file))?;
            let expected = e.shape.iter().product::<usize>() * e.dtype.size();
            if bytes.len() != expected {
                return Err(Error::Format(format!("{}: blob has {} bytes, expected {expected}", e.name, bytes.len())));
            }
            bundle.insert(&e.name, decode(e.dtype, e.shape, &bytes)?)?;
        }
        Ok(bundle)
    }
}

fn encode(array: &BundleArray) -> (Dtype, Vec<usize>, Vec<u8>) {
    match array {
        BundleArray::F64(a) => (Dtype::F64, a.shape().to_vec(), a.data().iter().flat_map(|v| v.to_le_bytes()).collect()),
        BundleArray::C128(a) => (
            Dtype::C128,
            a.shape().to_vec(),
            a.data().iter().flat_map(|v| v.re.to_le_bytes().into_iter().chain(v.im.to_le_bytes())).collect(),
        ),
        BundleArray::Bool(a) => (Dtype::Bool, a.shape.clone(), a.data.iter().map(|&b| b as u8).collect()),
    }
}

fn f64_at(bytes: &[u8], i: usize) -> f64 {
    f64::from_le_bytes(bytes[8 * i..8 * i + 8].try_into().expect("8 bytes"))
}

fn decode(dtype: Dtype, shape: Vec<usize>, bytes: &[u8]) -> Result<BundleArray> {
    let n: usize = shape.iter().product();
    Ok(match dtype {
        Dtype::F64 => BundleArray::F64(RealArray::new(shape, (0..n).map(|i| f64_at(bytes, i)).collect())?),
        Dtype::C128 => BundleArray::C128(ComplexArray::new(
            shape,
            (0..n).map(|i| Complex64::new(f64_at(bytes, 2 * i), f64_at(bytes, 2 * i + 1))).collect(),
        )?),
        Dtype::Bool => {
            if let Some(b) = bytes.iter().find(|&&b| b > 1) {
                return Err(Error::Format(format!("boolean byte {b}")));
            }
            BundleArray::Bool(BoolArray::new(shape, bytes.iter().map(|&b| b == 1).collect())?)
        }
    })
}

/// Writes any serializable value as pretty JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::ChainRng;

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChainRng::seed_from_u64(1);
        let mut b = ArrayBundle::new();
        b.insert_real("r", RealArray::from_fn(&[3, 4], |_| rng.normal() * 1e-300)).unwrap();
        b.insert_complex("c", ComplexArray::from_fn(&[2, 2, 2], |_| Complex64::new(rng.normal(), -0.0))).unwrap();
        b.insert_bool("m", vec![5], vec![true, false, true, true, false]).unwrap();
        b.set_meta("note", &vec![1.5, 2.5]).unwrap();
        b.write(dir.path()).unwrap();
        let back = ArrayBundle::read(dir.path()).unwrap();
        assert_eq!(back, b);
        let bits = |a: &RealArray| a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(back.real("r").unwrap()), bits(b.real("r").unwrap()));
        assert!(back.complex("c").unwrap().data()[0].im.is_sign_negative());
        assert_eq!(back.meta::<Vec<f64>>("note").unwrap(), vec![1.5, 2.5]);
    }

    #[test]
    fn manifest_describes_blobs() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = ArrayBundle::new();
        b.insert_complex("k", ComplexArray::zeros(&[2, 3])).unwrap();
        b.write(dir.path()).unwrap();
        let m: Manifest = read_json(&dir.path().join(MANIFEST)).unwrap();
        assert_eq!(
            m.arrays[0],
            ManifestEntry { name: "k".into(), dtype: Dtype::C128, shape: vec![2, 3], byte_order: "little-endian".into(), file: "k.bin".into() }
        );
        assert_eq!(fs::metadata(dir.path().join("k.bin")).unwrap().len(), 96);
    }

    #[test]
    fn rejects_bad_names_duplicates_and_truncated_blobs() {
        let mut b = ArrayBundle::new();
        assert!(b.insert_real("../x", RealArray::zeros(&[1])).is_err());
        b.insert_real("x", RealArray::zeros(&[2])).unwrap();
        assert!(b.insert_real("x", RealArray::zeros(&[2])).is_err());
        let dir = tempfile::tempdir().unwrap();
        b.write(dir.path()).unwrap();
        fs::write(dir.path().join("x.bin"), [0u8; 8]).unwrap();
        assert!(matches!(ArrayBundle::read(dir.path()), Err(Error::Format(_))));
    }

    #[test]
    fn stacks_round_trip() {
        let items: Vec<RealArray> = (0..3).map(|k| RealArray::from_fn(&[2, 2], |i| (k * 4 + i) as f64)).collect();
        let mut b = ArrayBundle::new();
        b.insert_stack("s", &items).unwrap();
        assert_eq!(b.real("s").unwrap().shape(), &[3, 2, 2]);
        assert_eq!(b.unstack("s").unwrap(), items);
    }
}
