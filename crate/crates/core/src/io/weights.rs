use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{decode_f64s, join_container, split_container, FormatError};

pub const SFW_MAGIC: [u8; 4] = *b"SFW1";

/// A named, shaped block of `f64` parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    #[serde(skip)]
    pub data: Vec<f64>,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Self {
        Self { name: name.into(), shape, data }
    }

    fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Serialize, Deserialize)]
struct WeightsHeader {
    dtype: String,
    tensors: Vec<NamedTensor>,
}

pub fn encode_weights(tensors: &[NamedTensor]) -> Result<Vec<u8>, FormatError> {
    for t in tensors {
        if t.numel() != t.data.len() {
            return Err(FormatError::HeaderMismatch(format!(
                "tensor {} has shape {:?} but {} values",
                t.name,
                t.shape,
                t.data.len()
            )));
        }
    }
    let header = WeightsHeader { dtype: "f64le".into(), tensors: tensors.to_vec() };
    let json = serde_json::to_vec(&header).map_err(|e| FormatError::BadHeader(e.to_string()))?;
    let payload: Vec<f64> = tensors.iter().flat_map(|t| t.data.iter().copied()).collect();
    Ok(join_container(&SFW_MAGIC, &json, &payload))
}

pub fn decode_weights(bytes: &[u8]) -> Result<Vec<NamedTensor>, FormatError> {
    let (json, payload) = split_container(bytes, &SFW_MAGIC)?;
    let header: WeightsHeader =
        serde_json::from_slice(json).map_err(|e| FormatError::BadHeader(e.to_string()))?;
    if header.dtype != "f64le" {
        return Err(FormatError::HeaderMismatch(format!("unsupported dtype {:?}", header.dtype)));
    }
    let total = header.tensors.iter().map(NamedTensor::numel).sum();
    let flat = decode_f64s(payload, total)?;
    let mut offset = 0;
    let mut tensors = header.tensors;
    for t in &mut tensors {
        let n = t.numel();
        t.data = flat[offset..offset + n].to_vec();
        offset += n;
    }
    Ok(tensors)
}

pub fn write_weights(path: impl AsRef<Path>, tensors: &[NamedTensor]) -> Result<(), FormatError> {
    std::fs::write(path, encode_weights(tensors)?)?;
    Ok(())
}

pub fn read_weights(path: impl AsRef<Path>) -> Result<Vec<NamedTensor>, FormatError> {
    decode_weights(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let ts = vec![
            NamedTensor::new("a", vec![2, 3], (0..6).map(f64::from).collect()),
            NamedTensor::new("b", vec![], vec![-0.5]),
            NamedTensor::new("c", vec![0], vec![]),
        ];
        let bytes = encode_weights(&ts).unwrap();
        assert_eq!(decode_weights(&bytes).unwrap(), ts);
    }

    #[test]
    fn rejects_wrong_magic_and_shape() {
        let ts = vec![NamedTensor::new("a", vec![2], vec![1.0])];
        assert!(encode_weights(&ts).is_err());
        let mut bytes = encode_weights(&[NamedTensor::new("a", vec![1], vec![1.0])]).unwrap();
        bytes[3] = b'0';
        assert_eq!(decode_weights(&bytes).unwrap_err().code(), 2);
    }
}
