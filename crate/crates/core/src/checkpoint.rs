//! Model checkpoints: one line of JSON header, then every parameter value as
//! a little-endian `f32`, tensors in manifest order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Vocabulary;
use crate::error::{Error, Result};
use crate::numkernel::{ParamSet, Tensor2};

pub const FORMAT: &str = "gwlab-ckpt-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format: String,
    model_kind: String,
    config: serde_json::Value,
    vocab: Vocabulary,
    manifest: Vec<(String, [usize; 2])>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub model_kind: String,
    pub config: serde_json::Value,
    pub vocab: Vocabulary,
    pub params: ParamSet,
}

impl ModelCheckpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            format: FORMAT.to_string(),
            model_kind: self.model_kind.clone(),
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            manifest: self
                .params
                .iter()
                .map(|(k, t)| (k.clone(), [t.rows(), t.cols()]))
                .collect(),
        };
        let mut out = serde_json::to_vec(&header).expect("header serializes");
        out.push(b'\n');
        out.reserve(4 * self.params.num_values());
        for (_, t) in self.params.iter() {
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::IncompatibleCheckpoint(m);
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("missing header line".into()))?;
        let header: Header = serde_json::from_slice(&bytes[..nl])
            .map_err(|e| bad(format!("unreadable header: {e}")))?;
        if header.format != FORMAT {
            return Err(bad(format!(
                "format {:?}, expected {FORMAT:?}",
                header.format
            )));
        }
        let body = &bytes[nl + 1..];
        let expected: usize = header.manifest.iter().map(|(_, [r, c])| r * c).sum();
        if body.len() != 4 * expected {
            return Err(bad(format!(
                "manifest lists {expected} values but the file holds {} bytes of data",
                body.len()
            )));
        }
        let mut params = ParamSet::new();
        let mut values = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
        for (name, [r, c]) in header.manifest {
            if params.contains(&name) {
                return Err(bad(format!("duplicate tensor {name}")));
            }
            let data: Vec<f64> = values.by_ref().take(r * c).collect();
            params.insert(name, Tensor2::from_vec(r, c, data)?);
        }
        Ok(ModelCheckpoint {
            model_kind: header.model_kind,
            config: header.config,
            vocab: header.vocab,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.model_kind != kind {
            return Err(Error::IncompatibleCheckpoint(format!(
                "expected a {kind} checkpoint, found {}",
                self.model_kind
            )));
        }
        Ok(())
    }

    pub fn config_as<T: serde::de::DeserializeOwned>(&self) -> Result<T> {
        serde_json::from_value(self.config.clone())
            .map_err(|e| Error::IncompatibleCheckpoint(format!("config: {e}")))
    }

    /// Fails unless `params` has exactly the names and shapes of `reference`.
    pub fn check_manifest(&self, reference: &ParamSet) -> Result<()> {
        let got: Vec<_> = self.params.iter().map(|(k, t)| (k, t.shape())).collect();
        let want: Vec<_> = reference.iter().map(|(k, t)| (k, t.shape())).collect();
        if got != want {
            return Err(Error::IncompatibleCheckpoint(
                "parameter manifest does not match the configured model".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ModelCheckpoint {
        let mut params = ParamSet::new();
        params.insert(
            "a",
            Tensor2::from_vec(2, 2, vec![0.5, -1.25, 3.0, 1e-3]).unwrap(),
        );
        params.insert("b", Tensor2::from_vec(1, 3, vec![1.0, 2.0, 3.0]).unwrap());
        params.quantize_f32();
        ModelCheckpoint {
            model_kind: "test".into(),
            config: serde_json::json!({"hidden_size": 4}),
            vocab: Vocabulary::build(&[], 1),
            params,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample();
        let bytes = c.to_bytes();
        let back = ModelCheckpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
        let header_end = bytes.iter().position(|&b| b == b'\n').unwrap();
        assert_eq!(bytes.len() - header_end - 1, 4 * 7);
    }

    #[test]
    fn truncated_and_wrong_format() {
        let bytes = sample().to_bytes();
        assert!(matches!(
            ModelCheckpoint::from_bytes(&bytes[..bytes.len() - 3]),
            Err(Error::IncompatibleCheckpoint(_))
        ));
        let text = String::from_utf8_lossy(&bytes).replace(FORMAT, "gwlab-ckpt-v0");
        let mut patched = text.split('\n').next().unwrap().as_bytes().to_vec();
        patched.push(b'\n');
        patched.extend_from_slice(&bytes[bytes.iter().position(|&b| b == b'\n').unwrap() + 1..]);
        assert!(matches!(
            ModelCheckpoint::from_bytes(&patched),
            Err(Error::IncompatibleCheckpoint(_))
        ));
        assert!(ModelCheckpoint::from_bytes(b"no header").is_err());
    }

    #[test]
    fn manifest_mismatch() {
        let c = sample();
        let mut other = c.params.clone();
        other.insert("a", Tensor2::zeros(3, 2));
        assert!(c.check_manifest(&other).is_err());
        assert!(c.check_manifest(&c.params).is_ok());
        assert!(c.expect_kind("oracle").is_err());
    }
}
