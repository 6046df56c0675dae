//! Binary weight container:
//!
//! ```text
//! magic [8] | version u32 | header_len u64 | header JSON | f64 LE arrays | crc32 u32
//! ```
//!
//! All integers are little-endian. The checksum covers every byte before it.

use std::collections::BTreeMap;
use std::path::Path;

use forge_core::Bounds;
use forge_nn::{ParameterStore, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{ConfluxVae, ModelConfig, VaeError};

pub const MAGIC: [u8; 8] = *b"FRGVAE\r\n";
pub const FORMAT_VERSION: u32 = 1;

/// A trained model: config, parameter values and the normalization box of
/// its training data.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub config: ModelConfig,
    pub bounds: Bounds,
    pub dt_s: f64,
    pub rng_seed: u64,
    pub params: BTreeMap<String, Tensor>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: ModelConfig,
    bounds: Bounds,
    dt_s: f64,
    rng_seed: u64,
    params: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    /// Index of the first element in the array section, in f64 units.
    offset: usize,
}

impl ModelWeights {
    pub fn from_store(config: ModelConfig, bounds: Bounds, dt_s: f64, rng_seed: u64, store: &ParameterStore) -> Self {
        let params = store.iter().map(|(n, p)| (n.to_string(), p.value.clone())).collect();
        Self { config, bounds, dt_s, rng_seed, params }
    }

    /// Rebuild the model and a store holding these values, checking that
    /// names and shapes match what the config implies.
    pub fn instantiate(&self) -> Result<(ConfluxVae, ParameterStore), VaeError> {
        self.bounds.validate().map_err(|e| VaeError::CorruptFile(e.to_string()))?;
        let (model, mut store) = ConfluxVae::new(&self.config, &mut ChaCha8Rng::seed_from_u64(0))?;
        let expected: Vec<&str> = store.names().collect();
        let found: Vec<&str> = self.params.keys().map(String::as_str).collect();
        if expected != found {
            return Err(VaeError::CorruptFile("parameter names do not match the model config".into()));
        }
        for (name, t) in &self.params {
            store.set_value(name, t.clone()).map_err(|e| VaeError::CorruptFile(e.to_string()))?;
        }
        Ok((model, store))
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, VaeError> {
        let mut offset = 0;
        let manifest = self
            .params
            .iter()
            .map(|(name, t)| {
                let e = ManifestEntry { name: name.clone(), shape: t.shape().to_vec(), offset };
                offset += t.len();
                e
            })
            .collect();
        let header = Header {
            config: self.config.clone(),
            bounds: self.bounds,
            dt_s: self.dt_s,
            rng_seed: self.rng_seed,
            params: manifest,
        };
        let header = serde_json::to_vec(&header).map_err(|e| VaeError::CorruptFile(e.to_string()))?;
        let mut out = Vec::with_capacity(24 + header.len() + 8 * offset);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for t in self.params.values() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, VaeError> {
        let corrupt = |m: &str| VaeError::CorruptFile(m.to_string());
        if bytes.len() < 24 || bytes[..8] != MAGIC {
            return Err(corrupt("missing magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(VaeError::FormatVersionMismatch { found: version, expected: FORMAT_VERSION });
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        if crc32fast::hash(body) != u32::from_le_bytes(tail.try_into().expect("4 bytes")) {
            return Err(corrupt("checksum mismatch"));
        }
        let hlen = usize::try_from(u64::from_le_bytes(body[12..20].try_into().expect("8 bytes")))
            .map_err(|_| corrupt("header length"))?;
        let hend = 20usize.checked_add(hlen).filter(|&e| e <= body.len()).ok_or_else(|| corrupt("header length"))?;
        let header: Header = serde_json::from_slice(&body[20..hend]).map_err(|e| VaeError::CorruptFile(e.to_string()))?;
        let data = &body[hend..];
        if data.len() % 8 != 0 {
            return Err(corrupt("array section is not a whole number of f64"));
        }
        let floats: Vec<f64> =
            data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        let mut params = BTreeMap::new();
        let mut expected_offset = 0;
        for e in header.params {
            let n: usize = e.shape.iter().product();
            if e.offset != expected_offset || e.offset + n > floats.len() {
                return Err(VaeError::CorruptFile(format!("bad offset for {}", e.name)));
            }
            expected_offset += n;
            let t = Tensor::new(e.shape, floats[e.offset..e.offset + n].to_vec())?;
            params.insert(e.name, t);
        }
        if expected_offset != floats.len() {
            return Err(corrupt("trailing array data"));
        }
        let w = Self { config: header.config, bounds: header.bounds, dt_s: header.dt_s, rng_seed: header.rng_seed, params };
        w.instantiate()?;
        Ok(w)
    }
}

pub fn save_weights(w: &ModelWeights, path: impl AsRef<Path>) -> Result<(), VaeError> {
    std::fs::write(path, w.to_bytes()?)?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<ModelWeights, VaeError> {
    ModelWeights::from_bytes(&std::fs::read(path)?)
}
