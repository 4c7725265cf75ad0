//! Binary checkpoints.
//!
//! Layout: the 8-byte magic `HYPCCA\0\x01`, a little-endian `u32` format
//! version, a little-endian `u64` header length, the JSON header, then every
//! tensor listed in the header as little-endian `f64` in row-major order.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::config::TrainConfig;
use crate::diff::Tensor;
use crate::encoder::{EncoderParams, LayerParams};
use crate::error::{Error, Result};
use crate::objectives::DiscriminatorParams;

const MAGIC: &[u8; 8] = b"HYPCCA\0\x01";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Position of the per-epoch random streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub epochs_completed: u64,
}

/// Everything needed to embed with, or continue, a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub encoder: EncoderParams,
    pub discriminator: DiscriminatorParams,
    pub rng: RngState,
    pub adam: AdamState,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    config: TrainConfig,
    rng: RngState,
    num_layers: usize,
    self_loops: bool,
    adam_step: u64,
    tensors: Vec<TensorEntry>,
}

impl Checkpoint {
    fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (l, p) in self.encoder.layers.iter().enumerate() {
            out.push((format!("layer{l}.theta_e"), p.theta_e.clone()));
            out.push((format!("layer{l}.theta_v"), p.theta_v.clone()));
            out.push((format!("layer{l}.slope_e"), Tensor::scalar(p.slope_e)));
            out.push((format!("layer{l}.slope_v"), Tensor::scalar(p.slope_v)));
        }
        out.push(("discriminator".into(), self.discriminator.weight.clone()));
        for (i, (m, v)) in self.adam.m.iter().zip(&self.adam.v).enumerate() {
            out.push((format!("adam.m{i}"), m.clone()));
            out.push((format!("adam.v{i}"), v.clone()));
        }
        out
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let tensors = self.named_tensors();
        let header = Header {
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            rng: self.rng,
            num_layers: self.encoder.num_layers(),
            self_loops: self.encoder.self_loops,
            adam_step: self.adam.step,
            tensors: tensors
                .iter()
                .map(|(name, t)| TensorEntry {
                    name: name.clone(),
                    rows: t.rows(),
                    cols: t.cols(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Parse(format!("checkpoint header: {e}")))?;
        let payload: usize = tensors.iter().map(|(_, t)| t.len() * 8).sum();
        let mut out = Vec::with_capacity(20 + json.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in &tensors {
            for x in t.as_slice() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |msg: &str| Error::CorruptCheckpoint(msg.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(corrupt("missing magic bytes"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let header_end = 20usize
            .checked_add(header_len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| corrupt("header runs past end of file"))?;
        let header: Header = serde_json::from_slice(&bytes[20..header_end])
            .map_err(|e| Error::CorruptCheckpoint(format!("header: {e}")))?;
        if header.version != version {
            return Err(corrupt("header version disagrees with preamble"));
        }

        let mut offset = header_end;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for entry in &header.tensors {
            let n = entry
                .rows
                .checked_mul(entry.cols)
                .ok_or_else(|| corrupt("tensor size overflows"))?;
            let end = n
                .checked_mul(8)
                .and_then(|b| offset.checked_add(b))
                .filter(|&end| end <= bytes.len())
                .ok_or_else(|| Error::CorruptCheckpoint(format!("truncated in tensor {}", entry.name)))?;
            let data = bytes[offset..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.push(Tensor::from_vec(entry.rows, entry.cols, data)?);
            offset = end;
        }
        if offset != bytes.len() {
            return Err(corrupt("trailing bytes after payload"));
        }
        Self::assemble(header, tensors)
    }

    fn assemble(header: Header, tensors: Vec<Tensor>) -> Result<Self> {
        let l = header.num_layers;
        if l == 0 || tensors.len() < 4 * l + 1 || !(tensors.len() - 4 * l - 1).is_multiple_of(2) {
            return Err(Error::CorruptCheckpoint(format!(
                "{} tensors do not fit {l} layers",
                tensors.len()
            )));
        }
        let mut it = tensors.into_iter();
        let mut layers = Vec::with_capacity(l);
        for _ in 0..l {
            let theta_e = it.next().expect("counted");
            let theta_v = it.next().expect("counted");
            let slope_e = it.next().expect("counted");
            let slope_v = it.next().expect("counted");
            if slope_e.shape() != (1, 1) || slope_v.shape() != (1, 1) {
                return Err(Error::CorruptCheckpoint("slope is not a scalar".into()));
            }
            layers.push(LayerParams {
                theta_e,
                theta_v,
                slope_e: slope_e.item(),
                slope_v: slope_v.item(),
            });
        }
        let encoder = EncoderParams {
            layers,
            self_loops: header.self_loops,
        };
        encoder.validate()?;
        let discriminator = DiscriminatorParams {
            weight: it.next().expect("counted"),
        };
        let d = encoder.dim();
        if discriminator.weight.shape() != (d, d) {
            return Err(Error::shape(
                "checkpoint",
                format!("discriminator {:?} for D = {d}", discriminator.weight.shape()),
            ));
        }
        if header.config.embedding_dim != d {
            return Err(Error::shape(
                "checkpoint",
                format!("config D = {} but weights have D = {d}", header.config.embedding_dim),
            ));
        }
        let rest: Vec<Tensor> = it.collect();
        let (m, v): (Vec<_>, Vec<_>) = rest.chunks(2).map(|c| (c[0].clone(), c[1].clone())).unzip();
        Ok(Self {
            config: header.config,
            encoder,
            discriminator,
            rng: header.rng,
            adam: AdamState {
                step: header.adam_step,
                m,
                v,
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Fails with a shape mismatch when the encoder cannot consume
    /// `num_features` inputs or does not produce `dim` outputs.
    pub fn check_shapes(&self, num_features: usize, dim: Option<usize>) -> Result<()> {
        if self.encoder.input_dim() != num_features {
            return Err(Error::shape(
                "checkpoint",
                format!(
                    "encoder expects {} features, data has {num_features}",
                    self.encoder.input_dim()
                ),
            ));
        }
        match dim {
            Some(d) if d != self.encoder.dim() => Err(Error::shape(
                "checkpoint",
                format!("checkpoint has D = {}, requested D = {d}", self.encoder.dim()),
            )),
            _ => Ok(()),
        }
    }
}
