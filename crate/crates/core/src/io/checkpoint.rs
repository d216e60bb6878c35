//! Versioned, hashed model checkpoints: a JSON header describing the model
//! plus a little-endian `f64` blob holding every floating-point parameter,
//! so a save/load cycle is bit exact. Layout in `docs/formats.md`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::train::{Mode, Standardization, TrainConfig};
use crate::unary::{Architecture, InputNorm, UnaryModel};

pub const MAGIC: &[u8; 8] = b"CRFDCKPT";
pub const FORMAT_VERSION: u32 = 1;
/// magic + version + total length + header length
const PREFIX_LEN: usize = 8 + 4 + 8 + 8;
const HASH_LEN: usize = 32;
/// input norm (mean, std) + standardization (mean, std)
const TRAILING_SCALARS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub mode: Mode,
    pub architecture: Architecture,
    pub params: Vec<f64>,
    pub input_norm: InputNorm,
    /// One weight per similarity channel; zero for the plain unary model.
    pub beta: Vec<f64>,
    pub standardization: Standardization,
    /// Training configuration the checkpoint was produced with.
    pub config: TrainConfig,
    pub seed: u64,
    /// Epoch whose parameters were kept; `None` for the initialisation.
    pub selected_epoch: Option<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    mode: Mode,
    architecture: Architecture,
    param_count: usize,
    beta_count: usize,
    config: TrainConfig,
    seed: u64,
    selected_epoch: Option<usize>,
}

impl Checkpoint {
    pub fn model(&self) -> Result<UnaryModel> {
        UnaryModel::from_parts(self.architecture.clone(), self.params.clone(), self.input_norm)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let header = Header {
            mode: self.mode,
            architecture: self.architecture.clone(),
            param_count: self.params.len(),
            beta_count: self.beta.len(),
            config: self.config.clone(),
            seed: self.seed,
            selected_epoch: self.selected_epoch,
        };
        let json = serde_json::to_vec(&header)?;
        let floats = self.params.len() + self.beta.len() + TRAILING_SCALARS;
        let total = PREFIX_LEN + json.len() + 8 * floats + HASH_LEN;

        let mut out = Vec::with_capacity(total);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(total as u64).to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let scalars = [
            self.input_norm.mean,
            self.input_norm.std,
            self.standardization.mean,
            self.standardization.std,
        ];
        for v in self.params.iter().chain(&self.beta).chain(&scalars) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        debug_assert_eq!(out.len(), total);
        Ok(out)
    }

    /// Checks run in order: magic, length (truncation), content hash,
    /// format version, then header/blob consistency.
    pub fn decode(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
        let bad = |message: String| Error::Format {
            kind: "checkpoint",
            path: path.to_path_buf(),
            message,
        };
        if bytes.len() < MAGIC.len() {
            return Err(Error::Truncated {
                expected: PREFIX_LEN + HASH_LEN,
                got: bytes.len(),
            });
        }
        if &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint (bad magic)".into()));
        }
        if bytes.len() < PREFIX_LEN + HASH_LEN {
            return Err(Error::Truncated {
                expected: PREFIX_LEN + HASH_LEN,
                got: bytes.len(),
            });
        }
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
        let total = usize::try_from(u64_at(12)).map_err(|_| bad("declared length overflows".into()))?;
        if bytes.len() < total {
            return Err(Error::Truncated {
                expected: total,
                got: bytes.len(),
            });
        }
        if bytes.len() > total || total < PREFIX_LEN + HASH_LEN {
            return Err(bad(format!("declared length {total} does not match file size {}", bytes.len())));
        }
        let body = &bytes[..total - HASH_LEN];
        if Sha256::digest(body).as_slice() != &bytes[total - HASH_LEN..] {
            return Err(Error::HashMismatch);
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                expected: FORMAT_VERSION,
            });
        }

        let header_len = usize::try_from(u64_at(20)).map_err(|_| bad("header length overflows".into()))?;
        let blob_start = PREFIX_LEN
            .checked_add(header_len)
            .filter(|&e| e <= body.len())
            .ok_or_else(|| bad(format!("header length {header_len} exceeds file")))?;
        let header: Header = serde_json::from_slice(&body[PREFIX_LEN..blob_start])
            .map_err(|e| bad(format!("header: {e}")))?;
        let blob = &body[blob_start..];
        let floats = header.param_count + header.beta_count + TRAILING_SCALARS;
        if blob.len() != 8 * floats {
            return Err(bad(format!("expected {} blob bytes, found {}", 8 * floats, blob.len())));
        }
        if header.param_count != header.architecture.param_count() {
            return Err(bad(format!(
                "architecture needs {} parameters, blob holds {}",
                header.architecture.param_count(),
                header.param_count
            )));
        }
        let values: Vec<f64> = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let (params, rest) = values.split_at(header.param_count);
        let (beta, s) = rest.split_at(header.beta_count);
        Ok(Checkpoint {
            mode: header.mode,
            architecture: header.architecture,
            params: params.to_vec(),
            input_norm: InputNorm { mean: s[0], std: s[1] },
            beta: beta.to_vec(),
            standardization: Standardization { mean: s[2], std: s[3] },
            config: header.config,
            seed: header.seed,
            selected_epoch: header.selected_epoch,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::decode(&bytes, path)
    }
}

/// Rewrite the version field and re-seal the hash, e.g. to build fixtures
/// for older or newer formats.
pub fn reseal_with_version(bytes: &[u8], version: u32) -> Vec<u8> {
    let mut out = bytes[..bytes.len() - HASH_LEN].to_vec();
    out[8..12].copy_from_slice(&version.to_le_bytes());
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}
