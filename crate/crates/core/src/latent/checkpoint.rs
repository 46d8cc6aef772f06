//! Binary checkpoint: magic, format version, a JSON header with the
//! architecture and training configuration, then every parameter as
//! little-endian `f64` in network order (enc_x, dec_x, enc_q, dec_q,
//! disc_x, disc_q).

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::mlp::Mlp;
use super::network::{Architecture, NetId, NetworkSet};
use super::train::TrainConfig;
use crate::error::{Error, Result};
use crate::robot::{RobotModel, FEATURE_DIM};

const MAGIC: &[u8; 8] = b"RTLATENT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    arch: Architecture,
    config: TrainConfig,
    sizes: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub nets: NetworkSet,
    pub config: TrainConfig,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            arch: self.nets.arch.clone(),
            config: self.config.clone(),
            sizes: NetId::ALL.iter().map(|&id| self.nets.get(id).sizes()).collect(),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for id in NetId::ALL {
            for p in self.nets.get(id).params() {
                out.extend_from_slice(&p.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(20..20 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header =
            serde_json::from_slice(body).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if header.sizes.len() != NetId::ALL.len() {
            return Err(bad("header lists the wrong number of networks"));
        }
        let mut cursor = &bytes[20 + hlen..];
        let mut nets: Vec<Mlp> = Vec::with_capacity(6);
        for sizes in &header.sizes {
            if sizes.len() < 2 {
                return Err(bad("network with fewer than two layers"));
            }
            let mut m = Mlp::zeros(sizes);
            for p in m.params_mut() {
                let (head, rest) = cursor
                    .split_first_chunk::<8>()
                    .ok_or_else(|| bad("truncated parameters"))?;
                *p = f64::from_le_bytes(*head);
                cursor = rest;
            }
            nets.push(m);
        }
        if !cursor.is_empty() {
            return Err(bad("trailing bytes after parameters"));
        }
        let mut it = nets.into_iter();
        let mut next = || it.next().expect("six networks");
        let nets = NetworkSet {
            arch: header.arch,
            enc_x: next(),
            dec_x: next(),
            enc_q: next(),
            dec_q: next(),
            disc_x: next(),
            disc_q: next(),
        };
        nets.validate()?;
        Ok(Checkpoint {
            nets,
            config: header.config,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Loads and checks the dimensions against `model`.
    pub fn load_for(path: &Path, model: &RobotModel) -> Result<Self> {
        let ck = Self::load(path)?;
        ck.check_model(model)?;
        Ok(ck)
    }

    pub fn check_model(&self, model: &RobotModel) -> Result<()> {
        let a = &self.nets.arch;
        if a.q_dim != model.dof() || a.x_dim != FEATURE_DIM {
            return Err(Error::Checkpoint(format!(
                "checkpoint expects {}-dim skeletons and {} joints; model has {} joints",
                a.x_dim,
                a.q_dim,
                model.dof()
            )));
        }
        Ok(())
    }

    /// Content hash identifying these parameters.
    pub fn id(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}
