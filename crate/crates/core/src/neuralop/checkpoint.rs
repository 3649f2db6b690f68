//! Binary checkpoints.
//!
//! Layout: magic `DDON`, format version (u32 LE), header length (u64 LE),
//! JSON header (architecture and metadata), then every parameter as an f64
//! LE: for each subnetwork (branches in order, then trunk) and each layer,
//! the row-major `fan_in x fan_out` weight matrix followed by the bias.

use super::{Architecture, Mlp, OperatorNet, TrainConfig};
use crate::error::{Error, Result};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"DDON";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub train: Option<TrainConfig>,
    pub dataset_fingerprint: Option<String>,
    /// Free-form entries such as sensor layouts or subdomain labels.
    pub extra: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: OperatorNet,
    pub meta: CheckpointMeta,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    architecture: Architecture,
    meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&Header {
            architecture: self.net.architecture(),
            meta: self.meta.clone(),
        })?;
        let mut out = Vec::with_capacity(16 + header.len() + 8 * self.net.n_params());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for m in self.net.mlps() {
            for (w, b) in m.weights.iter().zip(&m.biases) {
                for v in w.iter().chain(b.iter()) {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format {
                offset: 0,
                detail: "missing DDON magic".into(),
            });
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let len = u64::from_le_bytes(r.take(8)?.try_into().unwrap()) as usize;
        let at = r.pos;
        let header: Header = serde_json::from_slice(r.take(len)?).map_err(|e| Error::Format {
            offset: at,
            detail: format!("bad header: {e}"),
        })?;
        header.architecture.validate()?;
        let mut read_mlp = |sizes: &[usize]| -> Result<Mlp> {
            let mut m = Mlp::zeros(sizes)?;
            for l in 0..sizes.len() - 1 {
                let (fi, fo) = (sizes[l], sizes[l + 1]);
                let w = r.f64s(fi * fo)?;
                m.weights[l] = Array2::from_shape_vec((fi, fo), w).unwrap();
                m.biases[l] = Array1::from(r.f64s(fo)?);
            }
            Ok(m)
        };
        let arch = &header.architecture;
        let branches = arch
            .branches
            .iter()
            .map(|s| read_mlp(s))
            .collect::<Result<Vec<_>>>()?;
        let trunk = read_mlp(&arch.trunk)?;
        if r.pos != bytes.len() {
            return Err(Error::Format {
                offset: r.pos,
                detail: format!("{} trailing bytes", bytes.len() - r.pos),
            });
        }
        Ok(Checkpoint {
            net: OperatorNet::from_parts(branches, trunk, arch.fusion)?,
            meta: header.meta,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.bytes.len(),
                detail: format!("truncated: needed {n} bytes at offset {}", self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(8 * n)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, ckpt.to_bytes()?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&std::fs::read(path)?)
}
