//! Operator-learning datasets and their on-disk container.
//!
//! A dataset directory holds `manifest.json` plus one DDAT blob per array:
//! `branch_<b>.ddat` (samples x width), `trunk_<k>.ddat` (points x dim) for
//! each distinct trunk set, `trunk_index.ddat` (u64 per sample) and
//! `targets_<k>.ddat` (samples of set k x points).
//!
//! DDAT layout: magic `DDAT`, version (u32 LE), dtype tag (u8: 1 = f64,
//! 2 = u64), rank (u8), extents (u64 LE each), then row-major LE values.

use super::transform::Transform;
use crate::error::{Error, Result};
use crate::geometry::AxisBox;
use crate::neuralop::{OperatorSample, TrunkPoints};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use std::sync::Arc;

pub const DDAT_VERSION: u32 = 1;
const DDAT_MAGIC: &[u8; 4] = b"DDAT";
const TAG_F64: u8 = 1;
const TAG_U64: u8 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub generator: String,
    pub seed: u64,
    pub count: usize,
    pub branch_widths: Vec<usize>,
    pub trunk_dim: usize,
    /// Box holding the trunk points.
    pub domain: AxisBox,
    /// Generator-specific provenance (problem, grid, GP spec, ...).
    pub details: serde_json::Value,
    /// Fingerprints of the datasets this one was derived from.
    pub parents: Vec<String>,
    /// Transforms already applied to the stored targets, in order.
    pub transforms: Vec<Transform>,
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<OperatorSample>,
    pub manifest: Manifest,
}

/// Distinct trunk sets in order of first use and the set of every sample.
fn trunk_sets(samples: &[OperatorSample]) -> (Vec<TrunkPoints>, Vec<usize>) {
    let mut sets: Vec<TrunkPoints> = Vec::new();
    let mut index = Vec::with_capacity(samples.len());
    for s in samples {
        let k = match sets
            .iter()
            .position(|t| Arc::ptr_eq(t, &s.trunk) || **t == *s.trunk)
        {
            Some(k) => k,
            None => {
                sets.push(s.trunk.clone());
                sets.len() - 1
            }
        };
        index.push(k);
    }
    (sets, index)
}

/// SHA-256 over the little-endian sample content.
pub fn fingerprint(samples: &[OperatorSample]) -> String {
    let (sets, index) = trunk_sets(samples);
    let mut h = Sha256::new();
    let put_f64s = |h: &mut Sha256, v: &mut dyn Iterator<Item = f64>| {
        for x in v {
            h.update(x.to_le_bytes());
        }
    };
    h.update((sets.len() as u64).to_le_bytes());
    for t in &sets {
        h.update((t.nrows() as u64).to_le_bytes());
        h.update((t.ncols() as u64).to_le_bytes());
        put_f64s(&mut h, &mut t.iter().copied());
    }
    h.update((samples.len() as u64).to_le_bytes());
    for (s, k) in samples.iter().zip(&index) {
        h.update((*k as u64).to_le_bytes());
        h.update((s.branch_inputs.len() as u64).to_le_bytes());
        for b in &s.branch_inputs {
            h.update((b.len() as u64).to_le_bytes());
            put_f64s(&mut h, &mut b.iter().copied());
        }
        h.update((s.targets.len() as u64).to_le_bytes());
        put_f64s(&mut h, &mut s.targets.iter().copied());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl Dataset {
    /// Validates shared widths and stamps count, widths and fingerprint
    /// into the manifest.
    pub fn new(samples: Vec<OperatorSample>, mut manifest: Manifest) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Shape("dataset has no samples".into()))?;
        let widths: Vec<usize> = first.branch_inputs.iter().map(Vec::len).collect();
        let dim = first.trunk.ncols();
        for (i, s) in samples.iter().enumerate() {
            s.validate()?;
            let w: Vec<usize> = s.branch_inputs.iter().map(Vec::len).collect();
            if w != widths || s.trunk.ncols() != dim {
                return Err(Error::Shape(format!(
                    "sample {i} has branch widths {w:?} and trunk dimension {}, expected {widths:?} and {dim}",
                    s.trunk.ncols()
                )));
            }
        }
        manifest.count = samples.len();
        manifest.branch_widths = widths;
        manifest.trunk_dim = dim;
        manifest.fingerprint = fingerprint(&samples);
        Ok(Dataset { samples, manifest })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn fingerprint(&self) -> &str {
        &self.manifest.fingerprint
    }

    fn subset(&self, idx: &[usize], tag: &str) -> Result<Dataset> {
        let mut m = self.manifest.clone();
        m.parents = vec![self.manifest.fingerprint.clone()];
        m.generator = format!("{}:{tag}", self.manifest.generator);
        Dataset::new(idx.iter().map(|&i| self.samples[i].clone()).collect(), m)
    }

    /// Seeded shuffle, then consecutive parts with the given fractions of
    /// the samples; the last part takes the remainder.
    pub fn split_fractions(&self, fractions: &[f64], seed: u64) -> Result<Vec<Dataset>> {
        if fractions.is_empty()
            || fractions.iter().any(|f| !(*f > 0.0))
            || fractions.iter().sum::<f64>() > 1.0 + 1e-12
        {
            return Err(Error::Precondition(
                "split fractions must be positive and sum to at most 1".into(),
            ));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut parts = Vec::new();
        let mut start = 0;
        for (p, f) in fractions.iter().enumerate() {
            let end = if p + 1 == fractions.len()
                && (fractions.iter().sum::<f64>() - 1.0).abs() < 1e-12
            {
                self.len()
            } else {
                start + (f * self.len() as f64).round() as usize
            };
            let end = end.min(self.len());
            if end <= start {
                return Err(Error::Precondition(format!(
                    "split part {p} would be empty ({} samples)",
                    self.len()
                )));
            }
            parts.push(self.subset(&idx[start..end], &format!("part{p}"))?);
            start = end;
        }
        Ok(parts)
    }

    /// 8:2 train/test split after a seeded shuffle.
    pub fn split(&self, seed: u64) -> Result<(Dataset, Dataset)> {
        let mut p = self.split_fractions(&[0.8, 0.2], seed)?;
        let test = p.pop().unwrap();
        Ok((p.pop().unwrap(), test))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let (sets, index) = trunk_sets(&self.samples);
        std::fs::write(
            dir.join("manifest.json"),
            serde_json::to_vec_pretty(&self.manifest)?,
        )?;
        let n = self.len();
        for (b, &w) in self.manifest.branch_widths.iter().enumerate() {
            let mut v = Vec::with_capacity(n * w);
            for s in &self.samples {
                v.extend_from_slice(&s.branch_inputs[b]);
            }
            write_f64(&dir.join(format!("branch_{b}.ddat")), &[n, w], &v)?;
        }
        let idx: Vec<u64> = index.iter().map(|&k| k as u64).collect();
        write_blob(
            &dir.join("trunk_index.ddat"),
            TAG_U64,
            &[n],
            idx.iter().map(|v| v.to_le_bytes()),
        )?;
        for (k, t) in sets.iter().enumerate() {
            write_f64(
                &dir.join(format!("trunk_{k}.ddat")),
                &[t.nrows(), t.ncols()],
                &t.iter().copied().collect::<Vec<_>>(),
            )?;
            let members: Vec<&OperatorSample> = self
                .samples
                .iter()
                .zip(&index)
                .filter(|(_, &i)| i == k)
                .map(|(s, _)| s)
                .collect();
            let mut v = Vec::with_capacity(members.len() * t.nrows());
            for s in &members {
                v.extend_from_slice(&s.targets);
            }
            write_f64(
                &dir.join(format!("targets_{k}.ddat")),
                &[members.len(), t.nrows()],
                &v,
            )?;
        }
        Ok(())
    }

    /// Loads a dataset directory and checks its fingerprint.
    pub fn load(dir: &Path) -> Result<Dataset> {
        let manifest: Manifest =
            serde_json::from_slice(&std::fs::read(dir.join("manifest.json"))?)?;
        let n = manifest.count;
        let (shape, idx) = read_blob(&dir.join("trunk_index.ddat"), TAG_U64)?;
        expect_shape(&shape, &[n], "trunk_index")?;
        let index: Vec<usize> = idx.iter().map(|&b| b as usize).collect();
        let n_sets = index.iter().copied().max().map_or(0, |m| m + 1);
        let mut sets = Vec::with_capacity(n_sets);
        let mut targets = Vec::with_capacity(n_sets);
        for k in 0..n_sets {
            let (ts, tv) = read_f64(&dir.join(format!("trunk_{k}.ddat")))?;
            if ts.len() != 2 {
                return Err(Error::Format {
                    offset: 0,
                    detail: format!("trunk_{k} has rank {}", ts.len()),
                });
            }
            sets.push(Arc::new(
                Array2::from_shape_vec((ts[0], ts[1]), tv).unwrap(),
            ));
            let members = index.iter().filter(|&&i| i == k).count();
            let (gs, gv) = read_f64(&dir.join(format!("targets_{k}.ddat")))?;
            expect_shape(&gs, &[members, ts[0]], &format!("targets_{k}"))?;
            targets.push((gv, ts[0], 0usize));
        }
        let mut branches = Vec::new();
        for (b, &w) in manifest.branch_widths.iter().enumerate() {
            let (s, v) = read_f64(&dir.join(format!("branch_{b}.ddat")))?;
            expect_shape(&s, &[n, w], &format!("branch_{b}"))?;
            branches.push(v);
        }
        let mut samples = Vec::with_capacity(n);
        for (i, &k) in index.iter().enumerate() {
            let (vals, p, next) = &mut targets[k];
            let t = vals[*next * *p..(*next + 1) * *p].to_vec();
            *next += 1;
            samples.push(OperatorSample {
                branch_inputs: branches
                    .iter()
                    .zip(&manifest.branch_widths)
                    .map(|(v, &w)| v[i * w..(i + 1) * w].to_vec())
                    .collect(),
                trunk: sets[k].clone(),
                targets: t,
            });
        }
        let stored = manifest.fingerprint.clone();
        let ds = Dataset::new(samples, manifest)?;
        if ds.manifest.fingerprint != stored {
            return Err(Error::Format {
                offset: 0,
                detail: format!(
                    "fingerprint mismatch: manifest {stored}, content {}",
                    ds.manifest.fingerprint
                ),
            });
        }
        Ok(ds)
    }
}

fn expect_shape(found: &[usize], expected: &[usize], name: &str) -> Result<()> {
    if found != expected {
        return Err(Error::Format {
            offset: 0,
            detail: format!("{name} has shape {found:?}, expected {expected:?}"),
        });
    }
    Ok(())
}

fn write_blob<I: Iterator<Item = [u8; 8]>>(
    path: &Path,
    tag: u8,
    shape: &[usize],
    values: I,
) -> Result<()> {
    let total: usize = shape.iter().product();
    let mut out = Vec::with_capacity(10 + 8 * shape.len() + 8 * total);
    out.extend_from_slice(DDAT_MAGIC);
    out.extend_from_slice(&DDAT_VERSION.to_le_bytes());
    out.push(tag);
    out.push(shape.len() as u8);
    for &d in shape {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    let mut count = 0;
    for v in values {
        out.extend_from_slice(&v);
        count += 1;
    }
    debug_assert_eq!(count, total);
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_f64(path: &Path, shape: &[usize], values: &[f64]) -> Result<()> {
    if shape.iter().product::<usize>() != values.len() {
        return Err(Error::Shape(format!(
            "{} values for shape {shape:?}",
            values.len()
        )));
    }
    write_blob(path, TAG_F64, shape, values.iter().map(|v| v.to_le_bytes()))
}

pub fn read_f64(path: &Path) -> Result<(Vec<usize>, Vec<f64>)> {
    let (shape, raw) = read_blob(path, TAG_F64)?;
    Ok((shape, raw.into_iter().map(f64::from_bits).collect()))
}

fn read_blob(path: &Path, tag: u8) -> Result<(Vec<usize>, Vec<u64>)> {
    let bytes = std::fs::read(path)?;
    let bad = |offset: usize, detail: String| Error::Format { offset, detail };
    if bytes.len() < 10 || &bytes[..4] != DDAT_MAGIC {
        return Err(bad(0, format!("{} is not a DDAT blob", path.display())));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != DDAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: DDAT_VERSION,
        });
    }
    if bytes[8] != tag {
        return Err(bad(
            8,
            format!("dtype tag {} where {tag} was expected", bytes[8]),
        ));
    }
    let rank = bytes[9] as usize;
    let head = 10 + 8 * rank;
    if bytes.len() < head {
        return Err(bad(bytes.len(), "truncated extents".into()));
    }
    let shape: Vec<usize> = (0..rank)
        .map(|k| u64::from_le_bytes(bytes[10 + 8 * k..18 + 8 * k].try_into().unwrap()) as usize)
        .collect();
    let total: usize = shape.iter().product();
    if bytes.len() != head + 8 * total {
        return Err(bad(
            bytes.len(),
            format!("{} payload bytes for shape {shape:?}", bytes.len() - head),
        ));
    }
    let values = bytes[head..]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((shape, values))
}
