//! On-disk formats for model checkpoints and beta tensors. Arrays are raw
//! little-endian `f64`, row-major, described by a JSON manifest.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{read_checksummed, sha256_hex, to_json_bytes, write_checksummed, TimeSlicedCorpus};
use crate::error::{Error, Result};
use crate::model::{BetaTensor, ModelParams};
use crate::numkit::Tensor;
use crate::train::TrainConfig;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
pub const BETA_FORMAT_VERSION: u32 = 1;

pub fn f64s_to_le_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn f64s_from_le_bytes(bytes: &[u8]) -> Result<Vec<f64>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(Error::Invalid(format!("raw array of {} bytes is not a multiple of 8", bytes.len())));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub epoch: usize,
    pub seed: u64,
    pub config: TrainConfig,
    pub slices: Vec<i32>,
    pub vocab_hash: String,
    pub groups: Vec<GroupEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub config: TrainConfig,
    pub epoch: usize,
    pub slices: Vec<i32>,
    pub vocab_hash: String,
}

impl Checkpoint {
    /// Errors unless the checkpoint was trained on a dataset with the same
    /// vocabulary and slices as `corpus`.
    pub fn check_compatible(&self, corpus: &TimeSlicedCorpus) -> Result<()> {
        let h = &self.config.hyper;
        if h.vocab_size != corpus.vocab_size() {
            return Err(Error::Invalid(format!(
                "vocabulary size mismatch: checkpoint V={}, dataset V={}",
                h.vocab_size,
                corpus.vocab_size()
            )));
        }
        if h.num_slices != corpus.num_slices() || self.slices != corpus.slices {
            return Err(Error::Invalid(format!(
                "time slice mismatch: checkpoint T={}, dataset T={}",
                h.num_slices,
                corpus.num_slices()
            )));
        }
        if self.vocab_hash != corpus.vocabulary.hash() {
            return Err(Error::Invalid("vocabulary mismatch: checkpoint and dataset terms differ".into()));
        }
        Ok(())
    }
}

pub fn save_checkpoint(dir: &Path, ckpt: &Checkpoint) -> Result<()> {
    ckpt.params.check_finite()?;
    let mut groups = Vec::new();
    let mut files = Vec::new();
    for (name, t) in ckpt.params.groups() {
        let file = format!("{name}.f64");
        groups.push(GroupEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            file: file.clone(),
        });
        files.push((file, f64s_to_le_bytes(t.data())));
    }
    let manifest = CheckpointManifest {
        format_version: CHECKPOINT_FORMAT_VERSION,
        epoch: ckpt.epoch,
        seed: ckpt.config.seed,
        config: ckpt.config,
        slices: ckpt.slices.clone(),
        vocab_hash: ckpt.vocab_hash.clone(),
        groups,
    };
    files.insert(0, ("manifest.json".to_string(), to_json_bytes(&manifest)));
    write_checksummed(dir, &files)
}

pub fn load_checkpoint_manifest(dir: &Path) -> Result<CheckpointManifest> {
    let p = dir.join("manifest.json");
    let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::json(&p, e))
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let mut files = read_checksummed(dir)?;
    let mp = dir.join("manifest.json");
    let bytes = files
        .remove("manifest.json")
        .ok_or_else(|| Error::Invalid("manifest.json missing from checksums.txt".into()))?;
    let m: CheckpointManifest = serde_json::from_slice(&bytes).map_err(|e| Error::json(&mp, e))?;
    if m.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::Version {
            found: m.format_version,
            expected: CHECKPOINT_FORMAT_VERSION,
        });
    }
    let mut tensors = Vec::with_capacity(m.groups.len());
    for g in &m.groups {
        let raw = files
            .remove(&g.file)
            .ok_or_else(|| Error::Invalid(format!("{} missing from checksums.txt", g.file)))?;
        tensors.push((g.name.clone(), Tensor::from_vec(&g.shape, f64s_from_le_bytes(&raw)?)?));
    }
    Ok(Checkpoint {
        params: ModelParams::from_groups(&m.config.hyper, tensors)?,
        config: m.config,
        epoch: m.epoch,
        slices: m.slices,
        vocab_hash: m.vocab_hash,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaManifest {
    pub format_version: u32,
    /// `[T, K, V]`
    pub shape: [usize; 3],
    pub slices: Vec<i32>,
    pub vocab_hash: String,
    /// SHA-256 of the raw array file.
    pub sha256: String,
}

/// Writes `beta.f64` and `beta.json` into `dir`.
pub fn save_beta(dir: &Path, beta: &BetaTensor, slices: &[i32], vocab_hash: &str) -> Result<()> {
    if slices.len() != beta.num_slices() {
        return Err(Error::Shape(format!("{} slice years for {} slices", slices.len(), beta.num_slices())));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let raw = f64s_to_le_bytes(beta.values());
    let manifest = BetaManifest {
        format_version: BETA_FORMAT_VERSION,
        shape: beta.shape(),
        slices: slices.to_vec(),
        vocab_hash: vocab_hash.to_string(),
        sha256: sha256_hex(&raw),
    };
    let p = dir.join("beta.f64");
    fs::write(&p, raw).map_err(|e| Error::io(&p, e))?;
    let p = dir.join("beta.json");
    fs::write(&p, to_json_bytes(&manifest)).map_err(|e| Error::io(&p, e))
}

/// Reads a beta tensor from its raw file; the manifest is the sibling
/// `beta.json` (or `<stem>.json`).
pub fn load_beta(path: &Path) -> Result<(BetaTensor, BetaManifest)> {
    let mp = path.with_extension("json");
    let mbytes = fs::read(&mp).map_err(|e| Error::io(&mp, e))?;
    let m: BetaManifest = serde_json::from_slice(&mbytes).map_err(|e| Error::json(&mp, e))?;
    if m.format_version != BETA_FORMAT_VERSION {
        return Err(Error::Version {
            found: m.format_version,
            expected: BETA_FORMAT_VERSION,
        });
    }
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if sha256_hex(&raw) != m.sha256 {
        return Err(Error::Checksum(path.display().to_string()));
    }
    let [t, k, v] = m.shape;
    if m.slices.len() != t {
        return Err(Error::Shape(format!("beta manifest lists {} years for {t} slices", m.slices.len())));
    }
    let beta = BetaTensor::new(t, k, v, f64s_from_le_bytes(&raw)?)?;
    Ok((beta, m))
}
