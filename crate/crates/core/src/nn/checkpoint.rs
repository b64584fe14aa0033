//! Checkpoint container: a JSON manifest plus a little-endian f64 blob.
//!
//! The blob lives next to the manifest with the `.bin` extension and holds
//! every buffer back to back in manifest order. Gradients and optimizer
//! moments are not stored.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::store::{BufferKind, BufferMeta, ParamStore};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "sensorclf-checkpoint/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BufferEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: BufferKind,
    pub trainable: bool,
    /// Offset into the blob, in f64 elements.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub architecture: serde_json::Value,
    pub fingerprint: String,
    pub seed: u64,
    pub step: u64,
    pub buffers: Vec<BufferEntry>,
}

/// FNV-1a over the bytes.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Identifies an architecture: its serialized config plus buffer names and
/// shapes.
pub fn fingerprint(architecture: &serde_json::Value, store: &ParamStore) -> String {
    let mut text = architecture.to_string();
    for m in store.metas() {
        text.push_str(&format!("|{}:{:?}", m.name, m.shape));
    }
    format!("{:016x}", fnv1a(text.as_bytes()))
}

pub fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

pub fn to_blob(store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::new();
    for v in store.values_raw() {
        for x in v {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn manifest_for(store: &ParamStore, architecture: serde_json::Value, seed: u64, step: u64) -> CheckpointManifest {
    let mut offset = 0;
    let buffers = store
        .metas()
        .iter()
        .map(|m| {
            let e = BufferEntry {
                name: m.name.clone(),
                shape: m.shape.clone(),
                kind: m.kind,
                trainable: m.trainable,
                offset,
            };
            offset += m.len();
            e
        })
        .collect();
    CheckpointManifest {
        format: CHECKPOINT_FORMAT.to_string(),
        fingerprint: fingerprint(&architecture, store),
        architecture,
        seed,
        step,
        buffers,
    }
}

pub fn save_checkpoint(
    path: &Path,
    store: &ParamStore,
    architecture: serde_json::Value,
    seed: u64,
    step: u64,
) -> Result<CheckpointManifest> {
    let manifest = manifest_for(store, architecture, seed, step);
    std::fs::write(path, serde_json::to_vec_pretty(&manifest)?)?;
    std::fs::write(blob_path(path), to_blob(store))?;
    Ok(manifest)
}

pub fn store_from_parts(manifest: &CheckpointManifest, blob: &[u8]) -> Result<ParamStore> {
    if manifest.format != CHECKPOINT_FORMAT {
        return Err(Error::Checkpoint(format!("unknown format `{}`", manifest.format)));
    }
    let total: usize = manifest.buffers.iter().map(|b| b.shape.iter().product::<usize>()).sum();
    if blob.len() != total * 8 {
        return Err(Error::Checkpoint(format!(
            "blob holds {} bytes, manifest describes {}",
            blob.len(),
            total * 8
        )));
    }
    let mut metas = Vec::new();
    let mut values = Vec::new();
    for b in &manifest.buffers {
        let len: usize = b.shape.iter().product();
        let bytes = &blob[b.offset * 8..(b.offset + len) * 8];
        values.push(
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect(),
        );
        metas.push(BufferMeta {
            name: b.name.clone(),
            shape: b.shape.clone(),
            kind: b.kind,
            trainable: b.trainable,
        });
    }
    Ok(ParamStore::from_parts(metas, values))
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointManifest, ParamStore)> {
    let manifest: CheckpointManifest = serde_json::from_slice(&std::fs::read(path)?)?;
    let blob = std::fs::read(blob_path(path))?;
    let store = store_from_parts(&manifest, &blob)?;
    Ok((manifest, store))
}
