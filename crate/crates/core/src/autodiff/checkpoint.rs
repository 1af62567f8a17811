//! Parameter checkpoints: `meta.json` block registry plus little-endian
//! `params.f64`; Adam moments go to `adam.f64` so training can resume.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::params::ParamStore;
use crate::error::{Error, Result};

pub const PARAMS_META: &str = "meta.json";
pub const PARAMS_FILE: &str = "params.f64";
pub const MOMENTS_FILE: &str = "adam.f64";

#[derive(Debug, Serialize, Deserialize)]
struct BlockEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Registry {
    step: u64,
    total: usize,
    blocks: Vec<BlockEntry>,
}

fn to_bytes<'a>(values: impl Iterator<Item = &'a f64>) -> Vec<u8> {
    values.flat_map(|v| v.to_le_bytes()).collect()
}

fn from_bytes(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect()
}

pub fn save_params(store: &ParamStore, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut offset = 0;
    let blocks = store
        .blocks()
        .iter()
        .map(|b| {
            let e = BlockEntry { name: b.name.clone(), shape: b.shape.clone(), offset };
            offset += b.len();
            e
        })
        .collect();
    let registry = Registry { step: store.step, total: offset, blocks };
    fs::write(dir.join(PARAMS_META), serde_json::to_string_pretty(&registry).expect("registry serializes"))?;
    fs::write(dir.join(PARAMS_FILE), to_bytes(store.blocks().iter().flat_map(|b| &b.value)))?;
    let moments = store.blocks().iter().flat_map(|b| b.m.iter().chain(&b.v));
    fs::write(dir.join(MOMENTS_FILE), to_bytes(moments))?;
    Ok(())
}

pub fn load_params(dir: &Path) -> Result<ParamStore> {
    let meta_path = dir.join(PARAMS_META);
    let text = fs::read(&meta_path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(meta_path.clone()),
        _ => e.into(),
    })?;
    let registry: Registry =
        serde_json::from_slice(&text).map_err(|source| Error::MalformedJson { path: meta_path, source })?;
    let params_path = dir.join(PARAMS_FILE);
    let bytes = fs::read(&params_path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(params_path.clone()),
        _ => e.into(),
    })?;
    if bytes.len() != registry.total * 8 {
        return Err(Error::PayloadSize { expected: registry.total * 8, found: bytes.len() });
    }
    let values = from_bytes(&bytes);
    let moments = match fs::read(dir.join(MOMENTS_FILE)) {
        Ok(m) if m.len() == registry.total * 16 => Some(from_bytes(&m)),
        Ok(m) => return Err(Error::PayloadSize { expected: registry.total * 16, found: m.len() }),
        Err(_) => None,
    };

    let mut store = ParamStore::new();
    let mut moment_off = 0;
    for e in &registry.blocks {
        let n: usize = e.shape.iter().product();
        if e.offset + n > values.len() {
            return Err(Error::Shape(format!("block {} overruns the payload", e.name)));
        }
        let id = store.register(&e.name, &e.shape, values[e.offset..e.offset + n].to_vec())?;
        if let Some(m) = &moments {
            let b = store.block_mut(id);
            b.m.copy_from_slice(&m[moment_off..moment_off + n]);
            b.v.copy_from_slice(&m[moment_off + n..moment_off + 2 * n]);
            moment_off += 2 * n;
        }
    }
    store.step = registry.step;
    Ok(store)
}
