//! A field checkpoint directory: `field.json` (architecture),
//! `scale.json` (coordinate normalization) and the parameter payload.

use std::fs;
use std::path::Path;

use crate::autodiff::{load_params, save_params, ParamStore};
use crate::dataio::SceneScale;
use crate::error::{Error, Result};
use crate::field::config::FieldConfig;
use crate::field::network::Field;

pub const FIELD_FILE: &str = "field.json";
pub const SCALE_FILE: &str = "scale.json";

pub fn save_checkpoint(dir: &Path, cfg: &FieldConfig, store: &ParamStore, scale: &SceneScale) -> Result<()> {
    save_params(store, dir)?;
    fs::write(dir.join(FIELD_FILE), serde_json::to_string_pretty(cfg).expect("config serializes"))?;
    fs::write(dir.join(SCALE_FILE), serde_json::to_string_pretty(scale).expect("scale serializes"))?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => e.into(),
    })?;
    serde_json::from_slice(&bytes).map_err(|source| Error::MalformedJson { path: path.to_path_buf(), source })
}

pub fn load_checkpoint(dir: &Path) -> Result<(Field, ParamStore, SceneScale)> {
    let cfg: FieldConfig = read_json(&dir.join(FIELD_FILE))?;
    let scale: SceneScale = read_json(&dir.join(SCALE_FILE))?;
    let field = Field::new(cfg)?;
    let store = load_params(dir)?;
    let expected = field.init_params(0)?;
    for b in expected.blocks() {
        let got = store.get(&b.name)?;
        if got.shape != b.shape {
            return Err(Error::Shape(format!("block {} has shape {:?}, expected {:?}", b.name, got.shape, b.shape)));
        }
    }
    if store.blocks().len() != expected.blocks().len() {
        return Err(Error::Shape("checkpoint holds blocks the field does not use".into()));
    }
    Ok((field, store, scale))
}
