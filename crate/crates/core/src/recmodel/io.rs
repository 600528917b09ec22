//! Table files are flat row-major FP32, little-endian, no header.
//! Model-spec files are TOML documents with the `ModelSpec` keys:
//!
//! ```toml
//! name = "rmc3-mini"
//! dense_dim = 13
//! bottom_mlp = [64, 16]
//! top_mlp = [64, 1]
//! interaction = "concatenation"   # optional
//!
//! [[tables]]
//! rows = 20000
//! ev_dim = 16
//! ```

use std::fs;
use std::path::Path;

use super::{EmbeddingTable, ModelSpec, TableSpec};
use crate::error::{Error, Result};

pub fn write_table_file(path: &Path, table: &EmbeddingTable) -> Result<()> {
    let mut bytes = Vec::with_capacity(table.values().len() * 4);
    for v in table.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_table_file(path: &Path, spec: TableSpec) -> Result<EmbeddingTable> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = spec.rows * spec.ev_bytes();
    if bytes.len() != expected {
        return Err(Error::shape(format!("table file {} bytes", path.display()), expected, bytes.len()));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    EmbeddingTable::new(spec, values)
}

pub fn load_model_spec(path: &Path) -> Result<ModelSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn save_model_spec(path: &Path, spec: &ModelSpec) -> Result<()> {
    let text = toml::to_string(spec).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
