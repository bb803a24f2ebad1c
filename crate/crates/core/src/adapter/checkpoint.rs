//! Adapter checkpoints as a single JSON document:
//!
//! ```json
//! {"schema_version": 1, "d": 4, "k": 4, "rank": 1, "alpha": 2.0,
//!  "B": [... d*rank values, row-major ...], "A": [... rank*k values ...]}
//! ```
//!
//! Floats are written in shortest round-trip form, so save/load is bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::fsutil::write_atomic;
use crate::linalg::DenseMatrix;

use super::AdapterPair;

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    schema_version: u32,
    d: usize,
    k: usize,
    rank: usize,
    alpha: f64,
    #[serde(rename = "B")]
    b: Vec<f64>,
    #[serde(rename = "A")]
    a: Vec<f64>,
}

pub fn to_json(adapter: &AdapterPair) -> String {
    let ckpt = Checkpoint {
        schema_version: CHECKPOINT_SCHEMA_VERSION,
        d: adapter.d(),
        k: adapter.k(),
        rank: adapter.rank(),
        alpha: adapter.alpha(),
        b: adapter.b().as_slice().to_vec(),
        a: adapter.a().as_slice().to_vec(),
    };
    let mut out = serde_json::to_string(&ckpt).expect("checkpoint serializes");
    out.push('\n');
    out
}

pub fn from_json(text: &str, source: &str) -> Result<AdapterPair> {
    let ckpt: Checkpoint = serde_json::from_str(text).map_err(|e| {
        LabError::parse(
            format!("{source} line {} column {}", e.line(), e.column()),
            e.to_string(),
        )
    })?;
    let field = |name: &str, msg: String| LabError::parse(format!("{source} field `{name}`"), msg);
    if ckpt.schema_version != CHECKPOINT_SCHEMA_VERSION {
        return Err(field(
            "schema_version",
            format!("unsupported version {} (expected {CHECKPOINT_SCHEMA_VERSION})", ckpt.schema_version),
        ));
    }
    if ckpt.rank == 0 || ckpt.rank > ckpt.d.min(ckpt.k) {
        return Err(field(
            "rank",
            format!("rank {} incompatible with d = {}, k = {}", ckpt.rank, ckpt.d, ckpt.k),
        ));
    }
    if ckpt.b.len() != ckpt.d * ckpt.rank {
        return Err(field(
            "B",
            format!("expected d*rank = {} values, found {}", ckpt.d * ckpt.rank, ckpt.b.len()),
        ));
    }
    if ckpt.a.len() != ckpt.rank * ckpt.k {
        return Err(field(
            "A",
            format!("expected rank*k = {} values, found {}", ckpt.rank * ckpt.k, ckpt.a.len()),
        ));
    }
    let b = DenseMatrix::new(ckpt.d, ckpt.rank, ckpt.b).map_err(|e| field("B", e.to_string()))?;
    let a = DenseMatrix::new(ckpt.rank, ckpt.k, ckpt.a).map_err(|e| field("A", e.to_string()))?;
    AdapterPair::new(b, a, ckpt.alpha).map_err(|e| field("alpha", e.to_string()))
}

pub fn save_adapter(adapter: &AdapterPair, path: &Path) -> Result<()> {
    write_atomic(path, to_json(adapter).as_bytes())
}

pub fn load_adapter(path: &Path) -> Result<AdapterPair> {
    let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    from_json(&text, &path.display().to_string())
}
