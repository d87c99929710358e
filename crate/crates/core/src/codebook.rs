//! Versioned JSON serialization of a fitted [`Quantizer`].
//!
//! Floats are written in shortest round-trip form, so reading a file back
//! reproduces every code vector bit for bit.

use std::io::{Read, Write};
use std::path::Path;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::{CellId, OuterLeafPartition};
use crate::reconstruction::{Quantizer, RateSchedule};

pub const FORMAT: &str = "rectree-codebook";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct CodebookFile {
    format: String,
    version: u32,
    dim: usize,
    eta: f64,
    gamma: f64,
    beta: f64,
    depth_cap: u32,
    leaves: Vec<LeafEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LeafEntry {
    depth: u32,
    index: Vec<u64>,
    code: Vec<f64>,
}

pub fn to_json(q: &Quantizer) -> Result<String> {
    let file = CodebookFile {
        format: FORMAT.to_string(),
        version: VERSION,
        dim: q.dim(),
        eta: q.threshold(),
        gamma: q.schedule().gamma,
        beta: q.schedule().beta,
        depth_cap: q.depth_cap(),
        leaves: q
            .entries()
            .map(|(c, code)| LeafEntry {
                depth: c.depth,
                index: c.index.clone(),
                code: code.to_vec(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&file)?;
    s.push('\n');
    Ok(s)
}

pub fn from_json(text: &str) -> Result<Quantizer> {
    let file: CodebookFile = serde_json::from_str(text)?;
    if file.format != FORMAT {
        return Err(Error::Format(format!("unknown format {:?}", file.format)));
    }
    if file.version != VERSION {
        return Err(Error::Format(format!(
            "unsupported codebook version {}",
            file.version
        )));
    }
    let schedule = RateSchedule::new(file.gamma, file.beta, file.dim)?;
    let mut codebook = FxHashMap::default();
    for entry in file.leaves {
        if entry.index.len() != file.dim || entry.code.len() != file.dim {
            return Err(Error::DimensionMismatch {
                expected: file.dim,
                got: entry.index.len().max(entry.code.len()),
            });
        }
        let id = CellId::new(entry.depth, entry.index)?;
        if codebook.insert(id.clone(), entry.code).is_some() {
            return Err(Error::Format(format!("leaf {id} listed twice")));
        }
    }
    let leaves = OuterLeafPartition::from_leaves(file.dim, codebook.keys().cloned())?;
    Quantizer::from_codebook(leaves, codebook, file.eta, file.depth_cap, schedule)
}

pub fn write(q: &Quantizer, mut w: impl Write) -> Result<()> {
    w.write_all(to_json(q)?.as_bytes())?;
    Ok(())
}

pub fn read(mut r: impl Read) -> Result<Quantizer> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    from_json(&text)
}

pub fn save(q: &Quantizer, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_json(q)?)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Quantizer> {
    from_json(&std::fs::read_to_string(path)?)
}
