//! Checkpoint persistence: model parameters, and optionally optimizer
//! moments, as a versioned JSON document.
//!
//! Floating-point values are written with shortest-round-trip formatting,
//! which is lossless for f64: save → load → save reproduces the file
//! bit-for-bit, and resumed training continues from the exact saved state.
//! Spatial frequencies are stored as flat row-major arrays (3 entries per
//! neuron).

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::model::{BranchParams, ModelParams};
use crate::train::{AdamState, BranchMoments};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointJson {
    schema_version: u32,
    width_half: usize,
    activation: Activation,
    branches: Vec<BranchJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    optimizer: Option<OptimizerJson>,
}

#[derive(Serialize, Deserialize)]
struct BranchJson {
    /// Row-major ξ entries, 3 per neuron.
    spatial_freqs: Vec<f64>,
    signs: Vec<f64>,
    out_weights: Vec<f64>,
    biases: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct OptimizerJson {
    step: u64,
    m: Vec<MomentsJson>,
    v: Vec<MomentsJson>,
}

#[derive(Serialize, Deserialize)]
struct MomentsJson {
    spatial_freqs: Vec<f64>,
    out_weights: Vec<f64>,
    biases: Vec<f64>,
}

fn flatten_rows(rows: &[[f64; 3]]) -> Vec<f64> {
    rows.iter().flatten().copied().collect()
}

fn unflatten_rows(flat: &[f64], what: &str) -> Result<Vec<[f64; 3]>> {
    if flat.len() % 3 != 0 {
        return Err(Error::InvalidParams(format!(
            "{what} has length {}, not a multiple of 3",
            flat.len()
        )));
    }
    Ok(flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
}

fn branch_to_json(br: &BranchParams) -> BranchJson {
    BranchJson {
        spatial_freqs: flatten_rows(&br.spatial_freqs),
        signs: br.signs.clone(),
        out_weights: br.out_weights.clone(),
        biases: br.biases.clone(),
    }
}

fn moments_to_json(m: &BranchMoments) -> MomentsJson {
    MomentsJson {
        spatial_freqs: flatten_rows(&m.spatial_freqs),
        out_weights: m.out_weights.clone(),
        biases: m.biases.clone(),
    }
}

fn moments_from_json(j: &MomentsJson, which: &str) -> Result<BranchMoments> {
    Ok(BranchMoments {
        spatial_freqs: unflatten_rows(&j.spatial_freqs, which)?,
        out_weights: j.out_weights.clone(),
        biases: j.biases.clone(),
    })
}

/// Writes `params` (and optimizer state, when resuming matters) to `path`.
pub fn save_checkpoint(
    path: &Path,
    params: &ModelParams,
    optimizer: Option<&AdamState>,
) -> Result<()> {
    params.validate()?;
    let doc = CheckpointJson {
        schema_version: SCHEMA_VERSION,
        width_half: params.width_half,
        activation: params.activation,
        branches: params.branches.iter().map(branch_to_json).collect(),
        optimizer: optimizer.map(|s| OptimizerJson {
            step: s.step,
            m: s.m.iter().map(moments_to_json).collect(),
            v: s.v.iter().map(moments_to_json).collect(),
        }),
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &doc)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint back; the returned parameters are fully validated.
pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, Option<AdamState>)> {
    let reader = BufReader::new(File::open(path)?);
    let doc: CheckpointJson =
        serde_json::from_reader(reader).map_err(|e| Error::MalformedFile {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
    if doc.schema_version != SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            found: doc.schema_version,
            expected: SCHEMA_VERSION,
        });
    }
    if doc.branches.len() != 2 {
        return Err(Error::MalformedFile {
            path: path.display().to_string(),
            reason: format!("expected 2 branches, found {}", doc.branches.len()),
        });
    }
    let mut branches = Vec::with_capacity(2);
    for (i, bj) in doc.branches.iter().enumerate() {
        branches.push(BranchParams {
            spatial_freqs: unflatten_rows(&bj.spatial_freqs, &format!("branch {i} frequencies"))?,
            signs: bj.signs.clone(),
            out_weights: bj.out_weights.clone(),
            biases: bj.biases.clone(),
        });
    }
    let params = ModelParams {
        width_half: doc.width_half,
        activation: doc.activation,
        branches: branches
            .try_into()
            .expect("length checked above"),
    };
    params.validate()?;

    let optimizer = match doc.optimizer {
        None => None,
        Some(oj) => {
            if oj.m.len() != 2 || oj.v.len() != 2 {
                return Err(Error::MalformedFile {
                    path: path.display().to_string(),
                    reason: "optimizer moments must cover exactly 2 branches".into(),
                });
            }
            let state = AdamState {
                step: oj.step,
                m: [
                    moments_from_json(&oj.m[0], "optimizer m, branch 0")?,
                    moments_from_json(&oj.m[1], "optimizer m, branch 1")?,
                ],
                v: [
                    moments_from_json(&oj.v[0], "optimizer v, branch 0")?,
                    moments_from_json(&oj.v[1], "optimizer v, branch 1")?,
                ],
            };
            state.check_shapes(&params)?;
            Some(state)
        }
    };
    Ok((params, optimizer))
}
