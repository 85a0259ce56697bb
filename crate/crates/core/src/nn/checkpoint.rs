//! Model checkpoints: a JSON header followed by raw little-endian f64
//! parameter blocks in declared order (per hidden layer: gamma, beta,
//! running mean, running variance, W row-major, b; then head W, b).

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MLPConfig, MLPModel, Mode};
use crate::dataset::NormStats;
use crate::error::{Error, Result};

const CKPT_MAGIC: &str = "FDIACKPT";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: MLPConfig,
    pub step: u64,
    /// Free-form training metrics (validation accuracy, losses, ...).
    pub metrics: serde_json::Map<String, serde_json::Value>,
    /// Input normalization map the model was trained with.
    pub norm_stats: Option<NormStats>,
}

fn declared_blocks(model: &MLPModel) -> Vec<f64> {
    let mut out = Vec::new();
    for layer in &model.layers {
        out.extend(layer.bn.gamma.iter());
        out.extend(layer.bn.beta.iter());
        out.extend(layer.bn.run_mean.iter());
        out.extend(layer.bn.run_var.iter());
        out.extend(layer.affine.w.iter());
        out.extend(layer.affine.b.iter());
    }
    out.extend(model.head.w.iter());
    out.extend(model.head.b.iter());
    out
}

fn load_blocks(model: &mut MLPModel, flat: &[f64]) -> Result<()> {
    let expected: usize = model
        .layers
        .iter()
        .map(|l| 4 * l.bn.gamma.len() + l.affine.w.len() + l.affine.b.len())
        .sum::<usize>()
        + model.head.w.len()
        + model.head.b.len();
    if flat.len() != expected {
        return Err(Error::Corrupt(format!(
            "checkpoint holds {} parameters, model needs {expected}",
            flat.len()
        )));
    }
    let mut it = flat.iter().copied();
    for layer in &mut model.layers {
        for arr in [
            &mut layer.bn.gamma,
            &mut layer.bn.beta,
            &mut layer.bn.run_mean,
            &mut layer.bn.run_var,
        ] {
            arr.iter_mut().for_each(|v| *v = it.next().unwrap());
        }
        layer.affine.w.iter_mut().for_each(|v| *v = it.next().unwrap());
        layer.affine.b.iter_mut().for_each(|v| *v = it.next().unwrap());
    }
    model.head.w.iter_mut().for_each(|v| *v = it.next().unwrap());
    model.head.b.iter_mut().for_each(|v| *v = it.next().unwrap());
    Ok(())
}

pub fn save_checkpoint(model: &MLPModel, meta: &Checkpoint, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{CKPT_MAGIC}")?;
    serde_json::to_writer(&mut w, meta).map_err(|e| Error::Corrupt(e.to_string()))?;
    w.write_all(b"\n")?;
    for v in declared_blocks(model) {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(MLPModel, Checkpoint)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let magic_end = CKPT_MAGIC.len() + 1;
    if bytes.len() < magic_end || &bytes[..CKPT_MAGIC.len()] != CKPT_MAGIC.as_bytes() {
        return Err(Error::Corrupt("missing checkpoint magic".into()));
    }
    let header_end = bytes[magic_end..]
        .iter()
        .position(|&b| b == b'\n')
        .map(|p| magic_end + p)
        .ok_or_else(|| Error::Corrupt("missing checkpoint header".into()))?;
    let meta: Checkpoint = serde_json::from_slice(&bytes[magic_end..header_end])
        .map_err(|e| Error::Corrupt(format!("checkpoint header: {e}")))?;

    let body = &bytes[header_end + 1..];
    if body.len() % 8 != 0 {
        return Err(Error::Corrupt("checkpoint body is not f64-aligned".into()));
    }
    let flat: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();

    let mut model = MLPModel::init(meta.config, 0)?;
    load_blocks(&mut model, &flat)?;
    model.set_mode(Mode::Eval);
    Ok((model, meta))
}
