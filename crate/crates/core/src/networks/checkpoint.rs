//! Named-tensor files: per record `u32` name length, UTF-8 name, `u32` rank,
//! `u32` dims, then `f32` payload, all little-endian and back to back.

use std::fs;
use std::path::Path;

use pathbone_tape::{ParamStore, Tensor};

use super::bundle::ModelBundle;
use crate::config::TrainConfig;
use crate::error::{Error, Result};

pub const WEIGHTS_FILE: &str = "weights.bin";
pub const CONFIG_FILE: &str = "config.json";

pub fn encode_tensors<'a>(
    tensors: impl IntoIterator<Item = (&'a str, &'a Tensor<f32>)>,
) -> Vec<u8> {
    let mut out = Vec::new();
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_tensors(bytes: &[u8], path: &Path) -> Result<Vec<(String, Tensor<f32>)>> {
    let fail = |reason: &str| Error::Checkpoint {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    fn take<'a>(rest: &mut &'a [u8], n: usize) -> Option<&'a [u8]> {
        if rest.len() < n {
            return None;
        }
        let (head, tail) = rest.split_at(n);
        *rest = tail;
        Some(head)
    }
    let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap()) as usize;
    let mut rest = bytes;
    let mut out = Vec::new();
    while !rest.is_empty() {
        let mut next = |n: usize| take(&mut rest, n).ok_or_else(|| fail("unexpected end of file"));
        let name_len = u32_at(next(4)?);
        let name = std::str::from_utf8(next(name_len)?)
            .map_err(|_| fail("tensor name is not UTF-8"))?
            .to_string();
        let rank = u32_at(next(4)?);
        let shape: Vec<usize> = (0..rank)
            .map(|_| next(4).map(u32_at))
            .collect::<Result<_>>()?;
        let numel: usize = shape.iter().product();
        let data = next(numel * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push((name, Tensor::new(shape, data)));
    }
    Ok(out)
}

pub fn save_weights(path: &Path, params: &ParamStore<f32>) -> Result<()> {
    fs::write(path, encode_tensors(params.iter())).map_err(Error::io(path))
}

pub fn load_weights(path: &Path) -> Result<ParamStore<f32>> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    let mut store = ParamStore::new();
    for (name, t) in decode_tensors(&bytes, path)? {
        store.insert(name, t);
    }
    Ok(store)
}

/// Writes `weights.bin` and `config.json` into `dir`, creating it if needed.
pub fn save_model(dir: &Path, model: &ModelBundle<f32>, config: &TrainConfig) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    save_weights(&dir.join(WEIGHTS_FILE), model.params())?;
    let cfg_path = dir.join(CONFIG_FILE);
    fs::write(&cfg_path, config.to_json() + "\n").map_err(Error::io(&cfg_path))
}

pub fn load_config(dir: &Path) -> Result<TrainConfig> {
    let path = dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&path).map_err(Error::io(&path))?;
    let cfg: TrainConfig = serde_json::from_str(&text).map_err(Error::json(&path))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads a checkpoint directory back into a model and its training config.
pub fn load_model(dir: &Path) -> Result<(ModelBundle<f32>, TrainConfig)> {
    let cfg = load_config(dir)?;
    let weights = dir.join(WEIGHTS_FILE);
    let params = load_weights(&weights)?;
    let model =
        ModelBundle::from_params(cfg.arch.clone(), params).map_err(|e| Error::Checkpoint {
            path: weights,
            reason: e.to_string(),
        })?;
    Ok((model, cfg))
}
