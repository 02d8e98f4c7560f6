//! Binary checkpoint format: magic "DFGN", version, a length-prefixed
//! JSON header, then a directory of named f64 tensors in little-endian
//! raw form. Saving is a pure function of the logical state, so
//! save -> load -> save round-trips bitwise.

use crate::error::{Error, Result};
use crate::model::{init_model, Gradients, Model, ModelConfig, TensorView};
use crate::trainer::AdamState;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

const MAGIC: &[u8; 4] = b"DFGN";
const FORMAT_VERSION: u32 = 1;
const DTYPE_F64: u8 = 0;

/// A training snapshot: model, optimizer state, progress counters, and
/// the training RNG position for exact resumption.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub adam: AdamState,
    pub epoch: u64,
    pub best_metric: f64,
    pub rng_seed: u64,
    pub rng_word_pos: u128,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    model_cfg: ModelConfig,
    num_users: usize,
    num_items: usize,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    adam_step: u64,
    epoch: u64,
    best_metric: f64,
    rng_seed: u64,
    rng_word_pos_hi: u64,
    rng_word_pos_lo: u64,
}

pub fn save_checkpoint<W: Write>(ckpt: &Checkpoint, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    let header = Header {
        model_cfg: ckpt.model.cfg,
        num_users: ckpt.model.num_users,
        num_items: ckpt.model.num_items,
        beta1: ckpt.adam.beta1,
        beta2: ckpt.adam.beta2,
        epsilon: ckpt.adam.epsilon,
        adam_step: ckpt.adam.t,
        epoch: ckpt.epoch,
        best_metric: ckpt.best_metric,
        rng_seed: ckpt.rng_seed,
        rng_word_pos_hi: (ckpt.rng_word_pos >> 64) as u64,
        rng_word_pos_lo: ckpt.rng_word_pos as u64,
    };
    let header_json =
        serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    w.write_all(&(header_json.len() as u64).to_le_bytes())?;
    w.write_all(&header_json)?;

    let tensors = named_checkpoint_tensors(&ckpt.model, &ckpt.adam);
    w.write_all(&(tensors.len() as u64).to_le_bytes())?;
    for (name, view) in tensors {
        let name_bytes = name.as_bytes();
        w.write_all(&(name_bytes.len() as u64).to_le_bytes())?;
        w.write_all(name_bytes)?;
        let dims = view.dims();
        w.write_all(&(dims.len() as u32).to_le_bytes())?;
        for d in &dims {
            w.write_all(&(*d as u64).to_le_bytes())?;
        }
        w.write_all(&[DTYPE_F64])?;
        for value in view.as_slice() {
            w.write_all(&value.to_le_bytes())?;
        }
    }
    Ok(())
}

fn named_checkpoint_tensors<'a>(
    model: &'a Model,
    adam: &'a AdamState,
) -> Vec<(String, TensorView<'a>)> {
    let mut out = model.named_tensors();
    out.extend(
        adam.m
            .named_tensors()
            .into_iter()
            .map(|(name, view)| (format!("adam.m.{name}"), view)),
    );
    out.extend(
        adam.v
            .named_tensors()
            .into_iter()
            .map(|(name, view)| (format!("adam.v.{name}"), view)),
    );
    out
}

fn read_exact_checked<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::Checkpoint(format!("truncated while reading {what}: {e}")))
}

fn read_u64<R: Read>(r: &mut R, what: &str) -> Result<u64> {
    let mut buf = [0u8; 8];
    read_exact_checked(r, &mut buf, what)?;
    Ok(u64::from_le_bytes(buf))
}

pub fn load_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let mut magic = [0u8; 4];
    read_exact_checked(&mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "bad magic {magic:?}, expected {MAGIC:?}"
        )));
    }
    let mut version = [0u8; 4];
    read_exact_checked(&mut r, &mut version, "version")?;
    let version = u32::from_le_bytes(version);
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let header_len = read_u64(&mut r, "header length")? as usize;
    let mut header_bytes = vec![0u8; header_len];
    read_exact_checked(&mut r, &mut header_bytes, "header")?;
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| Error::Checkpoint(format!("bad header json: {e}")))?;

    // rebuild the skeleton, then fill every tensor by name
    let mut model = init_model(&header.model_cfg, header.num_users, header.num_items)
        .map_err(|e| Error::Checkpoint(format!("bad model config: {e}")))?;
    let mut adam = AdamState::new(&model);
    adam.beta1 = header.beta1;
    adam.beta2 = header.beta2;
    adam.epsilon = header.epsilon;
    adam.t = header.adam_step;

    let tensor_count = read_u64(&mut r, "tensor count")? as usize;
    let mut expected: std::collections::BTreeMap<String, Vec<usize>> =
        std::collections::BTreeMap::new();
    for (name, view) in named_checkpoint_tensors(&model, &adam) {
        expected.insert(name, view.dims());
    }
    if tensor_count != expected.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {tensor_count} tensors, config implies {}",
            expected.len()
        )));
    }
    let mut seen = std::collections::BTreeSet::new();
    for _ in 0..tensor_count {
        let name_len = read_u64(&mut r, "tensor name length")? as usize;
        let mut name_bytes = vec![0u8; name_len];
        read_exact_checked(&mut r, &mut name_bytes, "tensor name")?;
        let name = String::from_utf8(name_bytes)
            .map_err(|e| Error::Checkpoint(format!("bad tensor name: {e}")))?;
        let mut ndim = [0u8; 4];
        read_exact_checked(&mut r, &mut ndim, &format!("{name} ndim"))?;
        let ndim = u32::from_le_bytes(ndim) as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(read_u64(&mut r, &format!("{name} dims"))? as usize);
        }
        let mut dtype = [0u8; 1];
        read_exact_checked(&mut r, &mut dtype, &format!("{name} dtype"))?;
        if dtype[0] != DTYPE_F64 {
            return Err(Error::Checkpoint(format!(
                "tensor {name}: unsupported dtype {}",
                dtype[0]
            )));
        }
        let expect_dims = expected.get(&name).ok_or_else(|| {
            Error::Checkpoint(format!("unexpected tensor {name} for this config"))
        })?;
        if *expect_dims != dims {
            return Err(Error::Checkpoint(format!(
                "tensor {name}: shape {dims:?} does not match config {expect_dims:?}"
            )));
        }
        let len: usize = dims.iter().product();
        let mut data = vec![0.0f64; len];
        for value in data.iter_mut() {
            let mut buf = [0u8; 8];
            read_exact_checked(&mut r, &mut buf, &format!("tensor {name} data"))?;
            *value = f64::from_le_bytes(buf);
        }
        write_tensor_by_name(&mut model, &mut adam, &name, &data)?;
        seen.insert(name);
    }
    if seen.len() != expected.len() {
        return Err(Error::Checkpoint("duplicate tensor names".into()));
    }
    Ok(Checkpoint {
        model,
        adam,
        epoch: header.epoch,
        best_metric: header.best_metric,
        rng_seed: header.rng_seed,
        rng_word_pos: ((header.rng_word_pos_hi as u128) << 64)
            | header.rng_word_pos_lo as u128,
    })
}

fn write_tensor_by_name(
    model: &mut Model,
    adam: &mut AdamState,
    name: &str,
    data: &[f64],
) -> Result<()> {
    let fill = |target: &mut Gradients, inner: &str, data: &[f64]| -> Result<()> {
        let mut tensors = target.named_tensors_mut();
        let (_, view) = tensors
            .iter_mut()
            .find(|(n, _)| n == inner)
            .ok_or_else(|| Error::Checkpoint(format!("unknown tensor {inner}")))?;
        view.as_mut_slice().copy_from_slice(data);
        Ok(())
    };
    if let Some(inner) = name.strip_prefix("adam.m.") {
        fill(&mut adam.m, inner, data)
    } else if let Some(inner) = name.strip_prefix("adam.v.") {
        fill(&mut adam.v, inner, data)
    } else {
        let mut tensors = model.named_tensors_mut();
        let (_, view) = tensors
            .iter_mut()
            .find(|(n, _)| n == name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown tensor {name}")))?;
        view.as_mut_slice().copy_from_slice(data);
        Ok(())
    }
}
