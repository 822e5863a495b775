//! Checkpoint container: every model tensor, named, in one CRC-guarded
//! binary file.
//!
//! Layout (all integers little-endian):
//! `"TPNC"` magic, `u16` format version, `u32` meta-JSON length + bytes,
//! `u32` tensor count, then per tensor `u16` name length + UTF-8 name,
//! `u8` rank, `u32` dims, `f32` data. A `u32` CRC-32 over everything before
//! it closes the file.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::state::ModelState;
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"TPNC";
const VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct CkptMeta {
    cfg: ModelConfig,
    proxy_seed: u64,
    seed: u64,
}

fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn save_checkpoint(path: &Path, state: &ModelState) -> Result<()> {
    let meta = CkptMeta { cfg: state.cfg.clone(), proxy_seed: state.proxy_seed, seed: state.seed };
    let meta_json =
        serde_json::to_vec(&meta).map_err(|e| Error::data(format!("meta encode: {e}")))?;

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u16(&mut out, VERSION);
    put_u32(&mut out, meta_json.len() as u32);
    out.extend_from_slice(&meta_json);

    let entries = state.named_tensors();
    put_u32(&mut out, entries.len() as u32);
    for (name, t) in &entries {
        let nb = name.as_bytes();
        if nb.len() > u16::MAX as usize {
            return Err(Error::usage(format!("tensor name too long: {name:?}")));
        }
        put_u16(&mut out, nb.len() as u16);
        out.extend_from_slice(nb);
        let shape = t.shape();
        if shape.len() > u8::MAX as usize {
            return Err(Error::usage(format!("tensor rank too large: {name:?}")));
        }
        out.push(shape.len() as u8);
        for &d in shape {
            put_u32(&mut out, d as u32);
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    put_u32(&mut out, crc);
    fs::write(path, out)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::integrity("checkpoint truncated"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<ModelState> {
    let bytes = fs::read(path)?;
    if bytes.len() < MAGIC.len() + 2 + 4 {
        return Err(Error::integrity("checkpoint too short"));
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(Error::integrity("checkpoint CRC mismatch"));
    }

    let mut r = Reader { buf: body, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::data("not a checkpoint file (bad magic)"));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::Version { found: version, expected: VERSION });
    }
    let meta_len = r.u32()? as usize;
    let meta: CkptMeta = serde_json::from_slice(r.take(meta_len)?)
        .map_err(|e| Error::data(format!("meta decode: {e}")))?;

    let count = r.u32()? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::data("tensor name is not UTF-8"))?
            .to_string();
        let rank = r.take(1)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = r.take(numel * 4)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        entries.push((name, Tensor::from_vec(shape, data)?));
    }
    if r.pos != body.len() {
        return Err(Error::integrity("checkpoint has trailing bytes"));
    }

    let n_scenes = entries
        .iter()
        .find(|(n, _)| n == "latents")
        .map(|(_, t)| t.shape()[0])
        .ok_or_else(|| Error::data("checkpoint missing tensor \"latents\""))?;
    let mut state = ModelState::new(&meta.cfg, n_scenes, meta.seed)?;
    state.proxy_seed = meta.proxy_seed;
    state.load_named(&entries)?;
    Ok(state)
}
