//! Binary checkpoints.
//!
//! ```text
//! "GSF1"  config_len:u32  config_json[config_len]
//! until EOF: name_len:u32 name[name_len] rank:u32 extents:u32[rank] f64[product(extents)]
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use super::config::ModelConfig;
use super::network::Network;
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"GSF1";

pub fn encode(net: &Network) -> Vec<u8> {
    let cfg = serde_json::to_vec(net.config()).expect("config is always serializable");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    out.extend_from_slice(&cfg);
    for (name, t) in net.params().iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &e in t.shape() {
            out.extend_from_slice(&(e as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn take<'a>(buf: &'a [u8], pos: &mut usize, n: usize, what: &str) -> Result<&'a [u8]> {
    let end = pos.checked_add(n).filter(|&e| e <= buf.len());
    let end = end.ok_or_else(|| Error::Format(format!("truncated checkpoint while reading {what} at offset {pos}")))?;
    let s = &buf[*pos..end];
    *pos = end;
    Ok(s)
}

fn u32_at(buf: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    Ok(u32::from_le_bytes(take(buf, pos, 4, what)?.try_into().expect("4 bytes")) as usize)
}

pub fn decode(buf: &[u8]) -> Result<Network> {
    let mut pos = 0;
    if take(buf, &mut pos, 4, "magic")? != MAGIC {
        return Err(Error::Format("not a checkpoint: bad magic, expected \"GSF1\"".into()));
    }
    let len = u32_at(buf, &mut pos, "config length")?;
    let cfg: ModelConfig = serde_json::from_slice(take(buf, &mut pos, len, "config")?)
        .map_err(|e| Error::Format(format!("checkpoint config: {e}")))?;
    let mut params = ParamStore::new();
    while pos < buf.len() {
        let n = u32_at(buf, &mut pos, "name length")?;
        let name = std::str::from_utf8(take(buf, &mut pos, n, "name")?)
            .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?
            .to_string();
        let rank = u32_at(buf, &mut pos, "rank")?;
        let shape = (0..rank).map(|_| u32_at(buf, &mut pos, "extent")).collect::<Result<Vec<_>>>()?;
        let count = shape.iter().try_fold(1usize, |a, &e| a.checked_mul(e));
        let count = count.ok_or_else(|| Error::Format(format!("{name}: shape {shape:?} overflows")))?;
        let bytes = take(buf, &mut pos, count.saturating_mul(8), &name)?;
        let data = bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
        let t = Tensor::new(shape, data).map_err(|e| Error::Format(format!("{name}: {e}")))?;
        params.insert(name, t);
    }
    Network::from_params(cfg, params)
}

pub fn save(net: &Network, path: &Path) -> Result<()> {
    fs::write(path, encode(net))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Network> {
    let buf = fs::read(path).map_err(|e| Error::Data(format!("cannot read checkpoint {}: {e}", path.display())))?;
    decode(&buf)
}
