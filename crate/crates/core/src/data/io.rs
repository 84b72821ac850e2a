//! Binary dataset files and their JSON manifest.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "GSP1"  version:u32  count:u32  image_width:u32  image_height:u32
//! count × { frames:u32  joints:u32  2:u32  3:u32  f32[frames·joints·2]  f32[frames·joints·3] }
//! ```
//!
//! Coordinates are stored as `f32`. Values that are already `f32`-exact
//! (the synthetic generator rounds its output) round-trip bit for bit.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::pose::{Dataset, PoseSequence2D, PoseSequence3D, SequencePair};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"GSP1";
pub const VERSION: u32 = 1;

pub fn encode_dataset(ds: &Dataset) -> Vec<u8> {
    let values: usize = ds.sequences.iter().map(|s| s.pose2d.coords().len() + s.pose3d.coords().len()).sum();
    let mut out = Vec::with_capacity(20 + 16 * ds.len() + 4 * values);
    out.extend_from_slice(MAGIC);
    for v in [VERSION, ds.len() as u32, ds.image_width, ds.image_height] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for s in &ds.sequences {
        for v in [s.frames() as u32, s.joints() as u32, 2, 3] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for &c in s.pose2d.coords().iter().chain(s.pose3d.coords()) {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Format(format!("truncated file: {what} needs {n} bytes at offset {}, {} left", self.pos, self.buf.len() - self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::Format("record too large".into()))?, what)?;
        Ok(bytes.chunks_exact(4).map(|b| f64::from(f32::from_le_bytes(b.try_into().expect("4 bytes")))).collect())
    }
}

pub fn decode_dataset(buf: &[u8]) -> Result<Dataset> {
    let mut r = Reader { buf, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected \"GSP1\"")));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported dataset version {version}, expected {VERSION}")));
    }
    let count = r.u32("count")? as usize;
    let image_width = r.u32("image width")?;
    let image_height = r.u32("image height")?;
    let mut sequences = Vec::with_capacity(count.min(1 << 16));
    for i in 0..count {
        let frames = r.u32("frames")? as usize;
        let joints = r.u32("joints")? as usize;
        let (d2, d3) = (r.u32("dims")?, r.u32("dims")?);
        if (d2, d3) != (2, 3) {
            return Err(Error::Format(format!("record {i}: dims ({d2}, {d3}), expected (2, 3)")));
        }
        let n = frames * joints;
        let p2 = r.f32s(n * 2, "2D payload")?;
        let p3 = r.f32s(n * 3, "3D payload")?;
        let pair = SequencePair::new(PoseSequence2D::new(joints, p2)?, PoseSequence3D::new(joints, p3)?)
            .map_err(|e| Error::Format(format!("record {i}: {e}")))?;
        sequences.push(pair);
    }
    if r.pos != buf.len() {
        return Err(Error::Format(format!("{} trailing bytes after {count} records", buf.len() - r.pos)));
    }
    Ok(Dataset { image_width, image_height, sequences })
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&encode_dataset(ds))?;
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let buf = fs::read(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    decode_dataset(&buf)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    /// Index of the sequence inside the file.
    pub index: usize,
    #[serde(rename = "V")]
    pub frames: usize,
    #[serde(rename = "J")]
    pub joints: usize,
    pub fps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: Option<u64>,
    pub noise_px: Option<f64>,
    pub sequences: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn describe(ds: &Dataset, path: &Path, fps: f64) -> Self {
        let sequences = ds
            .sequences
            .iter()
            .enumerate()
            .map(|(index, s)| ManifestEntry { path: path.to_path_buf(), index, frames: s.frames(), joints: s.joints(), fps })
            .collect();
        Self { seed: None, noise_px: None, sequences }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}
