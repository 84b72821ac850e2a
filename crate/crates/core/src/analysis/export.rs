//! Attention maps as CSV matrices plus a JSON index.
//!
//! Spatial maps are `N×N`, summed over the frames of the clip. Temporal maps
//! are written per head and as the sum over heads.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::AttentionRecord;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionMap {
    pub file: String,
    pub stage: String,
    pub layer: usize,
    pub set: usize,
    /// `None` for heads-summed and spatial maps.
    pub head: Option<usize>,
    pub summed_heads: bool,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AttentionIndex {
    pub maps: Vec<AttentionMap>,
}

fn write_csv(path: &Path, rows: usize, cols: usize, data: &[f64]) -> Result<()> {
    let mut text = String::with_capacity(rows * cols * 12);
    for r in 0..rows {
        let line: Vec<String> = data[r * cols..(r + 1) * cols].iter().map(|v| format!("{}", *v as f32)).collect();
        text.push_str(&line.join(","));
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

fn read_csv(path: &Path) -> Result<Tensor> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let row = line
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), i + 1))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() || rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err(Error::Format(format!("{} is not a rectangular matrix", path.display())));
    }
    Ok(Tensor::from_rows(&rows))
}

/// Writes every record under `dir` and returns the index (also saved as
/// `dir/index.json`).
pub fn export_attention(records: &[AttentionRecord], dir: &Path) -> Result<AttentionIndex> {
    fs::create_dir_all(dir)?;
    let mut index = AttentionIndex::default();
    let mut emit = |name: String, rec: &AttentionRecord, head: Option<usize>, summed: bool, rows: usize, cols: usize, data: &[f64]| -> Result<()> {
        write_csv(&dir.join(&name), rows, cols, data)?;
        index.maps.push(AttentionMap {
            file: name,
            stage: rec.stage.to_string(),
            layer: rec.layer,
            set: rec.set,
            head,
            summed_heads: summed,
            rows,
            cols,
        });
        Ok(())
    };
    for rec in records {
        let shape = rec.weights.shape().to_vec();
        match shape.as_slice() {
            &[n, m] => emit(format!("{}_l{}.csv", rec.stage, rec.layer), rec, None, false, n, m, rec.weights.data())?,
            &[h, n, m] => {
                let base = format!("{}_l{}_s{}", rec.stage, rec.layer, rec.set);
                let mut sum = vec![0.0; n * m];
                for head in 0..h {
                    let block = &rec.weights.data()[head * n * m..(head + 1) * n * m];
                    sum.iter_mut().zip(block).for_each(|(a, b)| *a += b);
                    emit(format!("{base}_h{head}.csv"), rec, Some(head), false, n, m, block)?;
                }
                emit(format!("{base}_sum.csv"), rec, None, true, n, m, &sum)?;
            }
            other => return Err(Error::Shape(format!("attention map of shape {other:?}"))),
        }
    }
    fs::write(dir.join("index.json"), serde_json::to_string_pretty(&index)?)?;
    Ok(index)
}

/// Reads back an exported directory.
pub fn load_attention(dir: &Path) -> Result<Vec<(AttentionMap, Tensor)>> {
    let index: AttentionIndex = serde_json::from_str(&fs::read_to_string(dir.join("index.json"))?)?;
    index
        .maps
        .into_iter()
        .map(|m| {
            let t = read_csv(&dir.join(&m.file))?;
            if t.shape() != [m.rows, m.cols] {
                return Err(Error::Format(format!("{} has shape {:?}, index says {}x{}", m.file, t.shape(), m.rows, m.cols)));
            }
            Ok((m, t))
        })
        .collect()
}
