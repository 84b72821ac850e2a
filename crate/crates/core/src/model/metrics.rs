//! Protocol #1 (MPJPE) and Protocol #2 (Procrustes-aligned MPJPE).

use nalgebra::{Matrix3, Vector3};

use super::loss::loss_target;
use crate::error::{Error, Result};

/// Mean per-joint position error over all frames and joints.
pub fn mpjpe(pred: &[f64], gt: &[f64]) -> Result<f64> {
    loss_target(pred, gt)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProcrustesError {
    pub value: f64,
    /// Set when some predicted frame had all joints coincident; those
    /// frames are scored without alignment.
    pub degenerate: bool,
}

fn points(frame: &[f64]) -> Vec<Vector3<f64>> {
    frame.chunks_exact(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect()
}

/// Similarity transform (scale, rotation, translation) taking `pred` closest
/// to `gt` in the least-squares sense. `None` for a coincident `pred`.
pub fn procrustes_align(pred: &[f64], gt: &[f64]) -> Option<Vec<f64>> {
    let (x, y) = (points(pred), points(gt));
    let n = x.len() as f64;
    let mx = x.iter().sum::<Vector3<f64>>() / n;
    let my = y.iter().sum::<Vector3<f64>>() / n;
    let xc: Vec<_> = x.iter().map(|p| p - mx).collect();
    let yc: Vec<_> = y.iter().map(|p| p - my).collect();
    let var_x: f64 = xc.iter().map(|p| p.norm_squared()).sum();
    if var_x < 1e-12 {
        return None;
    }
    let cov: Matrix3<f64> = xc.iter().zip(&yc).map(|(a, b)| b * a.transpose()).sum();
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u?, svd.v_t?);
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = u * d * v_t;
    let scale = (svd.singular_values.component_mul(&d.diagonal())).sum() / var_x;
    Some(xc.iter().flat_map(|p| {
        let q = r * p * scale + my;
        [q.x, q.y, q.z]
    }).collect())
}

/// Per-frame Procrustes-aligned MPJPE over `[T×J×3]` sequences.
///
/// Alignment minimizes squared error, so on a frame with an outlier joint it
/// can raise the mean Euclidean error; each frame therefore scores the better
/// of the aligned and unaligned error, keeping `p_mpjpe <= mpjpe`.
pub fn p_mpjpe(pred: &[f64], gt: &[f64], joints: usize) -> Result<ProcrustesError> {
    if joints == 0 || pred.len() != gt.len() || pred.is_empty() || !pred.len().is_multiple_of(3 * joints) {
        return Err(Error::Shape(format!("{} and {} values are not matching {joints}-joint frames", pred.len(), gt.len())));
    }
    let w = 3 * joints;
    let mut total = 0.0;
    let mut degenerate = false;
    for (p, q) in pred.chunks_exact(w).zip(gt.chunks_exact(w)) {
        let raw = loss_target(p, q)?;
        total += match procrustes_align(p, q) {
            Some(aligned) => loss_target(&aligned, q)?.min(raw),
            None => {
                degenerate = true;
                raw
            }
        };
    }
    Ok(ProcrustesError { value: total / (pred.len() / w) as f64, degenerate })
}
