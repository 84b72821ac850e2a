//! Full-to-single supervision: a per-joint Euclidean loss on the target
//! frame plus a weighted loss over every frame of the encoder output.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::Graph;
use crate::tensor::Var;

/// Mean per-joint Euclidean distance between two `[N×3J]` tensors, on the tape.
pub fn joint_error(g: &mut Graph, pred: Var, gt: Var) -> Result<Var> {
    let shape = g.tape.shape(pred).to_vec();
    if shape != g.tape.shape(gt) || shape.last().is_none_or(|c| c % 3 != 0) {
        return Err(Error::Shape(format!("cannot compare {:?} with {:?}", shape, g.tape.shape(gt))));
    }
    let rows = shape.iter().product::<usize>() / 3;
    let d = g.tape.sub(pred, gt)?;
    let d = g.tape.reshape(d, &[rows, 3])?;
    let sq = g.tape.square(d)?;
    let s = g.tape.sum_last(sq)?;
    let n = g.tape.sqrt(s)?;
    g.tape.mean(n)
}

fn check(pred: &[f64], gt: &[f64]) -> Result<()> {
    if pred.len() != gt.len() || !pred.len().is_multiple_of(3) || pred.is_empty() {
        return Err(Error::Shape(format!("pose sizes {} and {} differ or are not xyz triples", pred.len(), gt.len())));
    }
    Ok(())
}

/// `(1/J) Σ‖p_i − p̂_i‖` for one pose of `3J` values.
pub fn loss_target(pred: &[f64], gt: &[f64]) -> Result<f64> {
    check(pred, gt)?;
    let j = pred.len() / 3;
    let sum: f64 = pred
        .chunks_exact(3)
        .zip(gt.chunks_exact(3))
        .map(|(p, q)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt())
        .sum();
    Ok(sum / j as f64)
}

/// Mean of [`loss_target`] over the frames of a `[T×J×3]` sequence.
pub fn loss_full(pred: &[f64], gt: &[f64], joints: usize) -> Result<f64> {
    check(pred, gt)?;
    if joints == 0 || !pred.len().is_multiple_of(3 * joints) {
        return Err(Error::Shape(format!("{} values are not frames of {joints} joints", pred.len())));
    }
    let w = 3 * joints;
    let frames = pred.len() / w;
    let mut total = 0.0;
    for (p, q) in pred.chunks_exact(w).zip(gt.chunks_exact(w)) {
        total += loss_target(p, q)?;
    }
    Ok(total / frames as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub target: f64,
    pub full: f64,
}

/// `L = L_t + λ·L_f`.
pub fn loss_total(target: f64, full: f64, lambda: f64) -> Result<LossBreakdown> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::config("lambda", format!("must be non-negative, got {lambda}")));
    }
    Ok(LossBreakdown { total: target + lambda * full, target, full })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamStore;
    use crate::tensor::Tensor;

    #[test]
    fn target_examples() {
        let gt: Vec<f64> = (0..15).map(f64::from).collect();
        assert_eq!(loss_target(&gt, &gt).unwrap(), 0.0);
        let shifted: Vec<f64> = gt.iter().enumerate().map(|(i, v)| v + [3.0, 4.0, 0.0][i % 3]).collect();
        assert!((loss_target(&shifted, &gt).unwrap() - 5.0).abs() < 1e-12);
        // permuting joints of both sides
        let perm = |v: &[f64]| [&v[6..9], &v[0..3], &v[12..15], &v[3..6], &v[9..12]].concat();
        let noisy: Vec<f64> = gt.iter().map(|v| v * 1.1 + 0.3).collect();
        let a = loss_target(&noisy, &gt).unwrap();
        let b = loss_target(&perm(&noisy), &perm(&gt)).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(loss_target(&gt[..6], &gt[..9]).is_err());
    }

    #[test]
    fn full_examples() {
        let gt = vec![0.0; 5 * 2 * 3];
        assert_eq!(loss_full(&gt, &gt, 2).unwrap(), 0.0);
        let mut pred = gt.clone();
        for j in 0..2 {
            pred[3 * 2 * 2 + 3 * j] = 3.0;
            pred[3 * 2 * 2 + 3 * j + 1] = 4.0;
        }
        assert!((loss_full(&pred, &gt, 2).unwrap() - 1.0).abs() < 1e-12);
        // frame order does not matter
        let rolled = [&pred[6..], &pred[..6]].concat();
        assert!((loss_full(&rolled, &gt, 2).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn total_is_affine_in_lambda() {
        assert_eq!(loss_total(2.0, 3.0, 0.0).unwrap().total, 2.0);
        assert_eq!(loss_total(2.0, 3.0, 1.0).unwrap().total, 5.0);
        assert_eq!(loss_total(1.0, 4.0, 0.5).unwrap().total, 3.0);
        let (lt, lf) = (0.7, 2.3);
        let v: Vec<f64> = [0.0, 0.5, 2.0].iter().map(|&l| loss_total(lt, lf, l).unwrap().total).collect();
        assert!(((v[1] - v[0]) / 0.5 - lf).abs() < 1e-12);
        assert!(((v[2] - v[0]) / 2.0 - lf).abs() < 1e-12);
        assert!(loss_total(1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn tape_loss_matches_plain() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let p = Tensor::from_fn(&[2, 6], |i| (i as f64 * 0.37).sin());
        let q = Tensor::from_fn(&[2, 6], |i| (i as f64 * 0.11).cos());
        let (pv, qv) = (g.tape.param(p.clone()), g.constant(q.clone()));
        let l = joint_error(&mut g, pv, qv).unwrap();
        let expected = loss_full(p.data(), q.data(), 2).unwrap();
        assert!((g.tape.value(l).data()[0] - expected).abs() < 1e-12);
    }
}
