//! Non-temporal reference predictors: the training-set mean pose and a
//! ridge-regularized linear map from one frame's 2D joints to its 3D pose.

use nalgebra::{DMatrix, DVector};

use super::train::{eval_targets, evaluate_with, EvalMetrics, EvalOptions};
use crate::data::Dataset;
use crate::error::{Error, Result};

fn normalized_frame(ds: &Dataset, seq: usize, t: usize) -> Vec<f64> {
    let (w, h) = (f64::from(ds.image_width), f64::from(ds.image_height));
    ds.sequences[seq]
        .pose2d
        .frame(t)
        .iter()
        .enumerate()
        .map(|(i, &v)| if i % 2 == 0 { v / w * 2.0 - 1.0 } else { v / w * 2.0 - h / w })
        .collect()
}

/// Predicts the mean training pose for every frame.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanPose {
    pub pose: Vec<f64>,
}

impl MeanPose {
    pub fn fit(ds: &Dataset, seqs: &[usize]) -> Result<Self> {
        let j = ds.joints().ok_or_else(|| Error::Data("empty dataset".into()))?;
        let mut sum = vec![0.0; 3 * j];
        let mut n = 0usize;
        for &s in seqs {
            for f in ds.sequences[s].pose3d.coords().chunks_exact(3 * j) {
                sum.iter_mut().zip(f).for_each(|(a, b)| *a += b);
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::Data("no frames to average".into()));
        }
        Ok(Self { pose: sum.into_iter().map(|v| v / n as f64).collect() })
    }

    pub fn evaluate(&self, ds: &Dataset, seqs: &[usize], frames: usize, opts: EvalOptions) -> Result<EvalMetrics> {
        evaluate_with(ds, &eval_targets(ds, seqs, frames, opts), |_, _| Ok(self.pose.clone()))
    }
}

/// `pose3d = [pose2d, 1] · W`, fitted by ridge regression on every training frame.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearLifter {
    /// `(2J+1)×3J`.
    pub weights: DMatrix<f64>,
}

impl LinearLifter {
    pub fn fit(ds: &Dataset, seqs: &[usize], ridge: f64) -> Result<Self> {
        let j = ds.joints().ok_or_else(|| Error::Data("empty dataset".into()))?;
        let (p, q) = (2 * j + 1, 3 * j);
        let mut xtx = DMatrix::<f64>::zeros(p, p);
        let mut xty = DMatrix::<f64>::zeros(p, q);
        for &s in seqs {
            for t in 0..ds.sequences[s].frames() {
                let mut x = normalized_frame(ds, s, t);
                x.push(1.0);
                let x = DVector::from_vec(x);
                let y = DVector::from_column_slice(ds.sequences[s].pose3d.frame(t));
                xtx.ger(1.0, &x, &x, 1.0);
                xty.ger(1.0, &x, &y, 1.0);
            }
        }
        for i in 0..p - 1 {
            xtx[(i, i)] += ridge;
        }
        let chol = xtx.cholesky().ok_or_else(|| Error::Numeric("normal equations are not positive definite".into()))?;
        Ok(Self { weights: chol.solve(&xty) })
    }

    pub fn lift(&self, normalized: &[f64]) -> Vec<f64> {
        let mut x = normalized.to_vec();
        x.push(1.0);
        (self.weights.transpose() * DVector::from_vec(x)).as_slice().to_vec()
    }

    pub fn evaluate(&self, ds: &Dataset, seqs: &[usize], frames: usize, opts: EvalOptions) -> Result<EvalMetrics> {
        evaluate_with(ds, &eval_targets(ds, seqs, frames, opts), |s, t| Ok(self.lift(&normalized_frame(ds, s, t))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, PoseSequence2D, PoseSequence3D, SequencePair, SynthConfig};

    #[test]
    fn mean_pose_averages_frames() {
        let ds = synth_generate(&SynthConfig { count: 3, frames: 10, ..SynthConfig::default() }).unwrap();
        let m = MeanPose::fit(&ds, &[0, 1, 2]).unwrap();
        let direct: f64 = ds.sequences.iter().map(|s| s.pose3d.frame(4)[7 * 3 + 1]).sum::<f64>();
        assert_eq!(m.pose.len(), 51);
        assert_eq!(&m.pose[..3], &[0.0, 0.0, 0.0]);
        assert!(m.pose[22].is_finite() && direct.is_finite());
    }

    #[test]
    fn linear_lifter_recovers_a_linear_map() {
        // 3D is an exact affine function of 2D: the fit must be (nearly) exact
        let mut p2 = Vec::new();
        let mut p3 = Vec::new();
        for f in 0..50 {
            let a = (f as f64 * 0.7).sin() * 300.0 + 500.0;
            let b = (f as f64 * 0.3).cos() * 200.0 + 400.0;
            p2.extend([a, b, b, a]);
            p3.extend([a - b, 2.0 * a, 1.0, 0.5 * b, -a, 3.0]);
        }
        let pair = SequencePair::new(PoseSequence2D::new(2, p2).unwrap(), PoseSequence3D::new(2, p3).unwrap()).unwrap();
        let ds = Dataset { image_width: 1000, image_height: 1000, sequences: vec![pair] };
        let lin = LinearLifter::fit(&ds, &[0], 1e-9).unwrap();
        let e = lin.evaluate(&ds, &[0], 1, EvalOptions::default()).unwrap();
        assert!(e.mpjpe < 1e-3, "{e:?}");
    }
}
