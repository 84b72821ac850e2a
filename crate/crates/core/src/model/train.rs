//! Clip sampling, the training loop and evaluation.
//!
//! Off-center (rolled) targets are supervised twice: the encoder-head row at
//! the target's offset, and the decoder output on a circularly shifted copy
//! of the clip that puts the target in the middle. Evaluation reads rolled
//! targets from the encoder head.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, RunConfig, TrainConfig};
use super::loss::{joint_error, loss_total, LossBreakdown};
use super::metrics::{mpjpe, p_mpjpe};
use super::network::Network;
use super::optim::Adam;
use crate::data::{plan_clip, CompletionMode, CompletionPolicy, Dataset};
use crate::error::{Error, Result};
use crate::params::{Gradients, Graph};
use crate::tensor::{Tensor, Var};

/// One supervised example.
#[derive(Clone, Debug)]
pub struct Sample {
    /// `[T×2J]` normalized 2D input.
    pub clip: Tensor,
    /// `[T×3J]` ground truth aligned with `clip`, millimeters.
    pub gt: Tensor,
    /// Ground truth of the target frame, `3J` values.
    pub target_gt: Vec<f64>,
    pub target_offset: usize,
    /// Present when the target is off-center: the clip rotated so that it is centered.
    pub rotated: Option<Tensor>,
}

pub fn policy(cfg: &ModelConfig) -> CompletionPolicy {
    CompletionPolicy { mode: cfg.completion, threshold: cfg.rolling_threshold() }
}

/// Checks that `ds` fits the model's joint count.
pub fn check_dataset(cfg: &ModelConfig, ds: &Dataset) -> Result<()> {
    if let Some(j) = ds.joints() {
        if j != cfg.joints {
            return Err(Error::config("model.joints", format!("model has {} joints, the data has {j}", cfg.joints)));
        }
    }
    if ds.sequences.iter().any(|s| s.joints() != cfg.joints) {
        return Err(Error::Data("sequences disagree on the joint count".into()));
    }
    Ok(())
}

fn normalized_rows(ds: &Dataset, seq: usize, frames: &[usize]) -> Tensor {
    let pose = &ds.sequences[seq].pose2d;
    let (w, h) = (f64::from(ds.image_width), f64::from(ds.image_height));
    let cols = 2 * pose.joints();
    let mut data = Vec::with_capacity(frames.len() * cols);
    for &f in frames {
        for (i, &v) in pose.frame(f).iter().enumerate() {
            data.push(if i % 2 == 0 { v / w * 2.0 - 1.0 } else { v / w * 2.0 - h / w });
        }
    }
    Tensor::new(vec![frames.len(), cols], data).expect("rows are complete")
}

/// Builds the input clip and ground truth for frame `target` of sequence `seq`.
pub fn build_sample(cfg: &ModelConfig, ds: &Dataset, seq: usize, target: usize) -> Result<Sample> {
    let pair = &ds.sequences[seq];
    let plan = plan_clip(pair.frames(), target, cfg.frames, policy(cfg))?;
    let clip = normalized_rows(ds, seq, &plan.frames);
    let sel = pair.pose3d.select(&plan.frames);
    let gt = Tensor::new(vec![cfg.frames, 3 * cfg.joints], sel.coords().to_vec())?;
    let target_gt = pair.pose3d.frame(target).to_vec();
    let rotated = plan.rolled.then(|| normalized_rows(ds, seq, &plan.centered_rotation()));
    Ok(Sample { clip, gt, target_gt, target_offset: plan.target_offset, rotated })
}

/// Records the training loss of one sample on `g`.
pub fn sample_loss(net: &Network, g: &mut Graph, s: &Sample) -> Result<(Var, LossBreakdown)> {
    let lambda = net.config().lambda;
    let tgt = g.constant(Tensor::new(vec![1, s.target_gt.len()], s.target_gt.clone())?);
    let gt = g.constant(s.gt.clone());
    let (full, lt) = match &s.rotated {
        None => {
            let p = net.forward(g, &s.clip)?;
            (p.full, joint_error(g, p.target, tgt)?)
        }
        Some(rot) => {
            let (_, full) = net.forward_full(g, &s.clip)?;
            let row = g.tape.gather_rows(full, &[s.target_offset])?;
            let enc = joint_error(g, row, tgt)?;
            let p = net.forward(g, rot)?;
            let dec = joint_error(g, p.target, tgt)?;
            let both = g.tape.add(enc, dec)?;
            (full, g.tape.scale(both, 0.5)?)
        }
    };
    let lf = joint_error(g, full, gt)?;
    let weighted = g.tape.scale(lf, lambda)?;
    let total = g.tape.add(lt, weighted)?;
    let value = |g: &Graph, v: Var| g.tape.value(v).data()[0];
    let parts = loss_total(value(g, lt), value(g, lf), lambda)?;
    Ok((total, parts))
}

/// Target-frame prediction (`3J` values, millimeters).
pub fn predict_target(net: &Network, s: &Sample) -> Result<Vec<f64>> {
    let mut g = Graph::inference(net.params());
    if s.rotated.is_some() {
        let (_, full) = net.forward_full(&mut g, &s.clip)?;
        Ok(g.tape.value(full).row(s.target_offset).to_vec())
    } else {
        let p = net.forward(&mut g, &s.clip)?;
        Ok(g.tape.value(p.target).data().to_vec())
    }
}

/// Loss and gradients of a batch, summed in sample order so the result does
/// not depend on the thread count.
pub fn batch_gradients(net: &Network, samples: &[Sample]) -> Result<(Gradients, LossBreakdown)> {
    let per: Vec<Result<(Gradients, LossBreakdown)>> = samples
        .par_iter()
        .map(|s| {
            let mut g = Graph::new(net.params());
            let (loss, parts) = sample_loss(net, &mut g, s)?;
            Ok((g.backward(loss)?, parts))
        })
        .collect();
    let mut grads = Gradients::new();
    let mut sum = LossBreakdown::default();
    for r in per {
        let (g, p) = r?;
        grads.accumulate(&g);
        sum.total += p.total;
        sum.target += p.target;
        sum.full += p.full;
    }
    let n = samples.len().max(1) as f64;
    grads.scale(1.0 / n);
    Ok((grads, LossBreakdown { total: sum.total / n, target: sum.target / n, full: sum.full / n }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub mpjpe: f64,
    pub p_mpjpe: f64,
    pub targets: usize,
    /// Frames whose prediction was degenerate for Procrustes alignment.
    pub degenerate_frames: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub learning_rate: f64,
    pub loss: f64,
    pub loss_target: f64,
    pub loss_full: f64,
    pub steps: usize,
    pub test: Option<EvalMetrics>,
    pub seconds: f64,
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Usage(format!("cannot start {n} threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Trains `net` on the listed sequences. `on_epoch` runs after every epoch
/// and may fill in `test`.
pub fn train(
    net: &mut Network,
    ds: &Dataset,
    train_seqs: &[usize],
    tc: &TrainConfig,
    mut on_epoch: impl FnMut(&Network, &mut EpochStats) -> Result<()> + Send,
) -> Result<Vec<EpochStats>> {
    tc.validate()?;
    check_dataset(net.config(), ds)?;
    if train_seqs.is_empty() {
        return Err(Error::Data("no training sequences".into()));
    }
    let cfg = net.config().clone();
    with_threads(tc.threads, move || {
        let mut opt = Adam::new(tc.learning_rate);
        let mut history = Vec::with_capacity(tc.epochs);
        for epoch in 0..tc.epochs {
            let start = Instant::now();
            opt.lr = tc.learning_rate * tc.lr_decay.powi(epoch as i32);
            let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
            rng.set_stream(epoch as u64 + 1);
            let mut jobs: Vec<(usize, usize)> = Vec::with_capacity(train_seqs.len() * tc.clips_per_sequence);
            for &s in train_seqs {
                for _ in 0..tc.clips_per_sequence {
                    jobs.push((s, rng.random_range(0..ds.sequences[s].frames())));
                }
            }
            jobs.shuffle(&mut rng);
            let mut acc = LossBreakdown::default();
            let mut steps = 0;
            for batch in jobs.chunks(tc.batch_size) {
                let samples = batch.iter().map(|&(s, t)| build_sample(&cfg, ds, s, t)).collect::<Result<Vec<_>>>()?;
                let (grads, parts) = batch_gradients(net, &samples)?;
                if !parts.total.is_finite() || !grads.is_finite() {
                    return Err(Error::Numeric(format!("loss or gradient became non-finite at epoch {epoch}, step {steps}")));
                }
                opt.step(net.params_mut(), &grads);
                acc.total += parts.total;
                acc.target += parts.target;
                acc.full += parts.full;
                steps += 1;
            }
            let n = steps.max(1) as f64;
            let mut stats = EpochStats {
                epoch,
                learning_rate: opt.lr,
                loss: acc.total / n,
                loss_target: acc.target / n,
                loss_full: acc.full / n,
                steps,
                test: None,
                seconds: 0.0,
            };
            on_epoch(net, &mut stats)?;
            stats.seconds = start.elapsed().as_secs_f64();
            history.push(stats);
        }
        Ok(history)
    })?
}

/// Which target frames an evaluation visits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvalOptions {
    /// Every `stride`-th frame of each sequence.
    pub stride: usize,
    /// Only targets whose ideal window runs past either end of the video.
    pub boundary_only: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { stride: 1, boundary_only: false }
    }
}

/// `(sequence, target)` pairs visited by an evaluation.
pub fn eval_targets(ds: &Dataset, seqs: &[usize], frames: usize, opts: EvalOptions) -> Vec<(usize, usize)> {
    let half = (frames - 1) / 2;
    let mut out = Vec::new();
    for &s in seqs {
        let v = ds.sequences[s].frames();
        for t in (0..v).step_by(opts.stride.max(1)) {
            let boundary = t < half || t + half >= v;
            if !opts.boundary_only || boundary {
                out.push((s, t));
            }
        }
    }
    out
}

/// Scores any per-target predictor over the chosen targets.
pub fn evaluate_with(
    ds: &Dataset,
    targets: &[(usize, usize)],
    predict: impl Fn(usize, usize) -> Result<Vec<f64>> + Sync,
) -> Result<EvalMetrics> {
    let joints = ds.joints().unwrap_or(0);
    let per: Vec<Result<(f64, f64, bool)>> = targets
        .par_iter()
        .map(|&(s, t)| {
            let pred = predict(s, t)?;
            let gt = ds.sequences[s].pose3d.frame(t);
            let p = p_mpjpe(&pred, gt, joints)?;
            Ok((mpjpe(&pred, gt)?, p.value, p.degenerate))
        })
        .collect();
    let (mut e1, mut e2, mut deg) = (0.0, 0.0, 0);
    for r in per {
        let (a, b, d) = r?;
        e1 += a;
        e2 += b;
        deg += usize::from(d);
    }
    let n = targets.len().max(1) as f64;
    Ok(EvalMetrics { mpjpe: e1 / n, p_mpjpe: e2 / n, targets: targets.len(), degenerate_frames: deg })
}

/// Evaluates the network under its configured completion policy.
pub fn evaluate(net: &Network, ds: &Dataset, seqs: &[usize], opts: EvalOptions) -> Result<EvalMetrics> {
    check_dataset(net.config(), ds)?;
    let targets = eval_targets(ds, seqs, net.config().frames, opts);
    evaluate_with(ds, &targets, |s, t| predict_target(net, &build_sample(net.config(), ds, s, t)?))
}

/// Everything needed to reproduce and audit a training run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub seed: u64,
    pub dataset: String,
    pub train_sequences: usize,
    pub test_sequences: usize,
    pub history: Vec<EpochStats>,
    pub final_metrics: Option<EvalMetrics>,
    pub wall_seconds: f64,
}

/// Convenience for tests and examples: completion mode override.
pub fn with_completion(cfg: &ModelConfig, mode: CompletionMode) -> ModelConfig {
    ModelConfig { completion: mode, ..cfg.clone() }
}
