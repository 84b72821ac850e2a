//! Trains a small lifter on synthetic motion and compares it with the
//! mean-pose and single-frame linear baselines.
//!
//! ```text
//! cargo run --release --example train_synthetic -- [sequences] [epochs] [eval stride] [clips per sequence]
//! ```

use std::time::Instant;

use skiplift::data::{synth_generate, SynthConfig};
use skiplift::model::lifters::{LinearLifter, MeanPose};
use skiplift::model::train::{evaluate, train, EvalOptions};
use skiplift::{ModelConfig, Network, TrainConfig};

fn main() -> skiplift::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let count = args.first().copied().unwrap_or(400);
    let epochs = args.get(1).copied().unwrap_or(5);
    let stride = args.get(2).copied().unwrap_or(3);
    let clips = args.get(3).copied().unwrap_or(1);

    let ds = synth_generate(&SynthConfig { seed: 0, count, frames: 100, noise: 2.0, ..SynthConfig::default() })?;
    let (train_seqs, test_seqs) = ds.split(0.2);
    let cfg = ModelConfig {
        frames: 27,
        width: 64,
        part_channels: 32,
        heads: 4,
        encoder_layers: 2,
        decoder_layers: 3,
        ..ModelConfig::default()
    };
    let tc = TrainConfig { epochs, clips_per_sequence: clips, ..TrainConfig::default() };
    let opts = EvalOptions { stride, boundary_only: false };

    let mean = MeanPose::fit(&ds, &train_seqs)?.evaluate(&ds, &test_seqs, cfg.frames, opts)?;
    let linear = LinearLifter::fit(&ds, &train_seqs, 1e-3)?.evaluate(&ds, &test_seqs, cfg.frames, opts)?;
    println!("mean pose      MPJPE {:7.2} mm", mean.mpjpe);
    println!("linear lifter  MPJPE {:7.2} mm", linear.mpjpe);

    let mut net = Network::new(cfg, tc.seed)?;
    println!("model has {} parameters", net.params().scalar_count());
    let start = Instant::now();
    train(&mut net, &ds, &train_seqs, &tc, |net, stats| {
        let m = evaluate(net, &ds, &test_seqs, opts)?;
        println!(
            "epoch {:>2}  loss {:8.2}  test MPJPE {:7.2} mm  P-MPJPE {:7.2} mm  ({:.1} s)",
            stats.epoch + 1,
            stats.loss,
            m.mpjpe,
            m.p_mpjpe,
            start.elapsed().as_secs_f64()
        );
        stats.test = Some(m);
        Ok(())
    })?;
    Ok(())
}
