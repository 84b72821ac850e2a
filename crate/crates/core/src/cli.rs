//! The `skiplift` command-line tool.
//!
//! Every failure prints one line, `CODE: message`, to stderr and exits with
//! 2 (usage), 3 (data), 4 (config) or 5 (non-finite values).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis::{complexity, export_attention, CostReport};
use crate::data::{load_dataset, save_dataset, synth_generate, DatasetManifest, SynthConfig};
use crate::error::{Error, Result};
use crate::model::checkpoint;
use crate::model::train::{build_sample, evaluate, train, EvalOptions, RunManifest};
use crate::model::{layers_to_single, ModelConfig, Network, RunConfig, TemporalMode};
use crate::params::Graph;

#[derive(Debug, Parser)]
#[command(name = "skiplift", version, about = "2D-to-3D pose lifting with skipped self-attention")]
pub struct Cli {
    /// Print the effective configuration as JSON and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
    /// Single worker thread; results are bit-stable across runs.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset file and its JSON manifest.
    GenData(GenData),
    /// Train a model and write a checkpoint plus a run manifest.
    Train(Train),
    /// Report MPJPE and P-MPJPE of a checkpoint.
    Eval(Eval),
    /// Closed-form and measured multiply-accumulate counts.
    Flops(Flops),
    /// Export attention maps for one clip.
    DumpAttention(DumpAttention),
    /// Vary one hyperparameter and tabulate accuracy and cost.
    Sweep(Sweep),
}

#[derive(Debug, Args)]
pub struct GenData {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2000)]
    pub count: usize,
    #[arg(long, default_value_t = 100)]
    pub frames: usize,
    #[arg(long, default_value_t = 17)]
    pub joints: usize,
    /// 2D noise standard deviation, pixels.
    #[arg(long, default_value_t = 2.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 50.0)]
    pub fps: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct Train {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory for `model.gsf` and `manifest.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Evaluate on the held-out split every n epochs (0: only at the end).
    #[arg(long, default_value_t = 0)]
    pub eval_every: usize,
}

#[derive(Debug, Args)]
pub struct Eval {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Score only the last fraction of sequences (0 scores all of them).
    #[arg(long, default_value_t = 0.0)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[arg(long)]
    pub boundary_only: bool,
}

#[derive(Debug, Args)]
pub struct Flops {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub skip: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DumpAttention {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Sequence index inside the data file.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    /// Target frame; defaults to the middle of the sequence.
    #[arg(long)]
    pub frame: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    M,
    #[value(name = "R")]
    R,
    Lambda,
}

#[derive(Debug, Args)]
pub struct Sweep {
    #[arg(long, value_enum)]
    pub param: SweepParam,
    #[arg(long, num_args = 1.., value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Train and evaluate every point on this dataset; without it only
    /// costs are reported.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn read_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Data(format!("cannot read {}: {e}", p.display())))?;
            RunConfig::from_json(&text)
        }
    }
}

fn require<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::Usage(format!("--{flag} is required")))
}

fn gen_data(a: &GenData, out: &mut dyn Write) -> Result<()> {
    let cfg = SynthConfig { seed: a.seed, count: a.count, frames: a.frames, joints: a.joints, noise: a.noise, fps: a.fps };
    let ds = synth_generate(&cfg)?;
    save_dataset(&ds, &a.out)?;
    let mut manifest = DatasetManifest::describe(&ds, &a.out, a.fps);
    manifest.seed = Some(a.seed);
    manifest.noise_px = Some(a.noise);
    let mpath = a.out.with_extension("json");
    manifest.save(&mpath)?;
    writeln!(out, "wrote {} sequences to {} (manifest {})", ds.len(), a.out.display(), mpath.display())?;
    Ok(())
}

fn train_cmd(cli: &Cli, a: &Train, out: &mut dyn Write) -> Result<()> {
    let mut run = read_config(a.config.as_deref())?;
    if cli.deterministic {
        run.train.threads = Some(1);
    }
    if cli.print_config {
        writeln!(out, "{}", run.to_json())?;
        return Ok(());
    }
    let data = require(&a.data, "data")?;
    let dir = require(&a.out, "out")?;
    let start = Instant::now();
    let ds = load_dataset(data)?;
    let (train_seqs, test_seqs) = ds.split(run.train.test_fraction);
    let mut net = Network::new(run.model.clone(), run.train.seed)?;
    let every = a.eval_every;
    let history = train(&mut net, &ds, &train_seqs, &run.train, |net, stats| {
        if every > 0 && (stats.epoch + 1) % every == 0 && !test_seqs.is_empty() {
            stats.test = Some(evaluate(net, &ds, &test_seqs, EvalOptions::default())?);
        }
        Ok(())
    })?;
    for e in &history {
        writeln!(out, "epoch {:>3}  loss {:.3}  (target {:.3}, full {:.3})", e.epoch + 1, e.loss, e.loss_target, e.loss_full)?;
    }
    let final_metrics = if test_seqs.is_empty() {
        None
    } else {
        Some(evaluate(&net, &ds, &test_seqs, EvalOptions { stride: run.train.eval_stride, boundary_only: false })?)
    };
    if let Some(m) = &final_metrics {
        writeln!(out, "test MPJPE {:.2} mm  P-MPJPE {:.2} mm  over {} targets", m.mpjpe, m.p_mpjpe, m.targets)?;
    }
    fs::create_dir_all(dir)?;
    checkpoint::save(&net, &dir.join("model.gsf"))?;
    let manifest = RunManifest {
        seed: run.train.seed,
        config: run,
        dataset: data.display().to_string(),
        train_sequences: train_seqs.len(),
        test_sequences: test_seqs.len(),
        history,
        final_metrics,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    writeln!(out, "wrote {}", dir.join("model.gsf").display())?;
    Ok(())
}

fn eval_cmd(cli: &Cli, a: &Eval, out: &mut dyn Write) -> Result<()> {
    let net = checkpoint::load(&a.ckpt)?;
    if cli.print_config {
        writeln!(out, "{}", serde_json::to_string_pretty(net.config())?)?;
        return Ok(());
    }
    let ds = load_dataset(&a.data)?;
    let seqs = if a.test_fraction > 0.0 { ds.split(a.test_fraction).1 } else { (0..ds.len()).collect() };
    let run = || evaluate(&net, &ds, &seqs, EvalOptions { stride: a.stride, boundary_only: a.boundary_only });
    let m = if cli.deterministic { single_threaded(run)? } else { run()? };
    writeln!(out, "MPJPE {:.4} mm", m.mpjpe)?;
    writeln!(out, "P-MPJPE {:.4} mm", m.p_mpjpe)?;
    writeln!(out, "targets {}", m.targets)?;
    Ok(())
}

fn single_threaded<T: Send>(f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::Usage(e.to_string()))?
        .install(f)
}

fn flops_cmd(cli: &Cli, a: &Flops, out: &mut dyn Write) -> Result<()> {
    let mut run = read_config(a.config.as_deref())?;
    if let Some(t) = a.frames {
        run.model.frames = t;
    }
    if let Some(d) = a.width {
        run.model.width = d;
    }
    if let Some(m) = a.skip {
        run.model.skip = m;
    }
    if cli.print_config {
        writeln!(out, "{}", run.to_json())?;
        return Ok(());
    }
    writeln!(out, "{}", CostReport::new(&run.model)?.to_json())?;
    Ok(())
}

fn dump_cmd(a: &DumpAttention, out: &mut dyn Write) -> Result<()> {
    let net = checkpoint::load(&a.ckpt)?;
    let ds = load_dataset(&a.data)?;
    crate::model::train::check_dataset(net.config(), &ds)?;
    let seq = ds
        .sequences
        .get(a.index)
        .ok_or_else(|| Error::Usage(format!("--index {} but the file has {} sequences", a.index, ds.len())))?;
    let frame = a.frame.unwrap_or(seq.frames() / 2);
    let sample = build_sample(net.config(), &ds, a.index, frame)?;
    let mut g = Graph::inference(net.params());
    g.record_attention();
    net.forward(&mut g, &sample.clip)?;
    let index = export_attention(&g.take_attention(), &a.out)?;
    writeln!(out, "wrote {} maps to {}", index.maps.len(), a.out.display())?;
    Ok(())
}

/// Configuration for one sweep point.
pub fn sweep_config(base: &ModelConfig, param: SweepParam, value: f64) -> Result<ModelConfig> {
    let whole = |v: f64| -> Result<usize> {
        if v >= 0.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(Error::Usage(format!("sweep value {v} must be a non-negative integer")))
        }
    };
    let mut cfg = base.clone();
    match param {
        SweepParam::M => {
            let m = whole(value)?;
            cfg.skip = m.max(1);
            if m <= 1 {
                // full attention: the decoder cannot shrink the sequence
                cfg.temporal_mode = TemporalMode::VtConv;
            } else {
                cfg.temporal_mode = TemporalMode::Skipped;
                cfg.decoder_layers = layers_to_single(cfg.frames, m).expect("m >= 2");
            }
        }
        SweepParam::R => cfg.rolling_threshold = Some(whole(value)?),
        SweepParam::Lambda => cfg.lambda = value,
    }
    cfg.validate()?;
    Ok(cfg)
}

fn sweep_cmd(cli: &Cli, a: &Sweep, out: &mut dyn Write) -> Result<()> {
    let mut run = read_config(a.config.as_deref())?;
    if cli.deterministic {
        run.train.threads = Some(1);
    }
    if cli.print_config {
        writeln!(out, "{}", run.to_json())?;
        return Ok(());
    }
    let ds = a.data.as_deref().map(load_dataset).transpose()?;
    let name = match a.param {
        SweepParam::M => "m",
        SweepParam::R => "R",
        SweepParam::Lambda => "lambda",
    };
    let mut csv = "param,value,decoder_layers,mpjpe,p_mpjpe,macs_empirical,macs_skt_analytic\n".to_string();
    for &v in &a.values {
        let cfg = sweep_config(&run.model, a.param, v)?;
        let report = CostReport::new(&cfg)?;
        let skt = complexity::analytic_skt(cfg.frames, cfg.width, cfg.skip)?;
        let (e1, e2) = match &ds {
            None => (String::new(), String::new()),
            Some(ds) => {
                let (tr, te) = ds.split(run.train.test_fraction);
                let mut net = Network::new(cfg.clone(), run.train.seed)?;
                train(&mut net, ds, &tr, &run.train, |_, _| Ok(()))?;
                let m = evaluate(&net, ds, &te, EvalOptions { stride: run.train.eval_stride, boundary_only: false })?;
                (format!("{:.4}", m.mpjpe), format!("{:.4}", m.p_mpjpe))
            }
        };
        csv.push_str(&format!(
            "{name},{v},{},{e1},{e2},{},{}\n",
            cfg.decoder_layers,
            report.empirical_total,
            complexity::to_f64(skt)
        ));
    }
    match &a.out {
        Some(p) => {
            fs::write(p, &csv)?;
            writeln!(out, "wrote {}", p.display())?;
        }
        None => write!(out, "{csv}")?,
    }
    Ok(())
}

/// Runs a parsed command, writing normal output to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::GenData(a) => {
            if cli.print_config {
                writeln!(out, "{}", serde_json::to_string_pretty(&serde_json::json!({
                    "seed": a.seed, "count": a.count, "frames": a.frames,
                    "joints": a.joints, "noise": a.noise, "fps": a.fps,
                }))?)?;
                return Ok(());
            }
            gen_data(a, out)
        }
        Command::Train(a) => train_cmd(cli, a, out),
        Command::Eval(a) => eval_cmd(cli, a, out),
        Command::Flops(a) => flops_cmd(cli, a, out),
        Command::DumpAttention(a) => dump_cmd(a, out),
        Command::Sweep(a) => sweep_cmd(cli, a, out),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("E_USAGE: {first}");
            return 2;
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(&cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("{}: {msg}", e.code());
            e.exit_code()
        }
    }
}
