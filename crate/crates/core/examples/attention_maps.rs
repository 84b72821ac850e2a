//! Runs an untrained network on one synthetic clip and writes every
//! attention map as CSV.
//!
//! ```text
//! cargo run --release --example attention_maps -- [output dir]
//! ```

use std::path::PathBuf;

use skiplift::analysis::{export_attention, load_attention};
use skiplift::data::{synth_generate, SynthConfig};
use skiplift::model::train::build_sample;
use skiplift::{Graph, ModelConfig, Network};

fn main() -> skiplift::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("skiplift_attention"));
    let cfg = ModelConfig { frames: 27, width: 32, part_channels: 16, heads: 4, encoder_layers: 2, decoder_layers: 3, ..ModelConfig::default() };
    let net = Network::new(cfg.clone(), 1)?;
    let ds = synth_generate(&SynthConfig { count: 1, frames: 60, ..SynthConfig::default() })?;
    let sample = build_sample(&cfg, &ds, 0, 30)?;

    let mut g = Graph::inference(net.params());
    g.record_attention();
    net.forward(&mut g, &sample.clip)?;
    let index = export_attention(&g.take_attention(), &dir)?;
    println!("wrote {} maps to {}", index.maps.len(), dir.display());
    for (map, weights) in load_attention(&dir)?.iter().take(6) {
        println!("  {:<28} {}x{}  sum {:.3}", map.file, map.rows, map.cols, weights.sum());
    }
    Ok(())
}
