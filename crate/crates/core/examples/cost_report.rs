//! Closed-form and measured attention cost for a few window lengths and
//! skip intervals.
//!
//! ```text
//! cargo run --release --example cost_report
//! ```

use skiplift::analysis::complexity::to_f64;
use skiplift::analysis::{analytic_skt, analytic_ssa, analytic_stt, encoder_cost, CostReport};
use skiplift::ModelConfig;

fn main() -> skiplift::Result<()> {
    println!("{:>5} {:>5} {:>3} {:>16} {:>16} {:>8}", "T", "D", "m", "SSA (analytic)", "measured attn", "ratio");
    for t in [27, 81, 243] {
        let base = ModelConfig { frames: t, width: 64, heads: 8, encoder_layers: 1, skip: 1, ..ModelConfig::default() };
        let full = encoder_cost(&base)?.macs("encoder.attention") as f64;
        for m in [1, 3, 9] {
            let cfg = ModelConfig { skip: m, ..base.clone() };
            let measured = encoder_cost(&cfg)?.macs("encoder.attention");
            println!(
                "{t:>5} {:>5} {m:>3} {:>16.0} {measured:>16} {:>8.4}",
                64,
                to_f64(analytic_ssa(t, 64, m)?),
                measured as f64 / full
            );
        }
    }

    let skt = analytic_skt(243, 256, 3)?;
    let stt = analytic_stt(243, 256, 3, 3)?;
    println!("\nSKT {skt} vs STT {stt} MACs: ratio {} = {:.4}", skt / stt, to_f64(skt / stt));

    let report = CostReport::new(&ModelConfig::default())?;
    println!("\nfull report for the default configuration:\n{}", report.to_json());
    Ok(())
}
