use std::collections::BTreeMap;

use serde::Serialize;

use super::complexity::{analytic_skt, analytic_ssa, analytic_stt, analytic_vanilla, to_f64, Macs};
use crate::error::Result;
use crate::model::{ModelConfig, Network};
use crate::params::{Graph, ParamStore};
use crate::temporal::TemporalStack;
use crate::tensor::{FlopCounter, Initializer, Tensor};

fn probe_clip(frames: usize, cols: usize) -> Tensor {
    Tensor::from_fn(&[frames, cols], |i| ((i * 37 % 101) as f64 / 101.0) - 0.5)
}

/// Runs one instrumented forward pass of the whole network on a single clip.
pub fn empirical_cost(cfg: &ModelConfig) -> Result<FlopCounter> {
    let net = Network::new(cfg.clone(), 0)?;
    let mut g = Graph::inference(net.params());
    net.forward(&mut g, &probe_clip(cfg.frames, 2 * cfg.joints))?;
    Ok(g.tape.flops().clone())
}

/// Instrumented pass through the temporal encoder alone. Unlike
/// [`empirical_cost`] it accepts configurations whose decoder cannot reach
/// one token, such as `skip = 1`.
pub fn encoder_cost(cfg: &ModelConfig) -> Result<FlopCounter> {
    let stack = TemporalStack::new(cfg);
    let mut store = ParamStore::new();
    stack.init_params(&mut store, &mut Initializer::new(0));
    let mut g = Graph::inference(&store);
    let x = g.constant(probe_clip(cfg.frames, cfg.width));
    stack.encode(&mut g, x)?;
    Ok(g.tape.flops().clone())
}

/// Exact MAC count, with its decimal value for convenience.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExactMacs {
    pub exact: String,
    pub value: f64,
}

impl From<Macs> for ExactMacs {
    fn from(v: Macs) -> Self {
        Self { exact: v.to_string(), value: to_f64(v) }
    }
}

/// Closed-form and measured cost of one configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostReport {
    pub frames: usize,
    pub width: usize,
    pub skip: usize,
    pub conv_kernel: usize,
    pub conv_stride: usize,
    /// Per block.
    pub analytic_ssa: ExactMacs,
    pub analytic_skt: ExactMacs,
    pub analytic_stt: ExactMacs,
    pub analytic_vanilla: ExactMacs,
    pub ssa_over_vanilla: ExactMacs,
    pub skt_over_stt: ExactMacs,
    /// Measured MACs per scope for a full forward pass; empty when the
    /// configuration does not build.
    pub empirical: BTreeMap<String, u64>,
    pub empirical_total: u64,
    pub params: Option<usize>,
}

impl CostReport {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        let (t, d, m, k, s) = (cfg.frames, cfg.width, cfg.skip, cfg.conv_kernel, cfg.conv_stride);
        let (ssa, skt, stt, van) = (analytic_ssa(t, d, m)?, analytic_skt(t, d, m)?, analytic_stt(t, d, k, s)?, analytic_vanilla(t, d)?);
        let (empirical, params) = match empirical_cost(cfg) {
            Ok(c) => (c.scopes().iter().map(|(k, v)| (k.clone(), v.macs)).collect(), crate::model::param_count(cfg).ok()),
            Err(_) => (BTreeMap::new(), None),
        };
        Ok(Self {
            frames: t,
            width: d,
            skip: m,
            conv_kernel: k,
            conv_stride: s,
            analytic_ssa: ssa.into(),
            analytic_skt: skt.into(),
            analytic_stt: stt.into(),
            analytic_vanilla: van.into(),
            ssa_over_vanilla: (ssa / van).into(),
            skt_over_stt: (skt / stt).into(),
            empirical_total: empirical.values().sum(),
            empirical,
            params,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is always serializable")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TemporalMode;

    #[test]
    fn encoder_attention_matches_closed_form() {
        let cfg = ModelConfig { encoder_layers: 1, ..ModelConfig::default() };
        let c = encoder_cost(&cfg).unwrap();
        let expected = analytic_ssa(243, 256, 3).unwrap();
        assert_eq!(u128::from(c.macs("encoder.attention")), expected.to_integer());
        // Q/K/V/O projections are metered apart: 4·T·D²
        assert_eq!(c.macs("encoder.proj"), 4 * 243 * 256 * 256);
    }

    #[test]
    fn ffn_cost_is_quadratic_in_width() {
        let base = ModelConfig { frames: 27, encoder_layers: 1, decoder_layers: 3, width: 32, heads: 4, ..ModelConfig::default() };
        let a = empirical_cost(&base).unwrap().macs("encoder.ffn") as f64;
        let b = empirical_cost(&ModelConfig { width: 64, ..base }).unwrap().macs("encoder.ffn") as f64;
        assert!((b / a - 4.0).abs() < 0.04);
    }

    #[test]
    fn zero_layers_leave_spatial_and_heads() {
        let cfg = ModelConfig {
            frames: 1,
            encoder_layers: 0,
            decoder_layers: 0,
            width: 16,
            heads: 2,
            part_channels: 8,
            ..ModelConfig::default()
        };
        let c = empirical_cost(&cfg).unwrap();
        let scopes: Vec<_> = c.scopes().iter().filter(|(_, v)| v.macs > 0).map(|(k, _)| k.as_str()).collect();
        assert_eq!(scopes, vec!["heads", "spatial"]);
    }

    #[test]
    fn report_ratios() {
        let r = CostReport::new(&ModelConfig { encoder_layers: 1, decoder_layers: 5, ..ModelConfig::default() }).unwrap();
        assert_eq!(r.analytic_skt.exact, "47236608");
        assert_eq!(r.ssa_over_vanilla.exact, "1/3");
        assert!(r.skt_over_stt.value < 0.6);
        assert!(r.empirical_total > 0 && r.params.is_some());
        let vt = CostReport::new(&ModelConfig { frames: 27, temporal_mode: TemporalMode::VtConv, skip: 1, decoder_layers: 1, ..ModelConfig::default() }).unwrap();
        assert!(vt.empirical.contains_key("decoder.attention"));
    }
}
