use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::params::{Graph, ParamStore};
use crate::spatial::SpatialEncoder;
use crate::temporal::TemporalStack;
use crate::tensor::{Initializer, Tensor, Var};

/// Spatial encoder, temporal encoder/decoder and the two regression heads.
#[derive(Clone, Debug)]
pub struct Network {
    cfg: ModelConfig,
    spatial: SpatialEncoder,
    temporal: TemporalStack,
    params: ParamStore,
}

/// Handles to the two outputs of one forward pass, in millimeters.
#[derive(Clone, Copy, Debug)]
pub struct Prediction {
    /// Encoder head, `[T×3J]`.
    pub full: Var,
    /// Decoder head, `[1×3J]`: the center frame.
    pub target: Var,
}

/// Closed-form parameter count for `cfg`.
pub fn param_count(cfg: &ModelConfig) -> Result<usize> {
    let heads = 2 * (cfg.width * 3 * cfg.joints + 3 * cfg.joints);
    Ok(SpatialEncoder::new(cfg)?.param_count() + TemporalStack::new(cfg).param_count() + heads)
}

impl Network {
    /// Validates `cfg` and initializes parameters from `seed`.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let spatial = SpatialEncoder::new(&cfg)?;
        let temporal = TemporalStack::new(&cfg);
        let mut params = ParamStore::new();
        let mut init = Initializer::new(seed);
        spatial.init_params(&mut params, &mut init);
        temporal.init_params(&mut params, &mut init);
        let out = 3 * cfg.joints;
        params.init_linear(&mut init, "heads.encoder", cfg.width, out);
        params.init_linear(&mut init, "heads.decoder", cfg.width, out);
        Ok(Self { cfg, spatial, temporal, params })
    }

    /// Rebuilds a network around stored parameters, which must match the
    /// names and shapes `cfg` implies.
    pub fn from_params(cfg: ModelConfig, params: ParamStore) -> Result<Self> {
        let mut net = Self::new(cfg, 0)?;
        if params.len() != net.params.len() {
            return Err(Error::config(
                "params",
                format!("{} tensors stored, the config needs {}", params.len(), net.params.len()),
            ));
        }
        for (name, expected) in net.params.iter() {
            let got = params.get(name).ok_or_else(|| Error::config(name, "missing from stored parameters"))?;
            if got.shape() != expected.shape() {
                return Err(Error::config(
                    name,
                    format!("stored shape {:?} does not match {:?}", got.shape(), expected.shape()),
                ));
            }
        }
        // keep the canonical order
        let mut ordered = ParamStore::new();
        for (name, _) in net.params.iter() {
            ordered.insert(name, params.get(name).expect("checked above").clone());
        }
        net.params = ordered;
        Ok(net)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn spatial(&self) -> &SpatialEncoder {
        &self.spatial
    }

    pub fn temporal(&self) -> &TemporalStack {
        &self.temporal
    }

    fn head(&self, g: &mut Graph, z: Var, name: &str) -> Result<Var> {
        let prev = g.tape.set_scope("heads");
        let y = g.linear(z, name)?;
        let y = g.tape.scale(y, self.cfg.output_scale_mm)?;
        g.tape.set_scope(&prev);
        Ok(y)
    }

    fn check_clip(&self, clip: &Tensor) -> Result<()> {
        let (t, c) = clip.dims2()?;
        if t != self.cfg.frames || c != 2 * self.cfg.joints {
            return Err(Error::Shape(format!(
                "clip is {t}x{c}, the model expects {}x{}",
                self.cfg.frames,
                2 * self.cfg.joints
            )));
        }
        Ok(())
    }

    /// Encoder path only: `[T×3J]` full-sequence prediction.
    pub fn forward_full(&self, g: &mut Graph, clip: &Tensor) -> Result<(Var, Var)> {
        self.check_clip(clip)?;
        let x = self.spatial.forward(g, clip)?;
        let z = self.temporal.encode(g, x)?;
        let full = self.head(g, z, "heads.encoder")?;
        Ok((z, full))
    }

    /// Both heads on a `[T×2J]` clip of normalized 2D coordinates.
    pub fn forward(&self, g: &mut Graph, clip: &Tensor) -> Result<Prediction> {
        let (z, full) = self.forward_full(g, clip)?;
        let zd = self.temporal.decoder_forward(g, z)?;
        let target = self.head(g, zd, "heads.decoder")?;
        Ok(Prediction { full, target })
    }

    /// Forward-only convenience returning `(full [T×3J], target [1×3J])`.
    pub fn predict(&self, clip: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut g = Graph::inference(&self.params);
        let p = self.forward(&mut g, clip)?;
        Ok((g.tape.value(p.full).clone(), g.tape.value(p.target).clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{SpatialMode, TemporalMode, Variant};

    #[test]
    fn closed_form_count_matches_store() {
        let mut cfgs = vec![ModelConfig::tiny(), ModelConfig { frames: 27, width: 16, heads: 2, part_channels: 8, encoder_layers: 2, decoder_layers: 3, ..ModelConfig::default() }];
        let base = cfgs[1].clone();
        cfgs.push(ModelConfig { spatial_mode: SpatialMode::Mlp, ..base.clone() });
        cfgs.push(ModelConfig { spatial_mode: SpatialMode::JointwiseGcn, ..base.clone() });
        cfgs.push(ModelConfig { temporal_mode: TemporalMode::VtConv, skip: 1, ..base.clone() });
        cfgs.push(ModelConfig { temporal_mode: TemporalMode::VtStrided, ..base.clone() });
        cfgs.push(ModelConfig { temporal_pos_embedding: false, variant: Variant::L, ..base });
        for cfg in cfgs {
            let net = Network::new(cfg.clone(), 1).unwrap();
            assert_eq!(net.params().scalar_count(), param_count(&cfg).unwrap(), "{cfg:?}");
        }
    }

    #[test]
    fn hand_count_for_unit_widths() {
        // one joint, one part, C = D = h = 1, no temporal layers, T = 1
        let cfg = ModelConfig {
            frames: 1,
            joints: 1,
            part_channels: 1,
            width: 1,
            heads: 1,
            encoder_layers: 0,
            decoder_layers: 0,
            grouping: vec![vec![0]],
            ..ModelConfig::default()
        };
        // mlp1 2·1+1, mlp2 1+1, pos 1, attn.w 1, proj 2+1, residual 2+1, temporal.pos 1, heads 2·(3+3)
        assert_eq!(param_count(&cfg).unwrap(), 3 + 2 + 1 + 1 + 3 + 3 + 1 + 12);
        let net = Network::new(cfg, 0).unwrap();
        assert_eq!(net.params().scalar_count(), 26);
    }

    #[test]
    fn count_depends_on_frames_only_through_position_embedding() {
        // param_count does not validate, so the decoder depth can stay fixed
        let a = ModelConfig { frames: 27, decoder_layers: 3, ..ModelConfig::tiny() };
        let b = ModelConfig { frames: 81, ..a.clone() };
        let diff = param_count(&b).unwrap() - param_count(&a).unwrap();
        assert_eq!(diff, (81 - 27) * a.width);
        let no_pos = |c: &ModelConfig| param_count(&ModelConfig { temporal_pos_embedding: false, ..c.clone() }).unwrap();
        assert_eq!(no_pos(&a), no_pos(&b));
    }

    #[test]
    fn doubling_width_spatial_only() {
        let count = |d: usize| {
            param_count(&ModelConfig { width: d, heads: 1, encoder_layers: 0, decoder_layers: 0, frames: 1, ..ModelConfig::tiny() })
                .unwrap()
        };
        let (c, j, n, w) = (4usize, 5usize, 4usize, 2 * 2usize);
        let formula = |d: usize| (w * c + c) + (c * c + c) + n * c + c + (n * 2 * c * d + d) + (2 * j * d + d) + d + 2 * (d * 3 * j + 3 * j);
        assert_eq!(count(8), formula(8));
        assert_eq!(count(16), formula(16));
    }

    #[test]
    fn shapes_and_determinism() {
        let cfg = ModelConfig { frames: 27, width: 16, heads: 2, part_channels: 8, encoder_layers: 1, decoder_layers: 3, ..ModelConfig::default() };
        let net = Network::new(cfg, 3).unwrap();
        let clip = Tensor::from_fn(&[27, 34], |i| ((i * 7919) % 113) as f64 / 113.0 - 0.5);
        let (full, target) = net.predict(&clip).unwrap();
        assert_eq!(full.shape(), &[27, 51]);
        assert_eq!(target.shape(), &[1, 51]);
        let (full2, target2) = net.predict(&clip).unwrap();
        assert_eq!(full, full2);
        assert_eq!(target, target2);
        assert!(net.predict(&Tensor::zeros(&[26, 34])).is_err());
    }

    #[test]
    fn zero_params_zero_input_gives_zero() {
        let mut net = Network::new(ModelConfig::tiny(), 0).unwrap();
        net.params_mut().zero_prefix("");
        let (full, target) = net.predict(&Tensor::zeros(&[9, 10])).unwrap();
        assert_eq!(full.norm(), 0.0);
        assert_eq!(target.norm(), 0.0);
    }

    #[test]
    fn from_params_checks_layout() {
        let net = Network::new(ModelConfig::tiny(), 0).unwrap();
        let back = Network::from_params(ModelConfig::tiny(), net.params().clone()).unwrap();
        assert_eq!(back.params(), net.params());
        let other = ModelConfig { joints: 6, grouping: vec![vec![0, 1], vec![2], vec![3], vec![4, 5]], ..ModelConfig::tiny() };
        assert!(Network::from_params(other, net.params().clone()).is_err());
    }
}
