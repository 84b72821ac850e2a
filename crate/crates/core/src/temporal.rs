//! Temporal encoder and decoder built from skipped self-attention.
//!
//! A skip partition splits the `T` frame tokens into `m` residue classes
//! `{j : j ≡ i (mod m)}`. Attention runs independently inside each class, so
//! the two `n²`-order products cost `2T²D/m` instead of `2T²D`.
//!
//! * Encoder blocks scatter every class back to its original positions, so
//!   the sequence length is unchanged.
//! * Decoder blocks concatenate the `m` classes channelwise (row `r` of the
//!   result holds frames `r·m .. r·m+m-1`) and merge `m·D -> D`, dividing the
//!   length by `m` per block until one token remains.
//!
//! The vanilla-attention blocks used by the convolutional baselines live
//! here as well and do not share the partition code path.

use crate::error::{Error, Result};
use crate::model::{ModelConfig, TemporalMode, Variant};
use crate::params::{AttentionRecord, Graph, ParamStore};
use crate::tensor::{Initializer, Tensor, Var};

/// Residue-class partition of `0..frames` with interval `skip`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SkipPartition {
    skip: usize,
    frames: usize,
    sets: Vec<Vec<usize>>,
}

pub fn skip_partition(frames: usize, skip: usize) -> Result<SkipPartition> {
    if skip < 1 {
        return Err(Error::config("skip", "skip interval must be at least 1"));
    }
    if frames < 1 {
        return Err(Error::config("frames", "sequence must be non-empty"));
    }
    let sets = (0..skip).map(|i| (i..frames).step_by(skip).collect()).collect();
    Ok(SkipPartition { skip, frames, sets })
}

impl SkipPartition {
    pub fn skip(&self) -> usize {
        self.skip
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    /// For each frame, its row in the set-major concatenation of the sets.
    pub fn inverse_order(&self) -> Vec<usize> {
        let mut inv = vec![0; self.frames];
        for (k, &pos) in self.sets.iter().flatten().enumerate() {
            inv[pos] = k;
        }
        inv
    }
}

/// Multi-head scaled dot-product attention over one set of tokens `[n×D]`,
/// with per-head scaling `1/sqrt(D/h)` and an output projection.
pub fn ssa_attend(g: &mut Graph, name: &str, z: Var, heads: usize, stage: &'static str, layer: usize, set: usize) -> Result<Var> {
    let (n, d) = g.tape.value(z).dims2()?;
    let dh = d / heads;
    let proj_scope = format!("{stage}.proj");
    let prev = g.tape.set_scope(&proj_scope);
    let q = g.linear(z, &format!("{name}.q"))?;
    let k = g.linear(z, &format!("{name}.k"))?;
    let v = g.linear(z, &format!("{name}.v"))?;
    g.tape.set_scope(&format!("{stage}.attention"));
    let split = |g: &mut Graph, x: Var| -> Result<Var> {
        let x = g.tape.reshape(x, &[n, heads, dh])?;
        g.tape.permute(x, &[1, 0, 2])
    };
    let (q, k, v) = (split(g, q)?, split(g, k)?, split(g, v)?);
    let scores = g.tape.batch_matmul(q, k, true)?;
    let scores = g.tape.scale(scores, 1.0 / (dh as f64).sqrt())?;
    let weights = g.tape.softmax(scores, 2)?;
    if g.recording_attention() {
        let w = g.tape.value(weights).clone();
        g.push_attention(AttentionRecord { stage, layer, set, weights: w });
    }
    let out = g.tape.batch_matmul(weights, v, false)?;
    let out = g.tape.permute(out, &[1, 0, 2])?;
    let out = g.tape.reshape(out, &[n, d])?;
    g.tape.set_scope(&proj_scope);
    let out = g.linear(out, &format!("{name}.o"))?;
    g.tape.set_scope(&prev);
    Ok(out)
}

/// Full-sequence multi-head attention written head by head with 2-D
/// products. Reference path for the vanilla baselines.
pub fn vanilla_attention(g: &mut Graph, name: &str, x: Var, heads: usize, stage: &'static str, layer: usize) -> Result<Var> {
    let (_, d) = g.tape.value(x).dims2()?;
    let dh = d / heads;
    let proj_scope = format!("{stage}.proj");
    let prev = g.tape.set_scope(&proj_scope);
    let q = g.linear(x, &format!("{name}.q"))?;
    let k = g.linear(x, &format!("{name}.k"))?;
    let v = g.linear(x, &format!("{name}.v"))?;
    g.tape.set_scope(&format!("{stage}.attention"));
    let mut outs = Vec::with_capacity(heads);
    let mut maps = Vec::new();
    for h in 0..heads {
        let qh = g.tape.slice_cols(q, h * dh, dh)?;
        let kh = g.tape.slice_cols(k, h * dh, dh)?;
        let vh = g.tape.slice_cols(v, h * dh, dh)?;
        let kt = g.tape.transpose(kh)?;
        let s = g.tape.matmul(qh, kt)?;
        let s = g.tape.scale(s, 1.0 / (dh as f64).sqrt())?;
        let a = g.tape.softmax(s, 1)?;
        if g.recording_attention() {
            maps.extend_from_slice(g.tape.value(a).data());
        }
        outs.push(g.tape.matmul(a, vh)?);
    }
    if g.recording_attention() {
        let n = g.tape.value(x).shape()[0];
        g.push_attention(AttentionRecord { stage, layer, set: 0, weights: Tensor::new(vec![heads, n, n], maps)? });
    }
    let cat = g.tape.concat_cols(&outs)?;
    g.tape.set_scope(&proj_scope);
    let out = g.linear(cat, &format!("{name}.o"))?;
    g.tape.set_scope(&prev);
    Ok(out)
}

/// Position-wise feed-forward `D -> 4D -> D`.
fn pointwise_ffn(g: &mut Graph, name: &str, x: Var) -> Result<Var> {
    let h = g.linear(x, &format!("{name}.ffn1"))?;
    let h = g.tape.gelu(h)?;
    g.linear(h, &format!("{name}.ffn2"))
}

/// 1-D convolution over rows via gathered taps. Output row `o` sees input
/// rows `o·stride + j - pad` for `j < kernel`, zero outside the sequence.
pub fn conv1d(g: &mut Graph, name: &str, x: Var, kernel: usize, stride: usize, pad: usize) -> Result<Var> {
    let rows = g.tape.value(x).shape()[0];
    let out_rows = (rows + 2 * pad).saturating_sub(kernel) / stride + 1;
    let mut taps = Vec::with_capacity(kernel);
    for j in 0..kernel {
        let idx: Vec<Option<usize>> = (0..out_rows)
            .map(|o| (o * stride + j).checked_sub(pad).filter(|&r| r < rows))
            .collect();
        taps.push(g.tape.gather_rows_padded(x, &idx)?);
    }
    let stacked = if kernel == 1 { taps[0] } else { g.tape.concat_cols(&taps)? };
    g.linear(stacked, name)
}

/// Repeats the last row until the length is a multiple of `m`.
pub fn pad_to_multiple(g: &mut Graph, x: Var, m: usize) -> Result<Var> {
    let rows = g.tape.value(x).shape()[0];
    let padded = rows.div_ceil(m) * m;
    if padded == rows {
        return Ok(x);
    }
    let idx: Vec<usize> = (0..padded).map(|r| r.min(rows - 1)).collect();
    g.tape.gather_rows(x, &idx)
}

/// The temporal half of the network.
#[derive(Clone, Debug)]
pub struct TemporalStack {
    cfg: ModelConfig,
}

impl TemporalStack {
    pub fn new(cfg: &ModelConfig) -> Self {
        Self { cfg: cfg.clone() }
    }

    fn ffn_in(&self, stage: &str) -> usize {
        let (d, k) = (self.cfg.width, self.cfg.conv_kernel);
        match (self.cfg.temporal_mode, stage) {
            (TemporalMode::Skipped, _) => d,
            _ => k * d,
        }
    }

    fn init_block(&self, store: &mut ParamStore, init: &mut Initializer, name: &str, stage: &str) {
        let d = self.cfg.width;
        store.init_layer_norm(&format!("{name}.ln1"), d);
        for p in ["q", "k", "v", "o"] {
            store.init_linear(init, &format!("{name}.attn.{p}"), d, d);
        }
        if stage == "decoder" && self.cfg.temporal_mode == TemporalMode::Skipped {
            store.init_linear(init, &format!("{name}.merge"), self.cfg.skip * d, d);
        }
        store.init_layer_norm(&format!("{name}.ln2"), d);
        store.init_linear(init, &format!("{name}.ffn1"), self.ffn_in(stage), 4 * d);
        store.init_linear(init, &format!("{name}.ffn2"), 4 * d, d);
    }

    pub fn init_params(&self, store: &mut ParamStore, init: &mut Initializer) {
        let (t, d) = (self.cfg.frames, self.cfg.width);
        if self.cfg.temporal_pos_embedding {
            store.insert("temporal.pos", init.uniform(&[t, d], d));
        }
        for l in 0..self.cfg.encoder_layers {
            self.init_block(store, init, &format!("encoder.{l}"), "encoder");
        }
        for l in 0..self.cfg.decoder_layers {
            self.init_block(store, init, &format!("decoder.{l}"), "decoder");
        }
        if self.cfg.temporal_mode == TemporalMode::VtConv {
            store.insert("decoder.aggregate.w", Tensor::full(&[1, t], 1.0 / t as f64));
        }
    }

    /// Closed-form parameter count of everything [`Self::init_params`] creates.
    pub fn param_count(&self) -> usize {
        let (t, d, m) = (self.cfg.frames, self.cfg.width, self.cfg.skip);
        let block = |stage: &str| {
            let ln = 2 * 2 * d;
            let attn = 4 * (d * d + d);
            let ffn = (self.ffn_in(stage) * 4 * d + 4 * d) + (4 * d * d + d);
            let merge = if stage == "decoder" && self.cfg.temporal_mode == TemporalMode::Skipped {
                m * d * d + d
            } else {
                0
            };
            ln + attn + ffn + merge
        };
        let pos = if self.cfg.temporal_pos_embedding { t * d } else { 0 };
        let agg = if self.cfg.temporal_mode == TemporalMode::VtConv { t } else { 0 };
        pos + self.cfg.encoder_layers * block("encoder") + self.cfg.decoder_layers * block("decoder") + agg
    }

    /// Skipped-attention encoder block (pre-norm). Length is preserved.
    pub fn encoder_block(&self, g: &mut Graph, layer: usize, x: Var) -> Result<Var> {
        let name = format!("encoder.{layer}");
        let rows = g.tape.value(x).shape()[0];
        let part = skip_partition(rows, self.cfg.skip)?;
        let prev = g.tape.set_scope("encoder.norm");
        let h = g.layer_norm(x, &format!("{name}.ln1"))?;
        let mut outs = Vec::with_capacity(part.sets().len());
        for (i, set) in part.sets().iter().enumerate().filter(|(_, s)| !s.is_empty()) {
            let z = g.tape.gather_rows(h, set)?;
            outs.push(ssa_attend(g, &format!("{name}.attn"), z, self.cfg.heads, "encoder", layer, i)?);
        }
        let cat = g.tape.concat_rows(&outs)?;
        let attn = g.tape.gather_rows(cat, &part.inverse_order())?;
        let x1 = g.tape.add(x, attn)?;
        let out = self.ffn_residual(g, &name, x1, "encoder")?;
        g.tape.set_scope(&prev);
        Ok(out)
    }

    /// Full-attention block with the same parameter layout as
    /// [`Self::encoder_block`]. Uses the convolutional feed-forward when the
    /// temporal mode is a VT baseline.
    pub fn vanilla_block(&self, g: &mut Graph, stage: &'static str, layer: usize, x: Var) -> Result<Var> {
        let name = format!("{stage}.{layer}");
        let prev = g.tape.set_scope(&format!("{stage}.norm"));
        let h = g.layer_norm(x, &format!("{name}.ln1"))?;
        let attn = vanilla_attention(g, &format!("{name}.attn"), h, self.cfg.heads, stage, layer)?;
        let x1 = g.tape.add(x, attn)?;
        let out = self.ffn_residual(g, &name, x1, stage)?;
        g.tape.set_scope(&prev);
        Ok(out)
    }

    fn ffn_residual(&self, g: &mut Graph, name: &str, x: Var, stage: &str) -> Result<Var> {
        g.tape.set_scope(&format!("{stage}.norm"));
        let h = g.layer_norm(x, &format!("{name}.ln2"))?;
        g.tape.set_scope(&format!("{stage}.ffn"));
        let f = match self.cfg.temporal_mode {
            TemporalMode::Skipped => pointwise_ffn(g, name, h)?,
            _ => {
                let k = self.cfg.conv_kernel;
                let h = conv1d(g, &format!("{name}.ffn1"), h, k, 1, (k - 1) / 2)?;
                let h = g.tape.gelu(h)?;
                g.linear(h, &format!("{name}.ffn2"))?
            }
        };
        g.tape.add(x, f)
    }

    /// Skipped decoder block: `[T×D] -> [ceil(T/m)×D]`.
    pub fn decoder_block(&self, g: &mut Graph, layer: usize, x: Var) -> Result<Var> {
        let name = format!("decoder.{layer}");
        let m = self.cfg.skip;
        let prev = g.tape.set_scope("decoder.norm");
        let xp = pad_to_multiple(g, x, m)?;
        let rows = g.tape.value(xp).shape()[0];
        let part = skip_partition(rows, m)?;
        let h = g.layer_norm(xp, &format!("{name}.ln1"))?;
        let mut sets = Vec::with_capacity(m);
        for (i, set) in part.sets().iter().enumerate() {
            let z = g.tape.gather_rows(h, set)?;
            let a = ssa_attend(g, &format!("{name}.attn"), z, self.cfg.heads, "decoder", layer, i)?;
            let r = g.tape.gather_rows(xp, set)?;
            sets.push(g.tape.add(r, a)?);
        }
        g.tape.set_scope("decoder.merge");
        let cat = if m == 1 { sets[0] } else { g.tape.concat_cols(&sets)? };
        let y = g.linear(cat, &format!("{name}.merge"))?;
        let out = self.ffn_residual(g, &name, y, "decoder")?;
        g.tape.set_scope(&prev);
        Ok(out)
    }

    /// Strided-convolution decoder block: `[T×D] -> [ceil(T/s)×D]`.
    pub fn strided_block(&self, g: &mut Graph, layer: usize, x: Var) -> Result<Var> {
        let name = format!("decoder.{layer}");
        let (k, s) = (self.cfg.conv_kernel, self.cfg.conv_stride);
        let prev = g.tape.set_scope("decoder.norm");
        let xp = pad_to_multiple(g, x, s)?;
        let rows = g.tape.value(xp).shape()[0];
        let h = g.layer_norm(xp, &format!("{name}.ln1"))?;
        let attn = vanilla_attention(g, &format!("{name}.attn"), h, self.cfg.heads, "decoder", layer)?;
        let x1 = g.tape.add(xp, attn)?;
        let h = g.layer_norm(x1, &format!("{name}.ln2"))?;
        g.tape.set_scope("decoder.ffn");
        let f = conv1d(g, &format!("{name}.ffn1"), h, k, s, k.saturating_sub(s) / 2)?;
        let f = g.tape.gelu(f)?;
        let f = g.linear(f, &format!("{name}.ffn2"))?;
        let centers: Vec<usize> = (0..rows / s).map(|o| o * s + s / 2).collect();
        let res = g.tape.gather_rows(x1, &centers)?;
        let out = g.tape.add(res, f)?;
        g.tape.set_scope(&prev);
        Ok(out)
    }

    /// Adds the temporal position embedding (if enabled) and runs the encoder stack.
    pub fn encode(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let mut y = x;
        if self.cfg.temporal_pos_embedding {
            let prev = g.tape.set_scope("encoder.norm");
            let pos = g.p("temporal.pos")?;
            if g.tape.shape(pos) != g.tape.shape(x) {
                return Err(Error::Shape(format!(
                    "sequence of shape {:?} does not match the {:?} position embedding",
                    g.tape.shape(x),
                    g.tape.shape(pos)
                )));
            }
            y = g.tape.add(y, pos)?;
            g.tape.set_scope(&prev);
        }
        self.encoder_forward(g, y)
    }

    /// The stack of encoder blocks. Variant L blends each block output with
    /// its input: `y <- (block(y) + y) / 2`.
    pub fn encoder_forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let mut y = x;
        for l in 0..self.cfg.encoder_layers {
            let out = match self.cfg.temporal_mode {
                TemporalMode::Skipped => self.encoder_block(g, l, y)?,
                _ => self.vanilla_block(g, "encoder", l, y)?,
            };
            y = if self.cfg.variant == Variant::L {
                let prev = g.tape.set_scope("encoder.norm");
                let s = g.tape.add(out, y)?;
                let s = g.tape.scale(s, 0.5)?;
                g.tape.set_scope(&prev);
                s
            } else {
                out
            };
        }
        Ok(y)
    }

    /// Decoder stack, ending in exactly one token `[1×D]`.
    pub fn decoder_forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let mut y = x;
        for l in 0..self.cfg.decoder_layers {
            y = match self.cfg.temporal_mode {
                TemporalMode::Skipped => self.decoder_block(g, l, y)?,
                TemporalMode::VtStrided => self.strided_block(g, l, y)?,
                TemporalMode::VtConv => self.vanilla_block(g, "decoder", l, y)?,
            };
        }
        if self.cfg.temporal_mode == TemporalMode::VtConv {
            let prev = g.tape.set_scope("decoder.merge");
            let w = g.p("decoder.aggregate.w")?;
            y = g.tape.matmul(w, y)?;
            g.tape.set_scope(&prev);
        }
        let len = g.tape.value(y).shape()[0];
        if len != 1 {
            return Err(Error::config(
                "decoder_layers",
                format!("decoder produced {len} tokens after {} layers, expected 1", self.cfg.decoder_layers),
            ));
        }
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::kernels::sigmoid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(frames: usize, width: usize, heads: usize, skip: usize) -> ModelConfig {
        ModelConfig { frames, width, heads, skip, encoder_layers: 1, decoder_layers: 0, ..ModelConfig::tiny() }
    }

    fn store_for(c: &ModelConfig, seed: u64) -> ParamStore {
        let mut s = ParamStore::new();
        TemporalStack::new(c).init_params(&mut s, &mut Initializer::new(seed));
        s
    }

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn partition_examples() {
        assert_eq!(skip_partition(9, 3).unwrap().sets(), &[vec![0, 3, 6], vec![1, 4, 7], vec![2, 5, 8]]);
        assert_eq!(skip_partition(5, 1).unwrap().sets(), &[vec![0, 1, 2, 3, 4]]);
        assert_eq!(skip_partition(7, 3).unwrap().sets(), &[vec![0, 3, 6], vec![1, 4], vec![2, 5]]);
        assert!(skip_partition(7, 0).is_err());
    }

    #[test]
    fn gather_then_inverse_is_identity() {
        let part = skip_partition(10, 4).unwrap();
        let store = ParamStore::new();
        let mut g = Graph::inference(&store);
        let xv = random(&[10, 3], 1);
        let x = g.constant(xv.clone());
        let pieces: Vec<Var> = part.sets().iter().map(|s| g.tape.gather_rows(x, s).unwrap()).collect();
        let cat = g.tape.concat_rows(&pieces).unwrap();
        let back = g.tape.gather_rows(cat, &part.inverse_order()).unwrap();
        assert_eq!(g.tape.value(back), &xv);
        // reversed even rows
        let sel = g.tape.gather_rows(x, &[4, 2, 0]).unwrap();
        assert_eq!(g.tape.value(sel).row(0), xv.row(4));
        assert_eq!(g.tape.value(sel).row(2), xv.row(0));
        assert!(g.tape.gather_rows(x, &[10]).is_err());
    }

    /// Nested-loop single-head attention with explicit projections.
    fn reference_attention(z: &Tensor, s: &ParamStore, name: &str) -> Tensor {
        let proj = |p: &str| {
            let w = s.get(&format!("{name}.{p}.w")).unwrap();
            let b = s.get(&format!("{name}.{p}.b")).unwrap();
            let mut y = z.matmul(w).unwrap();
            let d = b.len();
            for (i, v) in y.data_mut().iter_mut().enumerate() {
                *v += b.data()[i % d];
            }
            y
        };
        let (q, k, v) = (proj("q"), proj("k"), proj("v"));
        let (n, d) = q.dims2().unwrap();
        let mut out = Tensor::zeros(&[n, d]);
        for i in 0..n {
            let scores: Vec<f64> = (0..n)
                .map(|j| (0..d).map(|c| q.at2(i, c) * k.at2(j, c)).sum::<f64>() / (d as f64).sqrt())
                .collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let total: f64 = e.iter().sum();
            for j in 0..n {
                for c in 0..d {
                    out.data_mut()[i * d + c] += e[j] / total * v.at2(j, c);
                }
            }
        }
        let wo = s.get(&format!("{name}.o.w")).unwrap();
        let bo = s.get(&format!("{name}.o.b")).unwrap();
        let mut y = out.matmul(wo).unwrap();
        for (i, v) in y.data_mut().iter_mut().enumerate() {
            *v += bo.data()[i % d];
        }
        y
    }

    #[test]
    fn ssa_matches_nested_loop_oracle() {
        let c = cfg(9, 4, 1, 3);
        let mut store = store_for(&c, 4);
        for p in ["q", "k", "v", "o"] {
            store.insert(format!("encoder.0.attn.{p}.b"), random(&[4], 40));
        }
        let zv = random(&[2, 4], 5);
        let mut g = Graph::inference(&store);
        let z = g.constant(zv.clone());
        let out = ssa_attend(&mut g, "encoder.0.attn", z, 1, "encoder", 0, 0).unwrap();
        let expected = reference_attention(&zv, &store, "encoder.0.attn");
        assert!(g.tape.value(out).max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn ssa_single_token_and_identical_rows() {
        let c = cfg(9, 8, 2, 3);
        let store = store_for(&c, 6);
        let mut g = Graph::inference(&store);
        g.record_attention();
        let zv = random(&[1, 8], 7);
        let z = g.constant(zv.clone());
        let out = ssa_attend(&mut g, "encoder.0.attn", z, 2, "encoder", 0, 0).unwrap();
        let maps = g.take_attention();
        assert_eq!(maps[0].weights.data(), &[1.0, 1.0]);
        // with one token the output is just the value and output projections
        let mut v = zv.matmul(store.get("encoder.0.attn.v.w").unwrap()).unwrap();
        v = v.matmul(store.get("encoder.0.attn.o.w").unwrap()).unwrap();
        assert!(g.tape.value(out).max_abs_diff(&v) < 1e-14);

        let row = random(&[1, 8], 8);
        let zv = Tensor::from_fn(&[3, 8], |i| row.data()[i % 8]);
        let z = g.constant(zv);
        let out = ssa_attend(&mut g, "encoder.0.attn", z, 2, "encoder", 0, 0).unwrap();
        let o = g.tape.value(out);
        assert_eq!(o.row(0), o.row(1));
        assert_eq!(o.row(1), o.row(2));
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let c = cfg(11, 8, 2, 3);
        let store = store_for(&c, 9);
        let mut g = Graph::inference(&store);
        g.record_attention();
        let x = g.constant(random(&[11, 8], 10));
        TemporalStack::new(&c).encoder_block(&mut g, 0, x).unwrap();
        let maps = g.take_attention();
        assert_eq!(maps.len(), 3);
        assert_eq!(maps.iter().map(|m| m.weights.shape()[1]).collect::<Vec<_>>(), vec![4, 4, 3]);
        for m in maps {
            let n = m.weights.shape()[2];
            for row in m.weights.data().chunks(n) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn m1_equals_vanilla_block() {
        let c = cfg(9, 8, 2, 1);
        let store = store_for(&c, 11);
        let stack = TemporalStack::new(&c);
        let xv = random(&[9, 8], 12);
        let mut g = Graph::inference(&store);
        let x = g.constant(xv);
        let a = stack.encoder_block(&mut g, 0, x).unwrap();
        let b = stack.vanilla_block(&mut g, "encoder", 0, x).unwrap();
        assert!(g.tape.value(a).max_abs_diff(g.tape.value(b)) < 1e-12);
    }

    #[test]
    fn zeroed_projections_are_identity() {
        let c = cfg(9, 8, 2, 3);
        let mut store = store_for(&c, 13);
        store.zero_prefix("encoder.0.attn.o");
        store.zero_prefix("encoder.0.ffn2");
        let xv = random(&[9, 8], 14);
        let mut g = Graph::inference(&store);
        let x = g.constant(xv.clone());
        let y = TemporalStack::new(&c).encoder_block(&mut g, 0, x).unwrap();
        assert_eq!(g.tape.value(y), &xv);
    }

    #[test]
    fn residue_classes_do_not_mix() {
        // Perturbing frame 0 only changes the attention output of frames 0, 3, 6.
        let c = cfg(9, 8, 2, 3);
        let mut store = store_for(&c, 15);
        store.zero_prefix("encoder.0.ffn2");
        let stack = TemporalStack::new(&c);
        let run = |xv: Tensor| {
            let mut g = Graph::inference(&store);
            let x = g.constant(xv);
            let y = stack.encoder_block(&mut g, 0, x).unwrap();
            g.tape.value(y).clone()
        };
        let xv = random(&[9, 8], 16);
        let base = run(xv.clone());
        let mut poked = xv;
        for c in 0..8 {
            poked.data_mut()[c] += 0.3;
        }
        let out = run(poked);
        for r in 0..9 {
            assert_eq!(out.row(r) == base.row(r), r % 3 != 0, "row {r}");
        }
    }

    #[test]
    fn encoder_stack_edge_cases() {
        let mut c = cfg(9, 8, 2, 3);
        c.encoder_layers = 0;
        let store = store_for(&c, 17);
        let xv = random(&[9, 8], 18);
        let mut g = Graph::inference(&store);
        let x = g.constant(xv.clone());
        let y = TemporalStack::new(&c).encoder_forward(&mut g, x).unwrap();
        assert_eq!(g.tape.value(y), &xv);

        c.encoder_layers = 1;
        let store = store_for(&c, 17);
        let mut g = Graph::inference(&store);
        let x = g.constant(xv.clone());
        let stack = TemporalStack::new(&c);
        let a = stack.encoder_forward(&mut g, x).unwrap();
        let b = stack.encoder_block(&mut g, 0, x).unwrap();
        assert_eq!(g.tape.value(a), g.tape.value(b));

        c.encoder_layers = 3;
        c.variant = Variant::L;
        let mut store = store_for(&c, 17);
        store.zero_prefix("encoder.");
        let mut g = Graph::inference(&store);
        let x = g.constant(xv.clone());
        let y = TemporalStack::new(&c).encoder_forward(&mut g, x).unwrap();
        assert_eq!(g.tape.value(y), &xv);
    }

    #[test]
    fn decoder_lengths() {
        for (t, m, l2) in [(3, 3, 1), (9, 3, 2), (27, 3, 3), (7, 3, 2), (243, 5, 4)] {
            let c = ModelConfig { frames: t, skip: m, width: 4, heads: 1, encoder_layers: 0, decoder_layers: l2, ..ModelConfig::tiny() };
            let store = store_for(&c, 19);
            let mut g = Graph::inference(&store);
            let x = g.constant(random(&[t, 4], 20));
            let y = TemporalStack::new(&c).decoder_forward(&mut g, x).unwrap();
            assert_eq!(g.tape.shape(y), &[1, 4]);
        }
        let c = ModelConfig { frames: 9, skip: 3, width: 4, heads: 1, decoder_layers: 1, ..ModelConfig::tiny() };
        let store = store_for(&c, 19);
        let mut g = Graph::inference(&store);
        let x = g.constant(random(&[9, 4], 20));
        let err = TemporalStack::new(&c).decoder_forward(&mut g, x).unwrap_err();
        assert!(err.to_string().contains("produced 3 tokens"), "{err}");
        // zero layers on one frame is the identity
        let c = ModelConfig { frames: 1, skip: 3, width: 4, heads: 1, decoder_layers: 0, ..ModelConfig::tiny() };
        let store = store_for(&c, 19);
        let mut g = Graph::inference(&store);
        let xv = random(&[1, 4], 21);
        let x = g.constant(xv.clone());
        let y = TemporalStack::new(&c).decoder_forward(&mut g, x).unwrap();
        assert_eq!(g.tape.value(y), &xv);
    }

    #[test]
    fn decoder_rows_merge_consecutive_frames() {
        // With attention outputs and the FFN silenced, decoder row r depends
        // only on input rows r*m .. r*m+m-1.
        let c = ModelConfig { frames: 9, skip: 3, width: 4, heads: 1, decoder_layers: 1, encoder_layers: 0, ..ModelConfig::tiny() };
        let mut store = store_for(&c, 22);
        store.zero_prefix("decoder.0.attn.o");
        store.zero_prefix("decoder.0.ffn2");
        let stack = TemporalStack::new(&c);
        for probe in 0..9 {
            let mut xv = Tensor::zeros(&[9, 4]);
            xv.data_mut()[probe * 4 + 1] = 1.0;
            let mut g = Graph::inference(&store);
            let x = g.constant(xv);
            let y = stack.decoder_block(&mut g, 0, x).unwrap();
            let v = g.tape.value(y);
            let merge_b = store.get("decoder.0.merge.b").unwrap();
            for r in 0..3 {
                let touched = v.row(r).iter().zip(merge_b.data()).any(|(a, b)| (a - b).abs() > 0.0);
                assert_eq!(touched, r == probe / 3, "probe {probe} row {r}");
            }
            // the one-hot lands in the channel block of its residue class
            let w = store.get("decoder.0.merge.w").unwrap();
            let expect: Vec<f64> = (0..4).map(|o| w.at2((probe % 3) * 4 + 1, o) + merge_b.data()[o]).collect();
            for (a, b) in v.row(probe / 3).iter().zip(&expect) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn strided_and_conv_baselines() {
        let c = ModelConfig {
            frames: 9,
            width: 4,
            heads: 2,
            encoder_layers: 1,
            decoder_layers: 2,
            temporal_mode: TemporalMode::VtStrided,
            ..ModelConfig::tiny()
        };
        let store = store_for(&c, 23);
        let stack = TemporalStack::new(&c);
        let mut g = Graph::inference(&store);
        let x = g.constant(random(&[9, 4], 24));
        let y = stack.strided_block(&mut g, 0, x).unwrap();
        assert_eq!(g.tape.shape(y), &[3, 4]);
        let y = stack.decoder_forward(&mut g, x).unwrap();
        assert_eq!(g.tape.shape(y), &[1, 4]);

        let c = ModelConfig { temporal_mode: TemporalMode::VtConv, ..c };
        let store = store_for(&c, 25);
        let stack = TemporalStack::new(&c);
        let mut g = Graph::inference(&store);
        let x = g.constant(random(&[9, 4], 26));
        let e = stack.encoder_forward(&mut g, x).unwrap();
        assert_eq!(g.tape.shape(e), &[9, 4]);
        let y = stack.decoder_forward(&mut g, x).unwrap();
        assert_eq!(g.tape.shape(y), &[1, 4]);
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn conv1d_matches_direct_sum() {
        let store = {
            let mut s = ParamStore::new();
            s.init_linear(&mut Initializer::new(27), "c", 3 * 2, 5);
            s
        };
        let xv = random(&[7, 2], 28);
        let mut g = Graph::inference(&store);
        let x = g.constant(xv.clone());
        let y = conv1d(&mut g, "c", x, 3, 1, 1).unwrap();
        let w = store.get("c.w").unwrap();
        let v = g.tape.value(y);
        assert_eq!(v.shape(), &[7, 5]);
        for o in 0..7 {
            for out in 0..5 {
                let mut acc = 0.0;
                for j in 0..3 {
                    let r = o as isize + j as isize - 1;
                    if (0..7).contains(&r) {
                        for c in 0..2 {
                            acc += xv.at2(r as usize, c) * w.at2(j * 2 + c, out);
                        }
                    }
                }
                assert!((v.at2(o, out) - acc).abs() < 1e-14);
            }
        }
        let y = conv1d(&mut g, "c", x, 3, 3, 0).unwrap();
        assert_eq!(g.tape.shape(y), &[2, 5]);
    }

    #[test]
    fn param_count_matches_store() {
        for mode in [TemporalMode::Skipped, TemporalMode::VtConv, TemporalMode::VtStrided] {
            for pos in [true, false] {
                let c = ModelConfig {
                    frames: 27,
                    width: 8,
                    heads: 2,
                    encoder_layers: 2,
                    decoder_layers: 3,
                    temporal_mode: mode,
                    temporal_pos_embedding: pos,
                    ..ModelConfig::tiny()
                };
                assert_eq!(TemporalStack::new(&c).param_count(), store_for(&c, 1).scalar_count());
            }
        }
    }
}
