//! Per-frame spatial encoder over body parts.
//!
//! Joints are grouped into parts, each part is embedded by one shared MLP
//! plus a learned position embedding, and an adjacency between parts is
//! computed from the part features themselves:
//!
//! ```text
//! e_ij = <w, |f_i + f_j|>,  alpha_ij = sigmoid(e_ij)
//! f'_i = [ act(sum_j alpha_ij f_j) , f_i ]
//! ```
//!
//! There is no skeleton prior anywhere in the adjacency. The concatenated
//! node features are flattened, projected to the token width and added to a
//! linear embedding of all raw joint coordinates.

use crate::error::{Error, Result};
use crate::model::{Activation, ModelConfig, SpatialMode};
use crate::params::{AttentionRecord, Graph, ParamStore};
use crate::tensor::{Initializer, Tensor, Var};

/// Partition of joint indices into body parts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartGrouping {
    parts: Vec<Vec<usize>>,
}

impl PartGrouping {
    /// Trunk, left arm, right arm, left leg, right leg over the 17-joint
    /// Human3.6M ordering.
    pub fn human36m() -> Self {
        Self {
            parts: vec![
                vec![0, 7, 8, 9, 10],
                vec![11, 12, 13],
                vec![14, 15, 16],
                vec![4, 5, 6],
                vec![1, 2, 3],
            ],
        }
    }

    /// One part per joint.
    pub fn singletons(joints: usize) -> Self {
        Self { parts: (0..joints).map(|j| vec![j]).collect() }
    }

    /// Checks that the parts are non-empty, disjoint and cover `0..joints`.
    pub fn new(parts: Vec<Vec<usize>>, joints: usize) -> Result<Self> {
        if parts.is_empty() || parts.iter().any(Vec::is_empty) {
            return Err(Error::config("grouping", "parts must be non-empty"));
        }
        let mut seen = vec![false; joints];
        for &j in parts.iter().flatten() {
            if j >= joints {
                return Err(Error::config("grouping", format!("joint {j} out of range for {joints} joints")));
            }
            if std::mem::replace(&mut seen[j], true) {
                return Err(Error::config("grouping", format!("joint {j} appears in more than one part")));
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::config("grouping", format!("joint {missing} is not assigned to a part")));
        }
        Ok(Self { parts })
    }

    pub fn parts(&self) -> &[Vec<usize>] {
        &self.parts
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn joints(&self) -> usize {
        self.parts.iter().map(Vec::len).sum()
    }

    pub fn max_part_size(&self) -> usize {
        self.parts.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Coordinates of each part, flattened in listed joint order.
    pub fn group_joints(&self, frame: &[[f64; 2]]) -> Result<Vec<Vec<f64>>> {
        self.parts
            .iter()
            .map(|part| {
                part.iter()
                    .map(|&j| {
                        frame.get(j).copied().ok_or_else(|| {
                            Error::Index(format!("joint {j} out of range for a {}-joint frame", frame.len()))
                        })
                    })
                    .collect::<Result<Vec<_>>>()
                    .map(|xy| xy.into_iter().flatten().collect())
            })
            .collect()
    }

    /// Part inputs for a whole clip, zero-padded to `2·max_part_size`:
    /// `[(T·N)×(2·max_part_size)]`, frame-major. `clip` is `[T×2J]`.
    pub fn part_inputs(&self, clip: &Tensor) -> Result<Tensor> {
        let (frames, cols) = clip.dims2()?;
        let joints = cols / 2;
        let width = 2 * self.max_part_size();
        let n = self.len();
        let mut data = vec![0.0; frames * n * width];
        for t in 0..frames {
            let row = clip.row(t);
            let frame: Vec<[f64; 2]> = (0..joints).map(|j| [row[2 * j], row[2 * j + 1]]).collect();
            for (p, coords) in self.group_joints(&frame)?.into_iter().enumerate() {
                let base = (t * n + p) * width;
                data[base..base + coords.len()].copy_from_slice(&coords);
            }
        }
        Tensor::new(vec![frames * n, width], data)
    }
}

/// Spatial encoder built from a [`ModelConfig`].
#[derive(Clone, Debug)]
pub struct SpatialEncoder {
    grouping: PartGrouping,
    mode: SpatialMode,
    activation: Activation,
    channels: usize,
    width: usize,
    joints: usize,
}

impl SpatialEncoder {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        let grouping = match cfg.spatial_mode {
            SpatialMode::JointwiseGcn => PartGrouping::singletons(cfg.joints),
            _ => cfg.grouping()?,
        };
        Ok(Self {
            grouping,
            mode: cfg.spatial_mode,
            activation: cfg.activation,
            channels: cfg.part_channels,
            width: cfg.width,
            joints: cfg.joints,
        })
    }

    pub fn grouping(&self) -> &PartGrouping {
        &self.grouping
    }

    /// Graph node count (parts, or joints in joint-wise mode).
    pub fn nodes(&self) -> usize {
        self.grouping.len()
    }

    pub fn input_width(&self) -> usize {
        2 * self.grouping.max_part_size()
    }

    pub fn init_params(&self, store: &mut ParamStore, init: &mut Initializer) {
        let (c, n) = (self.channels, self.nodes());
        store.init_linear(init, "spatial.mlp1", self.input_width(), c);
        store.init_linear(init, "spatial.mlp2", c, c);
        store.insert("spatial.pos", init.uniform(&[n, c], c));
        match self.mode {
            SpatialMode::Mlp => store.init_linear(init, "spatial.proj", n * c, self.width),
            _ => {
                store.insert("spatial.attn.w", init.uniform(&[c, 1], c));
                store.init_linear(init, "spatial.proj", n * 2 * c, self.width);
            }
        }
        store.init_linear(init, "spatial.residual", 2 * self.joints, self.width);
    }

    /// Closed-form parameter count, independent of [`Self::init_params`].
    pub fn param_count(&self) -> usize {
        let (c, n, d) = (self.channels, self.nodes(), self.width);
        let mlp = (self.input_width() * c + c) + (c * c + c);
        let pos = n * c;
        let graph = match self.mode {
            SpatialMode::Mlp => n * c * d + d,
            _ => c + n * 2 * c * d + d,
        };
        mlp + pos + graph + (2 * self.joints * d + d)
    }

    /// Shared MLP over every part of every frame plus the position
    /// embedding: `[(T·N)×in] -> [(T·N)×C]`.
    pub fn encode_parts(&self, g: &mut Graph, parts: Var, frames: usize) -> Result<Var> {
        let n = self.nodes();
        let h = g.linear(parts, "spatial.mlp1")?;
        let h = g.tape.gelu(h)?;
        let f = g.linear(h, "spatial.mlp2")?;
        let pos = g.p("spatial.pos")?;
        let rows: Vec<usize> = (0..frames * n).map(|r| r % n).collect();
        let pos = g.tape.gather_rows(pos, &rows)?;
        g.tape.add(f, pos)
    }

    /// Learned adjacency `[T×N×N]` from part features `[(T·N)×C]`.
    pub fn part_attention(&self, g: &mut Graph, f: Var, frames: usize) -> Result<Var> {
        let n = self.nodes();
        let mut left = Vec::with_capacity(frames * n * n);
        let mut right = Vec::with_capacity(frames * n * n);
        for t in 0..frames {
            for i in 0..n {
                for j in 0..n {
                    left.push(t * n + i);
                    right.push(t * n + j);
                }
            }
        }
        let fi = g.tape.gather_rows(f, &left)?;
        let fj = g.tape.gather_rows(f, &right)?;
        let s = g.tape.add(fi, fj)?;
        let s = g.tape.abs(s)?;
        let w = g.p("spatial.attn.w")?;
        let e = g.tape.matmul(s, w)?;
        let alpha = g.tape.sigmoid(e)?;
        let alpha = g.tape.reshape(alpha, &[frames, n, n])?;
        if g.recording_attention() {
            let a = g.tape.value(alpha);
            let mut summed = Tensor::zeros(&[n, n]);
            for t in 0..frames {
                for (o, v) in summed.data_mut().iter_mut().zip(&a.data()[t * n * n..(t + 1) * n * n]) {
                    *o += v;
                }
            }
            g.push_attention(AttentionRecord { stage: "spatial", layer: 0, set: 0, weights: summed });
        }
        Ok(alpha)
    }

    /// Node update: `[act(alpha·f), f]`, giving `[(T·N)×2C]`.
    pub fn aggregate_update(&self, g: &mut Graph, f: Var, alpha: Var, frames: usize) -> Result<Var> {
        let (n, c) = (self.nodes(), self.channels);
        let f3 = g.tape.reshape(f, &[frames, n, c])?;
        let agg = g.tape.batch_matmul(alpha, f3, false)?;
        let agg = g.tape.reshape(agg, &[frames * n, c])?;
        let agg = match self.activation {
            Activation::Gelu => g.tape.gelu(agg)?,
            Activation::Relu => g.tape.relu(agg)?,
        };
        g.tape.concat_cols(&[agg, f])
    }

    /// Clip `[T×2J]` (normalized 2D coordinates) to tokens `[T×D]`.
    pub fn forward(&self, g: &mut Graph, clip: &Tensor) -> Result<Var> {
        let (frames, cols) = clip.dims2()?;
        if cols != 2 * self.joints {
            return Err(Error::Shape(format!("clip has {cols} columns, expected {}", 2 * self.joints)));
        }
        let prev = g.tape.set_scope("spatial");
        let n = self.nodes();
        let parts = g.constant(self.grouping.part_inputs(clip)?);
        let f = self.encode_parts(g, parts, frames)?;
        let graph_path = match self.mode {
            SpatialMode::Mlp => {
                let flat = g.tape.reshape(f, &[frames, n * self.channels])?;
                g.linear(flat, "spatial.proj")?
            }
            _ => {
                let alpha = self.part_attention(g, f, frames)?;
                let updated = self.aggregate_update(g, f, alpha, frames)?;
                let flat = g.tape.reshape(updated, &[frames, n * 2 * self.channels])?;
                g.linear(flat, "spatial.proj")?
            }
        };
        let raw = g.constant(clip.clone());
        let residual = g.linear(raw, "spatial.residual")?;
        let out = g.tape.add(graph_path, residual)?;
        g.tape.set_scope(&prev);
        Ok(out)
    }
}
