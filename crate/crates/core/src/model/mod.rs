//! Forecasting models: the message-passing + recurrent graph model and the
//! node-only baselines it is compared against.
//!
//! All models run autoregressively: the prediction for step t feeds the
//! input representation for step t+1, with the observed concentration used
//! at the start. Everything operates in standardized space.

mod baselines;
mod pm25gnn;

pub use baselines::{MlpParams, NodesFcGruParams, RecurrentParams};
pub use pm25gnn::{gru_cell, node_repr, readout, rollout, spatial_step, Pm25GnnParams};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::featurize::{EDGE_FEATURE_COUNT, NODE_FEATURE_COUNT};
use crate::geograph::GraphTopology;
use crate::numerics::{IndexVec, Tape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Pm25Gnn,
    Mlp,
    Gru,
    Lstm,
    NodesFcGru,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Pm25Gnn,
        ModelKind::Mlp,
        ModelKind::Gru,
        ModelKind::Lstm,
        ModelKind::NodesFcGru,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Pm25Gnn => "pm25gnn",
            ModelKind::Mlp => "mlp",
            ModelKind::Gru => "gru",
            ModelKind::Lstm => "lstm",
            ModelKind::NodesFcGru => "nodesfc_gru",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownModelKind(s.to_string()))
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Model selection: kind, hidden sizes, ablation flags and the init seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub e_dim: usize,
    pub z_dim: usize,
    pub h_dim: usize,
    pub psi_hidden: usize,
    /// Zero out the PBL-height node feature.
    pub drop_pbl: bool,
    /// Drop the export term from the edge aggregation.
    pub no_export: bool,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            e_dim: 32,
            z_dim: 32,
            h_dim: 64,
            psi_hidden: 32,
            drop_pbl: false,
            no_export: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if (self.drop_pbl || self.no_export) && self.kind != ModelKind::Pm25Gnn {
            return Err(Error::AblationNotSupported {
                kind: self.kind.name().to_string(),
            });
        }
        Ok(())
    }

    /// Input width of a node representation: previous concentration plus the
    /// node features.
    pub fn xi_dim(&self) -> usize {
        1 + NODE_FEATURE_COUNT
    }
}

/// Minimal directed-graph view the models operate on: node count plus
/// per-edge source/destination index vectors (shared with the tape ops).
///
/// `base_nodes` tracks the per-sample node count; a batched view built with
/// [`GraphView::replicate`] keeps it so models with sample-level layers can
/// recover the batch size.
#[derive(Debug, Clone)]
pub struct GraphView {
    pub n_nodes: usize,
    pub base_nodes: usize,
    pub src: IndexVec,
    pub dst: IndexVec,
}

impl GraphView {
    pub fn new(n_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        for &(s, d) in edges {
            if s >= n_nodes || d >= n_nodes {
                return Err(Error::GatherIndexOutOfRange {
                    index: s.max(d),
                    rows: n_nodes,
                });
            }
        }
        Ok(Self {
            n_nodes,
            base_nodes: n_nodes,
            src: Arc::new(edges.iter().map(|e| e.0).collect()),
            dst: Arc::new(edges.iter().map(|e| e.1).collect()),
        })
    }

    pub fn from_topology(topo: &GraphTopology) -> Self {
        Self::new(topo.n_nodes(), &topo.edges).expect("topology edges are validated")
    }

    pub fn n_edges(&self) -> usize {
        self.src.len()
    }

    /// Block-diagonal replication for batched rollouts: copy `b` shifts all
    /// node ids by `b * n_nodes`.
    pub fn replicate(&self, copies: usize) -> GraphView {
        let mut src = Vec::with_capacity(self.n_edges() * copies);
        let mut dst = Vec::with_capacity(self.n_edges() * copies);
        for b in 0..copies {
            let off = b * self.n_nodes;
            src.extend(self.src.iter().map(|&s| s + off));
            dst.extend(self.dst.iter().map(|&d| d + off));
        }
        GraphView {
            n_nodes: self.n_nodes * copies,
            base_nodes: self.base_nodes,
            src: Arc::new(src),
            dst: Arc::new(dst),
        }
    }
}

/// One affine layer `x·W + b` with `W: [in, out]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Tensor,
    pub b: Tensor,
}

impl Linear {
    fn init(rng: &mut ChaCha8Rng, fan_in: usize, out: usize) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let data: Vec<f64> = (0..fan_in * out)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Self {
            w: Tensor::new(vec![fan_in, out], data).expect("init shape"),
            b: Tensor::zeros(vec![out]),
        }
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        x.matmul(&self.w)?.add_bias(&self.b)
    }

    fn watch(&self, tape: &Tape) -> Linear {
        Linear {
            w: tape.watch(&self.w),
            b: tape.watch(&self.b),
        }
    }

    fn push_tensors<'a>(&'a self, name: &str, out: &mut Vec<(String, &'a Tensor)>) {
        out.push((format!("{name}.w"), &self.w));
        out.push((format!("{name}.b"), &self.b));
    }

    fn take2(&mut self, it: &mut impl Iterator<Item = Tensor>) {
        self.w = it.next().expect("tensor for weight");
        self.b = it.next().expect("tensor for bias");
    }
}

/// The learnable parameter set for one model kind.
#[derive(Debug, Clone)]
pub enum ModelParams {
    Pm25Gnn(Pm25GnnParams),
    Mlp(MlpParams),
    Gru(RecurrentParams),
    Lstm(RecurrentParams),
    NodesFcGru(NodesFcGruParams),
}

impl ModelParams {
    /// Seeded initialization: weights uniform in ±1/√fan_in, biases zero.
    /// `n_base` is the per-sample node count (used by the fully connected
    /// variant, whose layer width depends on it).
    pub fn init(spec: &ModelSpec, n_base: usize) -> Result<Self> {
        spec.validate()?;
        let p = NODE_FEATURE_COUNT;
        let q = EDGE_FEATURE_COUNT;
        let mut rng = rand::SeedableRng::seed_from_u64(spec.seed);
        Ok(match spec.kind {
            ModelKind::Pm25Gnn => {
                ModelParams::Pm25Gnn(Pm25GnnParams::init(&mut rng, spec, p, q))
            }
            ModelKind::Mlp => ModelParams::Mlp(MlpParams::init(&mut rng, spec, p)),
            ModelKind::Gru => ModelParams::Gru(RecurrentParams::init_gru(&mut rng, spec, p)),
            ModelKind::Lstm => ModelParams::Lstm(RecurrentParams::init_lstm(&mut rng, spec, p)),
            ModelKind::NodesFcGru => {
                ModelParams::NodesFcGru(NodesFcGruParams::init(&mut rng, spec, p, n_base))
            }
        })
    }

    /// Parameter tensors with stable names, in a fixed order shared by
    /// [`tensors`](Self::tensors) and [`replace_tensors`](Self::replace_tensors).
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        match self {
            ModelParams::Pm25Gnn(p) => p.push_tensors(&mut out),
            ModelParams::Mlp(p) => p.push_tensors(&mut out),
            ModelParams::Gru(p) | ModelParams::Lstm(p) => p.push_tensors(&mut out),
            ModelParams::NodesFcGru(p) => p.push_tensors(&mut out),
        }
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }

    /// Replaces all parameter tensors, in [`named_tensors`](Self::named_tensors)
    /// order.
    pub fn replace_tensors(&mut self, tensors: Vec<Tensor>) {
        let mut it = tensors.into_iter();
        match self {
            ModelParams::Pm25Gnn(p) => p.take_tensors(&mut it),
            ModelParams::Mlp(p) => p.take_tensors(&mut it),
            ModelParams::Gru(p) | ModelParams::Lstm(p) => p.take_tensors(&mut it),
            ModelParams::NodesFcGru(p) => p.take_tensors(&mut it),
        }
        assert!(it.next().is_none(), "extra tensors in replace_tensors");
    }

    /// A copy with every parameter registered on `tape` for training.
    pub fn watch(&self, tape: &Tape) -> ModelParams {
        match self {
            ModelParams::Pm25Gnn(p) => ModelParams::Pm25Gnn(p.watch(tape)),
            ModelParams::Mlp(p) => ModelParams::Mlp(p.watch(tape)),
            ModelParams::Gru(p) => ModelParams::Gru(p.watch(tape)),
            ModelParams::Lstm(p) => ModelParams::Lstm(p.watch(tape)),
            ModelParams::NodesFcGru(p) => ModelParams::NodesFcGru(p.watch(tape)),
        }
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|t| t.numel()).sum()
    }
}

/// Total learnable parameter count for a spec on an `n_base`-node graph.
pub fn count_params(spec: &ModelSpec, n_base: usize) -> Result<usize> {
    Ok(ModelParams::init(spec, n_base)?.count())
}

/// Runs the model named by `spec` over the forecast window.
///
/// `x0` is the observed standardized concentration at the start `[N,1]`;
/// `p_panel`/`q_panel` are the standardized feature slices for steps
/// `1..=T` (`[T,N,p]` and `[T,M,q]`); the result is `[T,N,1]` standardized
/// predictions, differentiable end to end.
pub fn forward(
    spec: &ModelSpec,
    params: &ModelParams,
    x0: &Tensor,
    p_panel: &Tensor,
    q_panel: &Tensor,
    graph: &GraphView,
) -> Result<Tensor> {
    match (spec.kind, params) {
        (ModelKind::Pm25Gnn, ModelParams::Pm25Gnn(p)) => {
            rollout(x0, p_panel, q_panel, graph, p, spec)
        }
        (ModelKind::Mlp, ModelParams::Mlp(p)) => baselines::mlp_forward(x0, p_panel, p, spec),
        (ModelKind::Gru, ModelParams::Gru(p)) => {
            baselines::recurrent_forward(x0, p_panel, p, spec, false)
        }
        (ModelKind::Lstm, ModelParams::Lstm(p)) => {
            baselines::recurrent_forward(x0, p_panel, p, spec, true)
        }
        (ModelKind::NodesFcGru, ModelParams::NodesFcGru(p)) => {
            baselines::nodesfc_gru_forward(x0, p_panel, p, spec, graph)
        }
        (kind, _) => Err(Error::UnknownModelKind(format!(
            "params do not match model kind {kind}"
        ))),
    }
}

/// Forward pass for the node-only baselines; rejects the graph model.
pub fn baseline_forward(
    spec: &ModelSpec,
    params: &ModelParams,
    x0: &Tensor,
    p_panel: &Tensor,
    graph: &GraphView,
) -> Result<Tensor> {
    if spec.kind == ModelKind::Pm25Gnn {
        return Err(Error::UnknownModelKind(
            "baseline_forward called with the graph model".into(),
        ));
    }
    let empty_q = Tensor::zeros(vec![p_panel.shape()[0], graph.n_edges(), 0]);
    forward(spec, params, x0, p_panel, &empty_q, graph)
}

/// Zeroes one feature column of a `[T,N,p]` panel (plain value op).
pub(crate) fn zero_panel_column(panel: &Tensor, col: usize) -> Tensor {
    let shape = panel.shape().to_vec();
    let p = shape[2];
    let mut data = panel.to_vec();
    for row in data.chunks_exact_mut(p) {
        row[col] = 0.0;
    }
    Tensor::new(shape, data).expect("same shape")
}
