//! The graph forecaster: directed message passing over wind-advection edge
//! features, a per-node GRU for temporal accumulation, and an affine readout,
//! rolled out autoregressively over the forecast window.

use rand_chacha::ChaCha8Rng;

use super::{GraphView, Linear, ModelSpec};
use crate::error::{Error, Result};
use crate::featurize::PBL_COL;
use crate::numerics::{Tape, Tensor};

/// Learnable parameters.
///
/// The edge network Ψ is a two-layer MLP (sigmoid hidden activation) over
/// `[ξ_src, ξ_dst, Q_edge]`; Φ and the readout Ω are single affine layers;
/// the GRU gates map `[h, x]` to `h` with biases.
#[derive(Debug, Clone)]
pub struct Pm25GnnParams {
    pub psi1: Linear,
    pub psi2: Linear,
    pub phi: Linear,
    pub wz: Linear,
    pub wr: Linear,
    pub wh: Linear,
    pub omega: Linear,
}

impl Pm25GnnParams {
    pub(super) fn init(rng: &mut ChaCha8Rng, spec: &ModelSpec, p: usize, q: usize) -> Self {
        let xi = 1 + p;
        let x_dim = xi + spec.z_dim;
        Self {
            psi1: Linear::init(rng, 2 * xi + q, spec.psi_hidden),
            psi2: Linear::init(rng, spec.psi_hidden, spec.e_dim),
            phi: Linear::init(rng, spec.e_dim, spec.z_dim),
            wz: Linear::init(rng, spec.h_dim + x_dim, spec.h_dim),
            wr: Linear::init(rng, spec.h_dim + x_dim, spec.h_dim),
            wh: Linear::init(rng, spec.h_dim + x_dim, spec.h_dim),
            omega: Linear::init(rng, spec.h_dim, 1),
        }
    }

    pub(super) fn push_tensors<'a>(&'a self, out: &mut Vec<(String, &'a Tensor)>) {
        self.psi1.push_tensors("psi1", out);
        self.psi2.push_tensors("psi2", out);
        self.phi.push_tensors("phi", out);
        self.wz.push_tensors("wz", out);
        self.wr.push_tensors("wr", out);
        self.wh.push_tensors("wh", out);
        self.omega.push_tensors("omega", out);
    }

    pub(super) fn take_tensors(&mut self, it: &mut impl Iterator<Item = Tensor>) {
        self.psi1.take2(it);
        self.psi2.take2(it);
        self.phi.take2(it);
        self.wz.take2(it);
        self.wr.take2(it);
        self.wh.take2(it);
        self.omega.take2(it);
    }

    pub(super) fn watch(&self, tape: &Tape) -> Self {
        Self {
            psi1: self.psi1.watch(tape),
            psi2: self.psi2.watch(tape),
            phi: self.phi.watch(tape),
            wz: self.wz.watch(tape),
            wr: self.wr.watch(tape),
            wh: self.wh.watch(tape),
            omega: self.omega.watch(tape),
        }
    }

    fn e_dim(&self) -> usize {
        self.psi2.b.shape()[0]
    }
}

/// Node representation: previous prediction concatenated with the node
/// features, `[N,1] ++ [N,p] -> [N,1+p]`.
pub fn node_repr(x_prev: &Tensor, p_t: &Tensor) -> Result<Tensor> {
    Tensor::concat_cols(&[x_prev, p_t])
}

/// One message-passing step.
///
/// For every directed edge `(j -> i)` an edge influence
/// `e = Ψ([ξ_j, ξ_i, Q_edge])` is computed; each node sums incoming
/// influences minus outgoing ones (scatter-add with `+e` at destinations and
/// `-e` at sources) and maps the total through Φ. With `no_export` the
/// subtraction is dropped.
pub fn spatial_step(
    xi: &Tensor,
    q_t: &Tensor,
    graph: &GraphView,
    params: &Pm25GnnParams,
    no_export: bool,
) -> Result<Tensor> {
    let n = graph.n_nodes;
    if xi.shape()[0] != n {
        return Err(Error::NodeCountMismatch {
            topo_nodes: n,
            panel_nodes: xi.shape()[0],
        });
    }
    if q_t.shape()[0] != graph.n_edges() {
        return Err(Error::EdgeCountMismatch {
            topo_edges: graph.n_edges(),
            panel_edges: q_t.shape()[0],
        });
    }
    let agg = if graph.n_edges() == 0 {
        Tensor::zeros(vec![n, params.e_dim()])
    } else {
        let xi_src = xi.gather_rows(&graph.src)?;
        let xi_dst = xi.gather_rows(&graph.dst)?;
        let psi_in = Tensor::concat_cols(&[&xi_src, &xi_dst, q_t])?;
        let e = params.psi2.apply(&params.psi1.apply(&psi_in)?.sigmoid()?)?;
        let import = e.scatter_add_rows(&graph.dst, n)?;
        if no_export {
            import
        } else {
            import.sub(&e.scatter_add_rows(&graph.src, n)?)?
        }
    };
    params.phi.apply(&agg)
}

/// Gated recurrent update, `[N,x] × [N,h] -> [N,h]`:
/// `z = σ(Wz·[h,x])`, `r = σ(Wr·[h,x])`, `h̃ = tanh(W·[r⊙h, x])`,
/// `h' = (1-z)⊙h + z⊙h̃`.
pub fn gru_cell(x: &Tensor, h_prev: &Tensor, params: &Pm25GnnParams) -> Result<Tensor> {
    gru_update(x, h_prev, &params.wz, &params.wr, &params.wh)
}

pub(super) fn gru_update(
    x: &Tensor,
    h_prev: &Tensor,
    wz: &Linear,
    wr: &Linear,
    wh: &Linear,
) -> Result<Tensor> {
    let cat = Tensor::concat_cols(&[h_prev, x])?;
    let z = wz.apply(&cat)?.sigmoid()?;
    let r = wr.apply(&cat)?.sigmoid()?;
    let cat_r = Tensor::concat_cols(&[&r.mul(h_prev)?, x])?;
    let h_tilde = wh.apply(&cat_r)?.tanh()?;
    h_prev.sub(&z.mul(h_prev)?)?.add(&z.mul(&h_tilde)?)
}

/// Affine readout from hidden state to a standardized prediction `[N,1]`.
pub fn readout(h: &Tensor, params: &Pm25GnnParams) -> Result<Tensor> {
    params.omega.apply(h)
}

/// Autoregressive rollout over `T` steps from the observed start value.
///
/// The hidden state starts at zero; step τ consumes the step-(τ-1)
/// prediction (the observation for τ=1). Panels hold the features for steps
/// `1..=T`. Fully differentiable.
pub fn rollout(
    x0: &Tensor,
    p_panel: &Tensor,
    q_panel: &Tensor,
    graph: &GraphView,
    params: &Pm25GnnParams,
    spec: &ModelSpec,
) -> Result<Tensor> {
    let t_len = p_panel.shape()[0];
    if q_panel.shape()[0] != t_len {
        return Err(Error::ShapeMismatch {
            op: "rollout",
            lhs: p_panel.shape().to_vec(),
            rhs: q_panel.shape().to_vec(),
        });
    }
    let n = graph.n_nodes;
    let p_panel = if spec.drop_pbl {
        super::zero_panel_column(p_panel, PBL_COL)
    } else {
        p_panel.clone()
    };

    let mut h = Tensor::zeros(vec![n, spec.h_dim]);
    let mut x_prev = x0.clone();
    let mut preds: Vec<Tensor> = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let p_t = p_panel.slice_first(t)?;
        let q_t = q_panel.slice_first(t)?;
        let xi = node_repr(&x_prev, &p_t)?;
        let zeta = spatial_step(&xi, &q_t, graph, params, spec.no_export)?;
        let x = Tensor::concat_cols(&[&xi, &zeta])?;
        h = gru_cell(&x, &h, params)?;
        let x_hat = readout(&h, params)?;
        preds.push(x_hat.clone());
        x_prev = x_hat;
    }
    let refs: Vec<&Tensor> = preds.iter().collect();
    Tensor::concat_rows(&refs)?.reshape(vec![t_len, n, 1])
}
