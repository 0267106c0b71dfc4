//! Node-only baselines: a memoryless MLP, per-node GRU/LSTM recurrences, and
//! the fully connected variant that replaces message passing with one dense
//! layer over all nodes' representations.

use rand_chacha::ChaCha8Rng;

use super::pm25gnn::gru_update;
use super::{GraphView, Linear, ModelSpec};
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor};

/// Two-layer MLP applied independently per step; the only model here without
/// any memory. Step t sees the observed start value and the step-t features.
#[derive(Debug, Clone)]
pub struct MlpParams {
    pub l1: Linear,
    pub l2: Linear,
}

impl MlpParams {
    pub(super) fn init(rng: &mut ChaCha8Rng, spec: &ModelSpec, p: usize) -> Self {
        Self {
            l1: Linear::init(rng, 1 + p, spec.h_dim),
            l2: Linear::init(rng, spec.h_dim, 1),
        }
    }

    pub(super) fn push_tensors<'a>(&'a self, out: &mut Vec<(String, &'a Tensor)>) {
        self.l1.push_tensors("l1", out);
        self.l2.push_tensors("l2", out);
    }

    pub(super) fn take_tensors(&mut self, it: &mut impl Iterator<Item = Tensor>) {
        self.l1.take2(it);
        self.l2.take2(it);
    }

    pub(super) fn watch(&self, tape: &Tape) -> Self {
        Self {
            l1: self.l1.watch(tape),
            l2: self.l2.watch(tape),
        }
    }
}

pub(super) fn mlp_forward(
    x0: &Tensor,
    p_panel: &Tensor,
    params: &MlpParams,
    _spec: &ModelSpec,
) -> Result<Tensor> {
    let t_len = p_panel.shape()[0];
    let n = p_panel.shape()[1];
    let mut preds = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let p_t = p_panel.slice_first(t)?;
        let xi = Tensor::concat_cols(&[x0, &p_t])?;
        let y = params.l2.apply(&params.l1.apply(&xi)?.sigmoid()?)?;
        preds.push(y);
    }
    let refs: Vec<&Tensor> = preds.iter().collect();
    Tensor::concat_rows(&refs)?.reshape(vec![t_len, n, 1])
}

/// Gate stacks for the recurrent baselines. GRU uses three gates
/// (update, reset, candidate); LSTM uses four (input, forget, cell, output).
#[derive(Debug, Clone)]
pub struct RecurrentParams {
    pub gates: Vec<Linear>,
    pub omega: Linear,
}

impl RecurrentParams {
    pub(super) fn init_gru(rng: &mut ChaCha8Rng, spec: &ModelSpec, p: usize) -> Self {
        let in_dim = spec.h_dim + 1 + p;
        Self {
            gates: (0..3).map(|_| Linear::init(rng, in_dim, spec.h_dim)).collect(),
            omega: Linear::init(rng, spec.h_dim, 1),
        }
    }

    pub(super) fn init_lstm(rng: &mut ChaCha8Rng, spec: &ModelSpec, p: usize) -> Self {
        let in_dim = spec.h_dim + 1 + p;
        Self {
            gates: (0..4).map(|_| Linear::init(rng, in_dim, spec.h_dim)).collect(),
            omega: Linear::init(rng, spec.h_dim, 1),
        }
    }

    fn gate_names(&self) -> &'static [&'static str] {
        match self.gates.len() {
            3 => &["wz", "wr", "wh"],
            4 => &["wi", "wf", "wg", "wo"],
            _ => unreachable!("recurrent cell has 3 or 4 gates"),
        }
    }

    pub(super) fn push_tensors<'a>(&'a self, out: &mut Vec<(String, &'a Tensor)>) {
        for (g, name) in self.gates.iter().zip(self.gate_names()) {
            g.push_tensors(name, out);
        }
        self.omega.push_tensors("omega", out);
    }

    pub(super) fn take_tensors(&mut self, it: &mut impl Iterator<Item = Tensor>) {
        for g in self.gates.iter_mut() {
            g.take2(it);
        }
        self.omega.take2(it);
    }

    pub(super) fn watch(&self, tape: &Tape) -> Self {
        Self {
            gates: self.gates.iter().map(|g| g.watch(tape)).collect(),
            omega: self.omega.watch(tape),
        }
    }
}

/// Autoregressive per-node recurrence with per-step readout. Nodes never see
/// each other; the row dimension is just a batch.
pub(super) fn recurrent_forward(
    x0: &Tensor,
    p_panel: &Tensor,
    params: &RecurrentParams,
    spec: &ModelSpec,
    lstm: bool,
) -> Result<Tensor> {
    let t_len = p_panel.shape()[0];
    let n = p_panel.shape()[1];
    let mut h = Tensor::zeros(vec![n, spec.h_dim]);
    let mut cell = Tensor::zeros(vec![n, spec.h_dim]);
    let mut x_prev = x0.clone();
    let mut preds = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let p_t = p_panel.slice_first(t)?;
        let xi = Tensor::concat_cols(&[&x_prev, &p_t])?;
        if lstm {
            let cat = Tensor::concat_cols(&[&h, &xi])?;
            let i = params.gates[0].apply(&cat)?.sigmoid()?;
            let f = params.gates[1].apply(&cat)?.sigmoid()?;
            let g = params.gates[2].apply(&cat)?.tanh()?;
            let o = params.gates[3].apply(&cat)?.sigmoid()?;
            cell = f.mul(&cell)?.add(&i.mul(&g)?)?;
            h = o.mul(&cell.tanh()?)?;
        } else {
            h = gru_update(&xi, &h, &params.gates[0], &params.gates[1], &params.gates[2])?;
        }
        let x_hat = params.omega.apply(&h)?;
        preds.push(x_hat.clone());
        x_prev = x_hat;
    }
    let refs: Vec<&Tensor> = preds.iter().collect();
    Tensor::concat_rows(&refs)?.reshape(vec![t_len, n, 1])
}

/// The fully connected variant: the spatial term comes from one affine layer
/// over the concatenation of every node's representation, so each node sees
/// all others but the graph structure and edge features are ignored.
#[derive(Debug, Clone)]
pub struct NodesFcGruParams {
    pub fc: Linear,
    pub gates: Vec<Linear>,
    pub omega: Linear,
    pub n_base: usize,
}

impl NodesFcGruParams {
    pub(super) fn init(
        rng: &mut ChaCha8Rng,
        spec: &ModelSpec,
        p: usize,
        n_base: usize,
    ) -> Self {
        let xi = 1 + p;
        let x_dim = xi + spec.z_dim;
        Self {
            fc: Linear::init(rng, n_base * xi, n_base * spec.z_dim),
            gates: (0..3)
                .map(|_| Linear::init(rng, spec.h_dim + x_dim, spec.h_dim))
                .collect(),
            omega: Linear::init(rng, spec.h_dim, 1),
            n_base,
        }
    }

    pub(super) fn push_tensors<'a>(&'a self, out: &mut Vec<(String, &'a Tensor)>) {
        self.fc.push_tensors("fc", out);
        for (g, name) in self.gates.iter().zip(["wz", "wr", "wh"]) {
            g.push_tensors(name, out);
        }
        self.omega.push_tensors("omega", out);
    }

    pub(super) fn take_tensors(&mut self, it: &mut impl Iterator<Item = Tensor>) {
        self.fc.take2(it);
        for g in self.gates.iter_mut() {
            g.take2(it);
        }
        self.omega.take2(it);
    }

    pub(super) fn watch(&self, tape: &Tape) -> Self {
        Self {
            fc: self.fc.watch(tape),
            gates: self.gates.iter().map(|g| g.watch(tape)).collect(),
            omega: self.omega.watch(tape),
            n_base: self.n_base,
        }
    }
}

pub(super) fn nodesfc_gru_forward(
    x0: &Tensor,
    p_panel: &Tensor,
    params: &NodesFcGruParams,
    spec: &ModelSpec,
    graph: &GraphView,
) -> Result<Tensor> {
    let t_len = p_panel.shape()[0];
    let n = graph.n_nodes;
    if graph.base_nodes != params.n_base || n % params.n_base != 0 {
        return Err(Error::NodeCountMismatch {
            topo_nodes: graph.base_nodes,
            panel_nodes: params.n_base,
        });
    }
    let batch = n / params.n_base;
    let xi_dim = spec.xi_dim();
    let mut h = Tensor::zeros(vec![n, spec.h_dim]);
    let mut x_prev = x0.clone();
    let mut preds = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let p_t = p_panel.slice_first(t)?;
        let xi = Tensor::concat_cols(&[&x_prev, &p_t])?;
        // Row-major [B*n, xi] and [B, n*xi] share the same layout, so the
        // per-sample flatten is a pure reshape.
        let flat = xi.reshape(vec![batch, params.n_base * xi_dim])?;
        let zeta = params
            .fc
            .apply(&flat)?
            .reshape(vec![n, spec.z_dim])?;
        let x = Tensor::concat_cols(&[&xi, &zeta])?;
        h = gru_update(&x, &h, &params.gates[0], &params.gates[1], &params.gates[2])?;
        let x_hat = params.omega.apply(&h)?;
        preds.push(x_hat.clone());
        x_prev = x_hat;
    }
    let refs: Vec<&Tensor> = preds.iter().collect();
    Tensor::concat_rows(&refs)?.reshape(vec![t_len, n, 1])
}
