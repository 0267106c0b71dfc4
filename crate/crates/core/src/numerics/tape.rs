//! Gradient tape: records tensor operations during a forward pass and
//! replays them in reverse to accumulate gradients.
//!
//! The tape is rebuilt on every forward pass (define-by-run). Nodes are
//! appended in execution order, which is already a topological order, so the
//! backward pass is a single reverse sweep that visits each node once.
//! Tensors not created through a tape are treated as constants; mixing a
//! tape tensor with a constant interns the constant as a gradient-less leaf.

use std::sync::{Arc, Mutex};

use super::kernels;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub type IndexVec = Arc<Vec<usize>>;

/// Recorded operation with parent node ids. Parent values are read back from
/// the tape during the reverse sweep.
#[derive(Debug)]
pub(super) enum Op {
    Leaf,
    Matmul { a: usize, b: usize, m: usize, k: usize, n: usize },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    AddBias { a: usize, bias: usize },
    ConcatCols { parts: Vec<usize>, widths: Vec<usize> },
    ConcatRows { parts: Vec<usize>, lens: Vec<usize> },
    GatherRows { a: usize, idx: IndexVec, row_width: usize },
    ScatterAddRows { a: usize, idx: IndexVec, row_width: usize },
    Sigmoid { a: usize },
    Tanh { a: usize },
    Relu { a: usize },
    SumAll { a: usize },
    Scale { a: usize, c: f64 },
    Reshape { a: usize },
}

#[derive(Debug)]
pub(super) struct Node {
    op: Op,
    value: Arc<[f64]>,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub(super) struct TapeInner {
    nodes: Vec<Node>,
}

/// Handle to a shared gradient tape.
///
/// A tape and the tensors recorded on it are meant to be used by one worker
/// at a time; the mutex exists so tensors stay `Send` across worker threads
/// running independent tapes.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    inner: Arc<Mutex<TapeInner>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `t` as a differentiable leaf on this tape and returns the
    /// on-tape handle. The returned tensor shares `t`'s storage.
    pub fn watch(&self, t: &Tensor) -> Tensor {
        let id = self.push(Node {
            op: Op::Leaf,
            value: t.storage(),
            needs_grad: true,
        });
        t.with_tape(self.clone(), id)
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(super) fn same_tape(&self, other: &Tape) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
    }

    fn push(&self, node: Node) -> usize {
        let mut inner = self.inner.lock().unwrap();
        inner.nodes.push(node);
        inner.nodes.len() - 1
    }

    /// Returns `t`'s node id on this tape, interning it as a constant leaf
    /// if it is not already recorded here.
    pub(super) fn node_or_intern(&self, t: &Tensor) -> usize {
        match t.tape_node() {
            Some((tape, id)) if tape.same_tape(self) => id,
            _ => self.push(Node {
                op: Op::Leaf,
                value: t.storage(),
                needs_grad: false,
            }),
        }
    }

    /// Records an op node; `needs_grad` is inherited from the parents.
    pub(super) fn record(&self, op: Op, value: Arc<[f64]>) -> usize {
        let mut inner = self.inner.lock().unwrap();
        let needs_grad = op_parents(&op).any(|p| inner.nodes[p].needs_grad);
        inner.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        inner.nodes.len() - 1
    }
}

fn op_parents(op: &Op) -> impl Iterator<Item = usize> + '_ {
    use Op::*;
    let slice: Vec<usize> = match op {
        Leaf => vec![],
        Matmul { a, b, .. } | Add { a, b } | Sub { a, b } | Mul { a, b } => vec![*a, *b],
        AddBias { a, bias } => vec![*a, *bias],
        ConcatCols { parts, .. } | ConcatRows { parts, .. } => parts.clone(),
        GatherRows { a, .. }
        | ScatterAddRows { a, .. }
        | Sigmoid { a }
        | Tanh { a }
        | Relu { a }
        | SumAll { a }
        | Scale { a, .. }
        | Reshape { a } => vec![*a],
    };
    slice.into_iter()
}

/// Gradients produced by [`backward`], queryable per watched tensor.
pub struct Gradients {
    tape: Tape,
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `t`. Tensors registered on the
    /// tape but unreachable from the loss get zero gradients.
    pub fn get(&self, t: &Tensor) -> Result<Tensor> {
        let (tape, id) = t.tape_node().ok_or(Error::NotOnTape)?;
        if !tape.same_tape(&self.tape) {
            return Err(Error::TapeMismatch);
        }
        let data = match &self.grads[id] {
            Some(g) => g.clone(),
            None => vec![0.0; t.numel()],
        };
        Tensor::new(t.shape().to_vec(), data)
    }
}

/// Reverse sweep from a scalar loss. Returns per-node gradients for every
/// leaf registered with [`Tape::watch`].
pub fn backward(loss: &Tensor) -> Result<Gradients> {
    if loss.numel() != 1 {
        return Err(Error::NonScalarLoss {
            shape: loss.shape().to_vec(),
        });
    }
    let (tape, loss_id) = loss.tape_node().ok_or(Error::NotOnTape)?;

    let inner = tape.inner.lock().unwrap();
    let nodes = &inner.nodes;
    let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
    grads[loss_id] = Some(vec![1.0]);

    for i in (0..=loss_id).rev() {
        if grads[i].is_none() || !nodes[i].needs_grad {
            continue;
        }
        // Leaf gradients are kept for querying; interior ones are consumed.
        let g = match nodes[i].op {
            Op::Leaf => continue,
            _ => grads[i].take().expect("grad present"),
        };
        propagate(nodes, &mut grads, i, &g);
    }

    drop(inner);
    Ok(Gradients { tape, grads })
}

fn buf<'a>(
    nodes: &[Node],
    grads: &'a mut [Option<Vec<f64>>],
    id: usize,
) -> Option<&'a mut Vec<f64>> {
    if !nodes[id].needs_grad {
        return None;
    }
    Some(grads[id].get_or_insert_with(|| vec![0.0; nodes[id].value.len()]))
}

fn axpy(dst: &mut [f64], src: &[f64], c: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += c * s;
    }
}

fn propagate(nodes: &[Node], grads: &mut [Option<Vec<f64>>], id: usize, g: &[f64]) {
    match &nodes[id].op {
        Op::Leaf => {}
        Op::Matmul { a, b, m, k, n } => {
            let (m, k, n) = (*m, *k, *n);
            let av = nodes[*a].value.clone();
            let bv = nodes[*b].value.clone();
            if let Some(ga) = buf(nodes, grads, *a) {
                kernels::matmul_nt_acc(g, &bv, m, n, k, ga);
            }
            if let Some(gb) = buf(nodes, grads, *b) {
                kernels::matmul_tn_acc(&av, g, m, k, n, gb);
            }
        }
        Op::Add { a, b } => {
            if let Some(ga) = buf(nodes, grads, *a) {
                axpy(ga, g, 1.0);
            }
            if let Some(gb) = buf(nodes, grads, *b) {
                axpy(gb, g, 1.0);
            }
        }
        Op::Sub { a, b } => {
            if let Some(ga) = buf(nodes, grads, *a) {
                axpy(ga, g, 1.0);
            }
            if let Some(gb) = buf(nodes, grads, *b) {
                axpy(gb, g, -1.0);
            }
        }
        Op::Mul { a, b } => {
            let av = nodes[*a].value.clone();
            let bv = nodes[*b].value.clone();
            if let Some(ga) = buf(nodes, grads, *a) {
                for ((d, gi), bi) in ga.iter_mut().zip(g).zip(bv.iter()) {
                    *d += gi * bi;
                }
            }
            if let Some(gb) = buf(nodes, grads, *b) {
                for ((d, gi), ai) in gb.iter_mut().zip(g).zip(av.iter()) {
                    *d += gi * ai;
                }
            }
        }
        Op::AddBias { a, bias } => {
            if let Some(ga) = buf(nodes, grads, *a) {
                axpy(ga, g, 1.0);
            }
            let width = nodes[*bias].value.len();
            if let Some(gb) = buf(nodes, grads, *bias) {
                for row in g.chunks_exact(width) {
                    axpy(gb, row, 1.0);
                }
            }
        }
        Op::ConcatCols { parts, widths } => {
            let total: usize = widths.iter().sum();
            for (pi, (&part, &w)) in parts.iter().zip(widths).enumerate() {
                let off: usize = widths[..pi].iter().sum();
                if let Some(gp) = buf(nodes, grads, part) {
                    for (r, gp_row) in gp.chunks_exact_mut(w).enumerate() {
                        axpy(gp_row, &g[r * total + off..r * total + off + w], 1.0);
                    }
                }
            }
        }
        Op::ConcatRows { parts, lens } => {
            let mut off = 0;
            for (&part, &len) in parts.iter().zip(lens) {
                if let Some(gp) = buf(nodes, grads, part) {
                    axpy(gp, &g[off..off + len], 1.0);
                }
                off += len;
            }
        }
        Op::GatherRows { a, idx, row_width } => {
            let w = *row_width;
            if let Some(ga) = buf(nodes, grads, *a) {
                for (r, &src) in idx.iter().enumerate() {
                    axpy(&mut ga[src * w..(src + 1) * w], &g[r * w..(r + 1) * w], 1.0);
                }
            }
        }
        Op::ScatterAddRows { a, idx, row_width } => {
            let w = *row_width;
            if let Some(ga) = buf(nodes, grads, *a) {
                for (r, &dst) in idx.iter().enumerate() {
                    axpy(&mut ga[r * w..(r + 1) * w], &g[dst * w..(dst + 1) * w], 1.0);
                }
            }
        }
        Op::Sigmoid { a } => {
            let y = nodes[id].value.clone();
            if let Some(ga) = buf(nodes, grads, *a) {
                for ((d, gi), yi) in ga.iter_mut().zip(g).zip(y.iter()) {
                    *d += gi * yi * (1.0 - yi);
                }
            }
        }
        Op::Tanh { a } => {
            let y = nodes[id].value.clone();
            if let Some(ga) = buf(nodes, grads, *a) {
                for ((d, gi), yi) in ga.iter_mut().zip(g).zip(y.iter()) {
                    *d += gi * (1.0 - yi * yi);
                }
            }
        }
        Op::Relu { a } => {
            let x = nodes[*a].value.clone();
            if let Some(ga) = buf(nodes, grads, *a) {
                for ((d, gi), xi) in ga.iter_mut().zip(g).zip(x.iter()) {
                    if *xi > 0.0 {
                        *d += gi;
                    }
                }
            }
        }
        Op::SumAll { a } => {
            let g0 = g[0];
            if let Some(ga) = buf(nodes, grads, *a) {
                for d in ga.iter_mut() {
                    *d += g0;
                }
            }
        }
        Op::Scale { a, c } => {
            let c = *c;
            if let Some(ga) = buf(nodes, grads, *a) {
                axpy(ga, g, c);
            }
        }
        Op::Reshape { a } => {
            if let Some(ga) = buf(nodes, grads, *a) {
                axpy(ga, g, 1.0);
            }
        }
    }
}
