//! Dense row-major tensor with optional gradient-tape participation.

use std::sync::Arc;

use super::tape::{IndexVec, Op, Tape};
use crate::error::{Error, Result};

/// Dense n-dimensional array of f64 values.
///
/// Storage is immutable and shared; "mutation" (e.g. an optimizer step)
/// produces a new tensor. A tensor built through tape-recording ops carries a
/// handle to its tape node so the backward sweep can find it.
#[derive(Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<[f64]>,
    tape: Option<(Tape, usize)>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("on_tape", &self.tape.is_some())
            .finish()
    }
}

impl PartialEq for Tensor {
    /// Value equality: same shape and bitwise-equal data. Tape identity is
    /// ignored.
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape && *self.data == *other.data
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::InvalidShape {
                op: "new",
                shape,
                reason: format!("data has {} values", data.len()),
            });
        }
        Ok(Self {
            shape,
            data: data.into(),
            tape: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; numel].into(),
            tape: None,
        }
    }

    pub fn filled(shape: Vec<usize>, v: f64) -> Self {
        let numel = shape.iter().product();
        Self {
            shape,
            data: vec![v; numel].into(),
            tape: None,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: vec![],
            data: vec![v].into(),
            tape: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.data.to_vec()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn is_on_tape(&self) -> bool {
        self.tape.is_some()
    }

    /// Copy with the tape handle stripped; used to treat a value as constant.
    pub fn detach(&self) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.clone(),
            tape: None,
        }
    }

    pub(super) fn storage(&self) -> Arc<[f64]> {
        self.data.clone()
    }

    pub(super) fn tape_node(&self) -> Option<(Tape, usize)> {
        self.tape.clone()
    }

    pub(super) fn with_tape(&self, tape: Tape, node: usize) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.clone(),
            tape: Some((tape, node)),
        }
    }

    fn rank2(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::InvalidShape {
                op,
                shape: self.shape.clone(),
                reason: "expected rank 2".into(),
            }),
        }
    }

    fn first_dim(&self, op: &'static str) -> Result<(usize, usize)> {
        if self.shape.is_empty() || self.shape[0] == 0 {
            return Err(Error::InvalidShape {
                op,
                shape: self.shape.clone(),
                reason: "expected a non-empty first dimension".into(),
            });
        }
        let rows = self.shape[0];
        Ok((rows, self.numel() / rows))
    }
}

/// Finds the unique tape among operands; two distinct tapes is an error.
fn unify_tape(ops: &[&Tensor]) -> Result<Option<Tape>> {
    let mut found: Option<Tape> = None;
    for t in ops {
        if let Some((tape, _)) = &t.tape {
            match &found {
                None => found = Some(tape.clone()),
                Some(existing) if existing.same_tape(tape) => {}
                Some(_) => return Err(Error::TapeMismatch),
            }
        }
    }
    Ok(found)
}

/// Builds the result tensor, recording the op when any operand is on a tape.
fn finish(
    tape: Option<Tape>,
    shape: Vec<usize>,
    data: Vec<f64>,
    make_op: impl FnOnce(&Tape) -> Op,
) -> Tensor {
    let data: Arc<[f64]> = data.into();
    match tape {
        None => Tensor {
            shape,
            data,
            tape: None,
        },
        Some(t) => {
            let op = make_op(&t);
            let id = t.record(op, data.clone());
            Tensor {
                shape,
                data,
                tape: Some((t, id)),
            }
        }
    }
}

impl Tensor {
    /// Matrix product `[m,k] · [k,n] -> [m,n]`.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let (m, k) = self.rank2("matmul")?;
        let (k2, n) = rhs.rank2("matmul")?;
        if k != k2 || m == 0 || k == 0 || n == 0 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: self.shape.clone(),
                rhs: rhs.shape.clone(),
            });
        }
        let mut out = vec![0.0; m * n];
        super::kernels::matmul_acc(&self.data, &rhs.data, m, k, n, &mut out);
        Ok(finish(
            unify_tape(&[self, rhs])?,
            vec![m, n],
            out,
            |t| Op::Matmul {
                a: t.node_or_intern(self),
                b: t.node_or_intern(rhs),
                m,
                k,
                n,
            },
        ))
    }

    fn zip(&self, rhs: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Vec<f64>> {
        if self.shape != rhs.shape {
            return Err(Error::ShapeMismatch {
                op,
                lhs: self.shape.clone(),
                rhs: rhs.shape.clone(),
            });
        }
        Ok(self
            .data
            .iter()
            .zip(rhs.data.iter())
            .map(|(&a, &b)| f(a, b))
            .collect())
    }

    pub fn add(&self, rhs: &Tensor) -> Result<Tensor> {
        let out = self.zip(rhs, "add", |a, b| a + b)?;
        Ok(finish(
            unify_tape(&[self, rhs])?,
            self.shape.clone(),
            out,
            |t| Op::Add {
                a: t.node_or_intern(self),
                b: t.node_or_intern(rhs),
            },
        ))
    }

    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor> {
        let out = self.zip(rhs, "sub", |a, b| a - b)?;
        Ok(finish(
            unify_tape(&[self, rhs])?,
            self.shape.clone(),
            out,
            |t| Op::Sub {
                a: t.node_or_intern(self),
                b: t.node_or_intern(rhs),
            },
        ))
    }

    /// Elementwise product.
    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor> {
        let out = self.zip(rhs, "mul", |a, b| a * b)?;
        Ok(finish(
            unify_tape(&[self, rhs])?,
            self.shape.clone(),
            out,
            |t| Op::Mul {
                a: t.node_or_intern(self),
                b: t.node_or_intern(rhs),
            },
        ))
    }

    /// Adds a `[n]` bias vector to every row of a `[m,n]` matrix.
    pub fn add_bias(&self, bias: &Tensor) -> Result<Tensor> {
        let (_, n) = self.rank2("add_bias")?;
        if bias.shape[..] != [n] {
            return Err(Error::ShapeMismatch {
                op: "add_bias",
                lhs: self.shape.clone(),
                rhs: bias.shape.clone(),
            });
        }
        let mut out = self.data.to_vec();
        for row in out.chunks_exact_mut(n) {
            for (o, b) in row.iter_mut().zip(bias.data.iter()) {
                *o += b;
            }
        }
        Ok(finish(
            unify_tape(&[self, bias])?,
            self.shape.clone(),
            out,
            |t| Op::AddBias {
                a: t.node_or_intern(self),
                bias: t.node_or_intern(bias),
            },
        ))
    }

    fn unary(
        &self,
        f: impl Fn(f64) -> f64,
        make_op: impl FnOnce(usize) -> Op,
    ) -> Result<Tensor> {
        let out: Vec<f64> = self.data.iter().map(|&x| f(x)).collect();
        Ok(finish(
            unify_tape(&[self])?,
            self.shape.clone(),
            out,
            |t| make_op(t.node_or_intern(self)),
        ))
    }

    pub fn sigmoid(&self) -> Result<Tensor> {
        self.unary(|x| 1.0 / (1.0 + (-x).exp()), |a| Op::Sigmoid { a })
    }

    pub fn tanh(&self) -> Result<Tensor> {
        self.unary(f64::tanh, |a| Op::Tanh { a })
    }

    pub fn relu(&self) -> Result<Tensor> {
        self.unary(|x| if x > 0.0 { x } else { 0.0 }, |a| Op::Relu { a })
    }

    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum_all(&self) -> Result<Tensor> {
        let s = self.data.iter().sum::<f64>();
        Ok(finish(unify_tape(&[self])?, vec![], vec![s], |t| {
            Op::SumAll {
                a: t.node_or_intern(self),
            }
        }))
    }

    pub fn scale(&self, c: f64) -> Result<Tensor> {
        self.unary(|x| c * x, |a| Op::Scale { a, c })
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return Err(Error::InvalidShape {
                op: "reshape",
                shape,
                reason: format!("tensor has {} values", self.numel()),
            });
        }
        Ok(finish(
            unify_tape(&[self])?,
            shape,
            self.data.to_vec(),
            |t| Op::Reshape {
                a: t.node_or_intern(self),
            },
        ))
    }

    /// Concatenates rank-2 tensors along the column axis.
    pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor> {
        assert!(!parts.is_empty());
        let (rows, _) = parts[0].rank2("concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let (r, c) = p.rank2("concat_cols")?;
            if r != rows {
                return Err(Error::ShapeMismatch {
                    op: "concat_cols",
                    lhs: parts[0].shape.clone(),
                    rhs: p.shape.clone(),
                });
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; rows * total];
        for r in 0..rows {
            let mut off = 0;
            for (p, &w) in parts.iter().zip(&widths) {
                out[r * total + off..r * total + off + w]
                    .copy_from_slice(&p.data[r * w..(r + 1) * w]);
                off += w;
            }
        }
        Ok(finish(
            unify_tape(parts)?,
            vec![rows, total],
            out,
            |t| Op::ConcatCols {
                parts: parts.iter().map(|p| t.node_or_intern(p)).collect(),
                widths,
            },
        ))
    }

    /// Concatenates tensors along the first axis; trailing dims must agree.
    pub fn concat_rows(parts: &[&Tensor]) -> Result<Tensor> {
        assert!(!parts.is_empty());
        let tail = &parts[0].shape[1..];
        let mut first = 0;
        for p in parts {
            if p.shape.is_empty() || &p.shape[1..] != tail {
                return Err(Error::ShapeMismatch {
                    op: "concat_rows",
                    lhs: parts[0].shape.clone(),
                    rhs: p.shape.clone(),
                });
            }
            first += p.shape[0];
        }
        let mut shape = vec![first];
        shape.extend_from_slice(tail);
        let mut out = Vec::with_capacity(shape.iter().product());
        for p in parts {
            out.extend_from_slice(&p.data);
        }
        let lens: Vec<usize> = parts.iter().map(|p| p.numel()).collect();
        Ok(finish(unify_tape(parts)?, shape, out, |t| Op::ConcatRows {
            parts: parts.iter().map(|p| t.node_or_intern(p)).collect(),
            lens,
        }))
    }

    /// Selects rows (first-axis slices) by index, with repetition allowed.
    pub fn gather_rows(&self, idx: &IndexVec) -> Result<Tensor> {
        let (rows, w) = self.first_dim("gather_rows")?;
        for &i in idx.iter() {
            if i >= rows {
                return Err(Error::GatherIndexOutOfRange { index: i, rows });
            }
        }
        let mut out = vec![0.0; idx.len() * w];
        for (r, &src) in idx.iter().enumerate() {
            out[r * w..(r + 1) * w].copy_from_slice(&self.data[src * w..(src + 1) * w]);
        }
        let mut shape = vec![idx.len()];
        shape.extend_from_slice(&self.shape[1..]);
        Ok(finish(unify_tape(&[self])?, shape, out, |t| {
            Op::GatherRows {
                a: t.node_or_intern(self),
                idx: idx.clone(),
                row_width: w,
            }
        }))
    }

    /// Sums rows into an output of `out_first_dim` rows: `out[idx[r]] += self[r]`.
    pub fn scatter_add_rows(&self, idx: &IndexVec, out_first_dim: usize) -> Result<Tensor> {
        let (rows, w) = self.first_dim("scatter_add_rows")?;
        if idx.len() != rows {
            return Err(Error::InvalidShape {
                op: "scatter_add_rows",
                shape: self.shape.clone(),
                reason: format!("index has {} entries for {} rows", idx.len(), rows),
            });
        }
        for &i in idx.iter() {
            if i >= out_first_dim {
                return Err(Error::ScatterIndexOutOfRange {
                    index: i,
                    out_dim: out_first_dim,
                });
            }
        }
        let mut out = vec![0.0; out_first_dim * w];
        for (r, &dst) in idx.iter().enumerate() {
            for (o, v) in out[dst * w..(dst + 1) * w]
                .iter_mut()
                .zip(&self.data[r * w..(r + 1) * w])
            {
                *o += v;
            }
        }
        let mut shape = vec![out_first_dim];
        shape.extend_from_slice(&self.shape[1..]);
        Ok(finish(unify_tape(&[self])?, shape, out, |t| {
            Op::ScatterAddRows {
                a: t.node_or_intern(self),
                idx: idx.clone(),
                row_width: w,
            }
        }))
    }

    /// Slice `self[i]` along the first axis, dropping that axis.
    pub fn slice_first(&self, i: usize) -> Result<Tensor> {
        let idx: IndexVec = Arc::new(vec![i]);
        self.gather_rows(&idx)?.reshape(self.shape[1..].to_vec())
    }
}

/// Mean squared error over all entries: `mean((pred - truth)^2)`.
///
/// For `[T,N]` inputs this equals the per-step node average, averaged over
/// steps. Differentiable; shapes must match exactly.
pub fn mse_loss(pred: &Tensor, truth: &Tensor) -> Result<Tensor> {
    let d = pred.sub(truth)?;
    let sq = d.mul(&d)?;
    sq.sum_all()?.scale(1.0 / pred.numel() as f64)
}
