//! Reverse-mode automatic differentiation over row-major f64 matrices.
//!
//! A [`Tape`] records every operation; [`Tape::backward`] walks it in
//! reverse. Parameters enter as leaves bound to a [`ParameterStore`] slot so
//! gradients can be accumulated back after the pass.

mod optim;

pub use optim::{adam_step, clip_grad_norm, AdamConfig, Init, ParamId, Parameter, ParameterStore, PlateauScheduler};

use rand::Rng;

use crate::error::{Error, Result};

/// Handle to a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    /// Saved mask already includes the 1/(1-p) factor.
    Dropout(Var, Vec<f64>),
    Concat(Vec<Var>),
    Gather(Var, Vec<usize>),
    SegmentMax(Var, Vec<usize>),
    SegmentMean(Var, Vec<usize>, Vec<usize>),
    SegmentSum(Var, Vec<usize>),
    SegmentSoftmax(Var, Vec<usize>),
    RowScale(Var, Vec<f64>),
    MulCol(Var, Var),
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        batch_stats: bool,
    },
    Bce(Var, Vec<f64>, Vec<f64>),
    Mse(Var, Vec<f64>),
    Sum(Var),
    Mean(Var),
}

#[derive(Debug, Clone)]
struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
    param: Option<ParamId>,
    needs_grad: bool,
}

/// Result of [`Tape::segment_max`].
#[derive(Debug, Clone)]
pub struct SegmentMax {
    pub value: Var,
    /// Winning row per output cell (`n_segments × cols`); `None` for empty segments.
    pub argmax: Vec<Option<usize>>,
    pub empty: Vec<bool>,
}

/// Running statistics for batch normalization (momentum 0.1).
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn new(cols: usize) -> Self {
        RunningStats {
            mean: vec![0.0; cols],
            var: vec![1.0; cols],
        }
    }
}

pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node gradients from one backward pass.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

fn shape_err(op: &'static str, detail: String) -> Error {
    Error::Shape { op, detail }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op, parents: &[Var]) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        let needs_grad = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
            param: None,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn leaf(&mut self, rows: usize, cols: usize, value: Vec<f64>, needs_grad: bool) -> Result<Var> {
        if value.len() != rows * cols {
            return Err(shape_err(
                "leaf",
                format!("{} values for shape {rows}×{cols}", value.len()),
            ));
        }
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op: Op::Leaf,
            param: None,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A leaf that never receives gradient.
    pub fn constant(&mut self, rows: usize, cols: usize, value: Vec<f64>) -> Result<Var> {
        self.leaf(rows, cols, value, false)
    }

    /// A free leaf that receives gradient (tests, inputs under study).
    pub fn variable(&mut self, rows: usize, cols: usize, value: Vec<f64>) -> Result<Var> {
        self.leaf(rows, cols, value, true)
    }

    /// Bind a stored parameter as a gradient-receiving leaf.
    pub fn param(&mut self, store: &ParameterStore, id: ParamId) -> Var {
        let p = store.get(id);
        let v = self
            .leaf(p.rows, p.cols, p.value.clone(), true)
            .expect("stored parameter has consistent shape");
        self.nodes[v.0].param = Some(id);
        v
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize)> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(sa)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = self.shape(a);
        let (k2, m) = self.shape(b);
        if k != k2 {
            return Err(shape_err("matmul", format!("{n}×{k} · {k2}×{m}")));
        }
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let row = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let x = av[i * k + p];
                if x == 0.0 {
                    continue;
                }
                for (o, &w) in row.iter_mut().zip(&bv[p * m..(p + 1) * m]) {
                    *o += x * w;
                }
            }
        }
        Ok(self.push(n, m, out, Op::MatMul(a, b), &[a, b]))
    }

    /// `x · W + b` with `b` broadcast over rows.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add_bias(xw, b)
    }

    pub fn add_bias(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, m) = self.shape(a);
        if self.shape(b) != (1, m) {
            return Err(shape_err("add_bias", format!("{n}×{m} + {:?}", self.shape(b))));
        }
        let bv = self.nodes[b.0].value.clone();
        let out = self.nodes[a.0]
            .value
            .chunks(m.max(1))
            .flat_map(|r| r.iter().zip(&bv).map(|(x, y)| x + y))
            .collect();
        Ok(self.push(n, m, out, Op::AddBias(a, b), &[a, b]))
    }

    fn zip_with(&mut self, op_name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (n, m) = self.same_shape(op_name, a, b)?;
        let out = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok(self.push(n, m, out, op, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let (n, m) = self.shape(a);
        let out = self.nodes[a.0].value.iter().map(|&x| f(x)).collect();
        self.push(n, m, out, op, &[a])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, |x| x * c, Op::Scale(a, c))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        // NaN passes through so corrupted inputs surface as a non-finite loss.
        self.map(a, |x| if x < 0.0 { 0.0 } else { x }, Op::Relu(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.map(a, |x| if x > 0.0 { x } else { slope * x }, Op::LeakyRelu(a, slope))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    /// Inverted dropout: zero with probability `rate`, scale survivors by 1/(1−rate).
    /// Identity when not training or `rate == 0`.
    pub fn dropout<R: Rng>(&mut self, a: Var, rate: f64, rng: &mut R, training: bool) -> Var {
        if !training || rate <= 0.0 {
            return a;
        }
        let keep = 1.0 / (1.0 - rate);
        let n = self.nodes[a.0].value.len();
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let (r, c) = self.shape(a);
        let out = self.nodes[a.0]
            .value
            .iter()
            .zip(&mask)
            .map(|(x, k)| x * k)
            .collect();
        self.push(r, c, out, Op::Dropout(a, mask), &[a])
    }

    /// Column-wise concatenation of equal-row inputs.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(shape_err("concat", "no inputs".into()));
        };
        let rows = self.shape(first).0;
        if let Some(p) = parts.iter().find(|p| self.shape(**p).0 != rows) {
            return Err(shape_err(
                "concat",
                format!("{rows} rows vs {}", self.shape(*p).0),
            ));
        }
        let cols: usize = parts.iter().map(|p| self.shape(*p).1).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                let c = self.nodes[p.0].cols;
                out.extend_from_slice(&self.nodes[p.0].value[r * c..(r + 1) * c]);
            }
        }
        Ok(self.push(rows, cols, out, Op::Concat(parts.to_vec()), parts))
    }

    /// Select rows by index (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let (n, c) = self.shape(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(Error::SegmentId { id: bad, n });
        }
        let v = &self.nodes[a.0].value;
        let out = idx
            .iter()
            .flat_map(|&i| v[i * c..(i + 1) * c].iter().copied())
            .collect();
        Ok(self.push(idx.len(), c, out, Op::Gather(a, idx.to_vec()), &[a]))
    }

    fn check_segments(&self, a: Var, seg: &[usize], n: usize) -> Result<()> {
        let rows = self.shape(a).0;
        if seg.len() != rows {
            return Err(shape_err("segment", format!("{} ids for {rows} rows", seg.len())));
        }
        if let Some(&bad) = seg.iter().find(|&&s| s >= n) {
            return Err(Error::SegmentId { id: bad, n });
        }
        Ok(())
    }

    /// Per-segment column-wise maximum; empty segments give zero rows.
    /// Ties route gradient to the first maximal row.
    pub fn segment_max(&mut self, a: Var, seg: &[usize], n: usize) -> Result<SegmentMax> {
        self.check_segments(a, seg, n)?;
        let c = self.shape(a).1;
        let v = &self.nodes[a.0].value;
        let mut best: Vec<Option<usize>> = vec![None; n * c];
        for (r, &s) in seg.iter().enumerate() {
            for k in 0..c {
                let slot = &mut best[s * c + k];
                match *slot {
                    Some(b) if v[b * c + k] >= v[r * c + k] => {}
                    _ => *slot = Some(r),
                }
            }
        }
        let out = best
            .iter()
            .enumerate()
            .map(|(i, b)| b.map_or(0.0, |r| v[r * c + i % c]))
            .collect();
        let mut empty = vec![true; n];
        for &s in seg {
            empty[s] = false;
        }
        let flat: Vec<usize> = best.iter().map(|b| b.unwrap_or(usize::MAX)).collect();
        let value = self.push(n, c, out, Op::SegmentMax(a, flat), &[a]);
        Ok(SegmentMax {
            value,
            argmax: best,
            empty,
        })
    }

    pub fn segment_sum(&mut self, a: Var, seg: &[usize], n: usize) -> Result<Var> {
        self.check_segments(a, seg, n)?;
        let c = self.shape(a).1;
        let v = &self.nodes[a.0].value;
        let mut out = vec![0.0; n * c];
        for (r, &s) in seg.iter().enumerate() {
            for k in 0..c {
                out[s * c + k] += v[r * c + k];
            }
        }
        Ok(self.push(n, c, out, Op::SegmentSum(a, seg.to_vec()), &[a]))
    }

    /// Per-segment mean; empty segments give zero rows.
    pub fn segment_mean(&mut self, a: Var, seg: &[usize], n: usize) -> Result<Var> {
        self.check_segments(a, seg, n)?;
        let c = self.shape(a).1;
        let mut counts = vec![0usize; n];
        for &s in seg {
            counts[s] += 1;
        }
        let v = &self.nodes[a.0].value;
        let mut out = vec![0.0; n * c];
        for (r, &s) in seg.iter().enumerate() {
            for k in 0..c {
                out[s * c + k] += v[r * c + k];
            }
        }
        for (s, &cnt) in counts.iter().enumerate() {
            if cnt > 0 {
                for k in 0..c {
                    out[s * c + k] /= cnt as f64;
                }
            }
        }
        Ok(self.push(n, c, out, Op::SegmentMean(a, seg.to_vec(), counts), &[a]))
    }

    /// Softmax within each segment, independently per column.
    pub fn segment_softmax(&mut self, a: Var, seg: &[usize], n: usize) -> Result<Var> {
        self.check_segments(a, seg, n)?;
        let (rows, c) = self.shape(a);
        let v = &self.nodes[a.0].value;
        let mut mx = vec![f64::NEG_INFINITY; n * c];
        for (r, &s) in seg.iter().enumerate() {
            for k in 0..c {
                mx[s * c + k] = mx[s * c + k].max(v[r * c + k]);
            }
        }
        let mut out = vec![0.0; rows * c];
        let mut den = vec![0.0; n * c];
        for (r, &s) in seg.iter().enumerate() {
            for k in 0..c {
                let e = (v[r * c + k] - mx[s * c + k]).exp();
                out[r * c + k] = e;
                den[s * c + k] += e;
            }
        }
        for (r, &s) in seg.iter().enumerate() {
            for k in 0..c {
                out[r * c + k] /= den[s * c + k];
            }
        }
        Ok(self.push(rows, c, out, Op::SegmentSoftmax(a, seg.to_vec()), &[a]))
    }

    /// Multiply each row by a fixed (non-differentiable) factor.
    pub fn row_scale(&mut self, a: Var, factors: &[f64]) -> Result<Var> {
        let (n, c) = self.shape(a);
        if factors.len() != n {
            return Err(shape_err("row_scale", format!("{} factors for {n} rows", factors.len())));
        }
        let out = self.nodes[a.0]
            .value
            .chunks(c.max(1))
            .zip(factors)
            .flat_map(|(r, &f)| r.iter().map(move |x| x * f))
            .collect();
        Ok(self.push(n, c, out, Op::RowScale(a, factors.to_vec()), &[a]))
    }

    /// Multiply every column of `a` (N×F) by the column vector `w` (N×1).
    pub fn mul_col(&mut self, a: Var, w: Var) -> Result<Var> {
        let (n, c) = self.shape(a);
        if self.shape(w) != (n, 1) {
            return Err(shape_err("mul_col", format!("{n}×{c} by {:?}", self.shape(w))));
        }
        let wv = &self.nodes[w.0].value;
        let out = self.nodes[a.0]
            .value
            .chunks(c.max(1))
            .zip(wv)
            .flat_map(|(r, &f)| r.iter().map(move |x| x * f))
            .collect();
        Ok(self.push(n, c, out, Op::MulCol(a, w), &[a, w]))
    }

    /// Column selection as a copy (used to split attention heads).
    pub fn columns(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let c = self.shape(a).1;
        if start + len > c {
            return Err(shape_err("columns", format!("{start}+{len} of {c}")));
        }
        let mut sel = vec![0.0; c * len];
        for k in 0..len {
            sel[(start + k) * len + k] = 1.0;
        }
        let s = self.constant(c, len, sel)?;
        self.matmul(a, s)
    }

    /// Batch normalization over rows. Training uses batch statistics and
    /// updates `running`; evaluation uses `running`.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running: &mut RunningStats,
        eps: f64,
        training: bool,
    ) -> Result<Var> {
        let (n, c) = self.shape(x);
        if self.shape(gamma) != (1, c) || self.shape(beta) != (1, c) {
            return Err(shape_err("batch_norm", format!("{c} columns vs affine {:?}", self.shape(gamma))));
        }
        if running.mean.len() != c {
            return Err(shape_err("batch_norm", format!("running stats for {} columns", running.mean.len())));
        }
        let xv = &self.nodes[x.0].value;
        let (mean, var) = if training && n > 0 {
            let mut mean = vec![0.0; c];
            for r in 0..n {
                for k in 0..c {
                    mean[k] += xv[r * c + k];
                }
            }
            mean.iter_mut().for_each(|m| *m /= n as f64);
            let mut var = vec![0.0; c];
            for r in 0..n {
                for k in 0..c {
                    var[k] += (xv[r * c + k] - mean[k]).powi(2);
                }
            }
            let biased: Vec<f64> = var.iter().map(|v| v / n as f64).collect();
            let unbiased_div = if n > 1 { (n - 1) as f64 } else { 1.0 };
            for k in 0..c {
                running.mean[k] = (1.0 - BN_MOMENTUM) * running.mean[k] + BN_MOMENTUM * mean[k];
                running.var[k] =
                    (1.0 - BN_MOMENTUM) * running.var[k] + BN_MOMENTUM * var[k] / unbiased_div;
            }
            (mean, biased)
        } else {
            (running.mean.clone(), running.var.clone())
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut xhat = vec![0.0; n * c];
        for r in 0..n {
            for k in 0..c {
                xhat[r * c + k] = (xv[r * c + k] - mean[k]) * inv_std[k];
            }
        }
        let g = &self.nodes[gamma.0].value;
        let b = &self.nodes[beta.0].value;
        let out = xhat
            .iter()
            .enumerate()
            .map(|(i, &h)| h * g[i % c] + b[i % c])
            .collect();
        let op = Op::BatchNorm {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
            batch_stats: training,
        };
        Ok(self.push(n, c, out, op, &[x, gamma, beta]))
    }

    /// Mean binary cross-entropy on logits, optionally per-sample weighted
    /// (weights are normalized by the sample count, not their sum).
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64], weights: Option<&[f64]>) -> Result<Var> {
        let n = self.nodes[logits.0].value.len();
        if targets.len() != n || weights.is_some_and(|w| w.len() != n) {
            return Err(shape_err("bce_with_logits", format!("{n} logits, {} targets", targets.len())));
        }
        let w = weights.map_or_else(|| vec![1.0; n], <[f64]>::to_vec);
        let z = &self.nodes[logits.0].value;
        let loss = z
            .iter()
            .zip(targets)
            .zip(&w)
            .map(|((&z, &t), &w)| w * (z.max(0.0) - z * t + (-z.abs()).exp().ln_1p()))
            .sum::<f64>()
            / n.max(1) as f64;
        Ok(self.push(1, 1, vec![loss], Op::Bce(logits, targets.to_vec(), w), &[logits]))
    }

    pub fn mse(&mut self, pred: Var, targets: &[f64]) -> Result<Var> {
        let n = self.nodes[pred.0].value.len();
        if targets.len() != n {
            return Err(shape_err("mse", format!("{n} predictions, {} targets", targets.len())));
        }
        let loss = self.nodes[pred.0]
            .value
            .iter()
            .zip(targets)
            .map(|(p, t)| (p - t).powi(2))
            .sum::<f64>()
            / n.max(1) as f64;
        Ok(self.push(1, 1, vec![loss], Op::Mse(pred, targets.to_vec()), &[pred]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.iter().sum();
        self.push(1, 1, vec![s], Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = &self.nodes[a.0].value;
        let s = v.iter().sum::<f64>() / v.len().max(1) as f64;
        self.push(1, 1, vec![s], Op::Mean(a), &[a])
    }

    /// Reverse pass from a scalar.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.shape(loss) != (1, 1) {
            let (r, c) = self.shape(loss);
            return Err(Error::NonScalarLoss(vec![r, c]));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if node.needs_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Backward, then add parameter-leaf gradients into the store.
    pub fn backward_into(&self, loss: Var, store: &mut ParameterStore) -> Result<Gradients> {
        let grads = self.backward(loss)?;
        for (i, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if let (Some(id), Some(g)) = (node.param, grads.grads[i].as_ref()) {
                store.accumulate(id, g);
            }
        }
        Ok(grads)
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
            f(slot);
        };
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (n, k) = self.shape(*a);
                let m = self.nodes[b.0].cols;
                let (av, bv) = (val(*a), val(*b));
                acc(*a, &mut |ga| {
                    for i in 0..n {
                        let gr = &g[i * m..(i + 1) * m];
                        for p in 0..k {
                            let br = &bv[p * m..(p + 1) * m];
                            ga[i * k + p] += gr.iter().zip(br).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                });
                acc(*b, &mut |gb| {
                    for i in 0..n {
                        let gr = &g[i * m..(i + 1) * m];
                        for p in 0..k {
                            let x = av[i * k + p];
                            if x == 0.0 {
                                continue;
                            }
                            for (o, &y) in gb[p * m..(p + 1) * m].iter_mut().zip(gr) {
                                *o += x * y;
                            }
                        }
                    }
                });
            }
            Op::AddBias(a, b) => {
                let m = node.cols;
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(o, y)| *o += y));
                acc(*b, &mut |gb| {
                    for (i, y) in g.iter().enumerate() {
                        gb[i % m] += y;
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(o, y)| *o += y));
                acc(*b, &mut |gb| gb.iter_mut().zip(g).for_each(|(o, y)| *o += y));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(o, y)| *o += y));
                acc(*b, &mut |gb| gb.iter_mut().zip(g).for_each(|(o, y)| *o -= y));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                acc(*a, &mut |ga| {
                    for i in 0..g.len() {
                        ga[i] += g[i] * bv[i];
                    }
                });
                acc(*b, &mut |gb| {
                    for i in 0..g.len() {
                        gb[i] += g[i] * av[i];
                    }
                });
            }
            Op::Scale(a, c) => acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(o, y)| *o += c * y)),
            Op::Relu(a) => {
                let av = val(*a);
                acc(*a, &mut |ga| {
                    for i in 0..g.len() {
                        if av[i] > 0.0 {
                            ga[i] += g[i];
                        }
                    }
                });
            }
            Op::LeakyRelu(a, s) => {
                let av = val(*a);
                acc(*a, &mut |ga| {
                    for i in 0..g.len() {
                        ga[i] += if av[i] > 0.0 { g[i] } else { s * g[i] };
                    }
                });
            }
            Op::Sigmoid(a) => {
                let out = &node.value;
                acc(*a, &mut |ga| {
                    for i in 0..g.len() {
                        ga[i] += g[i] * out[i] * (1.0 - out[i]);
                    }
                });
            }
            Op::Dropout(a, mask) => acc(*a, &mut |ga| {
                for i in 0..g.len() {
                    ga[i] += g[i] * mask[i];
                }
            }),
            Op::Concat(parts) => {
                let rows = node.rows;
                let total = node.cols;
                let mut off = 0;
                for p in parts {
                    let c = self.nodes[p.0].cols;
                    acc(*p, &mut |gp| {
                        for r in 0..rows {
                            for k in 0..c {
                                gp[r * c + k] += g[r * total + off + k];
                            }
                        }
                    });
                    off += c;
                }
            }
            Op::Gather(a, idx) => {
                let c = node.cols;
                acc(*a, &mut |ga| {
                    for (r, &i) in idx.iter().enumerate() {
                        for k in 0..c {
                            ga[i * c + k] += g[r * c + k];
                        }
                    }
                });
            }
            Op::SegmentMax(a, arg) => {
                let c = node.cols;
                acc(*a, &mut |ga| {
                    for (i, &r) in arg.iter().enumerate() {
                        if r != usize::MAX {
                            ga[r * c + i % c] += g[i];
                        }
                    }
                });
            }
            Op::SegmentSum(a, seg) => {
                let c = node.cols;
                acc(*a, &mut |ga| {
                    for (r, &s) in seg.iter().enumerate() {
                        for k in 0..c {
                            ga[r * c + k] += g[s * c + k];
                        }
                    }
                });
            }
            Op::SegmentMean(a, seg, counts) => {
                let c = node.cols;
                acc(*a, &mut |ga| {
                    for (r, &s) in seg.iter().enumerate() {
                        let inv = 1.0 / counts[s] as f64;
                        for k in 0..c {
                            ga[r * c + k] += g[s * c + k] * inv;
                        }
                    }
                });
            }
            Op::SegmentSoftmax(a, seg) => {
                let c = node.cols;
                let y = &node.value;
                let n_seg = seg.iter().max().map_or(0, |m| m + 1);
                let mut dot = vec![0.0; n_seg * c];
                for (r, &s) in seg.iter().enumerate() {
                    for k in 0..c {
                        dot[s * c + k] += g[r * c + k] * y[r * c + k];
                    }
                }
                acc(*a, &mut |ga| {
                    for (r, &s) in seg.iter().enumerate() {
                        for k in 0..c {
                            let i = r * c + k;
                            ga[i] += y[i] * (g[i] - dot[s * c + k]);
                        }
                    }
                });
            }
            Op::RowScale(a, f) => {
                let c = node.cols;
                acc(*a, &mut |ga| {
                    for (i, o) in ga.iter_mut().enumerate() {
                        *o += g[i] * f[i / c];
                    }
                });
            }
            Op::MulCol(a, w) => {
                let c = node.cols;
                let (av, wv) = (val(*a), val(*w));
                acc(*a, &mut |ga| {
                    for (i, o) in ga.iter_mut().enumerate() {
                        *o += g[i] * wv[i / c];
                    }
                });
                acc(*w, &mut |gw| {
                    for (i, &y) in g.iter().enumerate() {
                        gw[i / c] += y * av[i];
                    }
                });
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let (n, c) = (node.rows, node.cols);
                let gv = val(*gamma);
                acc(*gamma, &mut |gg| {
                    for i in 0..g.len() {
                        gg[i % c] += g[i] * xhat[i];
                    }
                });
                acc(*beta, &mut |gb| {
                    for i in 0..g.len() {
                        gb[i % c] += g[i];
                    }
                });
                acc(*x, &mut |gx| {
                    if *batch_stats {
                        let nf = n as f64;
                        let mut sum_g = vec![0.0; c];
                        let mut sum_gx = vec![0.0; c];
                        for i in 0..g.len() {
                            let dxhat = g[i] * gv[i % c];
                            sum_g[i % c] += dxhat;
                            sum_gx[i % c] += dxhat * xhat[i];
                        }
                        for i in 0..g.len() {
                            let k = i % c;
                            let dxhat = g[i] * gv[k];
                            gx[i] += inv_std[k] / nf * (nf * dxhat - sum_g[k] - xhat[i] * sum_gx[k]);
                        }
                    } else {
                        for i in 0..g.len() {
                            gx[i] += g[i] * gv[i % c] * inv_std[i % c];
                        }
                    }
                });
            }
            Op::Bce(z, t, w) => {
                let zv = val(*z);
                let n = zv.len().max(1) as f64;
                acc(*z, &mut |gz| {
                    for i in 0..zv.len() {
                        gz[i] += g[0] * w[i] * (sigmoid(zv[i]) - t[i]) / n;
                    }
                });
            }
            Op::Mse(p, t) => {
                let pv = val(*p);
                let n = pv.len().max(1) as f64;
                acc(*p, &mut |gp| {
                    for i in 0..pv.len() {
                        gp[i] += g[0] * 2.0 * (pv[i] - t[i]) / n;
                    }
                });
            }
            Op::Sum(a) => acc(*a, &mut |ga| ga.iter_mut().for_each(|o| *o += g[0])),
            Op::Mean(a) => {
                let n = self.nodes[a.0].value.len().max(1) as f64;
                acc(*a, &mut |ga| ga.iter_mut().for_each(|o| *o += g[0] / n));
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests;
