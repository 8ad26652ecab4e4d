//! A small reverse-mode autodiff tape over dense row-major matrices.
//!
//! Values are computed eagerly when an op is recorded; `backward` replays
//! the tape in reverse with enum-dispatched adjoints. Accumulation order is
//! fixed by the recording order, so gradients are bitwise reproducible.

use serde::{Deserialize, Serialize};

/// Dense row-major f64 matrix. Row vectors are 1×c, scalars 1×1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Tensor { rows, cols, data }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor { rows: 1, cols: 1, data: vec![v] }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// C = A · B
    pub fn matmul(&self, b: &Tensor) -> Tensor {
        assert_eq!(self.cols, b.rows);
        let mut out = Tensor::zeros(self.rows, b.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a_ik = self.at(i, k);
                if a_ik == 0.0 {
                    continue;
                }
                for j in 0..b.cols {
                    *out.at_mut(i, j) += a_ik * b.at(k, j);
                }
            }
        }
        out
    }

    /// C = A · Bᵀ
    pub fn matmul_nt(&self, b: &Tensor) -> Tensor {
        assert_eq!(self.cols, b.cols);
        let mut out = Tensor::zeros(self.rows, b.rows);
        for i in 0..self.rows {
            for j in 0..b.rows {
                let mut acc = 0.0;
                for k in 0..self.cols {
                    acc += self.at(i, k) * b.at(j, k);
                }
                *out.at_mut(i, j) = acc;
            }
        }
        out
    }

    /// C = Aᵀ · B
    pub fn matmul_tn(&self, b: &Tensor) -> Tensor {
        assert_eq!(self.rows, b.rows);
        let mut out = Tensor::zeros(self.cols, b.cols);
        for k in 0..self.rows {
            for i in 0..self.cols {
                let a_ki = self.at(k, i);
                if a_ki == 0.0 {
                    continue;
                }
                for j in 0..b.cols {
                    *out.at_mut(i, j) += a_ki * b.at(k, j);
                }
            }
        }
        out
    }

    pub fn add_assign_scaled(&mut self, other: &Tensor, scale: f64) {
        assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * scale;
        }
    }
}

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// Same-shape elementwise sum.
    Add(NodeId, NodeId),
    /// n×c plus a 1×c bias broadcast over rows.
    AddRowBroadcast(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    /// A · Bᵀ
    MatMulNT(NodeId, NodeId),
    Scale(NodeId, f64),
    Tanh(NodeId),
    /// Row lookup (embedding gather); backward scatter-adds.
    Gather(NodeId, Vec<usize>),
    /// Stack a on top of b.
    ConcatRows(NodeId, NodeId),
    /// n×c → 1×c column means.
    MeanRows(NodeId),
    /// Row-wise softmax (used inside attention).
    SoftmaxRows(NodeId),
    /// Sum over targets of −log softmax(logits[row])[col]; a 1×1 scalar.
    CrossEntropySum(NodeId, Vec<(usize, usize)>),
}

pub struct Tape {
    vals: Vec<Tensor>,
    ops: Vec<Op>,
}

fn softmax_row(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

impl Tape {
    pub fn new() -> Self {
        Tape { vals: Vec::new(), ops: Vec::new() }
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.vals[id]
    }

    fn push(&mut self, val: Tensor, op: Op) -> NodeId {
        self.vals.push(val);
        self.ops.push(op);
        self.vals.len() - 1
    }

    pub fn leaf(&mut self, t: Tensor) -> NodeId {
        self.push(t, Op::Leaf)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (&self.vals[a], &self.vals[b]);
        assert_eq!((ta.rows, ta.cols), (tb.rows, tb.cols));
        let mut out = ta.clone();
        out.add_assign_scaled(tb, 1.0);
        self.push(out, Op::Add(a, b))
    }

    pub fn add_row_broadcast(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        let (ta, tb) = (&self.vals[a], &self.vals[bias]);
        assert_eq!(tb.rows, 1);
        assert_eq!(ta.cols, tb.cols);
        let mut out = ta.clone();
        for r in 0..out.rows {
            for c in 0..out.cols {
                *out.at_mut(r, c) += tb.at(0, c);
            }
        }
        self.push(out, Op::AddRowBroadcast(a, bias))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.vals[a].matmul(&self.vals[b]);
        self.push(out, Op::MatMul(a, b))
    }

    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.vals[a].matmul_nt(&self.vals[b]);
        self.push(out, Op::MatMulNT(a, b))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let mut out = self.vals[a].clone();
        for v in &mut out.data {
            *v *= s;
        }
        self.push(out, Op::Scale(a, s))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let mut out = self.vals[a].clone();
        for v in &mut out.data {
            *v = v.tanh();
        }
        self.push(out, Op::Tanh(a))
    }

    pub fn gather(&mut self, src: NodeId, rows: Vec<usize>) -> NodeId {
        let s = &self.vals[src];
        let mut out = Tensor::zeros(rows.len(), s.cols);
        for (i, &r) in rows.iter().enumerate() {
            let cols = s.cols;
            out.data[i * cols..(i + 1) * cols].copy_from_slice(s.row(r));
        }
        self.push(out, Op::Gather(src, rows))
    }

    pub fn concat_rows(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (&self.vals[a], &self.vals[b]);
        assert_eq!(ta.cols, tb.cols);
        let mut data = ta.data.clone();
        data.extend_from_slice(&tb.data);
        let out = Tensor::from_vec(ta.rows + tb.rows, ta.cols, data);
        self.push(out, Op::ConcatRows(a, b))
    }

    pub fn mean_rows(&mut self, a: NodeId) -> NodeId {
        let t = &self.vals[a];
        assert!(t.rows > 0);
        let mut out = Tensor::zeros(1, t.cols);
        for r in 0..t.rows {
            for c in 0..t.cols {
                out.data[c] += t.at(r, c);
            }
        }
        for v in &mut out.data {
            *v /= t.rows as f64;
        }
        self.push(out, Op::MeanRows(a))
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let t = &self.vals[a];
        let mut out = Tensor::zeros(t.rows, t.cols);
        for r in 0..t.rows {
            let sm = softmax_row(t.row(r));
            out.data[r * t.cols..(r + 1) * t.cols].copy_from_slice(&sm);
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    /// Σ over (row, col) targets of −log softmax(logits[row])[col].
    pub fn cross_entropy_sum(&mut self, logits: NodeId, targets: Vec<(usize, usize)>) -> NodeId {
        let t = &self.vals[logits];
        let mut loss = 0.0;
        for &(r, c) in &targets {
            let row = t.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let logsum = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            loss += logsum - row[c];
        }
        self.push(Tensor::scalar(loss), Op::CrossEntropySum(logits, targets))
    }

    /// Reverse pass from a 1×1 loss node. Returns one gradient tensor per
    /// node, aligned with node ids.
    pub fn backward(&self, loss: NodeId) -> Vec<Tensor> {
        assert_eq!(self.vals[loss].data.len(), 1, "loss must be scalar");
        let mut grads: Vec<Tensor> = self
            .vals
            .iter()
            .map(|v| Tensor::zeros(v.rows, v.cols))
            .collect();
        grads[loss].data[0] = 1.0;
        for id in (0..=loss).rev() {
            if grads[id].data.iter().all(|&g| g == 0.0) {
                continue;
            }
            let g = grads[id].clone();
            match &self.ops[id] {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    grads[*a].add_assign_scaled(&g, 1.0);
                    grads[*b].add_assign_scaled(&g, 1.0);
                }
                Op::AddRowBroadcast(a, bias) => {
                    grads[*a].add_assign_scaled(&g, 1.0);
                    for r in 0..g.rows {
                        for c in 0..g.cols {
                            *grads[*bias].at_mut(0, c) += g.at(r, c);
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let da = g.matmul_nt(&self.vals[*b]);
                    let db = self.vals[*a].matmul_tn(&g);
                    grads[*a].add_assign_scaled(&da, 1.0);
                    grads[*b].add_assign_scaled(&db, 1.0);
                }
                Op::MatMulNT(a, b) => {
                    let da = g.matmul(&self.vals[*b]);
                    let db = g.matmul_tn(&self.vals[*a]);
                    grads[*a].add_assign_scaled(&da, 1.0);
                    grads[*b].add_assign_scaled(&db, 1.0);
                }
                Op::Scale(a, s) => {
                    grads[*a].add_assign_scaled(&g, *s);
                }
                Op::Tanh(a) => {
                    let y = &self.vals[id];
                    for i in 0..g.data.len() {
                        grads[*a].data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
                    }
                }
                Op::Gather(src, rows) => {
                    let cols = g.cols;
                    for (i, &r) in rows.iter().enumerate() {
                        for c in 0..cols {
                            *grads[*src].at_mut(r, c) += g.at(i, c);
                        }
                    }
                }
                Op::ConcatRows(a, b) => {
                    let ra = self.vals[*a].rows;
                    let cols = g.cols;
                    for r in 0..ra {
                        for c in 0..cols {
                            *grads[*a].at_mut(r, c) += g.at(r, c);
                        }
                    }
                    for r in ra..g.rows {
                        for c in 0..cols {
                            *grads[*b].at_mut(r - ra, c) += g.at(r, c);
                        }
                    }
                }
                Op::MeanRows(a) => {
                    let n = self.vals[*a].rows as f64;
                    for r in 0..self.vals[*a].rows {
                        for c in 0..g.cols {
                            *grads[*a].at_mut(r, c) += g.at(0, c) / n;
                        }
                    }
                }
                Op::SoftmaxRows(a) => {
                    let y = &self.vals[id];
                    for r in 0..y.rows {
                        let mut dot = 0.0;
                        for c in 0..y.cols {
                            dot += g.at(r, c) * y.at(r, c);
                        }
                        for c in 0..y.cols {
                            *grads[*a].at_mut(r, c) += y.at(r, c) * (g.at(r, c) - dot);
                        }
                    }
                }
                Op::CrossEntropySum(logits, targets) => {
                    let x = &self.vals[*logits];
                    let gs = g.data[0];
                    for &(r, c) in targets {
                        let sm = softmax_row(x.row(r));
                        for (j, &p) in sm.iter().enumerate() {
                            *grads[*logits].at_mut(r, j) += gs * p;
                        }
                        *grads[*logits].at_mut(r, c) -= gs;
                    }
                }
            }
        }
        grads
    }
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finite_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
        let mut grad = vec![0.0; x.len()];
        let mut xp = x.to_vec();
        for i in 0..x.len() {
            xp[i] = x[i] + h;
            let fp = f(&xp);
            xp[i] = x[i] - h;
            let fm = f(&xp);
            xp[i] = x[i];
            grad[i] = (fp - fm) / (2.0 * h);
        }
        grad
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
    }

    #[test]
    fn matmul_chain_gradient_matches_fd() {
        // loss = Σ over targets of CE(tanh(X·W)·U) for a fixed input X.
        let x = Tensor::from_vec(2, 3, vec![0.5, -0.2, 0.3, 0.1, 0.7, -0.4]);
        let w0 = vec![0.1, -0.3, 0.2, 0.4, 0.0, -0.1, 0.25, 0.15, -0.2, 0.05, 0.3, -0.35];
        let u0 = vec![0.2, -0.1, 0.3, 0.1, -0.25, 0.05, 0.15, 0.2, -0.3, 0.1, 0.05, -0.15];
        let eval = |w: &[f64], u: &[f64]| -> (f64, Vec<f64>, Vec<f64>) {
            let mut tape = Tape::new();
            let xn = tape.leaf(x.clone());
            let wn = tape.leaf(Tensor::from_vec(3, 4, w.to_vec()));
            let un = tape.leaf(Tensor::from_vec(4, 3, u.to_vec()));
            let h = tape.matmul(xn, wn);
            let t = tape.tanh(h);
            let logits = tape.matmul(t, un);
            let loss = tape.cross_entropy_sum(logits, vec![(0, 1), (1, 2)]);
            let grads = tape.backward(loss);
            (
                tape.value(loss).data[0],
                grads[wn].data.clone(),
                grads[un].data.clone(),
            )
        };
        let (_, gw, gu) = eval(&w0, &u0);
        let fd_w = finite_diff(|w| eval(w, &u0).0, &w0, 1e-5);
        let fd_u = finite_diff(|u| eval(&w0, u).0, &u0, 1e-5);
        for (a, b) in gw.iter().zip(&fd_w) {
            assert!(rel_err(*a, *b) < 1e-6, "{a} vs {b}");
        }
        for (a, b) in gu.iter().zip(&fd_u) {
            assert!(rel_err(*a, *b) < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn softmax_rows_sum_to_one_and_backward_matches_fd() {
        let x0 = vec![0.3, -0.5, 0.9, 1.2, 0.0, -0.7];
        let eval = |x: &[f64]| -> (f64, Vec<f64>) {
            let mut tape = Tape::new();
            let xn = tape.leaf(Tensor::from_vec(2, 3, x.to_vec()));
            let sm = tape.softmax_rows(xn);
            // Weighted sum so the gradient is nontrivial; mean_rows + scale
            // exercise those adjoints too.
            let w = tape.leaf(Tensor::from_vec(3, 1, vec![1.0, 2.0, -1.0]));
            let y = tape.matmul(sm, w);
            let m = tape.mean_rows(y);
            let loss = tape.scale(m, 3.0);
            let grads = tape.backward(loss);
            (tape.value(loss).data[0], grads[xn].data.clone())
        };
        let mut tape = Tape::new();
        let xn = tape.leaf(Tensor::from_vec(2, 3, x0.clone()));
        let sm = tape.softmax_rows(xn);
        for r in 0..2 {
            let sum: f64 = tape.value(sm).row(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
        let (_, g) = eval(&x0);
        let fd = finite_diff(|x| eval(x).0, &x0, 1e-5);
        for (a, b) in g.iter().zip(&fd) {
            assert!(rel_err(*a, *b) < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn gather_and_concat_backward_match_fd() {
        let e0 = vec![0.1, 0.2, -0.3, 0.4, 0.5, -0.6, 0.7, -0.8];
        let eval = |e: &[f64]| -> (f64, Vec<f64>) {
            let mut tape = Tape::new();
            let emb = tape.leaf(Tensor::from_vec(4, 2, e.to_vec()));
            let x = tape.gather(emb, vec![2, 0, 2]);
            let root = tape.leaf(Tensor::from_vec(1, 2, vec![0.5, -0.5]));
            let cat = tape.concat_rows(root, x);
            let logits = tape.matmul_nt(x, cat);
            let loss = tape.cross_entropy_sum(logits, vec![(0, 0), (1, 3), (2, 1)]);
            let grads = tape.backward(loss);
            (tape.value(loss).data[0], grads[emb].data.clone())
        };
        let (_, g) = eval(&e0);
        let fd = finite_diff(|e| eval(e).0, &e0, 1e-5);
        for (a, b) in g.iter().zip(&fd) {
            assert!(rel_err(*a, *b) < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn add_row_broadcast_backward_matches_fd() {
        let b0 = vec![0.3, -0.2];
        let eval = |b: &[f64]| -> (f64, Vec<f64>) {
            let mut tape = Tape::new();
            let x = tape.leaf(Tensor::from_vec(3, 2, vec![0.1; 6]));
            let bias = tape.leaf(Tensor::from_vec(1, 2, b.to_vec()));
            let y = tape.add_row_broadcast(x, bias);
            let loss = tape.cross_entropy_sum(y, vec![(0, 0), (1, 1), (2, 0)]);
            let grads = tape.backward(loss);
            (tape.value(loss).data[0], grads[bias].data.clone())
        };
        let (_, g) = eval(&b0);
        let fd = finite_diff(|b| eval(b).0, &b0, 1e-5);
        for (a, b) in g.iter().zip(&fd) {
            assert!(rel_err(*a, *b) < 1e-6);
        }
    }
}
