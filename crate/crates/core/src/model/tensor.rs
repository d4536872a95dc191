//! Dense row-major matrices and a reverse-mode tape over them.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        Mat { rows, cols, data: vec![v; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "shape {rows}x{cols} does not match data");
        Mat { rows, cols, data }
    }

    pub fn row_vec(data: Vec<f64>) -> Self {
        Mat { rows: 1, cols: data.len(), data }
    }

    /// Normal entries with standard deviation `std` (Box-Muller).
    pub fn randn<R: Rng>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols)
            .map(|_| {
                let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
                let u2: f64 = rng.gen();
                std * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            })
            .collect();
        Mat { rows, cols, data }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul {:?} x {:?}", self.shape(), other.shape());
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self^T * other` without materializing the transpose.
    pub fn t_matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows);
        let mut out = Mat::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let arow = self.row(k);
            let brow = other.row(k);
            for (i, &a) in arow.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self * other^T`.
    pub fn matmul_t(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols);
        let mut out = Mat::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let arow = self.row(i);
            for j in 0..other.rows {
                out.data[i * other.rows + j] =
                    arow.iter().zip(other.row(j)).map(|(a, b)| a * b).sum();
            }
        }
        out
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Mat) {
        assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn scalar(&self) -> f64 {
        assert_eq!(self.data.len(), 1);
        self.data[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    Relu(Var),
    Sigmoid(Var),
    SoftmaxRows(Var),
    NormalizeRows { x: Var, inv_std: Vec<f64> },
    Transpose(Var),
    ConcatCols(Vec<Var>),
    SliceCols { x: Var, start: usize },
    ConcatRows(Vec<Var>),
    GatherRows { x: Var, idx: Vec<usize> },
    Im2Col3x3 { x: Var, h: usize, w: usize },
    Patchify { x: Var, h: usize, w: usize, k: usize },
    MaxRows { x: Var, arg: Vec<usize> },
    MeanRows(Var),
    WeightedCe { logits: Var, targets: Vec<usize>, weights: Vec<f64>, norm: f64, probs: Mat },
}

struct Node {
    value: Mat,
    grad: Option<Mat>,
    needs_grad: bool,
    op: Op,
}

/// Records a computation and replays it backwards.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

pub const NORM_EPS: f64 = 1e-5;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
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

    fn push(&mut self, value: Mat, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node { value, grad: None, needs_grad, op });
        Var(self.nodes.len() - 1)
    }

    /// A constant or parameter. Only leaves with `needs_grad` receive gradients.
    pub fn leaf(&mut self, value: Mat, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, grad: None, needs_grad, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&Mat> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        self.push(v, Op::Add(a, b), &[a, b])
    }

    /// Adds a `1 x c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row);
        assert_eq!((r.rows, r.cols), (1, self.value(a).cols));
        let r = r.data.clone();
        let mut v = self.value(a).clone();
        for i in 0..v.rows {
            for (x, b) in v.row_mut(i).iter_mut().zip(&r) {
                *x += b;
            }
        }
        self.push(v, Op::AddRow(a, row), &[a, row])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape());
        let data = x.data.iter().zip(&y.data).map(|(p, q)| p * q).collect();
        let v = Mat::from_vec(x.rows, x.cols, data);
        self.push(v, Op::Mul(a, b), &[a, b])
    }

    /// Scales each column of `a` by the matching entry of a `1 x c` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row);
        assert_eq!((r.rows, r.cols), (1, self.value(a).cols));
        let r = r.data.clone();
        let mut v = self.value(a).clone();
        for i in 0..v.rows {
            for (x, g) in v.row_mut(i).iter_mut().zip(&r) {
                *x *= g;
            }
        }
        self.push(v, Op::MulRow(a, row), &[a, row])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s), &[a])
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(gelu);
        self.push(v, Op::Gelu(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a), &[a])
    }

    /// Row-wise softmax. With `causal`, entry `(i, j)` is dropped for `j > i`.
    pub fn softmax_rows(&mut self, a: Var, causal: bool) -> Var {
        let x = self.value(a);
        let mut v = Mat::zeros(x.rows, x.cols);
        for i in 0..x.rows {
            let end = if causal { (i + 1).min(x.cols) } else { x.cols };
            let row = &x.row(i)[..end];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            let out = v.row_mut(i);
            for (o, &xi) in out.iter_mut().zip(row) {
                *o = (xi - m).exp();
                s += *o;
            }
            for o in &mut out[..end] {
                *o /= s;
            }
        }
        self.push(v, Op::SoftmaxRows(a), &[a])
    }

    /// Zero mean, unit variance per row (no affine part).
    pub fn normalize_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let n = x.cols as f64;
        let mut v = x.clone();
        let mut inv_std = Vec::with_capacity(x.rows);
        for i in 0..x.rows {
            let row = v.row_mut(i);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|&r| (r - mean) * (r - mean)).sum::<f64>() / n;
            let is = 1.0 / (var + NORM_EPS).sqrt();
            for r in row.iter_mut() {
                *r = (*r - mean) * is;
            }
            inv_std.push(is);
        }
        self.push(v, Op::NormalizeRows { x: a, inv_std }, &[a])
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a), &[a])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut v = Mat::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let m = self.value(p);
                assert_eq!(m.rows, rows);
                v.data[r * cols + off..r * cols + off + m.cols].copy_from_slice(m.row(r));
                off += m.cols;
            }
        }
        self.push(v, Op::ConcatCols(parts.to_vec()), parts)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        assert!(start + len <= x.cols);
        let mut v = Mat::zeros(x.rows, len);
        for r in 0..x.rows {
            v.row_mut(r).copy_from_slice(&x.row(r)[start..start + len]);
        }
        self.push(v, Op::SliceCols { x: a, start }, &[a])
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.cols, cols);
            data.extend_from_slice(&m.data);
        }
        let v = Mat::from_vec(data.len() / cols.max(1), cols, data);
        self.push(v, Op::ConcatRows(parts.to_vec()), parts)
    }

    /// Rows of `a` picked by index (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let x = self.value(a);
        let mut v = Mat::zeros(idx.len(), x.cols);
        for (o, &i) in idx.iter().enumerate() {
            v.row_mut(o).copy_from_slice(x.row(i));
        }
        self.push(v, Op::GatherRows { x: a, idx: idx.to_vec() }, &[a])
    }

    /// 3x3 zero-padded neighborhoods of an `(h*w) x c` map, giving `(h*w) x 9c`.
    pub fn im2col3x3(&mut self, a: Var, h: usize, w: usize) -> Var {
        let x = self.value(a);
        assert_eq!(x.rows, h * w);
        let c = x.cols;
        let mut v = Mat::zeros(h * w, 9 * c);
        for r in 0..h {
            for col in 0..w {
                let out = v.row_mut(r * w + col);
                for k in 0..9 {
                    let (nr, nc) = (r as isize + k as isize / 3 - 1, col as isize + k as isize % 3 - 1);
                    if nr >= 0 && nc >= 0 && (nr as usize) < h && (nc as usize) < w {
                        out[k * c..(k + 1) * c].copy_from_slice(x.row(nr as usize * w + nc as usize));
                    }
                }
            }
        }
        self.push(v, Op::Im2Col3x3 { x: a, h, w }, &[a])
    }

    /// Non-overlapping `k x k` patches of an `(h*w) x c` map, giving `(h/k * w/k) x (k*k*c)`.
    pub fn patchify(&mut self, a: Var, h: usize, w: usize, k: usize) -> Var {
        let x = self.value(a);
        assert_eq!(x.rows, h * w);
        assert!(h % k == 0 && w % k == 0);
        let c = x.cols;
        let (ph, pw) = (h / k, w / k);
        let mut v = Mat::zeros(ph * pw, k * k * c);
        for pr in 0..ph {
            for pc in 0..pw {
                let out = v.row_mut(pr * pw + pc);
                for dr in 0..k {
                    for dc in 0..k {
                        let src = (pr * k + dr) * w + pc * k + dc;
                        let off = (dr * k + dc) * c;
                        out[off..off + c].copy_from_slice(x.row(src));
                    }
                }
            }
        }
        self.push(v, Op::Patchify { x: a, h, w, k }, &[a])
    }

    /// Column-wise maximum, `1 x c`.
    pub fn max_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut arg = vec![0usize; x.cols];
        let mut v = Mat::row_vec(x.row(0).to_vec());
        for r in 1..x.rows {
            for (c, &val) in x.row(r).iter().enumerate() {
                if val > v.data[c] {
                    v.data[c] = val;
                    arg[c] = r;
                }
            }
        }
        self.push(v, Op::MaxRows { x: a, arg }, &[a])
    }

    /// Column-wise mean, `1 x c`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut v = Mat::zeros(1, x.cols);
        for r in 0..x.rows {
            for (o, &val) in v.data.iter_mut().zip(x.row(r)) {
                *o += val;
            }
        }
        let n = x.rows as f64;
        v.data.iter_mut().for_each(|o| *o /= n);
        self.push(v, Op::MeanRows(a), &[a])
    }

    /// `sum_i w_i * CE(softmax(logits_i), t_i) / norm`, a `1 x 1` scalar.
    pub fn weighted_ce(&mut self, logits: Var, targets: &[usize], weights: &[f64], norm: f64) -> Var {
        let x = self.value(logits);
        assert_eq!(x.rows, targets.len());
        assert_eq!(x.rows, weights.len());
        let mut probs = Mat::zeros(x.rows, x.cols);
        let mut total = 0.0;
        for i in 0..x.rows {
            let row = x.row(i);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|&z| (z - m).exp()).sum::<f64>().ln();
            for (p, &z) in probs.row_mut(i).iter_mut().zip(row) {
                *p = (z - lse).exp();
            }
            total += weights[i] * (lse - row[targets[i]]);
        }
        let v = Mat::row_vec(vec![total / norm]);
        self.push(
            v,
            Op::WeightedCe {
                logits,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
                norm,
                probs,
            },
            &[logits],
        )
    }

    /// Sum of `1 x 1` scalars.
    pub fn sum_scalars(&mut self, parts: &[Var]) -> Var {
        let mut acc = parts[0];
        for &p in &parts[1..] {
            acc = self.add(acc, p);
        }
        acc
    }

    /// Backpropagates from a scalar node.
    pub fn backward(&mut self, loss: Var) {
        assert_eq!(self.value(loss).data.len(), 1, "backward needs a scalar");
        self.nodes[loss.0].grad = Some(Mat::filled(1, 1, 1.0));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = self.nodes[i].grad.take() else { continue };
            let contribs = self.local_grads(i, &g);
            self.nodes[i].grad = Some(g);
            for (v, d) in contribs {
                let node = &mut self.nodes[v.0];
                if !node.needs_grad {
                    continue;
                }
                match &mut node.grad {
                    Some(acc) => acc.add_assign(&d),
                    None => node.grad = Some(d),
                }
            }
        }
    }

    fn local_grads(&self, i: usize, g: &Mat) -> Vec<(Var, Mat)> {
        let node = &self.nodes[i];
        let y = &node.value;
        let ng = |v: Var| self.nodes[v.0].needs_grad;
        match &node.op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) => {
                let mut out = Vec::new();
                if ng(*a) {
                    out.push((*a, g.matmul_t(self.value(*b))));
                }
                if ng(*b) {
                    out.push((*b, self.value(*a).t_matmul(g)));
                }
                out
            }
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::AddRow(a, r) => {
                let mut gr = Mat::zeros(1, g.cols);
                for row in 0..g.rows {
                    for (o, &x) in gr.data.iter_mut().zip(g.row(row)) {
                        *o += x;
                    }
                }
                vec![(*a, g.clone()), (*r, gr)]
            }
            Op::Mul(a, b) => {
                let (x, z) = (self.value(*a), self.value(*b));
                let ga = Mat::from_vec(g.rows, g.cols, g.data.iter().zip(&z.data).map(|(p, q)| p * q).collect());
                let gb = Mat::from_vec(g.rows, g.cols, g.data.iter().zip(&x.data).map(|(p, q)| p * q).collect());
                vec![(*a, ga), (*b, gb)]
            }
            Op::MulRow(a, r) => {
                let (x, rv) = (self.value(*a), self.value(*r));
                let mut ga = g.clone();
                let mut gr = Mat::zeros(1, g.cols);
                for row in 0..g.rows {
                    let (grow, xrow) = (g.row(row), x.row(row));
                    for c in 0..g.cols {
                        ga.data[row * g.cols + c] = grow[c] * rv.data[c];
                        gr.data[c] += grow[c] * xrow[c];
                    }
                }
                vec![(*a, ga), (*r, gr)]
            }
            Op::Scale(a, s) => vec![(*a, g.map(|x| x * s))],
            Op::Gelu(a) => {
                let x = self.value(*a);
                let d = x.data.iter().zip(&g.data).map(|(&xi, &gi)| gi * gelu_grad(xi)).collect();
                vec![(*a, Mat::from_vec(g.rows, g.cols, d))]
            }
            Op::Relu(a) => {
                let x = self.value(*a);
                let d = x.data.iter().zip(&g.data).map(|(&xi, &gi)| if xi > 0.0 { gi } else { 0.0 }).collect();
                vec![(*a, Mat::from_vec(g.rows, g.cols, d))]
            }
            Op::Sigmoid(a) => {
                let d = y.data.iter().zip(&g.data).map(|(&s, &gi)| gi * s * (1.0 - s)).collect();
                vec![(*a, Mat::from_vec(g.rows, g.cols, d))]
            }
            Op::SoftmaxRows(a) => {
                let mut d = Mat::zeros(g.rows, g.cols);
                for r in 0..g.rows {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for (o, (&p, &q)) in d.row_mut(r).iter_mut().zip(yr.iter().zip(gr)) {
                        *o = p * (q - dot);
                    }
                }
                vec![(*a, d)]
            }
            Op::NormalizeRows { x, inv_std } => {
                let n = g.cols as f64;
                let mut d = Mat::zeros(g.rows, g.cols);
                for r in 0..g.rows {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let mg = gr.iter().sum::<f64>() / n;
                    let mgy = gr.iter().zip(yr).map(|(p, q)| p * q).sum::<f64>() / n;
                    for (o, (&yi, &gi)) in d.row_mut(r).iter_mut().zip(yr.iter().zip(gr)) {
                        *o = inv_std[r] * (gi - mg - yi * mgy);
                    }
                }
                vec![(*x, d)]
            }
            Op::Transpose(a) => vec![(*a, g.transpose())],
            Op::ConcatCols(parts) => {
                let mut off = 0;
                parts
                    .iter()
                    .map(|&p| {
                        let c = self.value(p).cols;
                        let mut d = Mat::zeros(g.rows, c);
                        for r in 0..g.rows {
                            d.row_mut(r).copy_from_slice(&g.row(r)[off..off + c]);
                        }
                        off += c;
                        (p, d)
                    })
                    .collect()
            }
            Op::SliceCols { x, start } => {
                let xm = self.value(*x);
                let mut d = Mat::zeros(xm.rows, xm.cols);
                for r in 0..g.rows {
                    d.row_mut(r)[*start..*start + g.cols].copy_from_slice(g.row(r));
                }
                vec![(*x, d)]
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                parts
                    .iter()
                    .map(|&p| {
                        let n = self.value(p).data.len();
                        let d = Mat::from_vec(self.value(p).rows, g.cols, g.data[off..off + n].to_vec());
                        off += n;
                        (p, d)
                    })
                    .collect()
            }
            Op::GatherRows { x, idx } => {
                let xm = self.value(*x);
                let mut d = Mat::zeros(xm.rows, xm.cols);
                for (o, &i) in idx.iter().enumerate() {
                    for (acc, &v) in d.row_mut(i).iter_mut().zip(g.row(o)) {
                        *acc += v;
                    }
                }
                vec![(*x, d)]
            }
            Op::Im2Col3x3 { x, h, w } => {
                let xm = self.value(*x);
                let c = xm.cols;
                let mut d = Mat::zeros(xm.rows, c);
                for r in 0..*h {
                    for col in 0..*w {
                        let grow = g.row(r * w + col);
                        for k in 0..9 {
                            let (nr, nc) = (r as isize + k as isize / 3 - 1, col as isize + k as isize % 3 - 1);
                            if nr >= 0 && nc >= 0 && (nr as usize) < *h && (nc as usize) < *w {
                                let dst = d.row_mut(nr as usize * w + nc as usize);
                                for (acc, &v) in dst.iter_mut().zip(&grow[k * c..(k + 1) * c]) {
                                    *acc += v;
                                }
                            }
                        }
                    }
                }
                vec![(*x, d)]
            }
            Op::Patchify { x, h, w, k } => {
                let xm = self.value(*x);
                let c = xm.cols;
                let (ph, pw) = (h / k, w / k);
                let mut d = Mat::zeros(xm.rows, c);
                for pr in 0..ph {
                    for pc in 0..pw {
                        let grow = g.row(pr * pw + pc);
                        for dr in 0..*k {
                            for dc in 0..*k {
                                let dst = (pr * k + dr) * w + pc * k + dc;
                                let off = (dr * k + dc) * c;
                                d.row_mut(dst).copy_from_slice(&grow[off..off + c]);
                            }
                        }
                    }
                }
                vec![(*x, d)]
            }
            Op::MaxRows { x, arg } => {
                let xm = self.value(*x);
                let mut d = Mat::zeros(xm.rows, xm.cols);
                for (c, &r) in arg.iter().enumerate() {
                    d.data[r * xm.cols + c] = g.data[c];
                }
                vec![(*x, d)]
            }
            Op::MeanRows(x) => {
                let xm = self.value(*x);
                let n = xm.rows as f64;
                let mut d = Mat::zeros(xm.rows, xm.cols);
                for r in 0..xm.rows {
                    for (o, &v) in d.row_mut(r).iter_mut().zip(&g.data) {
                        *o = v / n;
                    }
                }
                vec![(*x, d)]
            }
            Op::WeightedCe { logits, targets, weights, norm, probs } => {
                let scale = g.scalar() / norm;
                let mut d = probs.clone();
                for (r, (&t, &w)) in targets.iter().zip(weights).enumerate() {
                    let row = d.row_mut(r);
                    row[t] -= 1.0;
                    for v in row.iter_mut() {
                        *v *= w * scale;
                    }
                }
                vec![(*logits, d)]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Compares tape gradients of `f` at `inputs` with central differences.
    fn check(inputs: Vec<Mat>, f: impl Fn(&mut Tape, &[Var]) -> Var) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|m| tape.leaf(m.clone(), true)).collect();
        let out = f(&mut tape, &vars);
        tape.backward(out);
        let eval = |ms: &[Mat]| {
            let mut t = Tape::new();
            let vs: Vec<Var> = ms.iter().map(|m| t.leaf(m.clone(), false)).collect();
            let o = f(&mut t, &vs);
            t.value(o).scalar()
        };
        for (k, m) in inputs.iter().enumerate() {
            let g = tape.grad(vars[k]).cloned().unwrap_or_else(|| Mat::zeros(m.rows, m.cols));
            for i in 0..m.data.len() {
                let h = 1e-6;
                let mut up = inputs.clone();
                up[k].data[i] += h;
                let mut dn = inputs.clone();
                dn[k].data[i] -= h;
                let fd = (eval(&up) - eval(&dn)) / (2.0 * h);
                let denom = fd.abs().max(g.data[i].abs()).max(1e-6);
                assert!(
                    (fd - g.data[i]).abs() / denom < 1e-4,
                    "input {k} entry {i}: tape {} fd {fd}",
                    g.data[i]
                );
            }
        }
    }

    fn rnd(r: usize, c: usize, seed: u64) -> Mat {
        Mat::randn(r, c, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Reduces any matrix to a scalar with fixed random weights.
    fn project(t: &mut Tape, x: Var, seed: u64) -> Var {
        let (r, c) = t.value(x).shape();
        let w = t.constant(rnd(r, c, seed));
        let p = t.mul(x, w);
        let ones = t.constant(Mat::filled(1, r, 1.0));
        let s = t.matmul(ones, p);
        let ones_c = t.constant(Mat::filled(c, 1, 1.0));
        t.matmul(s, ones_c)
    }

    #[test]
    fn matmul_bias_activations() {
        check(vec![rnd(3, 4, 1), rnd(4, 5, 2), rnd(1, 5, 3)], |t, v| {
            let m = t.matmul(v[0], v[1]);
            let b = t.add_row(m, v[2]);
            let g = t.gelu(b);
            let s = t.sigmoid(g);
            project(t, s, 9)
        });
    }

    #[test]
    fn softmax_and_norm() {
        check(vec![rnd(4, 4, 4), rnd(1, 4, 5)], |t, v| {
            let s = t.softmax_rows(v[0], true);
            let n = t.normalize_rows(v[0]);
            let m = t.mul_row(n, v[1]);
            let a = t.add(s, m);
            let tr = t.transpose(a);
            project(t, tr, 10)
        });
    }

    #[test]
    fn structural_ops() {
        check(vec![rnd(16, 3, 6), rnd(27, 2, 7)], |t, v| {
            let cols = t.im2col3x3(v[0], 4, 4);
            let conv = t.matmul(cols, v[1]);
            let p = t.patchify(v[0], 4, 4, 2);
            let mx = t.max_rows(conv);
            let mn = t.mean_rows(p);
            let cat = t.concat_cols(&[mx, mn]);
            let g = t.gather_rows(conv, &[0, 3, 3]);
            let sl = t.slice_cols(g, 1, 1);
            let rows = t.concat_rows(&[sl, sl]);
            let a = project(t, cat, 11);
            let b = project(t, rows, 12);
            t.sum_scalars(&[a, b])
        });
    }

    #[test]
    fn weighted_cross_entropy() {
        check(vec![rnd(3, 5, 8)], |t, v| t.weighted_ce(v[0], &[0, 4, 2], &[1.0, 3.0, 1.5], 3.0));
        let mut t = Tape::new();
        let l = t.constant(Mat::from_vec(1, 4, vec![0.0; 4]));
        let ce = t.weighted_ce(l, &[1], &[1.0], 1.0);
        assert!((t.value(ce).scalar() - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn causal_rows_sum_to_one() {
        let mut t = Tape::new();
        let x = t.constant(rnd(3, 3, 1));
        let s = t.softmax_rows(x, true);
        let v = t.value(s);
        assert_eq!(v.get(0, 1), 0.0);
        assert_eq!(v.get(1, 2), 0.0);
        for r in 0..3 {
            assert!((v.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn transposed_products() {
        let a = rnd(3, 4, 1);
        let b = rnd(3, 2, 2);
        let c = rnd(5, 4, 3);
        assert_eq!(a.t_matmul(&b), a.transpose().matmul(&b));
        let x = a.matmul_t(&c);
        let y = a.matmul(&c.transpose());
        for (p, q) in x.data.iter().zip(&y.data) {
            assert!((p - q).abs() < 1e-12);
        }
    }
}
