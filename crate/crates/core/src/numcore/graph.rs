//! Tape-based reverse-mode differentiation over a fixed operator set.

use super::linalg::{self, DEFAULT_JITTER};
use super::tensor::{matmul_into, matmul_nt_into, matmul_tn_into, Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

enum Op<T> {
    Leaf,
    Param(usize),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Neg(Var),
    Scale(Var, T),
    AddConst(Var),
    Exp(Var),
    Log(Var),
    Sqrt(Var),
    Tanh(Var),
    Square(Var),
    Relu(Var),
    FloorSqrt(Var, T),
    Map(Var, fn(T) -> T),
    Sum(Var),
    AddS(Var, Var),
    MulS(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    SumRows(Var),
    MatMul(Var, Var),
    Transpose(Var),
    Gather(Var, Vec<usize>),
    Concat(Vec<Var>),
    Col(Var, usize),
    Reshape(Var),
    SqDist(Var, Var),
    Matern52(Var),
    Cholesky(Var),
    SolveLower(Var, Var),
    LowerExpDiag(Var),
    Diag(Var),
    Conv2d { x: Var, w: Var, b: Var, cols: Option<Vec<T>> },
    AvgPool(Var),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Computation tape. Values are computed eagerly; `backward` walks the tape in reverse.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    record: bool,
    jitter: Vec<f64>,
    last_jitter: f64,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), record: true, jitter: DEFAULT_JITTER.to_vec(), last_jitter: 0.0 }
    }

    /// A tape that skips buffers only needed for the backward pass.
    pub fn inference() -> Self {
        Self { record: false, ..Self::new() }
    }

    pub fn with_jitter(mut self, schedule: &[f64]) -> Self {
        self.jitter = schedule.to_vec();
        self
    }

    /// Jitter used by the most recent Cholesky node.
    pub fn last_jitter(&self) -> f64 {
        self.last_jitter
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn param(&mut self, store: &super::ParamStore<T>, id: usize) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    pub fn param_by_name(&mut self, store: &super::ParamStore<T>, name: &str) -> Var {
        let id = store.id(name).unwrap_or_else(|| panic!("unknown parameter `{name}`"));
        self.param(store, id)
    }

    fn unary(&mut self, a: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let v = self.value(a).map(f);
        self.push(v, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(self.value(b), |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(self.value(b), |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(self.value(b), |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(a, |x| -x, Op::Neg(a))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        self.unary(a, |x| x * c, Op::Scale(a, c))
    }

    pub fn add_const(&mut self, a: Var, c: T) -> Var {
        self.unary(a, |x| x + c, Op::AddConst(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, T::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, T::ln, Op::Log(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, T::sqrt, Op::Sqrt(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, T::tanh, Op::Tanh(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(T::zero()), Op::Relu(a))
    }

    /// `sqrt(v)`, replaced by `floor` (with zero gradient) wherever `sqrt(v) <= floor`.
    pub fn floor_sqrt(&mut self, a: Var, floor: T) -> Var {
        self.unary(a, |x| if x > floor * floor { x.sqrt() } else { floor }, Op::FloorSqrt(a, floor))
    }

    /// Elementwise map with a caller-supplied derivative.
    pub fn map(&mut self, a: Var, f: fn(T) -> T, df: fn(T) -> T) -> Var {
        self.unary(a, f, Op::Map(a, df))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// `a + s` with `s` a one-element node.
    pub fn add_s(&mut self, a: Var, s: Var) -> Var {
        let sv = self.value(s).item();
        self.unary(a, |x| x + sv, Op::AddS(a, s))
    }

    /// `a * s` with `s` a one-element node.
    pub fn mul_s(&mut self, a: Var, s: Var) -> Var {
        let sv = self.value(s).item();
        self.unary(a, |x| x * sv, Op::MulS(a, s))
    }

    /// Adds a length-d vector to every row of an [n, d] matrix.
    pub fn add_row(&mut self, a: Var, r: Var) -> Var {
        let d = self.value(r).len();
        let rv = self.value(r).data().to_vec();
        let mut v = self.value(a).clone();
        assert_eq!(v.cols(), d, "add_row width");
        for (i, x) in v.data_mut().iter_mut().enumerate() {
            *x = *x + rv[i % d];
        }
        self.push(v, Op::AddRow(a, r))
    }

    /// Multiplies every row of an [n, d] matrix elementwise by a length-d vector.
    pub fn mul_row(&mut self, a: Var, r: Var) -> Var {
        let d = self.value(r).len();
        let rv = self.value(r).data().to_vec();
        let mut v = self.value(a).clone();
        assert_eq!(v.cols(), d, "mul_row width");
        for (i, x) in v.data_mut().iter_mut().enumerate() {
            *x = *x * rv[i % d];
        }
        self.push(v, Op::MulRow(a, r))
    }

    /// Column sums of an [n, d] matrix.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let d = t.cols();
        let mut out = vec![T::zero(); d];
        for i in 0..t.rows() {
            for (o, &x) in out.iter_mut().zip(t.row(i)) {
                *o = *o + x;
            }
        }
        self.push(Tensor::raw(&[d], out), Op::SumRows(a))
    }

    pub fn col_mean(&mut self, a: Var) -> Var {
        let n = self.value(a).rows();
        let s = self.sum_rows(a);
        self.scale(s, T::one() / T::of(n as f64))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    /// Row gather along the leading axis (repeats allowed).
    pub fn gather(&mut self, a: Var, idx: &[usize]) -> Var {
        let t = self.value(a);
        let c = t.cols();
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            out.extend_from_slice(t.row(i));
        }
        let mut shape = t.shape().to_vec();
        shape[0] = idx.len();
        self.push(Tensor::raw(&shape, out), Op::Gather(a, idx.to_vec()))
    }

    /// Concatenates [n, d_i] matrices along columns.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let n = self.value(parts[0]).rows();
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).cols()).collect();
        let total: usize = widths.iter().sum();
        let mut out = vec![T::zero(); n * total];
        let mut off = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let t = self.value(p);
            assert_eq!(t.rows(), n, "concat_cols row count");
            for i in 0..n {
                out[i * total + off..i * total + off + w].copy_from_slice(t.row(i));
            }
            off += w;
        }
        self.push(Tensor::raw(&[n, total], out), Op::Concat(parts.to_vec()))
    }

    /// Column `j` of an [n, d] matrix as a length-n vector.
    pub fn col(&mut self, a: Var, j: usize) -> Var {
        let t = self.value(a);
        let out: Vec<T> = (0..t.rows()).map(|i| t.at(i, j)).collect();
        let n = out.len();
        self.push(Tensor::raw(&[n], out), Op::Col(a, j))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let v = self.value(a).clone().reshape(shape);
        self.push(v, Op::Reshape(a))
    }

    /// Pairwise squared Euclidean distances between rows of x [n, d] and z [m, d].
    pub fn sqdist(&mut self, x: Var, z: Var) -> Var {
        let (xt, zt) = (self.value(x), self.value(z));
        let (n, m, d) = (xt.rows(), zt.rows(), xt.cols());
        assert_eq!(zt.cols(), d, "sqdist width");
        let mut out = vec![T::zero(); n * m];
        for i in 0..n {
            let xi = xt.row(i);
            for j in 0..m {
                let mut s = T::zero();
                for (&a, &b) in xi.iter().zip(zt.row(j)) {
                    let t = a - b;
                    s = s + t * t;
                }
                out[i * m + j] = s;
            }
        }
        self.push(Tensor::raw(&[n, m], out), Op::SqDist(x, z))
    }

    /// Unit-variance Matern-5/2 profile evaluated on squared distances.
    pub fn matern52(&mut self, r2: Var) -> Var {
        let s5 = T::of(5f64.sqrt());
        let c = T::of(5.0 / 3.0);
        self.unary(
            r2,
            |q| {
                let r = q.max(T::zero()).sqrt();
                (T::one() + s5 * r + c * q.max(T::zero())) * (-s5 * r).exp()
            },
            Op::Matern52(r2),
        )
    }

    /// Lower Cholesky factor using the tape's jitter schedule.
    pub fn cholesky(&mut self, a: Var) -> Result<Var> {
        let (l, j) = linalg::cholesky(self.value(a), &self.jitter)?;
        self.last_jitter = j;
        Ok(self.push(l, Op::Cholesky(a)))
    }

    /// Solves L·X = B for lower-triangular L.
    pub fn solve_lower(&mut self, l: Var, b: Var) -> Var {
        let x = linalg::solve_lower(self.value(l), self.value(b));
        self.push(x, Op::SolveLower(l, b))
    }

    /// Strict lower triangle of a square matrix with exponentiated diagonal.
    pub fn lower_exp_diag(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let n = t.rows();
        let mut out = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..i {
                out[i * n + j] = t.at(i, j);
            }
            out[i * n + i] = t.at(i, i).exp();
        }
        self.push(Tensor::raw(&[n, n], out), Op::LowerExpDiag(a))
    }

    pub fn diag(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let n = t.rows();
        let out: Vec<T> = (0..n).map(|i| t.at(i, i)).collect();
        self.push(Tensor::raw(&[n], out), Op::Diag(a))
    }

    /// Stride-1 zero-padded ("same") 2-D convolution.
    /// x: [B, C, H, W], w: [F, C, k, k], b: [F] -> [B, F, H, W].
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws) = (self.value(x).shape().to_vec(), self.value(w).shape().to_vec());
        if xs.len() != 4 || ws.len() != 4 || ws[1] != xs[1] || ws[2] != ws[3] || ws[2] % 2 == 0 {
            return Err(Error::ShapeMismatch(format!("conv2d input {xs:?} with weights {ws:?}")));
        }
        let (bn, c, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
        let (f, k) = (ws[0], ws[2]);
        let ckk = c * k * k;
        let hw = h * wd;
        let mut out = vec![T::zero(); bn * f * hw];
        let mut saved = if self.record { Some(vec![T::zero(); bn * ckk * hw]) } else { None };
        let mut scratch = vec![T::zero(); ckk * hw];
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let bv = self.value(b).data();
        for img in 0..bn {
            let cols = match saved.as_mut() {
                Some(s) => &mut s[img * ckk * hw..(img + 1) * ckk * hw],
                None => &mut scratch[..],
            };
            im2col(&xv[img * c * hw..(img + 1) * c * hw], c, h, wd, k, cols);
            let o = &mut out[img * f * hw..(img + 1) * f * hw];
            for (fi, orow) in o.chunks_mut(hw).enumerate() {
                orow.fill(bv[fi]);
            }
            matmul_into(wv, cols, o, f, ckk, hw);
        }
        Ok(self.push(Tensor::raw(&[bn, f, h, wd], out), Op::Conv2d { x, w, b, cols: saved }))
    }

    /// Global average pool: [B, F, H, W] -> [B, F].
    pub fn avg_pool(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s = t.shape();
        let (bn, f, hw) = (s[0], s[1], s[2] * s[3]);
        let inv = T::one() / T::of(hw as f64);
        let out: Vec<T> = t.data().chunks(hw).map(|c| c.iter().copied().sum::<T>() * inv).collect();
        self.push(Tensor::raw(&[bn, f], out), Op::AvgPool(a))
    }

    /// Reverse sweep from a one-element output. Returns per-node adjoints.
    pub fn backward(&self, out: Var) -> Vec<Option<Tensor<T>>> {
        assert_eq!(self.value(out).len(), 1, "backward needs a scalar output");
        let mut g: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        g[out.0] = Some(Tensor::full(self.value(out).shape(), T::one()));
        for idx in (0..=out.0).rev() {
            let Some(gy) = g[idx].take() else { continue };
            self.backprop(idx, &gy, &mut g);
            g[idx] = Some(gy);
        }
        g
    }

    /// Gradients of `out` for every parameter leaf, keyed by store index.
    pub fn param_grads(&self, out: Var) -> Vec<(usize, Tensor<T>)> {
        let g = self.backward(out);
        let mut res = Vec::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Param(pid) = node.op {
                let gi = g[i].clone().unwrap_or_else(|| Tensor::zeros(node.value.shape()));
                res.push((pid, gi));
            }
        }
        res
    }

    fn backprop(&self, idx: usize, gy: &Tensor<T>, g: &mut [Option<Tensor<T>>]) {
        let y = &self.nodes[idx].value;
        let val = |v: Var| &self.nodes[v.0].value;
        match &self.nodes[idx].op {
            Op::Leaf | Op::Param(_) => {}
            Op::Add(a, b) => {
                acc(g, *a, gy.clone());
                acc(g, *b, gy.clone());
            }
            Op::Sub(a, b) => {
                acc(g, *a, gy.clone());
                acc(g, *b, gy.map(|v| -v));
            }
            Op::Mul(a, b) => {
                acc(g, *a, gy.zip(val(*b), |u, v| u * v));
                acc(g, *b, gy.zip(val(*a), |u, v| u * v));
            }
            Op::Neg(a) => acc(g, *a, gy.map(|v| -v)),
            Op::Scale(a, c) => {
                let c = *c;
                acc(g, *a, gy.map(|v| v * c));
            }
            Op::AddConst(a) => acc(g, *a, gy.clone()),
            Op::Exp(a) => acc(g, *a, gy.zip(y, |u, v| u * v)),
            Op::Log(a) => acc(g, *a, gy.zip(val(*a), |u, x| u / x)),
            Op::Sqrt(a) => acc(g, *a, gy.zip(y, |u, s| u / (s + s))),
            Op::Tanh(a) => acc(g, *a, gy.zip(y, |u, t| u * (T::one() - t * t))),
            Op::Square(a) => acc(g, *a, gy.zip(val(*a), |u, x| u * (x + x))),
            Op::Relu(a) => acc(g, *a, gy.zip(val(*a), |u, x| if x > T::zero() { u } else { T::zero() })),
            Op::FloorSqrt(a, floor) => {
                let ff = *floor * *floor;
                let d = val(*a).zip(y, |x, s| if x > ff { T::one() / (s + s) } else { T::zero() });
                acc(g, *a, gy.zip(&d, |u, v| u * v));
            }
            Op::Map(a, df) => acc(g, *a, gy.zip(val(*a), |u, x| u * df(x))),
            Op::Sum(a) => acc(g, *a, Tensor::full(val(*a).shape(), gy.item())),
            Op::AddS(a, s) => {
                acc(g, *a, gy.clone());
                acc(g, *s, Tensor::scalar(gy.sum()));
            }
            Op::MulS(a, s) => {
                let sv = val(*s).item();
                acc(g, *a, gy.map(|u| u * sv));
                let dot: T = gy.data().iter().zip(val(*a).data()).map(|(&u, &x)| u * x).sum();
                acc(g, *s, Tensor::scalar(dot));
            }
            Op::AddRow(a, r) => {
                acc(g, *a, gy.clone());
                acc(g, *r, col_sums(gy, val(*r).shape()));
            }
            Op::MulRow(a, r) => {
                let rv = val(*r).data();
                let d = rv.len();
                let mut ga = gy.clone();
                for (i, x) in ga.data_mut().iter_mut().enumerate() {
                    *x = *x * rv[i % d];
                }
                acc(g, *a, ga);
                let prod = gy.zip(val(*a), |u, x| u * x);
                acc(g, *r, col_sums(&prod, val(*r).shape()));
            }
            Op::SumRows(a) => {
                let at = val(*a);
                let d = at.cols();
                let mut ga = Tensor::zeros(at.shape());
                for (i, x) in ga.data_mut().iter_mut().enumerate() {
                    *x = gy.data()[i % d];
                }
                acc(g, *a, ga);
            }
            Op::MatMul(a, b) => {
                let (at, bt) = (val(*a), val(*b));
                let (n, k, m) = (at.rows(), at.cols(), bt.cols());
                let mut ga = vec![T::zero(); n * k];
                matmul_nt_into(gy.data(), bt.data(), &mut ga, n, m, k);
                let mut gb = vec![T::zero(); k * m];
                matmul_tn_into(at.data(), gy.data(), &mut gb, n, k, m);
                acc(g, *a, Tensor::raw(at.shape(), ga));
                acc(g, *b, Tensor::raw(bt.shape(), gb));
            }
            Op::Transpose(a) => acc(g, *a, gy.transpose().reshape(val(*a).shape())),
            Op::Gather(a, ids) => {
                let at = val(*a);
                let c = at.cols();
                let mut ga = Tensor::zeros(at.shape());
                for (r, &i) in ids.iter().enumerate() {
                    let dst = &mut ga.data_mut()[i * c..(i + 1) * c];
                    for (d, &s) in dst.iter_mut().zip(&gy.data()[r * c..(r + 1) * c]) {
                        *d = *d + s;
                    }
                }
                acc(g, *a, ga);
            }
            Op::Concat(parts) => {
                let total = gy.cols();
                let n = gy.rows();
                let mut off = 0;
                for &p in parts {
                    let w = val(p).cols();
                    let mut gp = Vec::with_capacity(n * w);
                    for i in 0..n {
                        gp.extend_from_slice(&gy.data()[i * total + off..i * total + off + w]);
                    }
                    acc(g, p, Tensor::raw(val(p).shape(), gp));
                    off += w;
                }
            }
            Op::Col(a, j) => {
                let at = val(*a);
                let mut ga = Tensor::zeros(at.shape());
                for i in 0..at.rows() {
                    ga.set(i, *j, gy.data()[i]);
                }
                acc(g, *a, ga);
            }
            Op::Reshape(a) => acc(g, *a, gy.clone().reshape(val(*a).shape())),
            Op::SqDist(x, z) => {
                let (xt, zt) = (val(*x), val(*z));
                let (n, m, d) = (xt.rows(), zt.rows(), xt.cols());
                let gd = gy.data();
                let mut gx = vec![T::zero(); n * d];
                let mut gz = vec![T::zero(); m * d];
                for i in 0..n {
                    let xi = xt.row(i);
                    for j in 0..m {
                        let w = gd[i * m + j];
                        if w == T::zero() {
                            continue;
                        }
                        let w2 = w + w;
                        let zj = zt.row(j);
                        for c in 0..d {
                            let t = w2 * (xi[c] - zj[c]);
                            gx[i * d + c] = gx[i * d + c] + t;
                            gz[j * d + c] = gz[j * d + c] - t;
                        }
                    }
                }
                acc(g, *x, Tensor::raw(xt.shape(), gx));
                acc(g, *z, Tensor::raw(zt.shape(), gz));
            }
            Op::Matern52(a) => {
                let s5 = T::of(5f64.sqrt());
                let c = T::of(-5.0 / 6.0);
                acc(
                    g,
                    *a,
                    gy.zip(val(*a), |u, q| {
                        let r = q.max(T::zero()).sqrt();
                        u * c * (T::one() + s5 * r) * (-s5 * r).exp()
                    }),
                );
            }
            Op::Cholesky(a) => acc(g, *a, cholesky_backward(y, gy)),
            Op::SolveLower(l, b) => {
                let lt = val(*l);
                let gb = linalg::solve_lower_t(lt, gy);
                let n = lt.rows();
                let m = if y.shape().len() == 1 { 1 } else { y.cols() };
                let mut gl = vec![T::zero(); n * n];
                for i in 0..n {
                    for j in 0..=i {
                        let mut s = T::zero();
                        for c in 0..m {
                            s = s + gb.data()[i * m + c] * y.data()[j * m + c];
                        }
                        gl[i * n + j] = -s;
                    }
                }
                acc(g, *l, Tensor::raw(&[n, n], gl));
                acc(g, *b, gb);
            }
            Op::LowerExpDiag(a) => {
                let n = y.rows();
                let mut ga = vec![T::zero(); n * n];
                for i in 0..n {
                    for j in 0..i {
                        ga[i * n + j] = gy.at(i, j);
                    }
                    ga[i * n + i] = gy.at(i, i) * y.at(i, i);
                }
                acc(g, *a, Tensor::raw(&[n, n], ga));
            }
            Op::Diag(a) => {
                let n = y.len();
                let mut ga = Tensor::zeros(&[n, n]);
                for i in 0..n {
                    ga.set(i, i, gy.data()[i]);
                }
                acc(g, *a, ga);
            }
            Op::Conv2d { x, w, b, cols } => {
                let cols = cols.as_ref().expect("conv2d backward requires a recording tape");
                let (xs, ws) = (val(*x).shape(), val(*w).shape());
                let (bn, c, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
                let (f, k) = (ws[0], ws[2]);
                let (ckk, hw) = (c * k * k, h * wd);
                let wv = val(*w).data();
                let mut gw = vec![T::zero(); f * ckk];
                let mut gb = vec![T::zero(); f];
                let mut gx = vec![T::zero(); bn * c * hw];
                let mut gcols = vec![T::zero(); ckk * hw];
                for img in 0..bn {
                    let go = &gy.data()[img * f * hw..(img + 1) * f * hw];
                    let ci = &cols[img * ckk * hw..(img + 1) * ckk * hw];
                    for (fi, row) in go.chunks(hw).enumerate() {
                        gb[fi] = gb[fi] + row.iter().copied().sum::<T>();
                    }
                    matmul_nt_into(go, ci, &mut gw, f, hw, ckk);
                    gcols.fill(T::zero());
                    matmul_tn_into(wv, go, &mut gcols, f, ckk, hw);
                    col2im(&gcols, c, h, wd, k, &mut gx[img * c * hw..(img + 1) * c * hw]);
                }
                acc(g, *x, Tensor::raw(xs, gx));
                acc(g, *w, Tensor::raw(ws, gw));
                acc(g, *b, Tensor::raw(&[f], gb));
            }
            Op::AvgPool(a) => {
                let s = val(*a).shape();
                let hw = s[2] * s[3];
                let inv = T::one() / T::of(hw as f64);
                let mut ga = Vec::with_capacity(val(*a).len());
                for &u in gy.data() {
                    ga.extend(std::iter::repeat(u * inv).take(hw));
                }
                acc(g, *a, Tensor::raw(s, ga));
            }
        }
    }
}

fn acc<T: Scalar>(g: &mut [Option<Tensor<T>>], v: Var, t: Tensor<T>) {
    match &mut g[v.0] {
        Some(e) => e.add_assign(&t),
        slot @ None => *slot = Some(t),
    }
}

fn col_sums<T: Scalar>(m: &Tensor<T>, shape: &[usize]) -> Tensor<T> {
    let d: usize = shape.iter().product();
    let mut out = vec![T::zero(); d];
    for (i, &x) in m.data().iter().enumerate() {
        out[i % d] = out[i % d] + x;
    }
    Tensor::raw(shape, out)
}

/// Adjoint of A given L = chol(A) and the adjoint of L (symmetric result).
fn cholesky_backward<T: Scalar>(l: &Tensor<T>, gl: &Tensor<T>) -> Tensor<T> {
    let n = l.rows();
    let mut p = l.transpose().matmul(gl);
    for i in 0..n {
        for j in 0..n {
            let v = if j > i {
                T::zero()
            } else if j == i {
                p.at(i, i) * T::of(0.5)
            } else {
                p.at(i, j)
            };
            p.set(i, j, v);
        }
    }
    let x = linalg::solve_lower_t(l, &p);
    let s = linalg::solve_lower_t(l, &x.transpose()).transpose();
    let half = T::of(0.5);
    let st = s.transpose();
    s.zip(&st, |a, b| (a + b) * half)
}

fn im2col<T: Scalar>(x: &[T], c: usize, h: usize, w: usize, k: usize, cols: &mut [T]) {
    let p = (k / 2) as isize;
    let hw = h * w;
    for ch in 0..c {
        for di in 0..k {
            for dj in 0..k {
                let row = (ch * k + di) * k + dj;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                for yy in 0..h {
                    let sy = yy as isize + di as isize - p;
                    for xx in 0..w {
                        let sx = xx as isize + dj as isize - p;
                        dst[yy * w + xx] = if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize {
                            x[ch * hw + sy as usize * w + sx as usize]
                        } else {
                            T::zero()
                        };
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(cols: &[T], c: usize, h: usize, w: usize, k: usize, x: &mut [T]) {
    let p = (k / 2) as isize;
    let hw = h * w;
    for ch in 0..c {
        for di in 0..k {
            for dj in 0..k {
                let row = (ch * k + di) * k + dj;
                let src = &cols[row * hw..(row + 1) * hw];
                for yy in 0..h {
                    let sy = yy as isize + di as isize - p;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for xx in 0..w {
                        let sx = xx as isize + dj as isize - p;
                        if sx >= 0 && sx < w as isize {
                            let t = &mut x[ch * hw + sy as usize * w + sx as usize];
                            *t = *t + src[yy * w + xx];
                        }
                    }
                }
            }
        }
    }
}
