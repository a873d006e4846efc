//! Whitened sparse variational GP with ARD kernels and an optional Gaussian-bump prior mean.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{cholesky, solve_lower, Graph, ParamStore, Scalar, Tensor, Var};

pub const NOISE_FLOOR: f64 = 1e-6;
/// Half-range of the squashed structured-mean centre.
pub const CENTER_BOUND: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    #[default]
    Matern52,
    Rbf,
}

impl std::str::FromStr for KernelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matern52" | "matern" => Ok(Self::Matern52),
            "rbf" => Ok(Self::Rbf),
            _ => Err(Error::Config(format!("unknown kernel `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GpSpec {
    pub dim: usize,
    pub inducing: usize,
    pub kernel: KernelKind,
    /// Column indices of the (x, y) coordinates read by the structured mean.
    pub structured: Option<(usize, usize)>,
}

/// Closed-form kernel value between two points.
pub fn kernel_value(kind: KernelKind, variance: f64, lengthscales: &[f64], a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != lengthscales.len() || b.len() != lengthscales.len() {
        return Err(Error::DimensionMismatch { expected: lengthscales.len(), got: a.len().max(b.len()) });
    }
    let r2: f64 = a.iter().zip(b).zip(lengthscales).map(|((x, y), l)| ((x - y) / l).powi(2)).sum();
    Ok(variance
        * match kind {
            KernelKind::Rbf => (-0.5 * r2).exp(),
            KernelKind::Matern52 => {
                let r = r2.sqrt();
                let s5 = 5f64.sqrt();
                (1.0 + s5 * r + 5.0 / 3.0 * r2) * (-s5 * r).exp()
            }
        })
}

/// Structured prior mean `c + A exp(-((x-xc)² + (y-yc)²) / (2ω²))`.
pub fn bump_mean(c: f64, amp: f64, center: (f64, f64), width: f64, x: f64, y: f64) -> f64 {
    c + amp * (-((x - center.0).powi(2) + (y - center.1).powi(2)) / (2.0 * width * width)).exp()
}

/// Registers GP parameters with their initial values.
pub fn init_gp<T: Scalar>(store: &mut ParamStore<T>, spec: &GpSpec, inducing_inputs: Tensor<T>) -> Result<()> {
    let (m, d) = (spec.inducing, spec.dim);
    if inducing_inputs.shape() != [m, d] {
        return Err(Error::ShapeMismatch(format!("inducing inputs {:?}, expected [{m}, {d}]", inducing_inputs.shape())));
    }
    store.insert("gp.log_ls", Tensor::zeros(&[d]));
    store.insert("gp.log_var", Tensor::scalar(T::zero()));
    store.insert("gp.raw_noise", Tensor::scalar(T::of((0.1 - NOISE_FLOOR).ln())));
    store.insert("gp.mean_c", Tensor::scalar(T::zero()));
    store.insert("gp.z", inducing_inputs);
    store.insert("gp.m", Tensor::zeros(&[m]));
    store.insert("gp.lu", Tensor::zeros(&[m, m]));
    if spec.structured.is_some() {
        store.insert("gp.sm.amp", Tensor::scalar(T::one()));
        store.insert("gp.sm.raw_xc", Tensor::scalar(T::zero()));
        store.insert("gp.sm.raw_yc", Tensor::scalar(T::zero()));
        store.insert("gp.sm.log_w", Tensor::scalar(T::of(0.5f64.ln())));
    }
    Ok(())
}

/// GP parameter nodes on a tape.
pub struct GpVars {
    pub log_ls: Var,
    pub log_var: Var,
    pub raw_noise: Var,
    pub mean_c: Var,
    pub z: Var,
    pub m: Var,
    pub lu: Var,
    pub bump: Option<[Var; 4]>,
}

impl GpVars {
    pub fn load<T: Scalar>(g: &mut Graph<T>, store: &ParamStore<T>, spec: &GpSpec) -> Self {
        let mut p = |n: &str| g.param_by_name(store, n);
        Self {
            log_ls: p("gp.log_ls"),
            log_var: p("gp.log_var"),
            raw_noise: p("gp.raw_noise"),
            mean_c: p("gp.mean_c"),
            z: p("gp.z"),
            m: p("gp.m"),
            lu: p("gp.lu"),
            bump: spec.structured.map(|_| [p("gp.sm.amp"), p("gp.sm.raw_xc"), p("gp.sm.raw_yc"), p("gp.sm.log_w")]),
        }
    }
}

/// Kernel matrix between rows of `a` and rows of `b`.
pub fn kernel<T: Scalar>(g: &mut Graph<T>, v: &GpVars, kind: KernelKind, a: Var, b: Var) -> Result<Var> {
    let d = g.value(v.log_ls).len();
    for x in [a, b] {
        if g.value(x).cols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: g.value(x).cols() });
        }
    }
    let inv = g.neg(v.log_ls);
    let inv = g.exp(inv);
    let sa = g.mul_row(a, inv);
    let sb = if a == b { sa } else { g.mul_row(b, inv) };
    let r2 = g.sqdist(sa, sb);
    let k = match kind {
        KernelKind::Matern52 => g.matern52(r2),
        KernelKind::Rbf => {
            let h = g.scale(r2, T::of(-0.5));
            g.exp(h)
        }
    };
    let var = g.exp(v.log_var);
    Ok(g.mul_s(k, var))
}

/// Prior mean at each row of `x`.
pub fn mean<T: Scalar>(g: &mut Graph<T>, v: &GpVars, spec: &GpSpec, x: Var) -> Var {
    let n = g.value(x).rows();
    let zero = g.constant(Tensor::zeros(&[n]));
    let base = g.add_s(zero, v.mean_c);
    let (Some([amp, rx, ry, lw]), Some((cx, cy))) = (v.bump, spec.structured) else {
        return base;
    };
    let bound = T::of(CENTER_BOUND);
    let xc = g.tanh(rx);
    let xc = g.scale(xc, -bound);
    let yc = g.tanh(ry);
    let yc = g.scale(yc, -bound);
    let xs = g.col(x, cx);
    let ys = g.col(x, cy);
    let dx = g.add_s(xs, xc);
    let dy = g.add_s(ys, yc);
    let dx2 = g.square(dx);
    let dy2 = g.square(dy);
    let d2 = g.add(dx2, dy2);
    let w = g.scale(lw, T::of(-2.0));
    let w = g.exp(w);
    let coef = g.scale(w, T::of(-0.5));
    let e = g.mul_s(d2, coef);
    let e = g.exp(e);
    let bump = g.mul_s(e, amp);
    g.add(bump, base)
}

/// Latent predictive mean and variance of f at rows of `x`.
pub fn posterior<T: Scalar>(g: &mut Graph<T>, v: &GpVars, spec: &GpSpec, x: Var) -> Result<(Var, Var)> {
    let kzz = kernel(g, v, spec.kernel, v.z, v.z)?;
    let l = g.cholesky(kzz)?;
    let kzx = kernel(g, v, spec.kernel, v.z, x)?;
    let a = g.solve_lower(l, kzx);
    let m = spec.inducing;
    let n = g.value(x).rows();
    let mcol = g.reshape(v.m, &[m, 1]);
    let at = g.transpose(a);
    let mu = g.matmul(at, mcol);
    let mu = g.reshape(mu, &[n]);
    let prior = mean(g, v, spec, x);
    let mu = g.add(mu, prior);
    let lu = g.lower_exp_diag(v.lu);
    let lut = g.transpose(lu);
    let la = g.matmul(lut, a);
    let la2 = g.square(la);
    let s2 = g.sum_rows(la2);
    let a2 = g.square(a);
    let q2 = g.sum_rows(a2);
    let var = g.sub(s2, q2);
    let sf = g.exp(v.log_var);
    let var = g.add_s(var, sf);
    Ok((mu, var))
}

/// Observation noise variance node.
pub fn noise<T: Scalar>(g: &mut Graph<T>, v: &GpVars) -> Var {
    let e = g.exp(v.raw_noise);
    g.add_const(e, T::of(NOISE_FLOOR))
}

/// KL[q(v) || N(0, I)] in the whitened parameterization.
pub fn kl<T: Scalar>(g: &mut Graph<T>, v: &GpVars) -> Var {
    let m = g.value(v.m).len();
    let lu = g.lower_exp_diag(v.lu);
    let l2 = g.square(lu);
    let tr = g.sum(l2);
    let m2 = g.square(v.m);
    let mm = g.sum(m2);
    let d = g.diag(v.lu);
    let logdet = g.sum(d);
    let logdet = g.scale(logdet, T::of(-2.0));
    let s = g.add(tr, mm);
    let s = g.add(s, logdet);
    let s = g.add_const(s, T::of(-(m as f64)));
    g.scale(s, T::of(0.5))
}

/// Sum over the batch of E_q[log N(y | f, σ²_n)].
pub fn expected_log_lik<T: Scalar>(g: &mut Graph<T>, v: &GpVars, spec: &GpSpec, x: Var, y: Var) -> Result<Var> {
    let b = g.value(x).rows();
    if g.value(y).len() != b {
        return Err(Error::ShapeMismatch(format!("{} targets for {b} inputs", g.value(y).len())));
    }
    let (mu, var) = posterior(g, v, spec, x)?;
    let r = g.sub(y, mu);
    let r2 = g.square(r);
    let t = g.add(r2, var);
    let st = g.sum(t);
    let nz = noise(g, v);
    let lnz = g.log(nz);
    let inv = g.neg(lnz);
    let inv = g.exp(inv);
    let quad = g.mul(st, inv);
    let quad = g.scale(quad, T::of(-0.5));
    let logn = g.add_const(lnz, T::of((2.0 * std::f64::consts::PI).ln()));
    let logn = g.scale(logn, T::of(-0.5 * b as f64));
    Ok(g.add(quad, logn))
}

/// ELBO estimate `(N / B) Σ_batch E_q[log p(y|f)] − KL`.
pub fn elbo<T: Scalar>(g: &mut Graph<T>, v: &GpVars, spec: &GpSpec, x: Var, y: Var, total: usize) -> Result<Var> {
    let b = g.value(x).rows();
    if b == 0 {
        return Err(Error::ShapeMismatch("empty batch".into()));
    }
    let ell = expected_log_lik(g, v, spec, x, y)?;
    let ell = g.scale(ell, T::of(total as f64 / b as f64));
    let k = kl(g, v);
    Ok(g.sub(ell, k))
}

/// Predictive mean and variance for each row of `x` (`[n, D]`), evaluated in chunks.
/// With `observation` set the noise variance is added.
pub fn predict<T: Scalar>(
    store: &ParamStore<T>,
    spec: &GpSpec,
    x: &Tensor<T>,
    observation: bool,
) -> Result<(Vec<T>, Vec<T>)> {
    const CHUNK: usize = 512;
    let n = x.rows();
    let d = x.cols();
    let mut means = Vec::with_capacity(n);
    let mut vars = Vec::with_capacity(n);
    for start in (0..n).step_by(CHUNK) {
        let end = (start + CHUNK).min(n);
        let mut g = Graph::inference();
        let v = GpVars::load(&mut g, store, spec);
        let xs = g.constant(Tensor::raw(&[end - start, d], x.data()[start * d..end * d].to_vec()));
        let (mu, var) = posterior(&mut g, &v, spec, xs)?;
        let nz = if observation {
            let nv = noise(&mut g, &v);
            g.value(nv).item()
        } else {
            T::zero()
        };
        means.extend_from_slice(g.value(mu).data());
        vars.extend(g.value(var).data().iter().map(|&s| s.max(T::zero()) + nz));
    }
    Ok((means, vars))
}

/// Sets the whitened variational parameters to the optimum for fixed hyperparameters and
/// inducing inputs, given full-data inputs `x` and targets `y`.
pub fn set_optimal_variational<T: Scalar>(
    store: &mut ParamStore<T>,
    spec: &GpSpec,
    x: &Tensor<T>,
    y: &[T],
) -> Result<()> {
    let (a, resid, s2) = {
        let mut g = Graph::inference();
        let v = GpVars::load(&mut g, store, spec);
        let xv = g.constant(x.clone());
        let kzz = kernel(&mut g, &v, spec.kernel, v.z, v.z)?;
        let l = g.cholesky(kzz)?;
        let kzx = kernel(&mut g, &v, spec.kernel, v.z, xv)?;
        let a = g.solve_lower(l, kzx);
        let prior = mean(&mut g, &v, spec, xv);
        let resid: Vec<T> = y.iter().zip(g.value(prior).data()).map(|(&t, &p)| t - p).collect();
        let nz = noise(&mut g, &v);
        (g.value(a).clone(), resid, g.value(nz).item())
    };
    let m = a.rows();
    // Precision Λ = I + A Aᵀ / σ²; q(v) = N(Λ⁻¹ A r / σ², Λ⁻¹).
    let mut lam = a.matmul(&a.transpose()).map(|v| v / s2);
    for i in 0..m {
        lam.set(i, i, lam.at(i, i) + T::one());
    }
    let (ll, _) = cholesky(&lam, &[0.0])?;
    let ar = a.matmul(&Tensor::raw(&[resid.len(), 1], resid)).map(|v| v / s2);
    let w = solve_lower(&ll, &ar);
    let mean_v = crate::numcore::solve_lower_t(&ll, &w);
    // Σ = Λ⁻¹ = L⁻ᵀ L⁻¹; its Cholesky factor is taken explicitly.
    let linv = solve_lower(&ll, &Tensor::eye(m));
    let sigma = linv.transpose().matmul(&linv);
    let sym = sigma.zip(&sigma.transpose(), |p, q| (p + q) * T::of(0.5));
    let (ls, _) = cholesky(&sym, &[0.0, 1e-12])?;
    let mut raw = ls.clone();
    for i in 0..m {
        raw.set(i, i, ls.at(i, i).ln());
    }
    let mid = store.id("gp.m").expect("gp.m registered");
    *store.value_mut(mid) = mean_v.reshape(&[m]);
    let lid = store.id("gp.lu").expect("gp.lu registered");
    *store.value_mut(lid) = raw;
    Ok(())
}
