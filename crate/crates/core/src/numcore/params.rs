use super::graph::{Graph, Var};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug)]
struct Slot<T> {
    name: String,
    value: Tensor<T>,
    grad: Tensor<T>,
    m: Tensor<T>,
    v: Tensor<T>,
}

/// Named trainable tensors with gradient slots and Adam moments.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    slots: Vec<Slot<T>>,
    step: u64,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { slots: Vec::new(), step: 0 }
    }

    /// Registers a parameter and returns its index. Panics on duplicate names.
    pub fn insert(&mut self, name: &str, value: Tensor<T>) -> usize {
        assert!(self.id(name).is_none(), "duplicate parameter `{name}`");
        let z = Tensor::zeros(value.shape());
        self.slots.push(Slot { name: name.to_string(), grad: z.clone(), m: z.clone(), v: z, value });
        self.slots.len() - 1
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.slots.iter().position(|s| s.name == name)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.slots[id].name
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.slots.iter().map(|s| s.name.as_str())
    }

    pub fn value(&self, id: usize) -> &Tensor<T> {
        &self.slots[id].value
    }

    pub fn value_mut(&mut self, id: usize) -> &mut Tensor<T> {
        &mut self.slots[id].value
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.id(name).map(|i| &self.slots[i].value)
    }

    pub fn grad(&self, id: usize) -> &Tensor<T> {
        &self.slots[id].grad
    }

    pub fn set_grad(&mut self, id: usize, g: Tensor<T>) {
        assert_eq!(g.shape(), self.slots[id].value.shape(), "gradient shape");
        self.slots[id].grad = g;
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Total number of scalar entries.
    pub fn numel(&self) -> usize {
        self.slots.iter().map(|s| s.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for s in &mut self.slots {
            s.grad.data_mut().fill(T::zero());
        }
    }

    /// Adam moments and step counter, for checkpointing.
    pub fn moments(&self, id: usize) -> (&Tensor<T>, &Tensor<T>) {
        (&self.slots[id].m, &self.slots[id].v)
    }

    pub fn restore_moments(&mut self, id: usize, m: Tensor<T>, v: Tensor<T>, step: u64) {
        self.slots[id].m = m;
        self.slots[id].v = v;
        self.step = step;
    }
}

fn eval<T: Scalar, F>(store: &ParamStore<T>, objective: &F, record: bool) -> Result<(Graph<T>, Var)>
where
    F: Fn(&mut Graph<T>, &ParamStore<T>) -> Result<Var>,
{
    let mut g = if record { Graph::new() } else { Graph::inference() };
    let out = objective(&mut g, store)?;
    let v = g.value(out);
    if v.len() != 1 {
        return Err(Error::ShapeMismatch(format!("objective must be scalar, got shape {:?}", v.shape())));
    }
    if !v.item().is_finite() {
        return Err(Error::NonFinite);
    }
    Ok((g, out))
}

/// Evaluates the objective, writes its gradient into every slot and returns its value.
pub fn grad<T: Scalar, F>(store: &mut ParamStore<T>, objective: F) -> Result<T>
where
    F: Fn(&mut Graph<T>, &ParamStore<T>) -> Result<Var>,
{
    let (g, out) = eval(store, &objective, true)?;
    let value = g.value(out).item();
    store.zero_grads();
    for (pid, gr) in g.param_grads(out) {
        store.slots[pid].grad.add_assign(&gr);
    }
    for s in &store.slots {
        if !s.grad.is_finite() {
            return Err(Error::NonFiniteGradient { param: s.name.clone() });
        }
    }
    Ok(value)
}

/// Evaluates the objective value only.
pub fn value<T: Scalar, F>(store: &ParamStore<T>, objective: F) -> Result<T>
where
    F: Fn(&mut Graph<T>, &ParamStore<T>) -> Result<Var>,
{
    let (g, out) = eval(store, &objective, false)?;
    Ok(g.value(out).item())
}

/// Max over all entries of |analytic − FD| / max(1, |FD|), central differences with step `h`.
pub fn grad_check<T: Scalar, F>(store: &ParamStore<T>, objective: F, h: f64) -> Result<f64>
where
    F: Fn(&mut Graph<T>, &ParamStore<T>) -> Result<Var>,
{
    assert!(h > 0.0, "grad_check step must be positive");
    let mut work = store.clone();
    grad(&mut work, &objective)?;
    let analytic: Vec<Tensor<T>> = work.slots.iter().map(|s| s.grad.clone()).collect();
    let hh = T::of(h);
    let mut worst = 0.0f64;
    for id in 0..work.slots.len() {
        for k in 0..work.slots[id].value.len() {
            let orig = work.slots[id].value.data()[k];
            work.slots[id].value.data_mut()[k] = orig + hh;
            let fp = value(&work, &objective)?;
            work.slots[id].value.data_mut()[k] = orig - hh;
            let fm = value(&work, &objective)?;
            work.slots[id].value.data_mut()[k] = orig;
            let fd = (fp - fm).f64() / (2.0 * h);
            let an = analytic[id].data()[k].f64();
            worst = worst.max((an - fd).abs() / fd.abs().max(1.0));
        }
    }
    Ok(worst)
}

/// One bias-corrected Adam update using the stored gradients.
pub fn adam_step<T: Scalar>(store: &mut ParamStore<T>, lr: f64) {
    assert!(lr > 0.0, "learning rate must be positive");
    store.step += 1;
    let t = store.step as i32;
    let (b1, b2) = (T::of(ADAM_BETA1), T::of(ADAM_BETA2));
    let c1 = T::one() - b1.powi(t);
    let c2 = T::one() - b2.powi(t);
    let (lr, eps) = (T::of(lr), T::of(ADAM_EPS));
    for s in &mut store.slots {
        let n = s.value.len();
        let (val, grad, m, v) = (s.value.data_mut(), s.grad.data(), s.m.data_mut(), s.v.data_mut());
        for i in 0..n {
            let gi = grad[i];
            m[i] = b1 * m[i] + (T::one() - b1) * gi;
            v[i] = b2 * v[i] + (T::one() - b2) * gi * gi;
            let mh = m[i] / c1;
            let vh = v[i] / c2;
            val[i] = val[i] - lr * mh / (vh.sqrt() + eps);
        }
    }
}
