use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

pub const DEFAULT_JITTER: [f64; 4] = [0.0, 1e-8, 1e-6, 1e-4];

fn check_square<T: Scalar>(m: &Tensor<T>) -> Result<usize> {
    let s = m.shape();
    if s.len() != 2 || s[0] != s[1] {
        return Err(Error::ShapeMismatch(format!("expected square matrix, got {s:?}")));
    }
    Ok(s[0])
}

/// Cholesky factor of `m + jI` for the first jitter `j` in `schedule` that succeeds.
pub fn cholesky<T: Scalar>(m: &Tensor<T>, schedule: &[f64]) -> Result<(Tensor<T>, f64)> {
    let n = check_square(m)?;
    let scale = m.max_abs();
    let tol = T::of(1e-10) * scale.max(T::one());
    for i in 0..n {
        for j in 0..i {
            if (m.at(i, j) - m.at(j, i)).abs() > tol {
                return Err(Error::DegenerateInput(format!("matrix not symmetric at ({i},{j})")));
            }
        }
    }
    let mut last = 0.0;
    for &j in schedule {
        last = j;
        if let Some(l) = try_cholesky(m, T::of(j)) {
            return Ok((l, j));
        }
    }
    Err(Error::NotPositiveDefinite { jitter: last })
}

fn try_cholesky<T: Scalar>(m: &Tensor<T>, jitter: T) -> Option<Tensor<T>> {
    let n = m.rows();
    let a = m.data();
    let maxdiag = (0..n).map(|i| a[i * n + i].abs()).fold(T::zero(), T::max) + jitter;
    let floor = T::epsilon() * T::of(n.max(1) as f64) * maxdiag;
    let mut l = vec![T::zero(); n * n];
    for j in 0..n {
        let mut d = a[j * n + j] + jitter;
        for k in 0..j {
            d = d - l[j * n + k] * l[j * n + k];
        }
        if !(d > floor) || !d.is_finite() {
            return None;
        }
        let ljj = d.sqrt();
        l[j * n + j] = ljj;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s = s - l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / ljj;
        }
    }
    Some(Tensor::raw(&[n, n], l))
}

/// Solves L·X = B for lower-triangular L. B is [n] or [n, m].
pub fn solve_lower<T: Scalar>(l: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let n = l.rows();
    let m = if b.shape().len() == 1 { 1 } else { b.cols() };
    assert_eq!(b.rows(), n, "solve_lower dimension");
    let ld = l.data();
    let mut x = b.data().to_vec();
    for i in 0..n {
        for k in 0..i {
            let lik = ld[i * n + k];
            if lik == T::zero() {
                continue;
            }
            for c in 0..m {
                x[i * m + c] = x[i * m + c] - lik * x[k * m + c];
            }
        }
        let d = ld[i * n + i];
        for c in 0..m {
            x[i * m + c] = x[i * m + c] / d;
        }
    }
    Tensor::raw(b.shape(), x)
}

/// Solves Lᵀ·X = B for lower-triangular L.
pub fn solve_lower_t<T: Scalar>(l: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let n = l.rows();
    let m = if b.shape().len() == 1 { 1 } else { b.cols() };
    assert_eq!(b.rows(), n, "solve_lower_t dimension");
    let ld = l.data();
    let mut x = b.data().to_vec();
    for i in (0..n).rev() {
        for k in i + 1..n {
            let lki = ld[k * n + i];
            if lki == T::zero() {
                continue;
            }
            for c in 0..m {
                x[i * m + c] = x[i * m + c] - lki * x[k * m + c];
            }
        }
        let d = ld[i * n + i];
        for c in 0..m {
            x[i * m + c] = x[i * m + c] / d;
        }
    }
    Tensor::raw(b.shape(), x)
}
