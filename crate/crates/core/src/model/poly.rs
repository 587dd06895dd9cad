//! Polynomials in the unit delay `x = q^-1`, stored with ascending powers.

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;

pub fn trim(p: &mut Vec<f64>) {
    while p.len() > 1 && p[p.len() - 1] == 0.0 {
        p.pop();
    }
    if p.is_empty() {
        p.push(0.0);
    }
}

pub fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return vec![0.0];
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (k, &y) in b.iter().enumerate() {
            out[i + k] += x * y;
        }
    }
    out
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|k| a.get(k).copied().unwrap_or(0.0) + b.get(k).copied().unwrap_or(0.0))
        .collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// Evaluate at `x` (Horner).
pub fn eval(p: &[f64], x: Complex64) -> Complex64 {
    p.iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * x + c)
}

/// Expand `prod (1 - r_k x)` and return real parts of the coefficients.
pub fn from_reciprocal_roots(roots: &[Complex64]) -> Vec<f64> {
    let mut c = vec![Complex64::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); c.len() + 1];
        for (k, &v) in c.iter().enumerate() {
            next[k] += v;
            next[k + 1] -= v * r;
        }
        c = next;
    }
    c.into_iter().map(|v| v.re).collect()
}

/// Roots in `z` of `x^n p(x)` with `x = 1/z`, i.e. eigenvalues of the
/// companion matrix of a monic polynomial `1 + a_1 x + ... + a_n x^n`.
pub fn reciprocal_roots(p: &[f64]) -> Vec<Complex64> {
    let mut p = p.to_vec();
    trim(&mut p);
    let n = p.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let c0 = p[0];
    if c0 == 0.0 {
        // Leading zero: treat as infinite root (non-causal); report huge modulus.
        return vec![Complex64::new(f64::INFINITY, 0.0); n];
    }
    let mut m = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        m[(0, k)] = -p[k + 1] / c0;
    }
    for k in 1..n {
        m[(k, k - 1)] = 1.0;
    }
    eigenvalues(&m)
}

fn schur_eigenvalues(m: &DMatrix<f64>) -> Option<Vec<Complex64>> {
    let n = m.nrows();
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 200 * n.max(5))?;
    Some(schur.complex_eigenvalues().iter().copied().collect())
}

/// Eigenvalues of a real square matrix.
///
/// If no solver converges the eigenvalues are reported as infinite, so that
/// stability tests fail instead of passing.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex64> {
    let n = m.nrows();
    if n == 0 {
        return Vec::new();
    }
    let fm = faer::Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)]);
    if let Ok(ev) = fm.eigenvalues() {
        return ev.iter().map(|z| Complex64::new(z.re, z.im)).collect();
    }
    schur_eigenvalues(m).unwrap_or_else(|| vec![Complex64::new(f64::INFINITY, 0.0); n])
}

/// Largest modulus of the reciprocal roots; 0 for constants.
pub fn spectral_radius(p: &[f64]) -> f64 {
    reciprocal_roots(p)
        .iter()
        .map(|r| r.norm())
        .fold(0.0, f64::max)
}
