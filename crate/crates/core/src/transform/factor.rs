//! Spectral factorisation `H Lambda H^* = Ht Lt Ht^*` with `Ht` monic,
//! stable and minimum-phase, via the innovations form of a Kalman predictor.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{uniform_grid, StateSpace, STABILITY_MARGIN};

/// Riccati iteration convergence threshold (relative).
pub const RICCATI_TOL: f64 = 1e-12;
const RICCATI_MAX_ITER: usize = 200;
/// Grid used for the positivity precondition.
const POSITIVITY_GRID: usize = 64;

/// Factor of a noise spectrum.
#[derive(Debug, Clone)]
pub struct SpectralFactor {
    pub h: StateSpace,
    pub lambda: DMatrix<f64>,
    pub riccati_iterations: usize,
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn inv(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::numerical("spectral factorization", format!("{what} is singular")))
}

/// Smallest eigenvalue of `H Lambda H^*` over a grid, relative to the largest.
pub fn min_relative_eigenvalue(
    h: &StateSpace,
    lambda: &DMatrix<f64>,
    grid: &[f64],
) -> Result<(f64, f64)> {
    let lc = lambda.map(|v| Complex64::new(v, 0.0));
    let mut worst = (f64::INFINITY, 0.0);
    let mut top = 0.0f64;
    let mut mins = Vec::with_capacity(grid.len());
    for &w in grid {
        let hw = h.freq(w)?;
        let phi = &hw * &lc * hw.adjoint();
        let phi = (&phi + phi.adjoint()) * Complex64::new(0.5, 0.0);
        let ev = phi.symmetric_eigenvalues();
        let lo = ev.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ev.iter().copied().fold(0.0, f64::max);
        top = top.max(hi);
        mins.push((lo, w));
    }
    for (lo, w) in mins {
        let rel = if top > 0.0 { lo / top } else { 0.0 };
        if rel < worst.0 {
            worst = (rel, w);
        }
    }
    Ok(worst)
}

/// Solution of `S = A S A^T + Q` for stable `A` by squaring.
fn stein(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut ak = a.clone();
    let mut s = q.clone();
    for _ in 0..RICCATI_MAX_ITER {
        let inc = &ak * &s * ak.transpose();
        s += &inc;
        ak = &ak * &ak;
        if inc.norm() <= RICCATI_TOL * s.norm().max(1e-300) {
            return Ok(symmetrize(&s));
        }
    }
    Err(Error::numerical(
        "spectral factorization",
        "state covariance did not converge",
    ))
}

/// Minimal solution of the positive-real Riccati equation
/// `Pi = A Pi A^T + (N - A Pi C^T)(L0 - C Pi C^T)^-1 (N - A Pi C^T)^T`
/// by doubling the recursion started at `Pi = 0`. Returns `(Pi, iterations)`.
fn solve_covariance_dare(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    n: &DMatrix<f64>,
    l0: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, usize)> {
    let dim = a.nrows();
    let li = inv(l0, "output covariance")?;
    let mut ak = (a - n * &li * c).transpose();
    let mut gk = -symmetrize(&(c.transpose() * &li * c));
    let mut hk = symmetrize(&(n * &li * n.transpose()));
    let eye = DMatrix::<f64>::identity(dim, dim);
    for it in 1..=RICCATI_MAX_ITER {
        let lu = (&eye + &gk * &hk).lu();
        let sing = || Error::numerical("spectral factorization", "doubling step singular");
        let wa = lu.solve(&ak).ok_or_else(sing)?;
        let wg = lu.solve(&gk).ok_or_else(sing)?;
        let a_next = &ak * &wa;
        let g_next = symmetrize(&(&gk + &ak * wg * ak.transpose()));
        let h_next = symmetrize(&(&hk + ak.transpose() * &hk * &wa));
        let delta = (&h_next - &hk).norm();
        let scale = h_next.norm().max(1e-300);
        ak = a_next;
        gk = g_next;
        hk = h_next;
        if !hk.iter().all(|v| v.is_finite()) {
            return Err(Error::numerical(
                "spectral factorization",
                "Riccati iteration diverged",
            ));
        }
        if delta <= RICCATI_TOL * scale {
            return Ok((hk, it));
        }
    }
    Err(Error::numerical(
        "spectral factorization",
        "Riccati iteration did not converge",
    ))
}

/// Factor the spectrum of `h` driven by white noise with covariance `lambda`.
///
/// `h` must be stable with full-row-rank feedthrough; its input dimension may
/// exceed its output dimension. The result is square and monic.
pub fn spectral_factorize(h: &StateSpace, lambda: &DMatrix<f64>) -> Result<SpectralFactor> {
    let p = h.outputs();
    if lambda.shape() != (h.inputs(), h.inputs()) {
        return Err(Error::Dimension(
            "Lambda does not match the noise channel".into(),
        ));
    }
    if p == 0 {
        return Ok(SpectralFactor {
            h: StateSpace::zeros(0, 0),
            lambda: DMatrix::zeros(0, 0),
            riccati_iterations: 0,
        });
    }
    let h = h.minreal();
    if !h.is_stable() {
        return Err(Error::numerical(
            "spectral factorization",
            "noise channel is unstable",
        ));
    }
    let (rel, w) = min_relative_eigenvalue(&h, lambda, &uniform_grid(POSITIVITY_GRID))?;
    if rel <= 1e-12 {
        return Err(Error::numerical(
            "spectral factorization",
            format!("spectrum singular on the unit circle near w = {w:.4}"),
        ));
    }
    let r = symmetrize(&(&h.d * lambda * h.d.transpose()));
    if h.order() == 0 {
        return Ok(SpectralFactor {
            h: StateSpace::identity(p),
            lambda: r,
            riccati_iterations: 0,
        });
    }
    let q = symmetrize(&(&h.b * lambda * h.b.transpose()));
    let s = &h.b * lambda * h.d.transpose();
    let sigma = stein(&h.a, &q)?;
    let n = &h.a * &sigma * h.c.transpose() + &s;
    let l0 = symmetrize(&(&h.c * &sigma * h.c.transpose() + &r));
    let (pi, iters) = solve_covariance_dare(&h.a, &h.c, &n, &l0)?;
    let re = symmetrize(&(&l0 - &h.c * &pi * h.c.transpose()));
    let k = (&n - &h.a * &pi * h.c.transpose()) * inv(&re, "innovation covariance")?;
    let closed = &h.a - &k * &h.c;
    let radius = crate::model::poly::eigenvalues(&closed)
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if radius >= STABILITY_MARGIN {
        return Err(Error::numerical(
            "spectral factorization",
            format!("factor is not minimum-phase (zero radius {radius:.6})"),
        ));
    }
    let ht = StateSpace::new(h.a.clone(), k, h.c.clone(), DMatrix::identity(p, p))?.minreal();
    Ok(SpectralFactor {
        h: ht,
        lambda: re,
        riccati_iterations: iters,
    })
}

/// Largest entrywise deviation of `H Lambda H^*` between two noise models over a grid.
pub fn spectrum_distance(
    h1: &StateSpace,
    l1: &DMatrix<f64>,
    h2: &StateSpace,
    l2: &DMatrix<f64>,
    grid: &[f64],
) -> Result<f64> {
    let c1 = l1.map(|v| Complex64::new(v, 0.0));
    let c2 = l2.map(|v| Complex64::new(v, 0.0));
    let mut worst = 0.0f64;
    for &w in grid {
        let a = h1.freq(w)?;
        let b = h2.freq(w)?;
        let pa = &a * &c1 * a.adjoint();
        let pb = &b * &c2 * b.adjoint();
        worst = worst.max((pa - pb).iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ma1(c: DMatrix<f64>) -> StateSpace {
        let n = c.nrows();
        StateSpace::new(
            DMatrix::zeros(n, n),
            DMatrix::identity(n, n),
            c,
            DMatrix::identity(n, n),
        )
        .unwrap()
    }

    #[test]
    fn minimum_phase_ma_is_reproduced() {
        let c = DMatrix::from_row_slice(2, 2, &[0.4, 0.2, 0.0, 0.3]);
        let h = ma1(c);
        let f = spectral_factorize(&h, &DMatrix::identity(2, 2)).unwrap();
        assert!((&f.lambda - DMatrix::<f64>::identity(2, 2)).norm() < 1e-9);
        let d = spectrum_distance(
            &h,
            &DMatrix::identity(2, 2),
            &f.h,
            &f.lambda,
            &uniform_grid(128),
        )
        .unwrap();
        assert!(d < 1e-9, "{d}");
    }

    #[test]
    fn non_minimum_phase_scalar_is_flipped() {
        // 1 + 2 q^-1 has the same spectrum as 2 (1 + 0.5 q^-1).
        let h = ma1(DMatrix::from_element(1, 1, 2.0));
        let f = spectral_factorize(&h, &DMatrix::identity(1, 1)).unwrap();
        assert!((f.lambda[(0, 0)] - 4.0).abs() < 1e-9);
        let zeros = f.h.zeros_square().unwrap();
        assert!((zeros[0].re + 0.5).abs() < 1e-9);
    }

    #[test]
    fn unit_circle_zero_is_rejected() {
        let h = ma1(DMatrix::from_element(1, 1, 1.0));
        assert!(spectral_factorize(&h, &DMatrix::identity(1, 1)).is_err());
    }
}
