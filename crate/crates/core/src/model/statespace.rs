use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::poly;
use super::rational::RationalTransfer;
use super::tfmatrix::TransferMatrix;
use crate::error::{Error, Result};

/// Rank tolerance (relative) used by [`StateSpace::minreal`].
pub const MINREAL_TOL: f64 = 1e-10;

/// Eigenvalue margin for stability tests.
pub const STABILITY_MARGIN: f64 = 1.0 - 1e-8;

/// Discrete-time realisation `x+ = A x + B u`, `y = C x + D u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl StateSpace {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n
            || b.nrows() != n
            || c.ncols() != n
            || d.nrows() != c.nrows()
            || d.ncols() != b.ncols()
        {
            return Err(Error::Dimension(format!(
                "A {}x{}, B {}x{}, C {}x{}, D {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols(),
                d.nrows(),
                d.ncols()
            )));
        }
        Ok(Self { a, b, c, d })
    }

    fn raw(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Self {
        debug_assert!(a.nrows() == a.ncols() && b.nrows() == a.nrows() && c.ncols() == a.nrows());
        debug_assert!(d.nrows() == c.nrows() && d.ncols() == b.ncols());
        Self { a, b, c, d }
    }

    /// Static gain.
    pub fn gain(d: DMatrix<f64>) -> Self {
        let (p, m) = d.shape();
        Self::raw(
            DMatrix::zeros(0, 0),
            DMatrix::zeros(0, m),
            DMatrix::zeros(p, 0),
            d,
        )
    }

    pub fn zeros(p: usize, m: usize) -> Self {
        Self::gain(DMatrix::zeros(p, m))
    }

    pub fn identity(n: usize) -> Self {
        Self::gain(DMatrix::identity(n, n))
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.d.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.d.nrows()
    }

    /// Controllable canonical form of a scalar transfer.
    pub fn from_rational(g: &RationalTransfer) -> Self {
        if g.is_zero() {
            return Self::zeros(1, 1);
        }
        let num = g.num();
        let den = g.den();
        let n = (num.len().max(den.len())) - 1;
        let b0 = num[0];
        let mut a = DMatrix::zeros(n, n);
        let mut b = DMatrix::zeros(n, 1);
        let mut c = DMatrix::zeros(1, n);
        for k in 0..n {
            let ak = den.get(k + 1).copied().unwrap_or(0.0);
            let bk = num.get(k + 1).copied().unwrap_or(0.0);
            a[(0, k)] = -ak;
            c[(0, k)] = bk - b0 * ak;
            if k > 0 {
                a[(k, k - 1)] = 1.0;
            }
        }
        if n > 0 {
            b[(0, 0)] = 1.0;
        }
        Self::raw(a, b, c, DMatrix::from_element(1, 1, b0))
    }

    /// Entry-wise realisation followed by [`minreal`](Self::minreal).
    pub fn from_transfer_matrix(m: &TransferMatrix) -> Self {
        let (p, q) = (m.rows(), m.cols());
        let parts: Vec<(usize, usize, StateSpace)> = (0..p)
            .flat_map(|k| (0..q).map(move |l| (k, l)))
            .filter(|&(k, l)| !m.get(k, l).is_zero())
            .map(|(k, l)| (k, l, Self::from_rational(m.get(k, l))))
            .collect();
        let n: usize = parts.iter().map(|(_, _, s)| s.order()).sum();
        let mut a = DMatrix::zeros(n, n);
        let mut b = DMatrix::zeros(n, q);
        let mut c = DMatrix::zeros(p, n);
        let mut d = DMatrix::zeros(p, q);
        let mut off = 0;
        for (k, l, s) in &parts {
            let ns = s.order();
            a.view_mut((off, off), (ns, ns)).copy_from(&s.a);
            b.view_mut((off, *l), (ns, 1)).copy_from(&s.b);
            c.view_mut((*k, off), (1, ns)).copy_from(&s.c);
            d[(*k, *l)] = s.d[(0, 0)];
            off += ns;
        }
        Self::raw(a, b, c, d).minreal()
    }

    /// Evaluate at a complex point.
    pub fn eval_z(&self, z: Complex64) -> Result<DMatrix<Complex64>> {
        let n = self.order();
        let mut out = self.d.map(|v| Complex64::new(v, 0.0));
        if n == 0 {
            return Ok(out);
        }
        let mut zi = self.a.map(|v| Complex64::new(-v, 0.0));
        for k in 0..n {
            zi[(k, k)] += z;
        }
        let bc = self.b.map(|v| Complex64::new(v, 0.0));
        let x = zi
            .lu()
            .solve(&bc)
            .ok_or_else(|| Error::numerical("frequency response", "evaluation at a pole"))?;
        let cc = self.c.map(|v| Complex64::new(v, 0.0));
        out += cc * x;
        Ok(out)
    }

    /// Evaluate at `z = e^{jw}`.
    pub fn freq(&self, w: f64) -> Result<DMatrix<Complex64>> {
        self.eval_z(Complex64::from_polar(1.0, w))
    }

    /// Transfer product `self * rhs` (the signal passes `rhs` first).
    pub fn mul(&self, rhs: &StateSpace) -> StateSpace {
        assert_eq!(
            self.inputs(),
            rhs.outputs(),
            "series connection dimension mismatch"
        );
        let (n1, n2) = (rhs.order(), self.order());
        let n = n1 + n2;
        let mut a = DMatrix::zeros(n, n);
        a.view_mut((0, 0), (n1, n1)).copy_from(&rhs.a);
        a.view_mut((n1, 0), (n2, n1)).copy_from(&(&self.b * &rhs.c));
        a.view_mut((n1, n1), (n2, n2)).copy_from(&self.a);
        let mut b = DMatrix::zeros(n, rhs.inputs());
        b.view_mut((0, 0), (n1, rhs.inputs())).copy_from(&rhs.b);
        b.view_mut((n1, 0), (n2, rhs.inputs()))
            .copy_from(&(&self.b * &rhs.d));
        let mut c = DMatrix::zeros(self.outputs(), n);
        c.view_mut((0, 0), (self.outputs(), n1))
            .copy_from(&(&self.d * &rhs.c));
        c.view_mut((0, n1), (self.outputs(), n2)).copy_from(&self.c);
        let d = &self.d * &rhs.d;
        Self::raw(a, b, c, d)
    }

    pub fn add(&self, rhs: &StateSpace) -> StateSpace {
        assert_eq!(self.d.shape(), rhs.d.shape(), "sum dimension mismatch");
        let (n1, n2) = (self.order(), rhs.order());
        let n = n1 + n2;
        let mut a = DMatrix::zeros(n, n);
        a.view_mut((0, 0), (n1, n1)).copy_from(&self.a);
        a.view_mut((n1, n1), (n2, n2)).copy_from(&rhs.a);
        let mut b = DMatrix::zeros(n, self.inputs());
        b.view_mut((0, 0), (n1, self.inputs())).copy_from(&self.b);
        b.view_mut((n1, 0), (n2, self.inputs())).copy_from(&rhs.b);
        let mut c = DMatrix::zeros(self.outputs(), n);
        c.view_mut((0, 0), (self.outputs(), n1)).copy_from(&self.c);
        c.view_mut((0, n1), (self.outputs(), n2)).copy_from(&rhs.c);
        Self::raw(a, b, c, &self.d + &rhs.d)
    }

    pub fn neg(&self) -> StateSpace {
        Self::raw(self.a.clone(), self.b.clone(), -&self.c, -&self.d)
    }

    pub fn sub(&self, rhs: &StateSpace) -> StateSpace {
        self.add(&rhs.neg())
    }

    /// `M * self` for a constant matrix `M`.
    pub fn left_gain(&self, m: &DMatrix<f64>) -> StateSpace {
        Self::raw(self.a.clone(), self.b.clone(), m * &self.c, m * &self.d)
    }

    /// `self * M` for a constant matrix `M`.
    pub fn right_gain(&self, m: &DMatrix<f64>) -> StateSpace {
        Self::raw(self.a.clone(), &self.b * m, self.c.clone(), &self.d * m)
    }

    /// `[self, rhs]` sharing outputs.
    pub fn hstack(&self, rhs: &StateSpace) -> StateSpace {
        assert_eq!(self.outputs(), rhs.outputs());
        let (n1, n2) = (self.order(), rhs.order());
        let (m1, m2) = (self.inputs(), rhs.inputs());
        let n = n1 + n2;
        let p = self.outputs();
        let mut a = DMatrix::zeros(n, n);
        a.view_mut((0, 0), (n1, n1)).copy_from(&self.a);
        a.view_mut((n1, n1), (n2, n2)).copy_from(&rhs.a);
        let mut b = DMatrix::zeros(n, m1 + m2);
        b.view_mut((0, 0), (n1, m1)).copy_from(&self.b);
        b.view_mut((n1, m1), (n2, m2)).copy_from(&rhs.b);
        let mut c = DMatrix::zeros(p, n);
        c.view_mut((0, 0), (p, n1)).copy_from(&self.c);
        c.view_mut((0, n1), (p, n2)).copy_from(&rhs.c);
        let mut d = DMatrix::zeros(p, m1 + m2);
        d.view_mut((0, 0), (p, m1)).copy_from(&self.d);
        d.view_mut((0, m1), (p, m2)).copy_from(&rhs.d);
        Self::raw(a, b, c, d)
    }

    /// `[self; rhs]` sharing inputs.
    pub fn vstack(&self, rhs: &StateSpace) -> StateSpace {
        assert_eq!(self.inputs(), rhs.inputs());
        let (n1, n2) = (self.order(), rhs.order());
        let (p1, p2) = (self.outputs(), rhs.outputs());
        let n = n1 + n2;
        let m = self.inputs();
        let mut a = DMatrix::zeros(n, n);
        a.view_mut((0, 0), (n1, n1)).copy_from(&self.a);
        a.view_mut((n1, n1), (n2, n2)).copy_from(&rhs.a);
        let mut b = DMatrix::zeros(n, m);
        b.view_mut((0, 0), (n1, m)).copy_from(&self.b);
        b.view_mut((n1, 0), (n2, m)).copy_from(&rhs.b);
        let mut c = DMatrix::zeros(p1 + p2, n);
        c.view_mut((0, 0), (p1, n1)).copy_from(&self.c);
        c.view_mut((p1, n1), (p2, n2)).copy_from(&rhs.c);
        let mut d = DMatrix::zeros(p1 + p2, m);
        d.view_mut((0, 0), (p1, m)).copy_from(&self.d);
        d.view_mut((p1, 0), (p2, m)).copy_from(&rhs.d);
        Self::raw(a, b, c, d)
    }

    /// Stack many systems vertically; `inputs` is used when the list is empty.
    pub fn vstack_all(parts: &[StateSpace], inputs: usize) -> StateSpace {
        let mut it = parts.iter();
        match it.next() {
            None => Self::zeros(0, inputs),
            Some(first) => it.fold(first.clone(), |acc, s| acc.vstack(s)),
        }
    }

    /// Stack many systems horizontally; `outputs` is used when the list is empty.
    pub fn hstack_all(parts: &[StateSpace], outputs: usize) -> StateSpace {
        let mut it = parts.iter();
        match it.next() {
            None => Self::zeros(outputs, 0),
            Some(first) => it.fold(first.clone(), |acc, s| acc.hstack(s)),
        }
    }

    /// Sub-system with the given output rows and input columns.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> StateSpace {
        let n = self.order();
        let b = DMatrix::from_fn(n, cols.len(), |r, k| self.b[(r, cols[k])]);
        let c = DMatrix::from_fn(rows.len(), n, |k, r| self.c[(rows[k], r)]);
        let d = DMatrix::from_fn(rows.len(), cols.len(), |k, l| self.d[(rows[k], cols[l])]);
        Self::raw(self.a.clone(), b, c, d)
    }

    /// Inverse system; requires an invertible square feedthrough.
    pub fn inverse(&self) -> Result<StateSpace> {
        if self.inputs() != self.outputs() {
            return Err(Error::Dimension("inverse of a non-square system".into()));
        }
        let p = self.outputs();
        if p == 0 {
            return Ok(self.clone());
        }
        let sv = self.d.clone().svd(false, false).singular_values;
        let smax = sv.iter().copied().fold(0.0, f64::max);
        let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
        if smax == 0.0 || smin / smax < 1e-12 {
            return Err(Error::SingularFeedthrough(format!(
                "feedthrough singular values {:?}",
                sv.as_slice()
            )));
        }
        let di = self
            .d
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::SingularFeedthrough("feedthrough not invertible".into()))?;
        let bdi = &self.b * &di;
        let a = &self.a - &bdi * &self.c;
        let c = -(&di * &self.c);
        Ok(Self::raw(a, bdi, c, di))
    }

    /// `(I - self)^-1`, the closed loop of unit negative feedback on `I - self`.
    pub fn loop_inverse(&self) -> Result<StateSpace> {
        let n = self.outputs();
        Self::identity(n).sub(self).inverse()
    }

    /// Kalman decomposition: keep the controllable and observable part.
    pub fn minreal(&self) -> StateSpace {
        self.minreal_tol(MINREAL_TOL)
    }

    pub fn minreal_tol(&self, tol: f64) -> StateSpace {
        if self.order() == 0 {
            return self.clone();
        }
        let scale = 1.0f64
            .max(self.a.norm())
            .max(self.b.norm())
            .max(self.c.norm());
        let thr = tol * scale;
        let v = krylov_basis(&self.a, &self.b, thr);
        let a1 = v.transpose() * &self.a * &v;
        let b1 = v.transpose() * &self.b;
        let c1 = &self.c * &v;
        if a1.nrows() == 0 {
            return Self::gain(self.d.clone());
        }
        let w = krylov_basis(&a1.transpose(), &c1.transpose(), thr);
        let a2 = w.transpose() * &a1 * &w;
        let b2 = w.transpose() * &b1;
        let c2 = &c1 * &w;
        Self::raw(a2, b2, c2, self.d.clone())
    }

    pub fn poles(&self) -> Vec<Complex64> {
        if self.order() == 0 {
            return Vec::new();
        }
        poly::eigenvalues(&self.a)
    }

    /// Largest pole modulus; 0 for static systems.
    pub fn spectral_radius(&self) -> f64 {
        self.poles().iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    /// Stability of the given realisation (callers minimise first when needed).
    pub fn is_stable(&self) -> bool {
        self.spectral_radius() < STABILITY_MARGIN
    }

    /// Transmission zeros of a square system with invertible feedthrough.
    pub fn zeros_square(&self) -> Result<Vec<Complex64>> {
        Ok(self.inverse()?.minreal().poles())
    }

    /// Impulse response coefficient `h_k` (`h_0 = D`).
    pub fn markov(&self, k: usize) -> DMatrix<f64> {
        if k == 0 {
            return self.d.clone();
        }
        let mut x = self.b.clone();
        for _ in 1..k {
            x = &self.a * x;
        }
        &self.c * x
    }

    /// Convert one input/output channel to a polynomial ratio.
    pub fn entry_to_rational(&self, row: usize, col: usize) -> RationalTransfer {
        let s = self.select(&[row], &[col]).minreal();
        let n = s.order();
        let den = poly::from_reciprocal_roots(&s.poles());
        let mut h = Vec::with_capacity(n + 1);
        h.push(s.d[(0, 0)]);
        let mut x = s.b.clone();
        for _ in 0..n {
            h.push((&s.c * &x)[(0, 0)]);
            x = &s.a * x;
        }
        let mut num: Vec<f64> = (0..=n)
            .map(|m| (0..=m).map(|i| den[i] * h[m - i]).sum())
            .collect();
        let nmax = num.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
        for v in num.iter_mut() {
            if v.abs() <= 1e-13 * nmax {
                *v = 0.0;
            }
        }
        let mut den = den;
        let dmax = den.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
        for v in den.iter_mut().skip(1) {
            if v.abs() <= 1e-14 * dmax {
                *v = 0.0;
            }
        }
        RationalTransfer::new(num, den).unwrap_or_else(|_| RationalTransfer::zero())
    }

    pub fn to_transfer_matrix(&self) -> TransferMatrix {
        let mut m = TransferMatrix::zeros(self.outputs(), self.inputs());
        for k in 0..self.outputs() {
            for l in 0..self.inputs() {
                m.set(k, l, self.entry_to_rational(k, l));
            }
        }
        m
    }

    /// Simulate from zero initial state. `u[l]` is input channel `l`.
    pub fn simulate(&self, u: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let m = self.inputs();
        let p = self.outputs();
        let n = self.order();
        assert_eq!(u.len(), m, "input channel count");
        let len = u.first().map(|v| v.len()).unwrap_or(0);
        let a: Vec<f64> = row_major(&self.a);
        let b: Vec<f64> = row_major(&self.b);
        let c: Vec<f64> = row_major(&self.c);
        let d: Vec<f64> = row_major(&self.d);
        let mut x = vec![0.0; n];
        let mut xn = vec![0.0; n];
        let mut ut = vec![0.0; m];
        let mut y = vec![vec![0.0; len]; p];
        for t in 0..len {
            for l in 0..m {
                ut[l] = u[l][t];
            }
            for k in 0..p {
                let mut acc = 0.0;
                for r in 0..n {
                    acc += c[k * n + r] * x[r];
                }
                for l in 0..m {
                    acc += d[k * m + l] * ut[l];
                }
                y[k][t] = acc;
            }
            for r in 0..n {
                let mut acc = 0.0;
                for s in 0..n {
                    acc += a[r * n + s] * x[s];
                }
                for l in 0..m {
                    acc += b[r * m + l] * ut[l];
                }
                xn[r] = acc;
            }
            std::mem::swap(&mut x, &mut xn);
        }
        y
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let (r, c) = m.shape();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Orthonormal basis of the Krylov space spanned by `b, a b, a^2 b, ...`.
fn krylov_basis(a: &DMatrix<f64>, b: &DMatrix<f64>, thr: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let mut basis: Vec<nalgebra::DVector<f64>> = Vec::new();
    let mut block = b.clone();
    loop {
        if block.ncols() == 0 || basis.len() >= n {
            break;
        }
        // Project out the current basis twice for stability.
        for _ in 0..2 {
            for v in &basis {
                let coef = v.transpose() * &block;
                block -= v * coef;
            }
        }
        let svd = block.clone().svd(true, false);
        let u = match svd.u {
            Some(u) => u,
            None => break,
        };
        let mut added: Vec<nalgebra::DVector<f64>> = Vec::new();
        for (k, &s) in svd.singular_values.iter().enumerate() {
            if s > thr && basis.len() + added.len() < n {
                // Directions from small singular values lose orthogonality
                // to the basis; restore it before accepting them.
                let mut v = u.column(k).into_owned();
                for _ in 0..2 {
                    for q in basis.iter().chain(&added) {
                        let c = q.dot(&v);
                        v.axpy(-c, q, 1.0);
                    }
                }
                let norm = v.norm();
                if norm > 0.5 {
                    added.push(v / norm);
                }
            }
        }
        if added.is_empty() {
            break;
        }
        basis.extend(added);
        // Stopping only when A maps the whole basis into itself keeps a
        // discarded near-dependent direction from hiding a mode.
        block = a * DMatrix::from_columns(&basis);
    }
    if basis.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&basis)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tf(num: &[f64], den: &[f64]) -> RationalTransfer {
        RationalTransfer::new(num.to_vec(), den.to_vec()).unwrap()
    }

    #[test]
    fn realisation_matches_rational() {
        let g = tf(&[0.3, 0.5, -0.1], &[1.0, -0.6, 0.08]);
        let s = StateSpace::from_rational(&g);
        for &w in &[0.0, 0.4, 1.7, 3.1] {
            let a = s.freq(w).unwrap()[(0, 0)];
            assert!((a - g.freq(w)).norm() < 1e-12);
        }
        let back = s.entry_to_rational(0, 0);
        assert!(back.coeff_distance(&g) < 1e-10);
    }

    #[test]
    fn minreal_removes_duplicate_modes() {
        let g = StateSpace::from_rational(&tf(&[0.0, 1.0], &[1.0, -0.5]));
        let twice = g.add(&g);
        assert_eq!(twice.order(), 2);
        assert_eq!(twice.minreal().order(), 1);
    }

    #[test]
    fn inverse_is_identity_product() {
        let g = StateSpace::from_rational(&tf(&[1.0, 0.4], &[1.0, -0.3]));
        let p = g.mul(&g.inverse().unwrap()).minreal();
        assert_eq!(p.order(), 0);
        assert!((p.d[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn simulate_impulse() {
        let g = tf(&[0.0, 1.0], &[1.0, -0.5]);
        let s = StateSpace::from_rational(&g);
        let mut u = vec![0.0; 5];
        u[0] = 1.0;
        let y = s.simulate(&[u]);
        let expect = [0.0, 1.0, 0.5, 0.25, 0.125];
        for (a, b) in y[0].iter().zip(&expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
