use nalgebra::DMatrix;

use super::structure::ModelStructure;
use crate::error::{Error, Result};
use crate::model::{poly, TransferMatrix};
use crate::simulation::Dataset;

/// Output and input series of a predictor, with the known excitation term
/// already removed from the outputs.
#[derive(Debug, Clone)]
pub struct PredictorData {
    pub y: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub n: usize,
}

impl PredictorData {
    /// `y_k = w_{outputs_k} - (offset r)_k`, `u = w_inputs`. `offset` is
    /// `ny x K` and maps the dataset's excitation into the output equations.
    pub fn new(
        ms: &ModelStructure,
        data: &Dataset,
        offset: Option<&TransferMatrix>,
    ) -> Result<Self> {
        let node = |k: usize| {
            data.w
                .get(k)
                .cloned()
                .ok_or_else(|| Error::Dimension(format!("dataset has no node w{}", k + 1)))
        };
        let mut y: Vec<Vec<f64>> = ms.outputs.iter().map(|&k| node(k)).collect::<Result<_>>()?;
        let u = ms.inputs.iter().map(|&k| node(k)).collect::<Result<_>>()?;
        if let Some(off) = offset {
            if off.rows() != ms.ny() || off.cols() != data.r.len() {
                return Err(Error::Dimension(format!(
                    "excitation offset is {}x{}, expected {}x{}",
                    off.rows(),
                    off.cols(),
                    ms.ny(),
                    data.r.len()
                )));
            }
            let known = off.to_state_space().simulate(&data.r);
            for (yk, kk) in y.iter_mut().zip(known) {
                yk.iter_mut().zip(kk).for_each(|(a, b)| *a -= b);
            }
        }
        Ok(Self { y, u, n: data.n })
    }
}

/// Prediction errors with zero initial conditions over the whole record.
#[derive(Debug, Clone)]
pub struct Residuals {
    /// `ny x N`; samples before `max_lag` carry the initial transient.
    pub eps: Vec<Vec<f64>>,
    /// Pole radii of every module denominator and zero/pole radii of the noise model.
    pub radii: Vec<f64>,
    /// False when the predictor filter is unstable at this `theta`.
    pub feasible: bool,
}

/// `out[t] = sum_m b_m x[t - delay - m] - sum_s a_s out[t - s]`.
fn iir(b: &[f64], delay: usize, a: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for t in 0..n {
        let mut acc = 0.0;
        for (m, &bm) in b.iter().enumerate() {
            let lag = delay + m;
            if lag <= t {
                acc += bm * x[t - lag];
            }
        }
        for (s, &as_) in a.iter().enumerate() {
            if s < t {
                acc -= as_ * out[t - s - 1];
            }
        }
        out[t] = acc;
    }
}

/// Radius of the zeros of `det(I + C_1 z^-1 + ... + C_nc z^-nc)`.
pub fn block_radius(c: &[DMatrix<f64>]) -> f64 {
    let nc = c.len();
    if nc == 0 {
        return 0.0;
    }
    let ny = c[0].nrows();
    if ny == 1 {
        let mut p = vec![1.0];
        p.extend(c.iter().map(|m| m[(0, 0)]));
        return poly::spectral_radius(&p);
    }
    let n = ny * nc;
    let mut comp = DMatrix::<f64>::zeros(n, n);
    for (m, cm) in c.iter().enumerate() {
        comp.view_mut((0, m * ny), (ny, ny)).copy_from(&(-cm));
    }
    for k in ny..n {
        comp[(k, k - ny)] = 1.0;
    }
    crate::model::poly::eigenvalues(&comp)
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Filter radii of the model at `theta`.
pub fn model_radii(ms: &ModelStructure, theta: &[f64]) -> Vec<f64> {
    let mut radii: Vec<f64> = ms
        .entries
        .iter()
        .filter(|e| e.orders.na > 0)
        .map(|e| {
            let (_, a) = ms.entry_coeffs(e, theta);
            let mut p = vec![1.0];
            p.extend_from_slice(a);
            poly::spectral_radius(&p)
        })
        .collect();
    if ms.nf > 0 {
        for k in 0..ms.ny() {
            let mut p = vec![1.0];
            p.extend_from_slice(ms.f_coeffs(theta, k));
            radii.push(poly::spectral_radius(&p));
        }
    }
    radii.push(block_radius(&ms.c_matrices(theta)));
    radii
}

/// `x_t <- x_t - sum_m C_m x_{t-m}` in place, with zero initial conditions.
fn noise_filter(c: &[DMatrix<f64>], x: &mut [Vec<f64>]) {
    let ny = x.len();
    let n = x.first().map_or(0, |v| v.len());
    for t in 0..n {
        for (m, cm) in c.iter().enumerate() {
            let lag = m + 1;
            if lag > t {
                break;
            }
            for r in 0..ny {
                let mut acc = 0.0;
                for col in 0..ny {
                    acc += cm[(r, col)] * x[col][t - lag];
                }
                x[r][t] -= acc;
            }
        }
    }
}

/// `F_k` applied to `v` with zero initial conditions.
fn fir(f: &[f64], v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    for t in 0..v.len() {
        for (j, &fj) in f.iter().enumerate() {
            if j < t {
                out[t] += fj * v[t - j - 1];
            }
        }
    }
    out
}

/// Exact derivatives of the prediction errors with respect to `theta`,
/// obtained by filtering. Shared intermediates are computed once; each
/// column is then one pass through the noise filter.
pub struct Sensitivities<'a> {
    ms: &'a ModelStructure,
    theta: &'a [f64],
    c: Vec<DMatrix<f64>>,
    /// Per entry: `q^-delay u / A` and `g / A`.
    x: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    /// Output rows before the `F` filter.
    v: Vec<Vec<f64>>,
    pub residuals: Residuals,
}

impl<'a> Sensitivities<'a> {
    pub fn new(ms: &'a ModelStructure, theta: &'a [f64], data: &PredictorData) -> Self {
        let n = data.n;
        let radii = model_radii(ms, theta);
        let feasible = radii.iter().all(|&r| r < 1.0 - 1e-9) && theta.iter().all(|v| v.is_finite());
        let mut v = data.y.clone();
        let mut x = Vec::with_capacity(ms.entries.len());
        let mut z = Vec::with_capacity(ms.entries.len());
        let mut g = vec![0.0; n];
        for e in &ms.entries {
            let (b, a) = ms.entry_coeffs(e, theta);
            iir(b, e.orders.delay, a, &data.u[e.col], &mut g);
            v[e.row].iter_mut().zip(&g).for_each(|(p, q)| *p -= q);
            let mut xe = vec![0.0; n];
            iir(&[1.0], e.orders.delay, a, &data.u[e.col], &mut xe);
            let mut ze = vec![0.0; n];
            iir(&[1.0], 0, a, &g, &mut ze);
            x.push(xe);
            z.push(ze);
        }
        let mut eps: Vec<Vec<f64>> = (0..ms.ny())
            .map(|k| {
                if ms.nf > 0 {
                    fir(ms.f_coeffs(theta, k), &v[k])
                } else {
                    v[k].clone()
                }
            })
            .collect();
        let c = ms.c_matrices(theta);
        noise_filter(&c, &mut eps);
        Self {
            ms,
            theta,
            c,
            x,
            z,
            v,
            residuals: Residuals {
                eps,
                radii,
                feasible,
            },
        }
    }

    /// Visit `d eps_r[t] / d theta_k` time by time; the slice passed with `t`
    /// holds the derivative for row `r` and parameter `k` at `r * dim + k`.
    pub fn for_each_time(&self, mut visit: impl FnMut(usize, &[f64])) {
        let ms = self.ms;
        let (ny, p, nc) = (ms.ny(), ms.dim(), self.c.len());
        let n = self.v.first().map_or(0, |v| v.len());
        let sources: Vec<Source> = (0..p).map(|k| self.source(k)).collect();
        let coef: Vec<f64> = self
            .c
            .iter()
            .flat_map(|cm| (0..ny * ny).map(move |e| cm[(e / ny, e % ny)]))
            .collect();
        let step = ny * p;
        // all columns share one pass so their recursions overlap
        let mut ring = vec![0.0; (nc + 1) * step];
        for t in 0..n {
            let slot = t % (nc + 1);
            let (before, from) = ring.split_at_mut(slot * step);
            let (cur, after) = from.split_at_mut(step);
            cur.iter_mut().for_each(|v| *v = 0.0);
            for (k, src) in sources.iter().enumerate() {
                cur[src.row * p + k] = src.at(t);
            }
            for m in 0..nc.min(t) {
                let ps = (t - m - 1) % (nc + 1);
                let past = if ps < slot {
                    &before[ps * step..(ps + 1) * step]
                } else {
                    &after[(ps - slot - 1) * step..(ps - slot) * step]
                };
                for r in 0..ny {
                    let out = &mut cur[r * p..(r + 1) * p];
                    for col in 0..ny {
                        let w = coef[(m * ny + r) * ny + col];
                        if w != 0.0 {
                            out.iter_mut()
                                .zip(&past[col * p..(col + 1) * p])
                                .for_each(|(o, q)| *o -= w * q);
                        }
                    }
                }
            }
            visit(t, cur);
        }
    }

    fn source(&self, k: usize) -> Source<'_> {
        let ms = self.ms;
        let f = |row: usize| (ms.nf > 0).then(|| ms.f_coeffs(self.theta, row));
        if k < ms.c_offset() {
            let (idx, e) = ms
                .entries
                .iter()
                .enumerate()
                .find(|(_, e)| k >= e.offset && k < e.offset + e.len())
                .expect("entry parameter");
            let local = k - e.offset;
            if local < e.orders.nb {
                Source {
                    row: e.row,
                    sig: &self.x[idx],
                    shift: local,
                    sign: -1.0,
                    f: f(e.row),
                }
            } else {
                Source {
                    row: e.row,
                    sig: &self.z[idx],
                    shift: local - e.orders.nb + 1,
                    sign: 1.0,
                    f: f(e.row),
                }
            }
        } else if k < ms.f_offset() {
            let per = ms.c_pattern.len();
            let m = (k - ms.c_offset()) / per;
            let (r, col) = ms.c_pattern[(k - ms.c_offset()) % per];
            Source {
                row: r,
                sig: &self.residuals.eps[col],
                shift: m + 1,
                sign: -1.0,
                f: None,
            }
        } else {
            let row = (k - ms.f_offset()) / ms.nf;
            let j = (k - ms.f_offset()) % ms.nf;
            Source {
                row,
                sig: &self.v[row],
                shift: j + 1,
                sign: 1.0,
                f: None,
            }
        }
    }
}

/// `sign F(q) q^-shift sig` with zero initial conditions, before the noise filter.
struct Source<'a> {
    row: usize,
    sig: &'a [f64],
    shift: usize,
    sign: f64,
    f: Option<&'a [f64]>,
}

impl Source<'_> {
    fn at(&self, t: usize) -> f64 {
        if t < self.shift {
            return 0.0;
        }
        let base = t - self.shift;
        let mut v = self.sig[base];
        if let Some(f) = self.f {
            for (j, &fj) in f.iter().enumerate() {
                if j < base {
                    v += fj * self.sig[base - j - 1];
                }
            }
        }
        self.sign * v
    }
}

/// `eps = Hbar(theta)^-1 (y - Gbar(theta) u)` with zero initial conditions.
pub fn predict_errors(ms: &ModelStructure, theta: &[f64], data: &PredictorData) -> Residuals {
    let ny = ms.ny();
    let n = data.n;
    let radii = model_radii(ms, theta);
    let feasible = radii.iter().all(|&r| r < 1.0 - 1e-9) && theta.iter().all(|v| v.is_finite());
    let mut scratch = vec![0.0; n];
    let mut s: Vec<Vec<f64>> = Vec::with_capacity(ny);
    for k in 0..ny {
        let mut v = data.y[k].clone();
        for e in ms.entries.iter().filter(|e| e.row == k) {
            let (b, a) = ms.entry_coeffs(e, theta);
            iir(b, e.orders.delay, a, &data.u[e.col], &mut scratch);
            v.iter_mut().zip(&scratch).for_each(|(x, g)| *x -= g);
        }
        if ms.nf > 0 {
            v = fir(ms.f_coeffs(theta, k), &v);
        }
        s.push(v);
    }
    let mut eps = s;
    noise_filter(&ms.c_matrices(theta), &mut eps);
    Residuals {
        eps,
        radii,
        feasible,
    }
}

/// `(1/N') sum_t eps_t^T W eps_t` over `t >= start`.
pub fn wls_criterion(eps: &[Vec<f64>], w: &DMatrix<f64>, start: usize) -> f64 {
    let ny = eps.len();
    let n = eps.first().map(|e| e.len()).unwrap_or(0);
    if n <= start {
        return f64::INFINITY;
    }
    let mut acc = 0.0;
    for t in start..n {
        for a in 0..ny {
            for b in 0..ny {
                acc += eps[a][t] * w[(a, b)] * eps[b][t];
            }
        }
    }
    acc / (n - start) as f64
}

/// Sample covariance `(1/N') sum_t eps_t eps_t^T` over `t >= start`.
pub fn residual_covariance(eps: &[Vec<f64>], start: usize) -> DMatrix<f64> {
    let ny = eps.len();
    let n = eps.first().map(|e| e.len()).unwrap_or(0);
    let len = n.saturating_sub(start).max(1) as f64;
    DMatrix::from_fn(ny, ny, |a, b| {
        (start..n).map(|t| eps[a][t] * eps[b][t]).sum::<f64>() / len
    })
}
