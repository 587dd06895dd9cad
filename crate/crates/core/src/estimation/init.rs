//! Starting points: a row-wise high-order equation-error fit, reduced to the
//! requested entry orders by a least-squares fit of its impulse response.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::predictor::{model_radii, PredictorData};
use super::structure::{GEntry, ModelStructure};
use crate::model::poly;

const IMPULSE_LEN: usize = 80;
/// Denominator poles of the starting point are pulled inside this radius.
const START_RADIUS: f64 = 0.95;

fn least_squares(rows: &[Vec<f64>], rhs: &[f64]) -> Option<Vec<f64>> {
    let p = rows.first()?.len();
    if p == 0 {
        return Some(Vec::new());
    }
    let mut a = DMatrix::<f64>::zeros(p, p);
    let mut b = DVector::<f64>::zeros(p);
    for (row, &y) in rows.iter().zip(rhs) {
        for i in 0..p {
            b[i] += row[i] * y;
            for j in 0..p {
                a[(i, j)] += row[i] * row[j];
            }
        }
    }
    let ridge = 1e-10 * (0..p).map(|i| a[(i, i)]).fold(0.0, f64::max).max(1e-300);
    for i in 0..p {
        a[(i, i)] += ridge;
    }
    a.cholesky().map(|c| c.solve(&b).iter().copied().collect())
}

fn clip_radius(a: &[f64]) -> Vec<f64> {
    let mut p = vec![1.0];
    p.extend_from_slice(a);
    if poly::spectral_radius(&p) < START_RADIUS {
        return a.to_vec();
    }
    let roots: Vec<Complex64> = poly::reciprocal_roots(&p)
        .into_iter()
        .map(|r| {
            if r.norm() >= START_RADIUS {
                r / r.norm() * (START_RADIUS - 0.05)
            } else {
                r
            }
        })
        .collect();
    poly::from_reciprocal_roots(&roots)[1..].to_vec()
}

/// Fit `q^-delay B / A` to an impulse response by equation error.
fn reduce(h: &[f64], e: &GEntry) -> Vec<f64> {
    let (nb, na, delay) = (e.orders.nb, e.orders.na, e.orders.delay);
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for t in delay..h.len() {
        let mut row = vec![0.0; nb + na];
        if t - delay < nb {
            row[t - delay] = 1.0;
        }
        for s in 1..=na {
            if t >= s {
                row[nb + s - 1] = -h[t - s];
            }
        }
        rows.push(row);
        rhs.push(h[t]);
    }
    let mut x = least_squares(&rows, &rhs).unwrap_or_else(|| vec![0.0; nb + na]);
    let a = clip_radius(&x[nb..]);
    x[nb..].copy_from_slice(&a);
    x
}

/// High-order row-wise equation-error fit of order `n`, reduced to `ms`.
/// The noise part starts at `Hbar = I`.
pub fn initial_estimate(ms: &ModelStructure, data: &PredictorData, n: usize) -> Vec<f64> {
    let mut theta = vec![0.0; ms.dim()];
    let len = data.n;
    for k in 0..ms.ny() {
        let row_entries: Vec<&GEntry> = ms.entries.iter().filter(|e| e.row == k).collect();
        if row_entries.is_empty() {
            continue;
        }
        let max_delay = row_entries
            .iter()
            .map(|e| e.orders.delay)
            .max()
            .unwrap_or(0);
        let start = n + max_delay;
        if len <= start + 1 {
            continue;
        }
        let y = &data.y[k];
        let mut rows = Vec::with_capacity(len - start);
        let mut rhs = Vec::with_capacity(len - start);
        for t in start..len {
            let mut row = Vec::with_capacity(n + row_entries.len() * (n + 1));
            row.extend((1..=n).map(|m| y[t - m]));
            for e in &row_entries {
                let u = &data.u[e.col];
                row.extend((0..=n).map(|m| u[t - e.orders.delay - m]));
            }
            rows.push(row);
            rhs.push(y[t]);
        }
        let Some(x) = least_squares(&rows, &rhs) else {
            continue;
        };
        let mut den = vec![1.0];
        den.extend(x[..n].iter().map(|v| -v));
        for (idx, e) in row_entries.iter().enumerate() {
            let b = &x[n + idx * (n + 1)..n + (idx + 1) * (n + 1)];
            // impulse response of q^-delay B / A
            let mut h = vec![0.0; IMPULSE_LEN];
            for t in 0..IMPULSE_LEN {
                let mut acc = 0.0;
                if t >= e.orders.delay && t - e.orders.delay < b.len() {
                    acc += b[t - e.orders.delay];
                }
                for s in 1..den.len() {
                    if t >= s {
                        acc -= den[s] * h[t - s];
                    }
                }
                h[t] = acc;
            }
            if h.iter().any(|v| !v.is_finite() || v.abs() > 1e6) {
                continue;
            }
            let c = reduce(&h, e);
            theta[e.offset..e.offset + e.len()].copy_from_slice(&c);
        }
    }
    theta
}

/// Random perturbation of `theta0` that keeps every filter stable.
pub fn perturbed_start(
    ms: &ModelStructure,
    theta0: &[f64],
    scale: f64,
    seed: u64,
    stream: u64,
) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut s = scale;
    for _ in 0..12 {
        let cand: Vec<f64> = theta0
            .iter()
            .map(|&t| {
                let z: f64 = StandardNormal.sample(&mut rng);
                t + s * (t.abs() + 0.1) * z
            })
            .collect();
        if model_radii(ms, &cand).iter().all(|&r| r < START_RADIUS) {
            return cand;
        }
        s *= 0.5;
    }
    theta0.to_vec()
}
