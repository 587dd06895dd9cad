use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::par::ExecPolicy;

/// Averaged-periodogram settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchConfig {
    pub segment: usize,
    /// Fraction of a segment shared with the next one.
    pub overlap: f64,
}

impl Default for WelchConfig {
    fn default() -> Self {
        Self {
            segment: 512,
            overlap: 0.5,
        }
    }
}

/// Cross-spectral matrices at the requested frequencies. The convention is
/// `Phi(w) = sum_tau R(tau) e^{-j w tau}`, so unit white noise has `Phi = 1`.
#[derive(Debug, Clone)]
pub struct SpectralEstimate {
    pub grid: Vec<f64>,
    pub values: Vec<DMatrix<Complex64>>,
    pub segments: usize,
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|t| 0.5 - 0.5 * (std::f64::consts::TAU * t as f64 / n as f64).cos())
        .collect()
}

/// Welch estimate of the joint spectrum of `series` (each of equal length).
pub fn welch(
    series: &[&[f64]],
    grid: &[f64],
    cfg: WelchConfig,
    policy: ExecPolicy,
) -> Result<SpectralEstimate> {
    let p = series.len();
    let n = series.first().map(|s| s.len()).unwrap_or(0);
    let seg = cfg.segment;
    if seg < 2 || !(0.0..1.0).contains(&cfg.overlap) {
        return Err(Error::InvalidArgument(
            "Welch segment must be >= 2 and overlap in [0, 1)".into(),
        ));
    }
    if n < 8 * seg {
        return Err(Error::InvalidArgument(format!(
            "need at least {} samples for segment {seg}, got {n}",
            8 * seg
        )));
    }
    let step = ((seg as f64) * (1.0 - cfg.overlap)).round().max(1.0) as usize;
    let starts: Vec<usize> = (0..)
        .map(|k| k * step)
        .take_while(|s| s + seg <= n)
        .collect();
    let win = hann(seg);
    let u: f64 = win.iter().map(|v| v * v).sum();
    let means: Vec<f64> = series
        .iter()
        .map(|s| s.iter().sum::<f64>() / n as f64)
        .collect();
    let values = policy.map(grid.len(), |g| {
        let w = grid[g];
        let rot: Vec<Complex64> = (0..seg)
            .map(|t| Complex64::from_polar(win[t], -w * t as f64))
            .collect();
        let mut acc = DMatrix::<Complex64>::zeros(p, p);
        let mut x = vec![Complex64::new(0.0, 0.0); p];
        for &s in &starts {
            for (k, xs) in x.iter_mut().enumerate() {
                let data = &series[k][s..s + seg];
                *xs = data.iter().zip(&rot).map(|(v, r)| r * (v - means[k])).sum();
            }
            for a in 0..p {
                for b in 0..p {
                    acc[(a, b)] += x[a] * x[b].conj();
                }
            }
        }
        acc / Complex64::new(u * starts.len() as f64, 0.0)
    });
    Ok(SpectralEstimate {
        grid: grid.to_vec(),
        values,
        segments: starts.len(),
    })
}

/// Welch estimate for node signals `signals` of a dataset.
pub fn estimate_spectrum(
    data: &Dataset,
    signals: &[usize],
    grid: &[f64],
    cfg: WelchConfig,
) -> Result<SpectralEstimate> {
    let series: Vec<&[f64]> = signals
        .iter()
        .map(|&k| {
            data.w
                .get(k)
                .map(|s| s.as_slice())
                .ok_or_else(|| Error::InvalidArgument(format!("node w{} not in dataset", k + 1)))
        })
        .collect::<Result<_>>()?;
    welch(&series, grid, cfg, ExecPolicy::default())
}
