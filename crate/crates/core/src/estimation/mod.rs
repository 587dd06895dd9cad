//! Direct prediction-error estimation: MISO baseline, MIMO predictor with a
//! weighted least-squares or determinant criterion, and a Monte-Carlo harness.

mod init;
mod montecarlo;
pub mod optim;
mod predictor;
mod structure;

pub use init::initial_estimate;
pub use montecarlo::{
    montecarlo_bias, transformed_excitation, BiasReport, CoefficientStats, MonteCarloConfig, Setup,
};
pub use predictor::{
    block_radius, model_radii, predict_errors, residual_covariance, wls_criterion, PredictorData,
    Residuals, Sensitivities,
};
pub use structure::{
    build_model_set, miso_structure, EntryOrders, EntryOverride, GEntry, LambdaMode, ModelOrders,
    ModelStructure,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TransferMatrix;
use crate::par::ExecPolicy;
use optim::{levenberg_marquardt, LmConfig, LmOutcome, ResidualFn};

/// Barrier weight on filter radii above `BARRIER_START`.
const BARRIER_WEIGHT: f64 = 0.1;
const BARRIER_START: f64 = 0.98;
/// Ridge added to a singular residual covariance in the determinant criterion.
pub const ML_RIDGE: f64 = 1e-10;
const ML_OUTER_ITER: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentifyConfig {
    /// Total number of starts; the first is the equation-error pre-estimate.
    pub restarts: usize,
    pub seed: u64,
    /// Order of the high-order pre-estimate.
    pub arx_order: usize,
    /// Relative size of random start perturbations.
    pub perturbation: f64,
    pub lm: LmConfig,
    pub policy: ExecPolicy,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        Self {
            restarts: 8,
            seed: 0,
            arx_order: 10,
            perturbation: 0.3,
            lm: LmConfig::default(),
            policy: ExecPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Wls,
    Ml,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimDiagnostics {
    pub iterations: usize,
    pub restarts: usize,
    pub converged: bool,
    /// Costs reached from every start, in start order.
    pub restart_costs: Vec<f64>,
    /// The predictor was close to the stability boundary at the optimum.
    pub penalized: bool,
    /// A ridge was added to the residual covariance.
    pub ridge: bool,
    pub ml_outer_iterations: usize,
}

/// Result of a prediction-error fit.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub structure: ModelStructure,
    pub theta: Vec<f64>,
    pub names: Vec<String>,
    pub std_errors: Vec<f64>,
    pub gbar: TransferMatrix,
    pub hbar: TransferMatrix,
    pub lambda: DMatrix<f64>,
    pub criterion_kind: Criterion,
    /// `(1/N') sum eps^T W eps` for WLS, `det` of the residual covariance for ML.
    pub criterion: f64,
    pub weight: DMatrix<f64>,
    /// Residuals for `t >= start`, one series per output.
    pub residuals: Vec<Vec<f64>>,
    pub start: usize,
    pub diagnostics: OptimDiagnostics,
}

impl Estimate {
    /// Coefficients of the target entry (numerator then denominator).
    pub fn target_theta(&self) -> Option<&[f64]> {
        let e = self.structure.target_entry()?;
        Some(&self.theta[e.offset..e.offset + e.len()])
    }

    pub fn target_std_errors(&self) -> Option<&[f64]> {
        let e = self.structure.target_entry()?;
        Some(&self.std_errors[e.offset..e.offset + e.len()])
    }

    /// Criterion recomputed from the stored residuals.
    pub fn recompute_criterion(&self) -> f64 {
        match self.criterion_kind {
            Criterion::Wls => wls_criterion(&self.residuals, &self.weight, 0),
            Criterion::Ml => residual_covariance(&self.residuals, 0).determinant(),
        }
    }
}

/// Stacked residual `[L^T eps_t / sqrt(N')]_t` plus barrier terms, with `W = L L^T`.
struct Stacked<'a> {
    ms: &'a ModelStructure,
    data: &'a PredictorData,
    lt: DMatrix<f64>,
    start: usize,
}

impl Stacked<'_> {
    fn residual_len(&self) -> usize {
        (self.data.n - self.start) * self.ms.ny()
    }

    fn barrier(&self, theta: &[f64]) -> Vec<f64> {
        model_radii(self.ms, theta)
            .iter()
            .map(|&r| barrier_term(r))
            .collect()
    }
}

fn barrier_term(r: f64) -> f64 {
    BARRIER_WEIGHT * (r - BARRIER_START).max(0.0) / (1.0 - r)
}

impl ResidualFn for Stacked<'_> {
    fn eval(&self, theta: &[f64]) -> Option<Vec<f64>> {
        let res = predict_errors(self.ms, theta, self.data);
        if !res.feasible {
            return None;
        }
        let ny = self.ms.ny();
        let n = self.data.n;
        let scale = 1.0 / ((n - self.start) as f64).sqrt();
        let mut out = Vec::with_capacity(self.residual_len() + res.radii.len());
        for t in self.start..n {
            for a in 0..ny {
                let mut acc = 0.0;
                for b in a..ny {
                    acc += self.lt[(a, b)] * res.eps[b][t];
                }
                out.push(acc * scale);
            }
        }
        out.extend(res.radii.iter().map(|&r| barrier_term(r)));
        if out.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some(out)
    }

    fn jacobian(&self, theta: &[f64]) -> Option<DMatrix<f64>> {
        let sens = Sensitivities::new(self.ms, theta, self.data);
        if !sens.residuals.feasible {
            return None;
        }
        let ny = self.ms.ny();
        let n = self.data.n;
        let rows = self.residual_len();
        let scale = 1.0 / ((n - self.start) as f64).sqrt();
        let b0 = self.barrier(theta);
        let fd = LmConfig::default().fd_step;
        let p = theta.len();
        let mut j = DMatrix::<f64>::zeros(rows + b0.len(), p);
        let lt: Vec<f64> = self.lt.iter().copied().collect();
        sens.for_each_time(|t, d| {
            if t < self.start {
                return;
            }
            for a in 0..ny {
                let row = (t - self.start) * ny + a;
                for k in 0..p {
                    let mut acc = 0.0;
                    for b in a..ny {
                        acc += lt[b * ny + a] * d[b * p + k];
                    }
                    j[(row, k)] = acc * scale;
                }
            }
        });
        // radii are cheap; difference the barrier rows directly
        for k in 0..p {
            let h = optim::fd_step(theta, k, fd);
            let at = |s: f64| {
                let mut t = theta.to_vec();
                t[k] += s * h;
                let b = self.barrier(&t);
                b.iter().all(|v| v.is_finite() && *v >= 0.0).then_some(b)
            };
            let col: Vec<f64> = match (at(1.0), at(-1.0)) {
                (Some(p), Some(q)) => p.iter().zip(&q).map(|(x, y)| (x - y) / (2.0 * h)).collect(),
                (Some(p), None) => p.iter().zip(&b0).map(|(x, y)| (x - y) / h).collect(),
                (None, Some(q)) => b0.iter().zip(&q).map(|(x, y)| (x - y) / h).collect(),
                (None, None) => vec![0.0; b0.len()],
            };
            for (i, v) in col.into_iter().enumerate() {
                j[(rows + i, k)] = v;
            }
        }
        Some(j)
    }
}

fn check_data(ms: &ModelStructure, data: &PredictorData) -> Result<usize> {
    let start = ms.max_lag();
    if data.y.len() != ms.ny() || data.u.len() != ms.nd() {
        return Err(Error::Dimension(
            "predictor data does not match the model structure".into(),
        ));
    }
    if data.n <= start + ms.dim() {
        return Err(Error::InvalidArgument(format!(
            "{} samples are too few for {} parameters and lag {start}",
            data.n,
            ms.dim()
        )));
    }
    Ok(start)
}

fn weight_factor(w: &DMatrix<f64>, ny: usize) -> Result<DMatrix<f64>> {
    if w.shape() != (ny, ny) {
        return Err(Error::Dimension(format!("weight must be {ny}x{ny}")));
    }
    let sym = (w + w.transpose()) * 0.5;
    if (&sym - w).norm() > 1e-12 * w.norm().max(1.0) {
        return Err(Error::InvalidArgument("weight must be symmetric".into()));
    }
    let c = sym
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("weight must be positive definite".into()))?;
    Ok(c.l().transpose())
}

/// Run all starts and keep the lowest cost.
fn multistart(
    obj: &Stacked,
    starts: Vec<Vec<f64>>,
    cfg: &IdentifyConfig,
) -> Result<(LmOutcome, Vec<f64>, bool)> {
    let outcomes = cfg.policy.map(starts.len(), |k| {
        levenberg_marquardt(obj, &starts[k], &cfg.lm, ExecPolicy::Sequential)
    });
    let costs: Vec<f64> = outcomes
        .iter()
        .map(|o| o.as_ref().map(|o| o.cost).unwrap_or(f64::INFINITY))
        .collect();
    let any_converged = outcomes.iter().flatten().any(|o| o.converged);
    let best = outcomes
        .into_iter()
        .flatten()
        .min_by(|a, b| a.cost.total_cmp(&b.cost))
        .ok_or_else(|| Error::numerical("estimation", "no feasible starting point"))?;
    Ok((best, costs, any_converged))
}

fn starts_for(
    ms: &ModelStructure,
    data: &PredictorData,
    cfg: &IdentifyConfig,
    from: Option<&[f64]>,
) -> Vec<Vec<f64>> {
    let theta0 = match from {
        Some(t) => t.to_vec(),
        None => initial_estimate(ms, data, cfg.arx_order),
    };
    let mut starts = vec![theta0.clone()];
    for k in 1..cfg.restarts.max(1) {
        starts.push(init::perturbed_start(
            ms,
            &theta0,
            cfg.perturbation,
            cfg.seed,
            k as u64,
        ));
    }
    starts
}

/// Sandwich covariance `A^-1 B A^-1 / N'` from the residual Jacobian.
fn std_errors(
    j: &DMatrix<f64>,
    ny: usize,
    rows: usize,
    lt: &DMatrix<f64>,
    lambda: &DMatrix<f64>,
    n_eff: usize,
) -> Vec<f64> {
    let p = j.ncols();
    if p == 0 {
        return Vec::new();
    }
    let jr = j.rows(0, rows);
    let a = jr.tr_mul(&jr);
    let m = lt * lambda * lt.transpose();
    let mut b = DMatrix::<f64>::zeros(p, p);
    for t in 0..rows / ny {
        let jt = jr.rows(t * ny, ny);
        b += jt.transpose() * &m * jt;
    }
    let Some(ai) = a.try_inverse() else {
        return vec![f64::NAN; p];
    };
    let cov = &ai * b * &ai / n_eff as f64;
    (0..p).map(|k| cov[(k, k)].max(0.0).sqrt()).collect()
}

fn finish(
    ms: &ModelStructure,
    data: &PredictorData,
    out: &LmOutcome,
    lt: &DMatrix<f64>,
    weight: DMatrix<f64>,
    kind: Criterion,
    diagnostics: OptimDiagnostics,
) -> Estimate {
    let start = ms.max_lag();
    let res = predict_errors(ms, &out.theta, data);
    let residuals: Vec<Vec<f64>> = res.eps.iter().map(|e| e[start..].to_vec()).collect();
    let cov = residual_covariance(&residuals, 0);
    let lambda = ms.lambda.matrix().unwrap_or_else(|| cov.clone());
    let criterion = match kind {
        Criterion::Wls => wls_criterion(&residuals, &weight, 0),
        Criterion::Ml => cov.determinant(),
    };
    let rows = (data.n - start) * ms.ny();
    let std = std_errors(&out.jacobian, ms.ny(), rows, lt, &lambda, data.n - start);
    let mut diagnostics = diagnostics;
    diagnostics.penalized = res.radii.iter().any(|&r| r > BARRIER_START);
    Estimate {
        structure: ms.clone(),
        theta: out.theta.clone(),
        names: ms.names(),
        std_errors: std,
        gbar: ms.gbar(&out.theta),
        hbar: ms.hbar(&out.theta),
        lambda,
        criterion_kind: kind,
        criterion,
        weight,
        residuals,
        start,
        diagnostics,
    }
}

/// Weighted least-squares prediction-error fit with multi-start.
pub fn identify_wls(
    ms: &ModelStructure,
    data: &PredictorData,
    w: &DMatrix<f64>,
    cfg: &IdentifyConfig,
) -> Result<Estimate> {
    let start = check_data(ms, data)?;
    let lt = weight_factor(w, ms.ny())?;
    let obj = Stacked {
        ms,
        data,
        lt: lt.clone(),
        start,
    };
    let (best, costs, _) = multistart(&obj, starts_for(ms, data, cfg, None), cfg)?;
    let diag = OptimDiagnostics {
        iterations: best.iterations,
        restarts: costs.len(),
        converged: best.converged,
        restart_costs: costs,
        penalized: false,
        ridge: false,
        ml_outer_iterations: 0,
    };
    Ok(finish(
        ms,
        data,
        &best,
        &lt,
        w.clone(),
        Criterion::Wls,
        diag,
    ))
}

/// Fit from a given starting point only.
pub fn identify_wls_from(
    ms: &ModelStructure,
    data: &PredictorData,
    w: &DMatrix<f64>,
    theta0: &[f64],
    cfg: &IdentifyConfig,
) -> Result<Estimate> {
    let start = check_data(ms, data)?;
    let lt = weight_factor(w, ms.ny())?;
    let obj = Stacked {
        ms,
        data,
        lt: lt.clone(),
        start,
    };
    let out = levenberg_marquardt(&obj, theta0, &cfg.lm, cfg.policy)
        .ok_or_else(|| Error::InvalidArgument("starting point is not stable".into()))?;
    let diag = OptimDiagnostics {
        iterations: out.iterations,
        restarts: 1,
        converged: out.converged,
        restart_costs: vec![out.cost],
        penalized: false,
        ridge: false,
        ml_outer_iterations: 0,
    };
    Ok(finish(ms, data, &out, &lt, w.clone(), Criterion::Wls, diag))
}

fn regularized_covariance(eps: &[Vec<f64>], start: usize) -> (DMatrix<f64>, bool) {
    let cov = residual_covariance(eps, start);
    let ny = cov.nrows();
    let scale = cov.trace().abs().max(1e-300) / ny.max(1) as f64;
    let lo = cov.clone().symmetric_eigen().eigenvalues.min();
    if lo <= 1e-12 * scale {
        (cov + DMatrix::identity(ny, ny) * ML_RIDGE, true)
    } else {
        (cov, false)
    }
}

/// Determinant-criterion fit. A stationary point of `log det (1/N') sum eps eps^T`
/// is a fixed point of WLS with `W` equal to the inverse residual covariance,
/// which is iterated from the multi-start WLS fit with `W = I`.
pub fn identify_ml(
    ms: &ModelStructure,
    data: &PredictorData,
    cfg: &IdentifyConfig,
) -> Result<Estimate> {
    if !matches!(ms.lambda, LambdaMode::Free) {
        return Err(Error::InvalidArgument(
            "the determinant criterion needs a free Lambda".into(),
        ));
    }
    let ny = ms.ny();
    let first = identify_wls(ms, data, &DMatrix::identity(ny, ny), cfg)?;
    let mut theta = first.theta.clone();
    let mut diag = first.diagnostics.clone();
    let start = ms.max_lag();
    let mut ridge = false;
    let mut last = f64::INFINITY;
    let mut outer = 0;
    let mut out = None;
    for _ in 0..ML_OUTER_ITER {
        outer += 1;
        let res = predict_errors(ms, &theta, data);
        let (cov, r) = regularized_covariance(&res.eps, start);
        ridge |= r;
        let w = cov
            .try_inverse()
            .ok_or_else(|| Error::numerical("estimation", "residual covariance singular"))?;
        let w = (&w + w.transpose()) * 0.5;
        let lt = weight_factor(&w, ny)?;
        let obj = Stacked {
            ms,
            data,
            lt: lt.clone(),
            start,
        };
        let o = levenberg_marquardt(&obj, &theta, &cfg.lm, cfg.policy).ok_or_else(|| {
            Error::numerical("estimation", "determinant iteration left the stable region")
        })?;
        let step: f64 = o
            .theta
            .iter()
            .zip(&theta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        theta = o.theta.clone();
        let res = predict_errors(ms, &theta, data);
        let v = residual_covariance(&res.eps, start).determinant();
        diag.iterations += o.iterations;
        diag.converged = o.converged;
        out = Some((o, lt, w));
        if step < 1e-9 || (last - v).abs() <= 1e-12 * v.abs() {
            break;
        }
        last = v;
    }
    let (o, lt, w) = out.expect("at least one outer iteration");
    diag.ridge = ridge;
    diag.ml_outer_iterations = outer;
    let mut est = finish(ms, data, &o, &lt, w, Criterion::Ml, diag);
    if ridge {
        est.criterion = (residual_covariance(&est.residuals, 0)
            + DMatrix::identity(ny, ny) * ML_RIDGE)
            .determinant();
    }
    Ok(est)
}

/// Scalar-output direct method for `w_j` with inputs `dj`; `offset` is the
/// known `1 x K` excitation row `R_j`.
pub fn miso_direct(
    data: &crate::simulation::Dataset,
    j: usize,
    dj: &[usize],
    orders: &ModelOrders,
    offset: Option<&TransferMatrix>,
    cfg: &IdentifyConfig,
) -> Result<Estimate> {
    let ms = miso_structure(j, dj, orders, LambdaMode::Free)?;
    let pd = PredictorData::new(&ms, data, offset)?;
    identify_wls(&ms, &pd, &DMatrix::identity(1, 1), cfg)
}

/// Sample autocorrelation of each residual series at lags `1..=max_lag`,
/// normalized by the lag-0 value.
pub fn autocorrelation(eps: &[f64], max_lag: usize) -> Vec<f64> {
    let n = eps.len();
    let mean = eps.iter().sum::<f64>() / n.max(1) as f64;
    let c0: f64 = eps.iter().map(|v| (v - mean).powi(2)).sum();
    (1..=max_lag)
        .map(|k| {
            if k >= n || c0 == 0.0 {
                return 0.0;
            }
            (k..n)
                .map(|t| (eps[t] - mean) * (eps[t - k] - mean))
                .sum::<f64>()
                / c0
        })
        .collect()
}

/// Fraction of lags `1..=max_lag` with `|rho_k| <= 3 / sqrt(N)`, over all series.
pub fn whiteness_fraction(residuals: &[Vec<f64>], max_lag: usize) -> f64 {
    let mut inside = 0;
    let mut total = 0;
    for e in residuals {
        let band = 3.0 / (e.len() as f64).sqrt();
        for r in autocorrelation(e, max_lag) {
            total += 1;
            if r.abs() <= band {
                inside += 1;
            }
        }
    }
    if total == 0 {
        1.0
    } else {
        inside as f64 / total as f64
    }
}

/// Gradient of the WLS criterion from the residual Jacobian used by the
/// optimizer (`2 J^T r`) and from a 5-point stencil on the criterion itself.
/// Returns the largest relative deviation.
pub fn gradient_check(
    ms: &ModelStructure,
    data: &PredictorData,
    w: &DMatrix<f64>,
    theta: &[f64],
    h: f64,
) -> Result<f64> {
    let start = check_data(ms, data)?;
    let lt = weight_factor(w, ms.ny())?;
    let obj = Stacked {
        ms,
        data,
        lt,
        start,
    };
    let r = obj
        .eval(theta)
        .ok_or_else(|| Error::InvalidArgument("theta is not stable".into()))?;
    let j = obj.jacobian(theta).unwrap_or_else(|| {
        optim::jacobian(
            &obj,
            theta,
            &r,
            LmConfig::default().fd_step,
            ExecPolicy::default(),
        )
    });
    let g_lm = j.tr_mul(&nalgebra::DVector::from_column_slice(&r)) * 2.0;
    let v = |t: &[f64]| -> f64 {
        let res = predict_errors(ms, t, data);
        wls_criterion(&res.eps, w, start)
    };
    let mut worst = 0.0f64;
    let scale = g_lm.amax().max(1e-12);
    for k in 0..theta.len() {
        let step = h * (1.0 + theta[k].abs());
        let at = |d: f64| {
            let mut t = theta.to_vec();
            t[k] += d * step;
            v(&t)
        };
        let g5 = (-at(2.0) + 8.0 * at(1.0) - 8.0 * at(-1.0) + at(-2.0)) / (12.0 * step);
        worst = worst.max((g5 - g_lm[k]).abs() / scale.max(g5.abs()));
    }
    Ok(worst)
}
