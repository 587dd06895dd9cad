use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::spectrum::{welch, WelchConfig};
use super::{Dataset, ExcitationConfig};
use crate::error::{Error, Result};
use crate::graph::{ConditionItem, ConditionReport, Selection};
use crate::model::NetworkSpec;
use crate::par::ExecPolicy;
use crate::transform::{transform_network, TransformedNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InformativityConfig {
    /// Lower bound on the smallest eigenvalue of the spectrum of `kappa`.
    pub tol: f64,
    /// Fraction of grid frequencies that must satisfy the bound.
    pub fraction: f64,
    pub welch: WelchConfig,
}

impl Default for InformativityConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            fraction: 1.0,
            welch: WelchConfig::default(),
        }
    }
}

fn response(net: &NetworkSpec, w: f64) -> Result<DMatrix<Complex64>> {
    let l = net.l;
    let mut src = DMatrix::<Complex64>::zeros(l, net.k + l);
    src.columns_mut(0, net.k).copy_from(&net.r.freq(w));
    src.columns_mut(net.k, l).copy_from(&net.h.freq(w));
    (DMatrix::<Complex64>::identity(l, l) - net.g.freq(w))
        .lu()
        .solve(&src)
        .ok_or_else(|| Error::numerical("informativity", "I - G singular on the grid"))
}

/// Spectrum of `kappa = [w_D; xi_Q; w_o]` at each frequency of `grid`, where
/// `xi` is the innovation of the transformed output block.
pub fn kappa_spectrum_model(
    net: &NetworkSpec,
    sel: &Selection,
    exc: &ExcitationConfig,
    grid: &[f64],
) -> Result<Vec<DMatrix<Complex64>>> {
    exc.validate(net.k)?;
    let tn = if sel.q.is_empty() {
        None
    } else {
        Some(transform_network(net, sel)?)
    };
    let (k, l) = (net.k, net.l);
    let mut src = DMatrix::<Complex64>::zeros(k + l, k + l);
    src.view_mut((k, k), (l, l))
        .copy_from(&net.lambda.map(|v| Complex64::new(v, 0.0)));
    let per = ExecPolicy::default().map(grid.len(), |g| {
        let w = grid[g];
        let t = response(net, w)?;
        let mut rows: Vec<DMatrix<Complex64>> =
            vec![DMatrix::from_fn(sel.d.len(), k + l, |r, c| {
                t[(sel.d[r], c)]
            })];
        if let Some(tn) = &tn {
            rows.push(innovation_rows(tn, &t, w)?);
        }
        if let Some(o) = sel.o {
            rows.push(t.rows(o, 1).into_owned());
        }
        let n: usize = rows.iter().map(|m| m.nrows()).sum();
        let mut m = DMatrix::<Complex64>::zeros(n, k + l);
        let mut at = 0;
        for r in &rows {
            m.rows_mut(at, r.nrows()).copy_from(r);
            at += r.nrows();
        }
        let mut s = src.clone();
        for c in 0..k {
            s[(c, c)] = Complex64::new(exc.density(c, w), 0.0);
        }
        let phi = &m * s * m.adjoint();
        Ok((&phi + phi.adjoint()) * Complex64::new(0.5, 0.0))
    });
    per.into_iter().collect()
}

/// Rows of `xi_Q` as a map from `[r; e]`; the excitation columns are zero.
fn innovation_rows(
    tn: &TransformedNetwork,
    t: &DMatrix<Complex64>,
    w: f64,
) -> Result<DMatrix<Complex64>> {
    let imm = &tn.imm;
    let (nq, ny, m) = (imm.nq(), imm.ny(), imm.m());
    let k = t.ncols() - tn.imm.sel.l;
    let te = t.columns(k, t.ncols() - k);
    let tm = DMatrix::from_fn(m, te.ncols(), |r, c| te[(imm.retained[r], c)]);
    let rho = tm.rows(0, ny) - tn.gbar_full.freq(w)? * &tm;
    let xi = tn
        .hbar
        .freq(w)?
        .lu()
        .solve(&rho)
        .ok_or_else(|| Error::numerical("informativity", "noise model singular on the grid"))?;
    let mut out = DMatrix::<Complex64>::zeros(nq, t.ncols());
    out.columns_mut(k, te.ncols()).copy_from(&xi.rows(0, nq));
    Ok(out)
}

fn judge(
    spectra: &[DMatrix<Complex64>],
    grid: &[f64],
    cfg: &InformativityConfig,
) -> ConditionReport {
    let mut bad = Vec::new();
    let mut lowest = f64::INFINITY;
    for (phi, &w) in spectra.iter().zip(grid) {
        let lo = if phi.nrows() == 0 {
            f64::INFINITY
        } else {
            phi.symmetric_eigenvalues()
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min)
        };
        lowest = lowest.min(lo);
        if !(lo > cfg.tol) {
            bad.push(w);
        }
    }
    let good = grid.len() - bad.len();
    let passed = !grid.is_empty() && good as f64 >= cfg.fraction * grid.len() as f64 - 1e-9;
    let mut item = ConditionItem::new("informativity", passed);
    let shown: Vec<String> = bad.iter().take(16).map(|w| format!("{w:.4}")).collect();
    item.detail = format!(
        "min eigenvalue {lowest:.3e} (tol {:.1e}); {good}/{} frequencies pass",
        cfg.tol,
        grid.len()
    );
    if !bad.is_empty() {
        let more = if bad.len() > shown.len() { ", ..." } else { "" };
        item.detail
            .push_str(&format!("; failing at w = [{}{more}]", shown.join(", ")));
    }
    ConditionReport::from_items(vec![item])
}

/// Positivity of the spectrum of `kappa` computed from the network model.
pub fn check_informativity(
    net: &NetworkSpec,
    sel: &Selection,
    exc: &ExcitationConfig,
    grid: &[f64],
    cfg: &InformativityConfig,
) -> Result<ConditionReport> {
    let spectra = kappa_spectrum_model(net, sel, exc, grid)?;
    Ok(judge(&spectra, grid, cfg))
}

/// Positivity of the Welch estimate of the spectrum of `[w_D; xi_Q; w_o]`,
/// with `xi_q` supplied as residual series (one per node of `Q`).
pub fn check_informativity_data(
    data: &Dataset,
    sel: &Selection,
    xi_q: &[Vec<f64>],
    grid: &[f64],
    cfg: &InformativityConfig,
) -> Result<ConditionReport> {
    if xi_q.len() != sel.q.len() {
        return Err(Error::Dimension(format!(
            "expected {} residual series, got {}",
            sel.q.len(),
            xi_q.len()
        )));
    }
    let mut series: Vec<&[f64]> = Vec::new();
    for &k in sel.d.iter() {
        series.push(
            data.w
                .get(k)
                .ok_or_else(|| Error::Dimension("selection exceeds dataset".into()))?,
        );
    }
    // residuals may be shorter than the data (predictor warm-up); align the tails
    let len = xi_q
        .iter()
        .map(|s| s.len())
        .chain(std::iter::once(data.n))
        .min()
        .unwrap_or(0);
    let tail = |s: &[f64]| -> usize { s.len() - len };
    let mut owned: Vec<&[f64]> = series.iter().map(|s| &s[tail(s)..]).collect();
    owned.extend(xi_q.iter().map(|s| &s[tail(s)..]));
    if let Some(o) = sel.o {
        let s = data
            .w
            .get(o)
            .ok_or_else(|| Error::Dimension("selection exceeds dataset".into()))?;
        owned.push(&s[tail(s)..]);
    }
    series = owned;
    let est = welch(&series, grid, cfg.welch, ExecPolicy::default())?;
    Ok(judge(&est.values, grid, cfg))
}
