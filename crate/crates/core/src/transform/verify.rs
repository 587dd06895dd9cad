//! Cross-checks on the transformed network: the closed-form entry formula,
//! module invariance, preservation of second-order statistics and the
//! block-zero patterns implied by the absence of confounders.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use super::{transform_network, ImmersedNetwork, TransformedNetwork};
use crate::error::{Error, Result};
use crate::graph::{build_graph, check_invariance_conditions, ConditionReport, Selection};
use crate::model::{uniform_grid, NetworkSpec, RationalTransfer, StateSpace};
use crate::par::ExecPolicy;

/// Default number of grid points for invariance checks.
pub const INVARIANCE_GRID: usize = 256;

fn cplx(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|v| Complex64::new(v, 0.0))
}

fn max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Closed-form `Gbar_ji` from the immersed network and its noise factor `h_tilde`.
pub fn gbar_oracle(imm: &ImmersedNetwork, h_tilde: &StateSpace) -> Result<RationalTransfer> {
    let sel = &imm.sel;
    let (ny, m) = (imm.ny(), imm.m());
    let pj = imm
        .pos(sel.j)
        .ok_or_else(|| Error::Internal("target output not retained".into()))?;
    let pi = imm
        .pos(sel.i)
        .ok_or_else(|| Error::Internal("target input not retained".into()))?;
    let ui: Vec<usize> = (ny..m).collect();
    let g = &imm.g;
    let mut den = StateSpace::identity(1).sub(&g.select(&[pj], &[pj]));
    let mut num = g.select(&[pj], &[pi]);
    if !ui.is_empty() {
        let huu_inv = h_tilde.select(&ui, &ui).inverse()?;
        let hj3 = h_tilde.select(&[pj], &ui).mul(&huu_inv).minreal();
        den = den.add(&hj3.mul(&g.select(&ui, &[pj])));
        num = num.sub(&hj3.mul(&g.select(&ui, &[pi])));
        if pi >= ny {
            num = num.add(&hj3.select(&[0], &[pi - ny]));
        }
    }
    let den_inv = den.minreal().inverse().map_err(|e| {
        Error::numerical(
            "closed-form entry",
            format!("leading inverse ill-posed: {e}"),
        )
    })?;
    Ok(den_inv
        .mul(&num.minreal())
        .minreal()
        .entry_to_rational(0, 0))
}

/// Outcome of [`verify_invariance`].
#[derive(Debug, Clone, Serialize)]
pub struct InvarianceReport {
    /// `(j, i)`, one-based.
    pub target: [usize; 2],
    pub deviation: f64,
    pub tol: f64,
    pub grid_points: usize,
    pub passed: bool,
    pub conditions: ConditionReport,
    pub gbar_ji: RationalTransfer,
    pub g_ji: RationalTransfer,
}

/// Max grid deviation between `Gbar_ji` and `G_ji`, paired with the graph conditions.
pub fn verify_invariance(net: &NetworkSpec, sel: &Selection, tol: f64) -> Result<InvarianceReport> {
    verify_invariance_on(net, sel, tol, INVARIANCE_GRID)
}

pub fn verify_invariance_on(
    net: &NetworkSpec,
    sel: &Selection,
    tol: f64,
    grid_points: usize,
) -> Result<InvarianceReport> {
    let tn = transform_network(net, sel)?;
    let gbar = tn.gbar_entry(sel.j, sel.i)?;
    let g = net.g.get(sel.j, sel.i).clone();
    let grid = uniform_grid(grid_points);
    let deviation = grid
        .iter()
        .map(|&w| (gbar.freq(w) - g.freq(w)).norm())
        .fold(0.0, f64::max);
    let conditions = check_invariance_conditions(&build_graph(net), sel);
    Ok(InvarianceReport {
        target: [sel.j + 1, sel.i + 1],
        deviation,
        tol,
        grid_points,
        passed: deviation <= tol,
        conditions,
        gbar_ji: gbar,
        g_ji: g,
    })
}

/// Largest spectrum mismatch of the residual processes `w_Y - Gbar w` and
/// `w_U - Gbar_U w` between the original network and the transformed noise models.
#[derive(Debug, Clone, Serialize)]
pub struct SecondOrderReport {
    pub output_block: f64,
    pub input_block: f64,
    pub grid_points: usize,
}

/// `(I - G)^-1 H` of the original network at `w`.
fn noise_response(net: &NetworkSpec, w: f64) -> Result<DMatrix<Complex64>> {
    let l = net.l;
    let g = net.g.freq(w);
    let h = net.h.freq(w);
    let a = DMatrix::<Complex64>::identity(l, l) - g;
    a.lu()
        .solve(&h)
        .ok_or_else(|| Error::numerical("second-order check", "I - G singular on the grid"))
}

pub fn second_order_check(
    net: &NetworkSpec,
    tn: &TransformedNetwork,
    grid: &[f64],
) -> Result<SecondOrderReport> {
    second_order_check_with(net, tn, grid, ExecPolicy::default())
}

pub fn second_order_check_with(
    net: &NetworkSpec,
    tn: &TransformedNetwork,
    grid: &[f64],
    policy: ExecPolicy,
) -> Result<SecondOrderReport> {
    let imm = &tn.imm;
    let (ny, m) = (imm.ny(), imm.m());
    let lam = cplx(&net.lambda);
    let lb = cplx(&tn.lambda_bar);
    let lu = cplx(&tn.lambda_uu);
    let per: Vec<Result<(f64, f64)>> = policy.map(grid.len(), |k| {
        let w = grid[k];
        let t = noise_response(net, w)?;
        let tm = DMatrix::from_fn(m, net.l, |r, c| t[(imm.retained[r], c)]);
        let g = tn.gbar_full.freq(w)?;
        let rho = tm.rows(0, ny) - &g * &tm;
        let hb = tn.hbar.freq(w)?;
        let dy = max_abs(&(&rho * &lam * rho.adjoint() - &hb * &lb * hb.adjoint()));
        let du = if m > ny {
            let gu = tn.gbar_u.freq(w)?;
            let rho_u = tm.rows(ny, m - ny) - &gu * &tm;
            let hu = tn.hbar_uu.freq(w)?;
            max_abs(&(&rho_u * &lam * rho_u.adjoint() - &hu * &lu * hu.adjoint()))
        } else {
            0.0
        };
        Ok((dy, du))
    });
    let mut out = SecondOrderReport {
        output_block: 0.0,
        input_block: 0.0,
        grid_points: grid.len(),
    };
    for r in per {
        let (dy, du) = r?;
        out.output_block = out.output_block.max(dy);
        out.input_block = out.input_block.max(du);
    }
    Ok(out)
}

/// Max over the grid of `|Hw_{Omega X} Hw_{Phi X}^*|`, where `Hw` is the
/// immersed noise map with `Lambda` whitened by its Cholesky factor.
/// Node sets are global indices of retained nodes; `x` are noise sources.
pub fn block_noise_product(
    imm: &ImmersedNetwork,
    phi: &[usize],
    omega: &[usize],
    x: &[usize],
    grid: &[f64],
) -> Result<f64> {
    let chol = imm
        .lambda
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidNetwork("Lambda is not positive definite".into()))?
        .l();
    let rows = |set: &[usize]| -> Result<Vec<usize>> {
        set.iter()
            .map(|&k| {
                imm.pos(k)
                    .ok_or_else(|| Error::InvalidArgument(format!("w{} is not retained", k + 1)))
            })
            .collect()
    };
    let rp = rows(phi)?;
    let ro = rows(omega)?;
    let cols: Vec<usize> = x
        .iter()
        .map(|&k| {
            imm.noise_order
                .iter()
                .position(|&n| n == k)
                .expect("noise order covers all sources")
        })
        .collect();
    let lc = cplx(&chol);
    let mut worst = 0.0f64;
    for &w in grid {
        let hw = imm.h.freq(w)? * &lc;
        let a = DMatrix::from_fn(ro.len(), cols.len(), |r, c| hw[(ro[r], cols[c])]);
        let b = DMatrix::from_fn(rp.len(), cols.len(), |r, c| hw[(rp[r], cols[c])]);
        worst = worst.max(max_abs(&(a * b.adjoint())));
    }
    Ok(worst)
}

/// Largest magnitude over the grid of the blocks of `H_tilde` and
/// `Lambda_tilde` coupling `A` with `{Q, o, B}`.
pub fn a_block_coupling(tn: &TransformedNetwork, grid: &[f64]) -> Result<f64> {
    let imm = &tn.imm;
    let sel = &imm.sel;
    let a: Vec<usize> = sel.a.iter().filter_map(|&k| imm.pos(k)).collect();
    let rest: Vec<usize> = (0..imm.m()).filter(|p| !a.contains(p)).collect();
    let mut worst = 0.0f64;
    for &r in &a {
        for &c in &rest {
            worst = worst
                .max(tn.lambda_tilde[(r, c)].abs())
                .max(tn.lambda_tilde[(c, r)].abs());
        }
    }
    for &w in grid {
        let h = tn.h_tilde.freq(w)?;
        for &r in &a {
            for &c in &rest {
                worst = worst.max(h[(r, c)].norm()).max(h[(c, r)].norm());
            }
        }
    }
    Ok(worst)
}
