//! Immersion of unmeasured nodes, spectral factorisation and the canonical
//! transformed network used by the MIMO predictor.
//!
//! Local orderings: retained nodes are `[Q, o, U]`, noise sources are
//! `[Q, o, U, Z]`. All algebra is done on state-space realisations which are
//! reduced after every stage.

pub mod factor;
pub mod verify;

use nalgebra::DMatrix;
use serde::Serialize;

pub use factor::{spectral_factorize, spectrum_distance, SpectralFactor};
pub use verify::{
    block_noise_product, gbar_oracle, second_order_check, verify_invariance, InvarianceReport,
    SecondOrderReport,
};

use crate::error::{Error, Result};
use crate::graph::Selection;
use crate::model::{NetworkSpec, RationalTransfer, StateSpace, TransferMatrix};

/// Network after elimination of the `Z` nodes.
#[derive(Debug, Clone)]
pub struct ImmersedNetwork {
    pub sel: Selection,
    /// Node indices in local order `[Q, o, U]`.
    pub retained: Vec<usize>,
    /// Noise source indices in local order `[Q, o, U, Z]`.
    pub noise_order: Vec<usize>,
    /// `G` breve, `m x m` over `retained`.
    pub g: StateSpace,
    /// `H` breve, `m x L` from `noise_order` to `retained`.
    pub h: StateSpace,
    /// `Lambda` permuted to `noise_order`.
    pub lambda: DMatrix<f64>,
}

impl ImmersedNetwork {
    pub fn nq(&self) -> usize {
        self.sel.q.len()
    }

    pub fn ny(&self) -> usize {
        self.sel.y.len()
    }

    pub fn nu(&self) -> usize {
        self.sel.u.len()
    }

    pub fn m(&self) -> usize {
        self.retained.len()
    }

    /// Local position of node `k` in `retained`.
    pub fn pos(&self, k: usize) -> Option<usize> {
        self.retained.iter().position(|&r| r == k)
    }

    pub fn g_tf(&self) -> TransferMatrix {
        self.g.to_transfer_matrix()
    }

    pub fn h_tf(&self) -> TransferMatrix {
        self.h.to_transfer_matrix()
    }
}

/// Eliminate the nodes in `sel.z` (external excitation set to zero).
pub fn immerse(net: &NetworkSpec, sel: &Selection) -> Result<ImmersedNetwork> {
    let retained = sel.retained();
    let mut noise_order = retained.clone();
    noise_order.extend(&sel.z);
    let lambda = DMatrix::from_fn(net.l, net.l, |a, b| {
        net.lambda[(noise_order[a], noise_order[b])]
    });
    let g_mm = net.g.submatrix(&retained, &retained).to_state_space();
    let h_mn = net.h.submatrix(&retained, &noise_order).to_state_space();
    let (g, h) = if sel.z.is_empty() {
        (g_mm, h_mn)
    } else {
        let z = &sel.z;
        let loop_zz = net
            .g
            .submatrix(z, z)
            .to_state_space()
            .loop_inverse()
            .map_err(|e| {
                Error::numerical("immersion", format!("I - G_ZZ is not invertible: {e}"))
            })?;
        let g_mz = net.g.submatrix(&retained, z).to_state_space();
        let through = g_mz.mul(&loop_zz).minreal();
        let g_zm = net.g.submatrix(z, &retained).to_state_space();
        let h_zn = net.h.submatrix(z, &noise_order).to_state_space();
        (
            g_mm.add(&through.mul(&g_zm)).minreal(),
            h_mn.add(&through.mul(&h_zn)).minreal(),
        )
    };
    Ok(ImmersedNetwork {
        sel: sel.clone(),
        retained,
        noise_order,
        g,
        h,
        lambda,
    })
}

/// Model order of the realisations after one stage of the chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageDiag {
    pub stage: String,
    pub g_order: usize,
    pub h_order: usize,
}

/// Canonical form: `w_Y = Gbar w_D + Hbar xi_Y` and the decoupled `U` rows.
#[derive(Debug, Clone)]
pub struct TransformedNetwork {
    pub imm: ImmersedNetwork,
    /// Factor of the immersed noise, `m x m`, and its innovation covariance.
    pub h_tilde: StateSpace,
    pub lambda_tilde: DMatrix<f64>,
    /// `ny x m` over retained columns; the `o` column and the `Q` diagonal are zero.
    pub gbar_full: StateSpace,
    /// Noise of the output block, `ny x ny`, monic stable minimum-phase.
    pub hbar: StateSpace,
    pub lambda_bar: DMatrix<f64>,
    /// `U` rows over retained columns, hollow on the `U` diagonal.
    pub gbar_u: StateSpace,
    pub hbar_uu: StateSpace,
    pub lambda_uu: DMatrix<f64>,
    pub stages: Vec<StageDiag>,
}

fn range(a: usize, b: usize) -> Vec<usize> {
    (a..b).collect()
}

/// `k x m` gain with `E[r][cols[r]] = 1`.
fn embed(k: usize, m: usize, cols: &[usize]) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(k, m);
    for (r, &c) in cols.iter().enumerate() {
        e[(r, c)] = 1.0;
    }
    e
}

fn col_mask(m: usize, drop: usize) -> DMatrix<f64> {
    let mut e = DMatrix::identity(m, m);
    e[(drop, drop)] = 0.0;
    e
}

/// Move the diagonal entry `row[0][col]` to the left side and normalise:
/// returns `((1 - g)^-1 row_without_col, (1 - g)^-1 noise_row)`.
fn hollow_row(
    row: &StateSpace,
    noise: &StateSpace,
    col: usize,
    stage: &str,
) -> Result<(StateSpace, StateSpace)> {
    let m = row.inputs();
    let g = row.select(&[0], &[col]).minreal();
    let s = g
        .loop_inverse()
        .map_err(|e| Error::numerical(stage, format!("diagonal normalisation: {e}")))?
        .minreal();
    let r = s.mul(&row.right_gain(&col_mask(m, col))).minreal();
    let n = s.mul(noise).minreal();
    Ok((r, n))
}

fn rows_of(s: &StateSpace, rows: &[usize]) -> StateSpace {
    let cols = range(0, s.inputs());
    s.select(rows, &cols).minreal()
}

/// Run the five-stage chain on an immersed network.
pub fn transform_to_canonical(imm: &ImmersedNetwork) -> Result<TransformedNetwork> {
    let (nq, ny, nu, m) = (imm.nq(), imm.ny(), imm.nu(), imm.m());
    let yi = range(0, ny);
    let ui = range(ny, m);
    let all = range(0, m);
    let mut stages = Vec::new();

    let fac = spectral_factorize(&imm.h, &imm.lambda)
        .map_err(|e| Error::numerical("factorization of immersed noise", e.to_string()))?;
    let ht = fac.h.clone();
    let lt = fac.lambda.clone();
    stages.push(StageDiag {
        stage: "immersed_factor".into(),
        g_order: imm.g.order(),
        h_order: ht.order(),
    });

    // (i) remove the coupling from xi_U into the Y rows.
    let g_y = imm.g.select(&yi, &all);
    let (g1, h1) = if nu > 0 {
        let huu_inv = ht
            .select(&ui, &ui)
            .inverse()
            .map_err(|e| Error::numerical("stage i", e.to_string()))?
            .minreal();
        let hc = ht.select(&yi, &ui).mul(&huu_inv).minreal();
        let g1 = g_y
            .sub(&hc.mul(&imm.g.select(&ui, &all)))
            .add(&hc.right_gain(&embed(nu, m, &ui)))
            .minreal();
        let h1 = ht
            .select(&yi, &yi)
            .sub(&hc.mul(&ht.select(&ui, &yi)))
            .minreal();
        (g1, h1)
    } else {
        (g_y.minreal(), ht.select(&yi, &yi).minreal())
    };
    stages.push(StageDiag {
        stage: "decouple_u_noise".into(),
        g_order: g1.order(),
        h_order: h1.order(),
    });

    // (ii) eliminate w_o from the right-hand side.
    let (g2, h2) = if imm.sel.o.is_some() {
        let po = nq;
        let (o_row, o_noise) =
            hollow_row(&rows_of(&g1, &[po]), &rows_of(&h1, &[po]), po, "stage ii")?;
        if nq > 0 {
            let qi = range(0, nq);
            let g_qo = g1.select(&qi, &[po]).minreal();
            let g_q = rows_of(&g1, &qi)
                .right_gain(&col_mask(m, po))
                .add(&g_qo.mul(&o_row))
                .minreal();
            let h_q = rows_of(&h1, &qi).add(&g_qo.mul(&o_noise)).minreal();
            (g_q.vstack(&o_row).minreal(), h_q.vstack(&o_noise).minreal())
        } else {
            (o_row, o_noise)
        }
    } else {
        (g1, h1)
    };
    stages.push(StageDiag {
        stage: "eliminate_o".into(),
        g_order: g2.order(),
        h_order: h2.order(),
    });

    // (iii) hollow the Q -> Q block row by row.
    let mut g_rows = Vec::with_capacity(ny);
    let mut h_rows = Vec::with_capacity(ny);
    for r in 0..ny {
        let gr = rows_of(&g2, &[r]);
        let hr = rows_of(&h2, &[r]);
        if r < nq {
            let (a, b) = hollow_row(&gr, &hr, r, "stage iii")?;
            g_rows.push(a);
            h_rows.push(b);
        } else {
            g_rows.push(gr);
            h_rows.push(hr);
        }
    }
    let g3 = StateSpace::vstack_all(&g_rows, m).minreal();
    let h3 = StateSpace::vstack_all(&h_rows, ny).minreal();
    stages.push(StageDiag {
        stage: "hollow_q".into(),
        g_order: g3.order(),
        h_order: h3.order(),
    });

    // (iv) monic minimum-phase noise for the output block.
    let lt_yy = DMatrix::from_fn(ny, ny, |a, b| lt[(a, b)]);
    let fy =
        spectral_factorize(&h3, &lt_yy).map_err(|e| Error::numerical("stage iv", e.to_string()))?;
    stages.push(StageDiag {
        stage: "output_factor".into(),
        g_order: g3.order(),
        h_order: fy.h.order(),
    });

    // (v) U rows: substitute xi_Y, hollow the U block, refactor.
    let (gbar_u, hbar_uu, lambda_uu) = if nu > 0 {
        let h3_inv = h3
            .inverse()
            .map_err(|e| Error::numerical("stage v", e.to_string()))?
            .minreal();
        let hp = ht.select(&ui, &yi).mul(&h3_inv).minreal();
        let gu = imm
            .g
            .select(&ui, &all)
            .sub(&hp.mul(&g3))
            .add(&hp.right_gain(&embed(ny, m, &yi)))
            .minreal();
        let huu = ht.select(&ui, &ui).minreal();
        let mut gr = Vec::with_capacity(nu);
        let mut hr = Vec::with_capacity(nu);
        for r in 0..nu {
            let (a, b) = hollow_row(&rows_of(&gu, &[r]), &rows_of(&huu, &[r]), ny + r, "stage v")?;
            gr.push(a);
            hr.push(b);
        }
        let gu = StateSpace::vstack_all(&gr, m).minreal();
        let hu = StateSpace::vstack_all(&hr, nu).minreal();
        let lt_uu = DMatrix::from_fn(nu, nu, |a, b| lt[(ny + a, ny + b)]);
        let fu = spectral_factorize(&hu, &lt_uu)
            .map_err(|e| Error::numerical("stage v", e.to_string()))?;
        (gu, fu.h, fu.lambda)
    } else {
        (
            StateSpace::zeros(0, m),
            StateSpace::zeros(0, 0),
            DMatrix::zeros(0, 0),
        )
    };
    stages.push(StageDiag {
        stage: "decouple_u_rows".into(),
        g_order: gbar_u.order(),
        h_order: hbar_uu.order(),
    });

    Ok(TransformedNetwork {
        imm: imm.clone(),
        h_tilde: ht,
        lambda_tilde: lt,
        gbar_full: g3,
        hbar: fy.h,
        lambda_bar: fy.lambda,
        gbar_u,
        hbar_uu,
        lambda_uu,
        stages,
    })
}

/// `immerse` followed by `transform_to_canonical`.
pub fn transform_network(net: &NetworkSpec, sel: &Selection) -> Result<TransformedNetwork> {
    transform_to_canonical(&immerse(net, sel)?)
}

impl TransformedNetwork {
    pub fn sel(&self) -> &Selection {
        &self.imm.sel
    }

    /// Local column of input node `k` in `gbar_full`.
    fn col(&self, k: usize) -> Option<usize> {
        if Some(k) == self.imm.sel.o {
            return None;
        }
        self.imm.pos(k)
    }

    /// `Gbar` entry from input node `i` to output node `j`; zero at the structural zeros.
    pub fn gbar_entry(&self, j: usize, i: usize) -> Result<RationalTransfer> {
        let r = self.imm.sel.outputs().iter().position(|&y| y == j);
        let (Some(r), Some(c)) = (r, self.col(i)) else {
            return Err(Error::InvalidArgument(format!(
                "w{} -> w{} is not an entry of Gbar",
                i + 1,
                j + 1
            )));
        };
        if r == c {
            return Ok(RationalTransfer::zero());
        }
        Ok(self.gbar_full.entry_to_rational(r, c))
    }

    /// `Gbar` with rows `[Q, o]` and columns `D = [Q, U]`.
    pub fn gbar(&self) -> TransferMatrix {
        let sel = &self.imm.sel;
        let outs = sel.outputs();
        let ins = sel.inputs();
        TransferMatrix::from_fn(outs.len(), ins.len(), |r, c| {
            self.gbar_entry(outs[r], ins[c])
                .unwrap_or_else(|_| RationalTransfer::zero())
        })
    }

    /// `Gbar` restricted to columns `D = [Q, U]` as a realisation.
    pub fn gbar_d(&self) -> StateSpace {
        let ins: Vec<usize> = self
            .imm
            .sel
            .inputs()
            .iter()
            .filter_map(|&k| self.col(k))
            .collect();
        let rows = range(0, self.imm.ny());
        self.gbar_full.select(&rows, &ins).minreal()
    }

    pub fn hbar_tf(&self) -> TransferMatrix {
        self.hbar.to_transfer_matrix()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::uniform_grid;

    fn chain3() -> NetworkSpec {
        let mut g = TransferMatrix::zeros(3, 3);
        g.set(
            1,
            2,
            RationalTransfer::new(vec![0.0, 0.5], vec![1.0, -0.3]).unwrap(),
        );
        g.set(
            0,
            1,
            RationalTransfer::new(vec![0.0, 0.8], vec![1.0]).unwrap(),
        );
        NetworkSpec::new(
            g,
            TransferMatrix::identity(3),
            TransferMatrix::zeros(3, 0),
            DMatrix::identity(3, 3),
        )
        .unwrap()
    }

    #[test]
    fn chain_immersion_is_the_product() {
        let net = chain3();
        let sel = Selection::new(3, 2, 0, &[0], &[2], &[]).unwrap();
        let imm = immerse(&net, &sel).unwrap();
        let prod = net.g.get(0, 1).mul(net.g.get(1, 2));
        let po = imm.pos(0).unwrap();
        let pi = imm.pos(2).unwrap();
        for w in uniform_grid(32) {
            let v = imm.g.freq(w).unwrap()[(po, pi)];
            assert!((v - prod.freq(w)).norm() < 1e-10);
        }
    }

    #[test]
    fn no_elimination_keeps_g() {
        let net = chain3();
        let sel = Selection::new(3, 1, 0, &[0], &[1, 2], &[]).unwrap();
        let tn = transform_network(&net, &sel).unwrap();
        let g = tn.gbar_entry(0, 1).unwrap();
        for w in uniform_grid(16) {
            assert!((g.freq(w) - net.g.get(0, 1).freq(w)).norm() < 1e-10);
        }
    }
}
