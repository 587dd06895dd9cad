mod common;

use common::{load, zb};
use nalgebra::DMatrix;
use netident::graph::Selection;
use netident::model::{uniform_grid, NetworkSpec, RationalTransfer, StateSpace, TransferMatrix};
use netident::selection::select_full_input;
use netident::simulation::{
    check_informativity, check_informativity_data, estimate_spectrum, kappa_spectrum_model,
    simulate, Dataset, ExcitationConfig, InformativityConfig, WelchConfig,
};
use netident::transform::transform_network;
use num_complex::Complex64;

fn analytic(net: &NetworkSpec, exc: &ExcitationConfig, w: f64) -> DMatrix<Complex64> {
    let l = net.l;
    let inv = (DMatrix::<Complex64>::identity(l, l) - net.g.freq(w))
        .try_inverse()
        .unwrap();
    let h = &inv * net.h.freq(w);
    let r = &inv * net.r.freq(w);
    let lam = net.lambda.map(|v| Complex64::new(v, 0.0));
    let s = DMatrix::from_fn(net.k, net.k, |a, b| {
        if a == b {
            Complex64::new(exc.density(a, w), 0.0)
        } else {
            0.0.into()
        }
    });
    &h * lam * h.adjoint() + &r * s * r.adjoint()
}

fn scalar(g: RationalTransfer) -> NetworkSpec {
    NetworkSpec::new(
        TransferMatrix::zeros(1, 1),
        TransferMatrix::from_fn(1, 1, |_, _| g.clone()),
        TransferMatrix::zeros(1, 0),
        DMatrix::identity(1, 1),
    )
    .unwrap()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

#[test]
fn white_scalar_spectrum_is_flat_at_one() {
    let net = scalar(RationalTransfer::one());
    let d = simulate(&net, 1 << 15, 11, &ExcitationConfig::default(), 100).unwrap();
    let est = estimate_spectrum(&d, &[0], &uniform_grid(64), WelchConfig::default()).unwrap();
    let vals: Vec<f64> = est.values.iter().map(|m| m[(0, 0)].re).collect();
    assert!((median(vals.clone()) - 1.0).abs() < 0.05);
    assert!(vals.iter().all(|v| (v - 1.0).abs() < 0.5));
}

#[test]
fn ar1_peak_matches_analytic() {
    let net = scalar(RationalTransfer::new(vec![1.0], vec![1.0, -0.8]).unwrap());
    let d = simulate(&net, 1 << 15, 5, &ExcitationConfig::default(), 1000).unwrap();
    let est = estimate_spectrum(&d, &[0], &[0.0], WelchConfig::default()).unwrap();
    let truth = 1.0 / (0.2f64 * 0.2);
    let got = est.values[0][(0, 0)].re;
    assert!((got - truth).abs() < 0.2 * truth, "{got} vs {truth}");
}

#[test]
fn two_node_cross_spectrum_within_bands() {
    let net = load("two_node");
    let exc = ExcitationConfig::white(1, 1.0);
    let d = simulate(&net, 1 << 15, 21, &exc, 1000).unwrap();
    let grid = uniform_grid(64);
    let est = estimate_spectrum(&d, &[0, 1], &grid, WelchConfig::default()).unwrap();
    let band = 4.0 / (est.segments as f64).sqrt();
    let mut inside = 0;
    let mut total = 0;
    for (phi, &w) in est.values.iter().zip(&grid) {
        let t = analytic(&net, &exc, w);
        for a in 0..2 {
            for b in 0..2 {
                let scale = (t[(a, a)].re * t[(b, b)].re).sqrt();
                total += 1;
                if (phi[(a, b)] - t[(a, b)]).norm() / scale < band {
                    inside += 1;
                }
            }
        }
        assert!((phi - phi.adjoint()).norm() < 1e-9);
    }
    assert!(inside as f64 >= 0.95 * total as f64, "{inside}/{total}");
}

#[test]
fn eight_node_joint_estimate_is_hermitian_psd() {
    let net = load("eight_node");
    let sel = select_full_input(&net, 1, 0).unwrap();
    let d = simulate(&net, 1 << 14, 2, &ExcitationConfig::default(), 1000).unwrap();
    let mut signals = sel.d.clone();
    signals.extend(sel.o);
    let est = estimate_spectrum(&d, &signals, &uniform_grid(32), WelchConfig::default()).unwrap();
    for m in &est.values {
        assert!((m - m.adjoint()).norm() < 1e-9 * m.norm());
        let lo = m
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        assert!(lo > -1e-9 * m.norm());
    }
}

#[test]
fn spectrum_error_shrinks_with_n() {
    let net = load("two_node");
    let exc = ExcitationConfig::white(1, 1.0);
    let grid = uniform_grid(64);
    let mad: Vec<f64> = [13, 14, 15]
        .iter()
        .map(|&p| {
            let d = simulate(&net, 1 << p, 8, &exc, 1000).unwrap();
            let est = estimate_spectrum(&d, &[0, 1], &grid, WelchConfig::default()).unwrap();
            let dev = est
                .values
                .iter()
                .zip(&grid)
                .map(|(m, &w)| (m - analytic(&net, &exc, w)).norm())
                .collect();
            median(dev)
        })
        .collect();
    assert!(mad[0] > mad[1] && mad[1] > mad[2], "{mad:?}");
}

#[test]
fn zero_lambda_is_linear_in_r() {
    let mut net = load("two_node");
    net.lambda = DMatrix::zeros(2, 2);
    let a = simulate(&net, 2000, 3, &ExcitationConfig::white(1, 1.0), 50).unwrap();
    let b = simulate(&net, 2000, 3, &ExcitationConfig::white(1, 2.0), 50).unwrap();
    for (x, y) in a.w.iter().flatten().zip(b.w.iter().flatten()) {
        assert_eq!(2.0 * x, *y);
    }
}

#[test]
fn innovations_are_near_gaussian() {
    let net = load("two_node");
    let n = 1 << 15;
    let d = simulate(&net, n, 17, &ExcitationConfig::zero(1), 1000).unwrap();
    // e = H^-1 (I - G) w
    let w_to_e = net
        .h
        .to_state_space()
        .inverse()
        .unwrap()
        .mul(&net.loop_system().unwrap().inverse().unwrap());
    let e = w_to_e.simulate(&d.w);
    for s in &e {
        let s = &s[100..];
        let m = s.iter().sum::<f64>() / s.len() as f64;
        let m2 = s.iter().map(|v| (v - m).powi(2)).sum::<f64>() / s.len() as f64;
        let m4 = s.iter().map(|v| (v - m).powi(4)).sum::<f64>() / s.len() as f64;
        let excess = m4 / (m2 * m2) - 3.0;
        assert!(excess.abs() < 0.2, "{excess}");
        assert!((m2 - 1.0).abs() < 0.05, "{m2}");
    }
}

#[test]
fn dataset_json_roundtrip() {
    let net = load("two_node");
    let d = simulate(&net, 50, 1, &ExcitationConfig::white(1, 0.5), 10).unwrap();
    let back = Dataset::from_json(&d.to_json()).unwrap();
    assert_eq!(d, back);
    let mut bad = d.clone();
    bad.n = 49;
    assert!(Dataset::from_json(&bad.to_json()).is_err());
}

#[test]
fn excitation_config_rejects_bad_entries() {
    let net = load("two_node");
    assert!(simulate(&net, 10, 0, &ExcitationConfig::white(2, 1.0), 0).is_err());
    assert!(simulate(&net, 10, 0, &ExcitationConfig::white(1, -1.0), 0).is_err());
    assert!(simulate(&net, 0, 0, &ExcitationConfig::white(1, 1.0), 0).is_err());
}

#[test]
fn too_short_data_is_rejected() {
    let net = scalar(RationalTransfer::one());
    let d = simulate(&net, 1000, 0, &ExcitationConfig::default(), 0).unwrap();
    assert!(estimate_spectrum(&d, &[0], &[0.0], WelchConfig::default()).is_err());
}

fn chain3() -> NetworkSpec {
    let g = TransferMatrix::from_fn(3, 3, |r, c| {
        if r == c + 1 {
            RationalTransfer::delay(0.5, 1)
        } else {
            RationalTransfer::zero()
        }
    });
    NetworkSpec::new(
        g,
        TransferMatrix::identity(3),
        TransferMatrix::zeros(3, 0),
        DMatrix::identity(3, 3),
    )
    .unwrap()
}

#[test]
fn full_rank_drive_is_informative() {
    let net = chain3();
    let sel = select_full_input(&net, 0, 1).unwrap();
    let rep = check_informativity(
        &net,
        &sel,
        &ExcitationConfig::default(),
        &uniform_grid(64),
        &InformativityConfig::default(),
    )
    .unwrap();
    assert!(rep.passed, "{rep:?}");
}

#[test]
fn rank_starved_network_is_not_informative() {
    let g = TransferMatrix::from_fn(2, 2, |r, c| {
        if r == 1 && c == 0 {
            RationalTransfer::delay(0.5, 1)
        } else {
            RationalTransfer::zero()
        }
    });
    let lam = DMatrix::from_element(2, 2, 1.0);
    let net = NetworkSpec::new(
        g,
        TransferMatrix::identity(2),
        TransferMatrix::zeros(2, 0),
        lam,
    )
    .unwrap();
    let sel = Selection::new(2, 0, 1, &[1], &[0], &[]).unwrap();
    let rep = check_informativity(
        &net,
        &sel,
        &ExcitationConfig::default(),
        &uniform_grid(32),
        &InformativityConfig::default(),
    )
    .unwrap();
    assert!(!rep.passed);
    assert!(rep.items[0].detail.contains("failing at"));
}

/// `xi_Y = Hbar^-1 (w_Y - Gbar w_M - Rbar r)` filtered from data with the true
/// transformed model, where `Rbar = (S_Y - Gbar S_M)(I - G)^-1 R`.
fn true_innovations(net: &NetworkSpec, sel: &Selection, d: &Dataset) -> Vec<Vec<f64>> {
    let tn = transform_network(net, sel).unwrap();
    let ny = tn.imm.ny();
    let mut y_local = sel.q.clone();
    y_local.extend(sel.o);
    let resid = StateSpace::gain(DMatrix::identity(ny, ny)).hstack(&tn.gbar_full.neg());
    let mut rows = y_local.clone();
    rows.extend(&tn.imm.retained);
    let r_cols: Vec<usize> = (0..net.k).collect();
    let t_r = net.full_system().unwrap().select(&rows, &r_cols);
    let filt = tn
        .hbar
        .inverse()
        .unwrap()
        .mul(&resid.hstack(&resid.mul(&t_r).neg()))
        .minreal();
    let mut inputs: Vec<Vec<f64>> = rows.iter().map(|&k| d.w[k].clone()).collect();
    inputs.extend(d.r.iter().cloned());
    filt.simulate(&inputs)
}

#[test]
fn eight_node_without_excitation_is_not_informative() {
    // w_Q is fixed by w_D, xi_Q and w_o when nothing but noise drives the network
    let net = load("eight_node");
    let sel = select_full_input(&net, 1, 0).unwrap();
    assert_eq!(sel.q, zb(&[2]));
    let grid = uniform_grid(32);
    let rep = check_informativity(
        &net,
        &sel,
        &ExcitationConfig::default(),
        &grid,
        &InformativityConfig::default(),
    )
    .unwrap();
    assert!(!rep.passed);
    let model = kappa_spectrum_model(&net, &sel, &ExcitationConfig::default(), &grid).unwrap();
    let w = grid[5];
    let phi = &model[5];
    // w_2 - G_25 w_5 - xi_2 = 0, so Phi annihilates the conjugate coefficients
    let mut v = DMatrix::<Complex64>::zeros(phi.nrows(), 1);
    v[(0, 0)] = 1.0.into();
    v[(3, 0)] = -net.g.get(1, 4).freq(w).conj();
    v[(5, 0)] = (-1.0).into();
    let q = (v.adjoint() * phi * &v)[(0, 0)].norm();
    assert!(q < 1e-12 * phi.norm(), "{q}");
}

fn eight_node_excited() -> NetworkSpec {
    let base = load("eight_node");
    NetworkSpec::new(
        base.g.clone(),
        base.h.clone(),
        TransferMatrix::identity(8),
        base.lambda.clone(),
    )
    .unwrap()
}

#[test]
fn eight_node_excited_kappa_spectrum_model_matches_data() {
    let net = eight_node_excited();
    let sel = select_full_input(&net, 1, 0).unwrap();
    let exc = ExcitationConfig::white(8, 1.0);
    let grid = uniform_grid(32);
    let cfg = InformativityConfig::default();
    let model = kappa_spectrum_model(&net, &sel, &exc, &grid).unwrap();
    let rep = check_informativity(&net, &sel, &exc, &grid, &cfg).unwrap();
    assert!(rep.passed, "{rep:?}");

    let d = simulate(&net, 1 << 15, 4, &exc, 1000).unwrap();
    let xi = true_innovations(&net, &sel, &d);
    let xi_q: Vec<Vec<f64>> = xi[..sel.q.len()]
        .iter()
        .map(|s| s[200..].to_vec())
        .collect();
    let data_rep = check_informativity_data(&d, &sel, &xi_q, &grid, &cfg).unwrap();
    assert!(data_rep.passed, "{data_rep:?}");

    let mut series: Vec<Vec<f64>> = sel.d.iter().map(|&k| d.w[k][200..].to_vec()).collect();
    series.extend(xi_q.iter().cloned());
    series.push(d.w[sel.o.unwrap()][200..].to_vec());
    let n = series[0].len();
    let joint = Dataset {
        n,
        w: series,
        r: Vec::new(),
        ..d.clone()
    };
    let idx: Vec<usize> = (0..joint.w.len()).collect();
    let est = estimate_spectrum(&joint, &idx, &grid, WelchConfig::default()).unwrap();
    let band = 4.0 / (est.segments as f64).sqrt();
    let mut inside = 0;
    let mut total = 0;
    for (e, m) in est.values.iter().zip(&model) {
        for a in 0..m.nrows() {
            for b in 0..m.ncols() {
                total += 1;
                let scale = (m[(a, a)].re * m[(b, b)].re).sqrt();
                if (e[(a, b)] - m[(a, b)]).norm() / scale < band {
                    inside += 1;
                }
            }
        }
    }
    assert!(inside as f64 >= 0.95 * total as f64, "{inside}/{total}");
}
