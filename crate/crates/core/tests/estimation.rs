mod common;

use common::load;
use nalgebra::DMatrix;
use netident::estimation::{
    build_model_set, gradient_check, identify_ml, identify_wls, miso_direct, miso_structure,
    model_radii, predict_errors, residual_covariance, transformed_excitation, whiteness_fraction,
    EntryOrders, IdentifyConfig, LambdaMode, ModelOrders, ModelStructure, PredictorData,
    Sensitivities,
};
use netident::graph::Selection;
use netident::model::{NetworkSpec, RationalTransfer, TransferMatrix};
use netident::selection::select_full_input;
use netident::simulation::{simulate, Dataset, ExcitationConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn two_node_mimo() -> (NetworkSpec, Selection, ModelStructure) {
    let net = load("two_node");
    let sel = select_full_input(&net, 0, 1).unwrap();
    let orders = ModelOrders {
        g: EntryOrders::new(1, 1, 1),
        nc: 1,
        ..ModelOrders::default()
    };
    let ms = build_model_set(&sel, &orders, LambdaMode::Free).unwrap();
    (net, sel, ms)
}

/// `theta_0` of the `two_node` MIMO structure: `Gbar_21 = G_21`, `Hbar = H`.
fn two_node_truth(ms: &ModelStructure) -> Vec<f64> {
    let mut theta = vec![0.0; ms.dim()];
    let e = ms.entry(1, 0).unwrap();
    theta[e.offset] = 0.5;
    theta[e.offset + 1] = -0.6;
    let c1 = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.9, -0.3]);
    ms.set_noise(&mut theta, &[c1], &[]);
    theta
}

fn two_node_data(
    net: &NetworkSpec,
    sel: &Selection,
    ms: &ModelStructure,
    n: usize,
    seed: u64,
) -> (Dataset, PredictorData) {
    let d = simulate(net, n, seed, &ExcitationConfig::white(1, 1.0), 1000).unwrap();
    let off = transformed_excitation(net, sel).unwrap();
    let pd = PredictorData::new(ms, &d, Some(&off)).unwrap();
    (d, pd)
}

#[test]
fn two_node_mimo_structure_has_single_module_entry() {
    let (_, sel, ms) = two_node_mimo();
    assert_eq!(sel.q, vec![0]);
    assert_eq!(sel.o, Some(1));
    assert_eq!(ms.entries.len(), 1);
    assert_eq!((ms.entries[0].output, ms.entries[0].input), (1, 0));
    assert_eq!(ms.c_pattern.len(), 4);
    // hollow Q block and no o column
    assert!(ms.is_structural_zero(0, 0));
    assert!(ms.is_structural_zero(0, 1) && ms.is_structural_zero(1, 1));
    assert_eq!(ms.dim(), 2 + 4);
    let h = ms.hbar(&two_node_truth(&ms));
    assert_eq!(h.feedthrough(), DMatrix::identity(2, 2));
}

#[test]
fn miso_structure_is_scalar_noise_row_model() {
    let ms = miso_structure(1, &[0, 3], &ModelOrders::default(), LambdaMode::Free).unwrap();
    assert_eq!(ms.ny(), 1);
    assert_eq!(ms.nd(), 2);
    assert_eq!(ms.hbar(&vec![0.0; ms.dim()]).rows(), 1);
    assert!(miso_structure(1, &[1], &ModelOrders::default(), LambdaMode::Free).is_err());
}

#[test]
fn zero_target_order_is_rejected() {
    let (_, sel, _) = two_node_mimo();
    let orders = ModelOrders {
        target: Some(EntryOrders::new(0, 1, 1)),
        ..ModelOrders::default()
    };
    assert!(build_model_set(&sel, &orders, LambdaMode::Free).is_err());
}

#[test]
fn identity_model_returns_outputs() {
    let (net, sel, ms) = two_node_mimo();
    let (_, pd) = two_node_data(&net, &sel, &ms, 500, 1);
    let res = predict_errors(&ms, &vec![0.0; ms.dim()], &pd);
    assert_eq!(res.eps, pd.y);
}

#[test]
fn residuals_at_truth_are_white() {
    let (net, sel, ms) = two_node_mimo();
    let (_, pd) = two_node_data(&net, &sel, &ms, 20000, 3);
    let res = predict_errors(&ms, &two_node_truth(&ms), &pd);
    let tail: Vec<Vec<f64>> = res.eps.iter().map(|e| e[ms.max_lag()..].to_vec()).collect();
    assert!(whiteness_fraction(&tail, 20) >= 0.95);
    let cov = residual_covariance(&tail, 0);
    assert!((cov - DMatrix::<f64>::identity(2, 2)).amax() < 0.05);
}

#[test]
fn sensitivities_match_central_differences() {
    let (_, sel, _) = two_node_mimo();
    let orders = ModelOrders {
        g: EntryOrders::new(2, 2, 0),
        nc: 2,
        nf: 1,
        ..ModelOrders::default()
    };
    let ms = build_model_set(&sel, &orders, LambdaMode::Free).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let n = 400;
    let mut series = |k: usize| -> Vec<Vec<f64>> {
        (0..k)
            .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    };
    let pd = PredictorData {
        y: series(ms.ny()),
        u: series(ms.nd()),
        n,
    };
    let th = loop {
        let th: Vec<f64> = (0..ms.dim()).map(|_| rng.random_range(-0.3..0.3)).collect();
        if model_radii(&ms, &th).iter().all(|&r| r < 0.8) {
            break th;
        }
    };
    let sens = Sensitivities::new(&ms, &th, &pd);
    let eps = &sens.residuals.eps;
    assert_eq!(eps, &predict_errors(&ms, &th, &pd).eps);
    let (ny, dim) = (ms.ny(), ms.dim());
    let mut d = vec![0.0; n * ny * dim];
    sens.for_each_time(|t, block| d[t * ny * dim..(t + 1) * ny * dim].copy_from_slice(block));
    for k in 0..ms.dim() {
        let h = 1e-6;
        let at = |s: f64| {
            let mut t = th.clone();
            t[k] += s * h;
            predict_errors(&ms, &t, &pd).eps
        };
        let (p, m) = (at(1.0), at(-1.0));
        for r in 0..ms.ny() {
            for t in 0..n {
                let fd = (p[r][t] - m[r][t]) / (2.0 * h);
                let an = d[(t * ms.ny() + r) * ms.dim() + k];
                assert!(
                    (fd - an).abs() <= 1e-6 * (1.0 + fd.abs()),
                    "param {k} row {r} t {t}: {fd} vs {an}"
                );
            }
        }
    }
}

#[test]
fn gradient_matches_five_point_stencil() {
    let (net, sel, ms) = two_node_mimo();
    let (_, pd) = two_node_data(&net, &sel, &ms, 4000, 5);
    let truth = two_node_truth(&ms);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut checked = 0;
    while checked < 10 {
        let th: Vec<f64> = truth
            .iter()
            .map(|t| t + rng.random_range(-0.3..0.3))
            .collect();
        if model_radii(&ms, &th).iter().any(|&r| r > 0.9) {
            continue;
        }
        let dev = gradient_check(&ms, &pd, &DMatrix::identity(2, 2), &th, 1e-4).unwrap();
        assert!(dev <= 1e-4, "{dev}");
        checked += 1;
    }
}

#[test]
fn mimo_fit_recovers_two_node_module() {
    let (net, sel, ms) = two_node_mimo();
    let (_, pd) = two_node_data(&net, &sel, &ms, 50000, 11);
    let t0 = std::time::Instant::now();
    let est = identify_wls(
        &ms,
        &pd,
        &DMatrix::identity(2, 2),
        &IdentifyConfig::default(),
    )
    .unwrap();
    eprintln!("fit took {:?}; {:?}", t0.elapsed(), est.diagnostics);
    let truth = two_node_truth(&ms);
    for (k, (a, b)) in est.theta.iter().zip(&truth).enumerate() {
        assert!(
            (a - b).abs() < 5.0 * est.std_errors[k] + 1e-3,
            "{} {a} vs {b} (se {})",
            est.names[k],
            est.std_errors[k]
        );
    }
    assert!((est.criterion - est.recompute_criterion()).abs() <= 1e-10);
    assert_eq!(est.residuals[0].len(), pd.n - est.start);
    assert!(est.diagnostics.converged);
}

#[test]
fn noiseless_data_recovers_exact_coefficients() {
    let (mut net, sel, ms) = two_node_mimo();
    net.lambda = DMatrix::identity(2, 2) * 1e-12;
    let (_, pd) = two_node_data(&net, &sel, &ms, 5000, 2);
    let est = identify_wls(
        &ms,
        &pd,
        &DMatrix::identity(2, 2),
        &IdentifyConfig::default(),
    )
    .unwrap();
    let g = est.target_theta().unwrap();
    assert!(
        (g[0] - 0.5).abs() < 1e-4 && (g[1] + 0.6).abs() < 1e-4,
        "{g:?}"
    );
}

fn ar1_node() -> NetworkSpec {
    let h = TransferMatrix::from_fn(1, 1, |_, _| {
        RationalTransfer::new(vec![1.0], vec![1.0, -0.8]).unwrap()
    });
    NetworkSpec::new(
        TransferMatrix::zeros(1, 1),
        h,
        TransferMatrix::zeros(1, 0),
        DMatrix::identity(1, 1),
    )
    .unwrap()
}

#[test]
fn empty_input_set_fits_noise_model_only() {
    let net = ar1_node();
    let d = simulate(&net, 20000, 4, &ExcitationConfig::default(), 500).unwrap();
    let orders = ModelOrders {
        nc: 0,
        nf: 1,
        ..ModelOrders::default()
    };
    let est = miso_direct(&d, 0, &[], &orders, None, &IdentifyConfig::default()).unwrap();
    assert!((est.theta[0] + 0.8).abs() < 0.02, "{:?}", est.theta);
    assert!(whiteness_fraction(&est.residuals, 20) >= 0.95);
}

#[test]
fn scalar_determinant_criterion_matches_wls() {
    let net = load("six_node");
    let d = simulate(&net, 10000, 6, &ExcitationConfig::default(), 500).unwrap();
    let ms = miso_structure(
        1,
        &[0, 3],
        &ModelOrders {
            nc: 0,
            ..ModelOrders::default()
        },
        LambdaMode::Free,
    )
    .unwrap();
    let pd = PredictorData::new(&ms, &d, None).unwrap();
    let cfg = IdentifyConfig::default();
    let wls = identify_wls(&ms, &pd, &DMatrix::identity(1, 1), &cfg).unwrap();
    let ml = identify_ml(&ms, &pd, &cfg).unwrap();
    for (a, b) in wls.theta.iter().zip(&ml.theta) {
        assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
    }
    let again = residual_covariance(&ml.residuals, 0);
    assert!((&again - &ml.lambda).amax() <= 1e-12);
    assert!((ml.criterion - again.determinant()).abs() <= 1e-12);
}

#[test]
fn ml_lambda_is_residual_covariance_mimo() {
    let (net, sel, ms) = two_node_mimo();
    let (_, pd) = two_node_data(&net, &sel, &ms, 20000, 8);
    let ml = identify_ml(&ms, &pd, &IdentifyConfig::default()).unwrap();
    let again = residual_covariance(&ml.residuals, 0);
    assert!((&again - &ml.lambda).amax() <= 1e-12);
    assert!((ml.criterion - ml.recompute_criterion()).abs() <= 1e-12);
    assert!(ml.lambda.clone().cholesky().is_some());
}

#[test]
fn ml_requires_free_lambda() {
    let (net, sel, _) = two_node_mimo();
    let ms = build_model_set(
        &sel,
        &ModelOrders::default(),
        LambdaMode::fixed(&DMatrix::identity(2, 2)),
    )
    .unwrap();
    let (_, pd) = two_node_data(&net, &sel, &ms, 500, 1);
    assert!(identify_ml(&ms, &pd, &IdentifyConfig::default()).is_err());
}
