mod common;

use std::time::Instant;

use common::{
    block_product_sweep, delay_oracle, load, random_network, two_node_with_feedthrough, NetOptions,
};
use nalgebra::DMatrix;
use netident::graph::{
    build_graph, check_delay_conditions, check_invariance_conditions, ModelDelayPattern, Selection,
};
use netident::model::{NetworkSpec, RationalTransfer, TransferMatrix};
use netident::selection::{select_full_input, select_minimum_input};
use netident::transform::verify_invariance;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn edges(net: &NetworkSpec) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for to in 0..net.l {
        for from in 0..net.l {
            if net.has_edge(from, to) {
                out.push((from, to));
            }
        }
    }
    out
}

#[test]
fn random_fixtures_keep_target_module() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    let mut tries = 0;
    while checked < 8 {
        tries += 1;
        assert!(tries < 200, "too few usable fixtures");
        let l = rng.random_range(4..=8);
        let net = random_network(&mut rng, l, &NetOptions::default());
        let es = edges(&net);
        if es.is_empty() {
            continue;
        }
        let (i, j) = es[rng.random_range(0..es.len())];
        let g = build_graph(&net);
        for sel in [
            select_full_input(&net, i, j),
            select_minimum_input(&net, i, j),
        ]
        .into_iter()
        .flatten()
        {
            assert!(check_invariance_conditions(&g, &sel).passed);
            let rep = verify_invariance(&net, &sel, 1e-6).unwrap();
            assert!(
                rep.deviation <= 1e-6,
                "L={l} G{}{}: {}",
                j + 1,
                i + 1,
                rep.deviation
            );
            checked += 1;
        }
    }
    assert!(t0.elapsed().as_secs_f64() < 30.0);
}

#[test]
fn block_product_vanishes_on_every_unconfounded_pair() {
    let mut hits = (0, 0);
    for name in [
        "six_node",
        "six_node_correlated",
        "two_node",
        "three_node",
        "four_node",
        "eight_node",
    ] {
        let net = load(name);
        let mut rng = ChaCha8Rng::seed_from_u64(name.len() as u64);
        for _ in 0..4 {
            let mut keep: Vec<usize> = (0..net.l).filter(|_| rng.random_bool(0.6)).collect();
            if keep.len() < 2 {
                keep = vec![0, 1];
            }
            let sel = Selection::new(net.l, keep[0], keep[1], &[keep[1]], &keep, &[]).unwrap();
            block_product_sweep(&net, &sel, &mut hits);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..6 {
        let l = rng.random_range(4..=6);
        let net = random_network(
            &mut rng,
            l,
            &NetOptions {
                noise_p: 0.2,
                ..NetOptions::default()
            },
        );
        let keep: Vec<usize> = (0..net.l)
            .filter(|k| k % 2 == 0 || rng.random_bool(0.3))
            .collect();
        let sel = Selection::new(net.l, keep[0], keep[1], &[keep[1]], &keep, &[]).unwrap();
        block_product_sweep(&net, &sel, &mut hits);
    }
    // both branches of the oracle are exercised
    assert!(hits.0 > 100 && hits.1 > 10, "{hits:?}");
}

#[test]
fn delay_checker_on_hand_built_fixtures() {
    // strictly proper network and model
    let net = load("eight_node");
    let sel = select_full_input(&net, 1, 0).unwrap();
    let model = ModelDelayPattern::uniform(&sel, true);
    assert!(check_delay_conditions(&build_graph(&net), &sel, &model).passed);
    assert!(delay_oracle(&net, &sel, &model));

    // delay-free w1 -> w2 with w1 an output
    let net = two_node_with_feedthrough();
    let sel = select_full_input(&net, 0, 1).unwrap();
    let model = ModelDelayPattern::uniform(&sel, false);
    let rep = check_delay_conditions(&build_graph(&net), &sel, &model);
    assert!(!rep.passed);
    assert!(!rep.item("network_paths_into_y_delayed").unwrap().passed);
    assert!(!delay_oracle(&net, &sel, &model));

    // A node reached delay-free in the network, model strictly proper from it
    let mut g = TransferMatrix::zeros(3, 3);
    g.set(1, 0, RationalTransfer::delay(0.5, 1));
    g.set(2, 1, RationalTransfer::constant(0.4));
    g.set(0, 2, RationalTransfer::delay(0.3, 1));
    let net = NetworkSpec::new(
        g,
        TransferMatrix::identity(3),
        TransferMatrix::zeros(3, 0),
        DMatrix::identity(3, 3),
    )
    .unwrap();
    let sel = Selection::new(3, 2, 0, &[0, 1], &[1, 2], &[]).unwrap();
    assert_eq!(sel.a, vec![2]);
    let strict = ModelDelayPattern::uniform(&sel, true);
    assert!(check_delay_conditions(&build_graph(&net), &sel, &strict).passed);
    assert!(delay_oracle(&net, &sel, &strict));
    let loose = ModelDelayPattern::from_fn(&sel, |_, d| d != 2);
    assert!(!check_delay_conditions(&build_graph(&net), &sel, &loose).passed);
    assert!(!delay_oracle(&net, &sel, &loose));
}

#[test]
fn delay_checker_matches_path_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let opts = NetOptions {
        edge_p: 0.35,
        feedthrough_p: 0.4,
        noise_p: 0.0,
        corr_p: 0.0,
        max_order: 1,
    };
    let mut outcomes = [0usize; 2];
    for _ in 0..400 {
        let l = rng.random_range(2..=6);
        let mut g = TransferMatrix::zeros(l, l);
        for to in 0..l {
            for from in (0..l).filter(|&f| f != to) {
                if rng.random_bool(opts.edge_p) {
                    let c = if rng.random_bool(opts.feedthrough_p) {
                        vec![0.3, 0.2]
                    } else {
                        vec![0.0, 0.3]
                    };
                    g.set(to, from, RationalTransfer::new(c, vec![1.0]).unwrap());
                }
            }
        }
        let net = NetworkSpec::new(
            g,
            TransferMatrix::identity(l),
            TransferMatrix::zeros(l, 0),
            DMatrix::identity(l, l),
        )
        .unwrap();
        let i = rng.random_range(0..l);
        let j = (i + rng.random_range(1..l)) % l;
        let mut d: Vec<usize> = (0..l)
            .filter(|&k| k == i || (k != j && rng.random_bool(0.5)))
            .collect();
        let mut y = vec![j];
        for &k in &d {
            if k != i && rng.random_bool(0.3) {
                y.push(k);
            }
        }
        if rng.random_bool(0.3) {
            d.push(j);
        }
        let u: Vec<usize> = d.iter().copied().filter(|k| !y.contains(k)).collect();
        let b: Vec<usize> = u
            .iter()
            .copied()
            .filter(|&k| k != i && rng.random_bool(0.4))
            .collect();
        let sel = Selection::new(l, i, j, &y, &d, &b).unwrap();
        let p = rng.random_range(0.0..1.0);
        let flags: Vec<Vec<bool>> = (0..l)
            .map(|_| (0..l).map(|_| rng.random_bool(p)).collect())
            .collect();
        let model = ModelDelayPattern::from_fn(&sel, |yy, dd| flags[yy][dd]);
        let got = check_delay_conditions(&build_graph(&net), &sel, &model).passed;
        let want = delay_oracle(&net, &sel, &model);
        assert_eq!(got, want, "L={l} sel {sel:?}");
        outcomes[got as usize] += 1;
    }
    assert!(outcomes[0] > 40 && outcomes[1] > 40, "{outcomes:?}");
}
