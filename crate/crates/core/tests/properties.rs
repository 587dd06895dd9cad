mod common;

use common::{condition1_bruteforce, module_adjacency, random_network, subsets, NetOptions};
use nalgebra::DMatrix;
use netident::graph::{
    build_graph, check_decomposition, check_invariance_conditions, exists_path, find_confounders,
    ConfounderKind, Selection, Source,
};
use netident::model::{parse_network, uniform_grid, NetworkSpec, RationalTransfer};
use netident::selection::{
    select_full_input, select_minimum_input, select_user, AccessibilitySpec,
};
use netident::transform::{gbar_oracle, second_order_check, transform_network};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn net_from(seed: u64, l: usize, opts: NetOptions) -> (NetworkSpec, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = random_network(&mut rng, l, &opts);
    (net, rng)
}

fn edges(net: &NetworkSpec) -> Vec<(usize, usize)> {
    (0..net.l)
        .flat_map(|f| (0..net.l).map(move |t| (f, t)))
        .filter(|&(f, t)| net.has_edge(f, t))
        .collect()
}

/// Random valid selection: outputs `y ∋ j`, inputs `d ∋ i` covering `y \ {j}`.
fn random_selection(rng: &mut ChaCha8Rng, l: usize) -> Selection {
    let i = rng.random_range(0..l);
    let j = (i + rng.random_range(1..l)) % l;
    let mut d: Vec<usize> = (0..l)
        .filter(|&k| k == i || (k != j && rng.random_bool(0.5)))
        .collect();
    let mut y = vec![j];
    y.extend(
        d.iter()
            .copied()
            .filter(|&k| k != i && rng.random_bool(0.3)),
    );
    if rng.random_bool(0.2) {
        d.push(j);
    }
    let u: Vec<usize> = d.iter().copied().filter(|k| !y.contains(k)).collect();
    let b: Vec<usize> = u
        .into_iter()
        .filter(|&k| k != i && rng.random_bool(0.3))
        .collect();
    Selection::new(l, i, j, &y, &d, &b).unwrap()
}

fn rational(rng: &mut ChaCha8Rng, strictly_proper: bool) -> RationalTransfer {
    let mut num: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
    if strictly_proper {
        num[0] = 0.0;
    } else {
        num[0] = 0.5;
    }
    RationalTransfer::new(num, vec![1.0, rng.random_range(-0.5..0.5)]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn loop_inverse_is_consistent(seed in any::<u64>(), l in 2usize..=7) {
        let (net, _) = net_from(seed, l, NetOptions::default());
        let inv = net.loop_system().unwrap();
        for w in uniform_grid(32) {
            let i_minus_g = DMatrix::<Complex64>::identity(l, l) - net.g.freq(w);
            let prod = i_minus_g * inv.freq(w).unwrap();
            let err = (prod - DMatrix::<Complex64>::identity(l, l)).iter().map(|z| z.norm()).fold(0.0, f64::max);
            prop_assert!(err <= 1e-9, "{err}");
        }
    }

    #[test]
    fn document_roundtrip(seed in any::<u64>(), l in 1usize..=7) {
        let (net, _) = net_from(seed, l, NetOptions::default());
        let back = parse_network(&net.to_json()).unwrap();
        prop_assert_eq!(back.l, net.l);
        for a in 0..l {
            for b in 0..l {
                for (x, y) in [(net.g.get(a, b), back.g.get(a, b)), (net.h.get(a, b), back.h.get(a, b))] {
                    prop_assert!(x.coeff_distance(y) <= 1e-12);
                }
                prop_assert!((net.lambda[(a, b)] - back.lambda[(a, b)]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn delay_composition_closure(seed in any::<u64>(), sa in any::<bool>(), sb in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rational(&mut rng, sa);
        let b = rational(&mut rng, sb);
        if sa || sb {
            prop_assert!(a.mul(&b).strictly_proper());
        }
    }

    #[test]
    fn confounders_monotone_in_z(seed in any::<u64>(), l in 3usize..=7) {
        let (net, mut rng) = net_from(seed, l, NetOptions { noise_p: 0.2, ..NetOptions::default() });
        let g = build_graph(&net);
        let x: Vec<usize> = vec![rng.random_range(0..l)];
        let y: Vec<usize> = (0..l).filter(|k| !x.contains(k) && rng.random_bool(0.4)).collect();
        let free: Vec<usize> = (0..l).filter(|k| !x.contains(k) && !y.contains(k)).collect();
        let z: Vec<usize> = free.iter().copied().filter(|_| rng.random_bool(0.5)).collect();
        let base = find_confounders(&g, &x, &y, &z).sources();
        let bigger = find_confounders(&g, &x, &y, &free).sources();
        prop_assert!(base.iter().all(|s| bigger.contains(s)));
        let empty = find_confounders(&g, &x, &y, &[]);
        prop_assert!(empty.confounders.iter().all(|c| c.kind == ConfounderKind::Direct));
    }

    #[test]
    fn exists_path_extremes(seed in any::<u64>(), l in 2usize..=7) {
        let (net, mut rng) = net_from(seed, l, NetOptions::default());
        let g = build_graph(&net);
        let adj = module_adjacency(&net, false);
        let from = rng.random_range(0..l);
        let to = (from + rng.random_range(1..l)) % l;
        // reachability by transitive closure
        let mut reach = adj.clone();
        for k in 0..l {
            for a in 0..l {
                for b in 0..l {
                    reach[a][b] |= reach[a][k] && reach[k][b];
                }
            }
        }
        let all: Vec<usize> = (0..l).collect();
        prop_assert_eq!(exists_path(&g, Source::W(from), to, &all).is_some(), reach[from][to]);
        let direct = exists_path(&g, Source::W(from), to, &[]);
        prop_assert_eq!(direct.is_some(), adj[from][to]);
        if let Some(p) = direct {
            prop_assert!(p.is_single_edge());
        }
    }

    #[test]
    fn empty_a_decomposes_and_invariance_implies_decomposition(seed in any::<u64>(), l in 3usize..=7) {
        let (net, mut rng) = net_from(seed, l, NetOptions { noise_p: 0.2, ..NetOptions::default() });
        let g = build_graph(&net);
        let sel = random_selection(&mut rng, l);
        if check_invariance_conditions(&g, &sel).passed {
            prop_assert!(check_decomposition(&g, &sel).passed);
        }
        let no_a = Selection::new(l, sel.i, sel.j, &sel.y, &sel.d, &sel.u).unwrap();
        prop_assert!(no_a.a.is_empty());
        prop_assert!(check_decomposition(&g, &no_a).passed);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn selections_satisfy_conditions(seed in any::<u64>(), l in 3usize..=7) {
        let (net, mut rng) = net_from(seed, l, NetOptions { noise_p: 0.2, ..NetOptions::default() });
        let es = edges(&net);
        prop_assume!(!es.is_empty());
        let (i, j) = es[rng.random_range(0..es.len())];
        let g = build_graph(&net);
        let accessible: Vec<usize> = (0..l).filter(|&k| k == i || k == j || rng.random_bool(0.7)).collect();
        let spec = AccessibilitySpec { accessible: accessible.clone(), i, j };
        let full = select_full_input(&net, i, j);
        for sel in [full.clone(), select_minimum_input(&net, i, j), select_user(&net, &spec)].into_iter().flatten() {
            prop_assert!(check_invariance_conditions(&g, &sel).passed);
        }
        if let Ok(sel) = select_user(&net, &spec) {
            prop_assert!(sel.d.iter().chain(&sel.y).all(|k| accessible.contains(k)));
        }
        if let Ok(sel) = full {
            prop_assert_eq!(select_full_input(&net, i, j).unwrap(), sel.clone());
            let mut want: Vec<usize> = sel.y.iter().flat_map(|&y| net.in_neighbors(y)).chain(sel.b.iter().copied()).collect();
            want.sort_unstable();
            want.dedup();
            prop_assert_eq!(&sel.d, &want);
        }
    }

    #[test]
    fn minimum_input_is_minimal(seed in any::<u64>(), l in 3usize..=7) {
        let (net, mut rng) = net_from(seed, l, NetOptions { edge_p: 0.4, ..NetOptions::default() });
        let es = edges(&net);
        prop_assume!(!es.is_empty());
        let (i, j) = es[rng.random_range(0..es.len())];
        let Ok(sel) = select_minimum_input(&net, i, j) else { return Ok(()) };
        let blocking: Vec<usize> = sel.d.iter().copied().filter(|&k| k != j).collect();
        prop_assert!(condition1_bruteforce(&net, i, j, &blocking));
        let others: Vec<usize> = (0..l).filter(|&k| k != i && k != j).collect();
        for s in subsets(&others) {
            if s.len() + 1 < blocking.len() {
                let mut d = s.clone();
                d.push(i);
                prop_assert!(!condition1_bruteforce(&net, i, j, &d), "smaller set {d:?} beats {blocking:?}");
            }
        }
    }

    #[test]
    fn transform_agrees_with_oracle_and_keeps_spectra(seed in any::<u64>(), l in 3usize..=6) {
        let (net, mut rng) = net_from(seed, l, NetOptions { noise_p: 0.15, ..NetOptions::default() });
        let es = edges(&net);
        prop_assume!(!es.is_empty());
        let (i, j) = es[rng.random_range(0..es.len())];
        let Ok(sel) = select_full_input(&net, i, j) else { return Ok(()) };
        let tn = transform_network(&net, &sel).unwrap();
        let oracle = gbar_oracle(&tn.imm, &tn.h_tilde).unwrap();
        let entry = tn.gbar_entry(j, i).unwrap();
        for w in uniform_grid(64) {
            prop_assert!((oracle.freq(w) - entry.freq(w)).norm() <= 1e-8);
        }
        let so = second_order_check(&net, &tn, &uniform_grid(32)).unwrap();
        prop_assert!(so.output_block <= 1e-8 && so.input_block <= 1e-8, "{so:?}");
        // strictly proper network: every transformed module is strictly proper
        let gb = tn.gbar();
        for r in 0..gb.rows() {
            for c in 0..gb.cols() {
                prop_assert!(gb.get(r, c).feedthrough().abs() <= 1e-9);
            }
        }
    }
}
