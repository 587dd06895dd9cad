#![allow(dead_code)]

use netident::model::{parse_network, NetworkSpec};

pub fn fixture_path(name: &str) -> String {
    format!("{}/../../fixtures/{name}.json", env!("CARGO_MANIFEST_DIR"))
}

pub fn load(name: &str) -> NetworkSpec {
    let text = std::fs::read_to_string(fixture_path(name)).expect("fixture readable");
    parse_network(&text).expect("fixture parses")
}

/// One-based set to zero-based.
pub fn zb(v: &[usize]) -> Vec<usize> {
    v.iter().map(|k| k - 1).collect()
}

/// Zero-based set to one-based.
pub fn ob(v: &[usize]) -> Vec<usize> {
    v.iter().map(|k| k + 1).collect()
}

use nalgebra::DMatrix;
use netident::graph::{build_graph, find_confounders, ModelDelayPattern, Selection};
use netident::model::{uniform_grid, validate_network, RationalTransfer, TransferMatrix};
use netident::transform::{block_noise_product, immerse};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
pub struct NetOptions {
    pub edge_p: f64,
    /// Probability that a module has direct feedthrough.
    pub feedthrough_p: f64,
    /// Probability of each off-diagonal entry of `H`.
    pub noise_p: f64,
    /// Probability of one correlated pair in `Lambda`.
    pub corr_p: f64,
    pub max_order: usize,
}

impl Default for NetOptions {
    fn default() -> Self {
        Self {
            edge_p: 0.3,
            feedthrough_p: 0.0,
            noise_p: 0.12,
            corr_p: 0.3,
            max_order: 2,
        }
    }
}

fn random_filter(rng: &mut ChaCha8Rng, max_order: usize, feedthrough: bool) -> RationalTransfer {
    let order = rng.random_range(1..=max_order);
    let mut den = vec![1.0];
    for _ in 0..order {
        if rng.random_bool(0.5) {
            let p: f64 = rng.random_range(-0.6..0.6);
            let mut next = vec![0.0; den.len() + 1];
            for (k, c) in den.iter().enumerate() {
                next[k] += c;
                next[k + 1] -= p * c;
            }
            den = next;
        }
    }
    let gain = |rng: &mut ChaCha8Rng| {
        let m: f64 = rng.random_range(0.2..0.5);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    };
    let mut num = vec![if feedthrough { gain(rng) } else { 0.0 }];
    num.extend((0..order).map(|_| gain(rng) * 0.8));
    RationalTransfer::new(num, den).unwrap()
}

/// Random stable, well-posed network with monic noise model.
pub fn random_network(rng: &mut ChaCha8Rng, l: usize, opts: &NetOptions) -> NetworkSpec {
    loop {
        let mut g = TransferMatrix::zeros(l, l);
        let mut h = TransferMatrix::identity(l);
        for to in 0..l {
            for from in 0..l {
                if to == from {
                    continue;
                }
                if rng.random_bool(opts.edge_p) {
                    let ft = rng.random_bool(opts.feedthrough_p);
                    g.set(to, from, random_filter(rng, opts.max_order, ft));
                }
                if rng.random_bool(opts.noise_p) {
                    h.set(
                        to,
                        from,
                        RationalTransfer::delay(rng.random_range(0.2..0.5), 1),
                    );
                }
            }
        }
        let mut lambda = DMatrix::identity(l, l);
        if l > 1 && rng.random_bool(opts.corr_p) {
            let a = rng.random_range(0..l);
            let b = (a + rng.random_range(1..l)) % l;
            lambda[(a, b)] = 0.3;
            lambda[(b, a)] = 0.3;
        }
        let net = NetworkSpec::new(g, h, TransferMatrix::zeros(l, 0), lambda).unwrap();
        if validate_network(&net).valid {
            return net;
        }
    }
}

/// Adjacency `[from][to]` of the nonzero modules; `delay_free` keeps only
/// modules with a nonzero leading coefficient.
pub fn module_adjacency(net: &NetworkSpec, delay_free: bool) -> Vec<Vec<bool>> {
    (0..net.l)
        .map(|from| {
            (0..net.l)
                .map(|to| {
                    let m = net.g.get(to, from);
                    !m.is_zero() && (!delay_free || m.num()[0] != 0.0)
                })
                .collect()
        })
        .collect()
}

/// Every simple path `from -> ... -> to` as a node list; with `from == to`
/// these are the cycles through `from`.
pub fn all_simple_paths(adj: &[Vec<bool>], from: usize, to: usize) -> Vec<Vec<usize>> {
    fn walk(adj: &[Vec<bool>], path: &mut Vec<usize>, to: usize, out: &mut Vec<Vec<usize>>) {
        let last = *path.last().unwrap();
        for next in 0..adj.len() {
            if !adj[last][next] {
                continue;
            }
            if next == to {
                let mut p = path.clone();
                p.push(next);
                out.push(p);
            } else if !path.contains(&next) {
                path.push(next);
                walk(adj, path, to, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    walk(adj, &mut vec![from], to, &mut out);
    out
}

/// Parallel-path and loop condition by exhaustive path enumeration.
pub fn condition1_bruteforce(net: &NetworkSpec, i: usize, j: usize, d: &[usize]) -> bool {
    let adj = module_adjacency(net, false);
    let paths_ok = all_simple_paths(&adj, i, j)
        .iter()
        .filter(|p| p.len() > 2)
        .all(|p| p[1..p.len() - 1].iter().any(|k| d.contains(k)));
    let loops_ok = all_simple_paths(&adj, j, j)
        .iter()
        .all(|p| p[1..p.len() - 1].iter().any(|k| d.contains(k)));
    paths_ok && loops_ok
}

/// Whether a delay-free path of at least one edge leads from `from` into `targets`.
pub fn delay_free_path_bruteforce(adj_df: &[Vec<bool>], from: usize, targets: &[usize]) -> bool {
    targets
        .iter()
        .any(|&t| !all_simple_paths(adj_df, from, t).is_empty())
}

/// All subsets of `items` as sorted vectors, the empty set first.
pub fn subsets(items: &[usize]) -> Vec<Vec<usize>> {
    (0u32..1 << items.len())
        .map(|m| {
            items
                .iter()
                .enumerate()
                .filter(|(b, _)| m >> b & 1 == 1)
                .map(|(_, &k)| k)
                .collect()
        })
        .collect()
}

/// Check the block product for every disjoint pair of retained subsets.
/// `hits` counts unconfounded pairs and confounded pairs with a nonzero product.
pub fn block_product_sweep(net: &NetworkSpec, sel: &Selection, hits: &mut (usize, usize)) {
    let g = build_graph(net);
    let imm = immerse(net, sel).unwrap();
    let grid = uniform_grid(32);
    let all_noise: Vec<usize> = (0..net.l).collect();
    let retained = sel.retained();
    for phi in subsets(&retained).into_iter().skip(1) {
        let rest: Vec<usize> = retained
            .iter()
            .copied()
            .filter(|k| !phi.contains(k))
            .collect();
        for omega in subsets(&rest).into_iter().skip(1) {
            if phi > omega {
                continue;
            }
            let conf = find_confounders(&g, &phi, &omega, &sel.z);
            let p = block_noise_product(&imm, &phi, &omega, &all_noise, &grid).unwrap();
            if conf.is_empty() {
                assert!(p <= 1e-9, "phi {phi:?} omega {omega:?} z {:?}: {p}", sel.z);
                hits.0 += 1;
            } else if p > 1e-6 {
                hits.1 += 1;
            }
        }
    }
}

/// Pass/fail of the delay conditions by exhaustive simple-path enumeration.
pub fn delay_oracle(net: &NetworkSpec, sel: &Selection, model: &ModelDelayPattern) -> bool {
    let net_df = module_adjacency(net, true);
    let mut model_df = vec![vec![false; net.l]; net.l];
    for (r, &y) in model.outputs.iter().enumerate() {
        for (c, &d) in model.inputs.iter().enumerate() {
            model_df[d][y] = model.present[r][c] && !model.strictly_proper[r][c];
        }
    }
    let sources: Vec<usize> = sel.y.iter().chain(&sel.b).copied().collect();
    let into_y = |adj: &[Vec<bool>]| {
        sources
            .iter()
            .any(|&s| delay_free_path_bruteforce(adj, s, &sel.y))
    };
    if into_y(&net_df) || into_y(&model_df) {
        return false;
    }
    sel.a.iter().all(|&k| {
        let reached = sources
            .iter()
            .any(|&s| delay_free_path_bruteforce(&net_df, s, &[k]));
        !reached || !delay_free_path_bruteforce(&model_df, k, &sel.y)
    })
}

pub fn two_node_with_feedthrough() -> NetworkSpec {
    let base = load("two_node");
    let mut g = base.g.clone();
    g.set(
        1,
        0,
        RationalTransfer::new(vec![0.4, 0.5], vec![1.0, -0.6]).unwrap(),
    );
    NetworkSpec::new(g, base.h.clone(), base.r.clone(), base.lambda.clone()).unwrap()
}
