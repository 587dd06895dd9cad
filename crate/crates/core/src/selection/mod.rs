//! Signal selection: full-input, minimum-input and user-selection algorithms.
//!
//! Every algorithm returns a [`Selection`] that passes
//! [`check_invariance_conditions`]; ties are broken by lowest node index.

mod maxflow;

pub use maxflow::min_node_cut;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    build_graph, check_decomposition, check_invariance_conditions, check_parallel_path_loop,
    find_confounders, BoolGraph, ConfounderKind, Selection, Source,
};
use crate::model::NetworkSpec;

/// Largest node count for which blocking sets are found by enumeration.
pub const ENUMERATION_LIMIT: usize = 16;

/// Cap on the number of candidate subsets examined in B searches.
const SUBSET_BUDGET: usize = 200_000;

/// Nodes that may be measured (zero-based), plus the target edge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessibilitySpec {
    pub accessible: Vec<usize>,
    pub i: usize,
    pub j: usize,
}

fn require_target(net: &NetworkSpec, i: usize, j: usize) -> Result<()> {
    if i >= net.l || j >= net.l || i == j || !net.has_edge(i, j) {
        return Err(Error::MissingTarget { i: i + 1, j: j + 1 });
    }
    Ok(())
}

fn insert(v: &mut Vec<usize>, k: usize) -> bool {
    match v.binary_search(&k) {
        Ok(_) => false,
        Err(p) => {
            v.insert(p, k);
            true
        }
    }
}

fn union(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut v: Vec<usize> = a.iter().chain(b).copied().collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// Lexicographic k-subsets of `items`, in order, until `f` returns `Some`.
fn first_subset<T>(
    items: &[usize],
    k: usize,
    budget: &mut usize,
    mut f: impl FnMut(&[usize]) -> Option<T>,
) -> Option<T> {
    let n = items.len();
    if k > n {
        return None;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    let mut buf = vec![0; k];
    loop {
        if *budget == 0 {
            return None;
        }
        *budget -= 1;
        for (b, &p) in buf.iter_mut().zip(&idx) {
            *b = items[p];
        }
        if let Some(t) = f(&buf) {
            return Some(t);
        }
        let mut p = None;
        for q in (0..k).rev() {
            if idx[q] < q + n - k {
                p = Some(q);
                break;
            }
        }
        let p = p?;
        idx[p] += 1;
        for q in p + 1..k {
            idx[q] = idx[q - 1] + 1;
        }
    }
}

/// Smallest `S ∋ i` (lexicographic on ties) passing the parallel-path and
/// loop condition, drawing extra nodes from `pool`. `None` if infeasible.
fn blocking_set_from(g: &BoolGraph, i: usize, j: usize, pool: &[usize]) -> Option<Vec<usize>> {
    let cand: Vec<usize> = pool.iter().copied().filter(|&k| k != i && k != j).collect();
    if g.l <= ENUMERATION_LIMIT {
        let mut budget = usize::MAX;
        for size in 0..=cand.len() {
            let hit = first_subset(&cand, size, &mut budget, |s| {
                let d = union(&[i], s);
                check_parallel_path_loop(g, i, j, &d).passed.then_some(d)
            });
            if hit.is_some() {
                return hit;
            }
        }
        None
    } else {
        let mut allowed = vec![false; g.l];
        for &k in &cand {
            allowed[k] = true;
        }
        let cut = min_node_cut(g, i, j, &allowed)?;
        let d = union(&[i], &cut);
        check_parallel_path_loop(g, i, j, &d).passed.then_some(d)
    }
}

/// Minimum-cardinality node set containing `i` that satisfies the
/// parallel-path and loop condition. Exact by enumeration up to
/// [`ENUMERATION_LIMIT`] nodes, max-flow node cut beyond.
pub fn minimal_blocking_set(net: &NetworkSpec, i: usize, j: usize) -> Result<Vec<usize>> {
    require_target(net, i, j)?;
    let g = build_graph(net);
    let pool: Vec<usize> = (0..net.l).collect();
    blocking_set_from(&g, i, j, &pool)
        .ok_or_else(|| Error::Internal("no blocking set among all nodes".into()))
}

fn correlated_with(net: &NetworkSpec, k: usize, y: &[usize]) -> bool {
    y.iter().any(|&l| l != k && net.noise_pattern[k][l])
}

fn finish(g: &BoolGraph, sel: Selection) -> Result<Selection> {
    let rep = check_invariance_conditions(g, &sel);
    if !rep.passed {
        return Err(Error::Internal(format!(
            "selection fails {:?}",
            rep.failures()
        )));
    }
    Ok(sel)
}

/// Search `B ⊆ cand` (smallest first) so that the decomposition condition and
/// the path condition towards `B` hold.
fn search_b(
    g: &BoolGraph,
    i: usize,
    j: usize,
    y: &[usize],
    d: &[usize],
    forced_b: &[usize],
    cand: &[usize],
) -> Option<Selection> {
    let mut budget = SUBSET_BUDGET;
    for size in 0..=cand.len() {
        let hit = first_subset(cand, size, &mut budget, |s| {
            let b = union(forced_b, s);
            let dd = union(d, &b);
            let sel = Selection::new(g.l, i, j, y, &dd, &b).ok()?;
            let rep = check_invariance_conditions(g, &sel);
            rep.passed.then_some(sel)
        });
        if hit.is_some() {
            return hit;
        }
        if budget == 0 {
            return None;
        }
    }
    None
}

/// All in-neighbours of the outputs are used as inputs; correlated inputs
/// become outputs; a blocking set `B` handles remaining confounders.
pub fn select_full_input(net: &NetworkSpec, i: usize, j: usize) -> Result<Selection> {
    require_target(net, i, j)?;
    let g = build_graph(net);
    let l = net.l;
    let mut y = vec![j];
    let mut forced_b: Vec<usize> = Vec::new();
    for _round in 0..=l {
        // Closure: in-neighbours of Y into D, correlated D nodes into Y.
        let mut d = vec![i];
        loop {
            for &k in &y.clone() {
                for n in net.in_neighbors(k) {
                    insert(&mut d, n);
                }
            }
            let add: Vec<usize> = d
                .iter()
                .copied()
                .filter(|&k| !y.contains(&k) && correlated_with(net, k, &y))
                .collect();
            if add.is_empty() {
                break;
            }
            for k in add {
                insert(&mut y, k);
            }
        }
        forced_b.retain(|k| !y.contains(k));
        let d = union(&d, &forced_b);
        let cand: Vec<usize> = (0..l)
            .filter(|k| !y.contains(k) && !d.contains(k))
            .collect();
        if let Some(sel) = search_b(&g, i, j, &y, &d, &forced_b, &cand) {
            return finish(&g, sel);
        }
        // Fallback on the first offending A node: move to B when allowed, else to Y.
        let base = Selection::new(l, i, j, &y, &d, &forced_b)?;
        let conf = find_confounders(&g, &base.a, &base.y, &base.z);
        let mut offenders: Vec<usize> = Vec::new();
        for c in &conf.confounders {
            insert(
                &mut offenders,
                *c.input_path.nodes.last().expect("nonempty witness"),
            );
        }
        let k = match offenders.first() {
            Some(&k) => k,
            None => match forced_b.first() {
                // Only an earlier B choice can be at fault now: make it an output.
                Some(&k) => {
                    insert(&mut y, k);
                    continue;
                }
                None => return Err(Error::Internal("full-input selection stalled".into())),
            },
        };
        if k != i {
            let b2 = union(&forced_b, &[k]);
            if let Ok(s2) = Selection::new(l, i, j, &y, &d, &b2) {
                let ab = find_confounders(&g, &s2.a, &s2.b, &s2.z).is_empty();
                let pc = check_invariance_conditions(&g, &s2)
                    .item("no_unmeasured_path_to_b")
                    .is_some_and(|c| c.passed);
                if ab && pc {
                    forced_b = b2;
                    continue;
                }
            }
        }
        insert(&mut y, k);
    }
    Err(Error::Internal(format!(
        "full-input selection exceeded {} rounds",
        l + 1
    )))
}

/// Smallest input set satisfying the parallel-path and loop condition;
/// confounded inputs are absorbed as outputs and `B = ∅`.
pub fn select_minimum_input(net: &NetworkSpec, i: usize, j: usize) -> Result<Selection> {
    require_target(net, i, j)?;
    let g = build_graph(net);
    let l = net.l;
    let pool: Vec<usize> = (0..l).collect();
    let d = blocking_set_from(&g, i, j, &pool)
        .ok_or_else(|| Error::Internal("no blocking set".into()))?;
    let mut y = vec![j];
    loop {
        let z: Vec<usize> = (0..l)
            .filter(|k| !d.contains(k) && !y.contains(k))
            .collect();
        let next = d
            .iter()
            .copied()
            .filter(|k| !y.contains(k))
            .find(|&k| !find_confounders(&g, &[k], &y, &z).is_empty());
        match next {
            Some(k) => {
                insert(&mut y, k);
            }
            None => break,
        }
    }
    finish(&g, Selection::new(l, i, j, &y, &d, &[])?)
}

/// For a confounder of `k -> Y`, whether some input-side path reaches `w_k`
/// directly or through inaccessible unmeasured nodes only.
fn unblockable(g: &BoolGraph, src: usize, k: usize, z: &[usize], accessible: &[bool]) -> bool {
    let inner: Vec<usize> = z.iter().copied().filter(|&n| !accessible[n]).collect();
    crate::graph::exists_path(g, Source::E(src), k, &inner).is_some()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    Clean,
    Blockable,
    Hard,
}

fn classify(g: &BoolGraph, k: usize, y: &[usize], z: &[usize], acc: &[bool]) -> Class {
    let conf = find_confounders(g, &[k], y, z);
    if conf.is_empty() {
        return Class::Clean;
    }
    let hard = conf
        .confounders
        .iter()
        .any(|c| c.kind == ConfounderKind::Direct || unblockable(g, c.source, k, z, acc));
    if hard {
        Class::Hard
    } else {
        Class::Blockable
    }
}

fn b_admissible(g: &BoolGraph, sel: &Selection) -> bool {
    find_confounders(g, &sel.a, &sel.b, &sel.z).is_empty()
        && check_invariance_conditions(g, sel)
            .item("no_unmeasured_path_to_b")
            .is_some_and(|c| c.passed)
}

/// Selection restricted to accessible nodes.
pub fn select_user(net: &NetworkSpec, spec: &AccessibilitySpec) -> Result<Selection> {
    let (i, j) = (spec.i, spec.j);
    require_target(net, i, j)?;
    let l = net.l;
    let mut acc = vec![false; l];
    for &k in &spec.accessible {
        if k >= l {
            return Err(Error::InvalidArgument(format!(
                "accessible node {} outside 1..{l}",
                k + 1
            )));
        }
        acc[k] = true;
    }
    if !acc[i] || !acc[j] {
        return Err(Error::InvalidArgument(
            "target nodes must be accessible".into(),
        ));
    }
    let g = build_graph(net);
    let pool: Vec<usize> = (0..l).filter(|&k| acc[k]).collect();
    // Steps 1-2.
    let mut d = blocking_set_from(&g, i, j, &pool).ok_or_else(|| {
        Error::Infeasible(
            "no accessible node set satisfies the parallel path and loop condition".into(),
        )
    })?;
    let mut y = vec![j];
    let mut b: Vec<usize> = Vec::new();

    'restart: for _round in 0..=2 * l + 2 {
        // Step 3.
        for &k in &y.clone() {
            for n in net.in_neighbors(k) {
                if acc[n] {
                    insert(&mut d, n);
                }
            }
        }
        // Step 4.
        let inacc: Vec<usize> = (0..l).filter(|&k| !acc[k]).collect();
        for &k in &y.clone() {
            for n in net.in_neighbors(k).into_iter().filter(|&n| !acc[n]) {
                for a in (0..l).filter(|&a| acc[a]) {
                    if crate::graph::exists_path(&g, Source::W(a), n, &inacc).is_some() {
                        insert(&mut d, a);
                    }
                }
            }
        }
        b.retain(|k| d.contains(k) && !y.contains(k));
        let zset = |d: &[usize], y: &[usize]| -> Vec<usize> {
            (0..l)
                .filter(|k| !d.contains(k) && !y.contains(k))
                .collect()
        };
        // Step 5.
        if !y.contains(&i) && classify(&g, i, &y, &zset(&d, &y), &acc) == Class::Hard {
            insert(&mut y, i);
            continue 'restart;
        }
        // Steps 6-7.
        let cands: Vec<usize> = d
            .iter()
            .copied()
            .filter(|k| !y.contains(k) && !b.contains(k))
            .collect();
        let mut blockable = Vec::new();
        for k in cands {
            let z = zset(&d, &y);
            match classify(&g, k, &y, &z, &acc) {
                Class::Clean => {}
                Class::Blockable => blockable.push(k),
                Class::Hard => {
                    if k != i {
                        let b2 = union(&b, &[k]);
                        if let Ok(s2) = Selection::new(l, i, j, &y, &d, &b2) {
                            if b_admissible(&g, &s2) {
                                b = b2;
                                continue;
                            }
                        }
                    }
                    insert(&mut y, k);
                    continue 'restart;
                }
            }
        }
        // Step 8.
        for k in blockable {
            let z = zset(&d, &y);
            if b.contains(&k) || classify(&g, k, &y, &z, &acc) == Class::Clean {
                continue;
            }
            if k != i {
                let b2 = union(&b, &[k]);
                if let Ok(s2) = Selection::new(l, i, j, &y, &d, &b2) {
                    if b_admissible(&g, &s2) {
                        b = b2;
                        continue;
                    }
                }
            }
            let pool: Vec<usize> = z.iter().copied().filter(|&n| acc[n]).collect();
            let mut budget = SUBSET_BUDGET;
            let mut found = None;
            for size in 1..=pool.len() {
                found = first_subset(&pool, size, &mut budget, |s| {
                    let b2 = union(&b, s);
                    let d2 = union(&d, s);
                    let s2 = Selection::new(l, i, j, &y, &d2, &b2).ok()?;
                    let ok = find_confounders(&g, &[k], &s2.y, &s2.z).is_empty()
                        && b_admissible(&g, &s2);
                    ok.then_some(s.to_vec())
                });
                if found.is_some() || budget == 0 {
                    break;
                }
            }
            match found {
                Some(s) => {
                    b = union(&b, &s);
                    d = union(&d, &s);
                }
                None => {
                    insert(&mut y, k);
                    continue 'restart;
                }
            }
        }
        let sel = Selection::new(l, i, j, &y, &d, &b)?;
        let rep = check_invariance_conditions(&g, &sel);
        if rep.passed {
            return Ok(sel);
        }
        // Remaining A -> Y confounders: absorb the first offending node.
        let dec = check_decomposition(&g, &sel);
        let off = dec
            .items
            .iter()
            .flat_map(|it| it.confounders.iter())
            .map(|c| *c.input_path.nodes.last().expect("nonempty witness"))
            .min();
        match off {
            Some(k) => {
                insert(&mut y, k);
            }
            None => {
                return Err(Error::Internal(format!(
                    "user selection fails {:?}",
                    rep.failures()
                )))
            }
        }
    }
    Err(Error::Internal("user selection did not terminate".into()))
}
