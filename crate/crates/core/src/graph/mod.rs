//! Boolean-graph queries: paths, confounding variables and the selection
//! conditions used to certify module invariance and consistency.

mod conditions;
mod selection_set;

pub use conditions::{
    check_decomposition, check_delay_conditions, check_invariance_conditions,
    check_parallel_path_loop, ConditionItem, ConditionReport, ModelDelayPattern,
};
pub use selection_set::{Selection, SelectionDoc};

use serde::{Serialize, Serializer};

use crate::model::NetworkSpec;

/// Directed graph of node signals `w` and white noise sources `e`.
///
/// Adjacency is stored as `[from][to]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoolGraph {
    pub l: usize,
    pub w: Vec<Vec<bool>>,
    pub e: Vec<Vec<bool>>,
    pub w_delay_free: Vec<Vec<bool>>,
    pub e_delay_free: Vec<Vec<bool>>,
}

/// Start of a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Source {
    W(usize),
    E(usize),
}

/// A path: the source followed by the w-nodes it visits, target last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Witness {
    pub source: Source,
    pub nodes: Vec<usize>,
}

impl Witness {
    pub fn is_single_edge(&self) -> bool {
        self.nodes.len() == 1
    }

    pub fn labels(&self) -> Vec<String> {
        let mut out = vec![match self.source {
            Source::W(k) => format!("w{}", k + 1),
            Source::E(k) => format!("e{}", k + 1),
        }];
        out.extend(self.nodes.iter().map(|k| format!("w{}", k + 1)));
        out
    }
}

impl std::fmt::Display for Witness {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.labels().join(" -> "))
    }
}

impl Serialize for Witness {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.labels().serialize(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfounderKind {
    Direct,
    Indirect,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Confounder {
    /// Zero-based noise index; serialised one-based.
    #[serde(serialize_with = "one_based")]
    pub source: usize,
    pub kind: ConfounderKind,
    pub input_path: Witness,
    pub output_path: Witness,
}

fn one_based<S: Serializer>(v: &usize, s: S) -> Result<S::Ok, S::Error> {
    (v + 1).serialize(s)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ConfounderReport {
    pub confounders: Vec<Confounder>,
}

impl ConfounderReport {
    pub fn is_empty(&self) -> bool {
        self.confounders.is_empty()
    }

    pub fn sources(&self) -> Vec<usize> {
        self.confounders.iter().map(|c| c.source).collect()
    }

    pub fn kind_of(&self, source: usize) -> Option<ConfounderKind> {
        self.confounders
            .iter()
            .find(|c| c.source == source)
            .map(|c| c.kind)
    }
}

/// Connected components of the nonzero pattern of a symmetric matrix.
fn components(m: &nalgebra::DMatrix<f64>) -> Vec<usize> {
    let n = m.nrows();
    let mut comp = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        let mut stack = vec![s];
        comp[s] = next;
        while let Some(a) = stack.pop() {
            for b in 0..n {
                if comp[b] == usize::MAX && (m[(a, b)] != 0.0 || m[(b, a)] != 0.0) {
                    comp[b] = next;
                    stack.push(b);
                }
            }
        }
        next += 1;
    }
    comp
}

/// Derive the graph from the nonzero patterns of `G`, `H` and `Lambda`.
///
/// Noise sources that are correlated through `Lambda` share their edges: the
/// e-to-w pattern is that of `H` times the block pattern of `Lambda`.
pub fn build_graph(net: &NetworkSpec) -> BoolGraph {
    let l = net.l;
    let mut w = vec![vec![false; l]; l];
    let mut wdf = vec![vec![false; l]; l];
    for to in 0..l {
        for from in 0..l {
            let g = net.g.get(to, from);
            if !g.is_zero() {
                w[from][to] = true;
                wdf[from][to] = !g.strictly_proper();
            }
        }
    }
    let comp = components(&net.lambda);
    let mut e = vec![vec![false; l]; l];
    let mut edf = vec![vec![false; l]; l];
    for src in 0..l {
        for m in (0..l).filter(|&m| comp[m] == comp[src]) {
            for to in 0..l {
                let h = net.h.get(to, m);
                if !h.is_zero() {
                    e[src][to] = true;
                    if !h.strictly_proper() {
                        edf[src][to] = true;
                    }
                }
            }
        }
    }
    BoolGraph {
        l,
        w,
        e,
        w_delay_free: wdf,
        e_delay_free: edf,
    }
}

impl BoolGraph {
    /// Graph with plain edge lists (zero-based, `(from, to)`) and diagonal noise.
    pub fn from_edges(l: usize, w_edges: &[(usize, usize)], e_edges: &[(usize, usize)]) -> Self {
        let mut w = vec![vec![false; l]; l];
        for &(a, b) in w_edges {
            w[a][b] = true;
        }
        let mut e = vec![vec![false; l]; l];
        for k in 0..l {
            e[k][k] = true;
        }
        for &(a, b) in e_edges {
            e[a][b] = true;
        }
        BoolGraph {
            l,
            w,
            e,
            w_delay_free: vec![vec![false; l]; l],
            e_delay_free: vec![vec![false; l]; l],
        }
    }

    fn out_of(&self, s: Source, delay_free: bool) -> Vec<usize> {
        let row = match (s, delay_free) {
            (Source::W(k), false) => &self.w[k],
            (Source::W(k), true) => &self.w_delay_free[k],
            (Source::E(k), false) => &self.e[k],
            (Source::E(k), true) => &self.e_delay_free[k],
        };
        (0..self.l).filter(|&t| row[t]).collect()
    }

    /// Shortest simple path from `from` to any node of `targets` whose
    /// intermediate w-nodes all satisfy `interior`. Ties pick the lowest
    /// target index, then the lowest predecessor.
    pub fn shortest_path(
        &self,
        from: Source,
        targets: &[bool],
        interior: &[bool],
        delay_free: bool,
    ) -> Option<Witness> {
        let l = self.l;
        let origin = match from {
            Source::W(k) => Some(k),
            Source::E(_) => None,
        };
        let first = self.out_of(from, delay_free);
        if let Some(&t) = first.iter().find(|&&t| targets[t]) {
            return Some(Witness {
                source: from,
                nodes: vec![t],
            });
        }
        let mut prev = vec![usize::MAX; l];
        let mut seen = vec![false; l];
        if let Some(k) = origin {
            seen[k] = true;
        }
        let mut layer: Vec<usize> = Vec::new();
        for t in first {
            if interior[t] && !seen[t] {
                seen[t] = true;
                layer.push(t);
            }
        }
        while !layer.is_empty() {
            layer.sort_unstable();
            let mut hit: Option<(usize, usize)> = None;
            let mut next = Vec::new();
            for &a in &layer {
                for t in self.out_of(Source::W(a), delay_free) {
                    if targets[t] && (!seen[t] || origin == Some(t)) {
                        if hit.is_none_or(|(bt, _)| t < bt) {
                            hit = Some((t, a));
                        }
                    } else if interior[t] && !seen[t] {
                        seen[t] = true;
                        prev[t] = a;
                        next.push(t);
                    }
                }
            }
            if let Some((t, a)) = hit {
                let mut nodes = vec![t, a];
                let mut cur = a;
                while prev[cur] != usize::MAX {
                    cur = prev[cur];
                    nodes.push(cur);
                }
                nodes.reverse();
                return Some(Witness {
                    source: from,
                    nodes,
                });
            }
            layer = next;
        }
        None
    }

    fn mask(&self, set: &[usize]) -> Vec<bool> {
        let mut m = vec![false; self.l];
        for &k in set {
            m[k] = true;
        }
        m
    }
}

/// Path from `from` to `to` whose intermediate w-nodes lie in `interior`.
pub fn exists_path(g: &BoolGraph, from: Source, to: usize, interior: &[usize]) -> Option<Witness> {
    let targets = g.mask(&[to]);
    let inside = g.mask(interior);
    g.shortest_path(from, &targets, &inside, false)
}

/// Noise sources with simultaneous paths to `x` and `y` that are single
/// edges or run through `z` only.
pub fn find_confounders(g: &BoolGraph, x: &[usize], y: &[usize], z: &[usize]) -> ConfounderReport {
    let xm = g.mask(x);
    let ym = g.mask(y);
    let zm = g.mask(z);
    let none = vec![false; g.l];
    let mut out = Vec::new();
    for src in 0..g.l {
        let s = Source::E(src);
        let dx = g.shortest_path(s, &xm, &none, false);
        let dy = g.shortest_path(s, &ym, &none, false);
        if let (Some(a), Some(b)) = (&dx, &dy) {
            out.push(Confounder {
                source: src,
                kind: ConfounderKind::Direct,
                input_path: a.clone(),
                output_path: b.clone(),
            });
            continue;
        }
        let px = dx.or_else(|| g.shortest_path(s, &xm, &zm, false));
        let py = dy.or_else(|| g.shortest_path(s, &ym, &zm, false));
        if let (Some(a), Some(b)) = (px, py) {
            out.push(Confounder {
                source: src,
                kind: ConfounderKind::Indirect,
                input_path: a,
                output_path: b,
            });
        }
    }
    ConfounderReport { confounders: out }
}
