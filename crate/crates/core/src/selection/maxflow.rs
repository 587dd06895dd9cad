//! Minimum node cut by max-flow on a split-node graph.

use std::collections::VecDeque;

use crate::graph::BoolGraph;

const INF: i64 = i64::MAX / 4;

struct Flow {
    cap: Vec<Vec<(usize, i64, usize)>>, // (to, capacity, reverse index)
}

impl Flow {
    fn new(n: usize) -> Self {
        Self {
            cap: vec![Vec::new(); n],
        }
    }

    fn edge(&mut self, a: usize, b: usize, c: i64) {
        let ra = self.cap[b].len();
        let rb = self.cap[a].len();
        self.cap[a].push((b, c, ra));
        self.cap[b].push((a, 0, rb));
    }

    fn run(&mut self, s: usize, t: usize) -> i64 {
        let n = self.cap.len();
        let mut total = 0;
        loop {
            let mut prev = vec![(usize::MAX, 0usize); n];
            let mut q = VecDeque::new();
            q.push_back(s);
            prev[s] = (s, 0);
            while let Some(a) = q.pop_front() {
                if a == t {
                    break;
                }
                for (k, &(b, c, _)) in self.cap[a].iter().enumerate() {
                    if c > 0 && prev[b].0 == usize::MAX {
                        prev[b] = (a, k);
                        q.push_back(b);
                    }
                }
            }
            if prev[t].0 == usize::MAX {
                return total;
            }
            let mut f = INF;
            let mut v = t;
            while v != s {
                let (a, k) = prev[v];
                f = f.min(self.cap[a][k].1);
                v = a;
            }
            let mut v = t;
            while v != s {
                let (a, k) = prev[v];
                self.cap[a][k].1 -= f;
                let (b, _, r) = self.cap[a][k];
                self.cap[b][r].1 += f;
                v = a;
            }
            total += f;
            if total >= INF {
                return total;
            }
        }
    }

    fn reachable(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.cap.len()];
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(a) = stack.pop() {
            for &(b, c, _) in &self.cap[a] {
                if c > 0 && !seen[b] {
                    seen[b] = true;
                    stack.push(b);
                }
            }
        }
        seen
    }
}

/// Nodes (other than `i`, `j`) whose removal breaks every `i -> j` path
/// except the direct edge and every loop through `j`. `allowed[k]` marks
/// removable nodes. Returns `None` when no finite cut exists.
pub fn min_node_cut(g: &BoolGraph, i: usize, j: usize, allowed: &[bool]) -> Option<Vec<usize>> {
    let l = g.l;
    // node v: in = 2v, out = 2v+1; source 2l, sink = in(j).
    let s = 2 * l;
    let mut f = Flow::new(2 * l + 1);
    for v in 0..l {
        if v == j {
            continue;
        }
        let c = if v == i {
            0
        } else if allowed[v] {
            1
        } else {
            INF
        };
        f.edge(2 * v, 2 * v + 1, c);
    }
    for a in 0..l {
        if a == j {
            continue;
        }
        for b in 0..l {
            if g.w[a][b] && a != i {
                f.edge(2 * a + 1, 2 * b, INF);
            }
        }
    }
    for b in 0..l {
        if g.w[i][b] && b != j {
            f.edge(s, 2 * b, INF);
        }
        if g.w[j][b] {
            if b == j {
                continue;
            }
            f.edge(s, 2 * b, INF);
        }
    }
    let value = f.run(s, 2 * j);
    if value >= INF {
        return None;
    }
    let r = f.reachable(s);
    let mut cut: Vec<usize> = (0..l)
        .filter(|&v| v != i && v != j && r[2 * v] && !r[2 * v + 1])
        .collect();
    cut.sort_unstable();
    Some(cut)
}
