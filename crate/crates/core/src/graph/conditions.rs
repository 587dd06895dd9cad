use serde::Serialize;

use super::{find_confounders, BoolGraph, Confounder, Selection, Source, Witness};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionItem {
    pub name: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub witnesses: Vec<Witness>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub confounders: Vec<Confounder>,
}

impl ConditionItem {
    pub fn new(name: &str, passed: bool) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: String::new(),
            witnesses: Vec::new(),
            confounders: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub passed: bool,
    pub items: Vec<ConditionItem>,
}

impl ConditionReport {
    pub fn from_items(items: Vec<ConditionItem>) -> Self {
        Self {
            passed: items.iter().all(|c| c.passed),
            items,
        }
    }

    pub fn item(&self, name: &str) -> Option<&ConditionItem> {
        self.items.iter().find(|c| c.name == name)
    }

    pub fn merge(mut self, other: ConditionReport) -> Self {
        self.items.extend(other.items);
        Self::from_items(self.items)
    }

    /// Names of failing items.
    pub fn failures(&self) -> Vec<&str> {
        self.items
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect()
    }
}

fn mask(l: usize, set: &[usize]) -> Vec<bool> {
    let mut m = vec![false; l];
    for &k in set {
        m[k] = true;
    }
    m
}

fn fmt_set(v: &[usize]) -> String {
    let s: Vec<String> = v.iter().map(|k| (k + 1).to_string()).collect();
    format!("{{{}}}", s.join(","))
}

/// Parallel-path and loop condition for target `i -> j` with inputs `d`.
///
/// (a) every `i -> j` path other than the direct edge has an intermediate
/// node in `d`; (b) every loop through `j` contains a node of `d` other than `j`.
pub fn check_parallel_path_loop(g: &BoolGraph, i: usize, j: usize, d: &[usize]) -> ConditionReport {
    let l = g.l;
    let dm = mask(l, d);
    let tj = mask(l, &[j]);

    let mut interior: Vec<bool> = (0..l).map(|k| !dm[k] && k != i).collect();
    interior[j] = false;
    let mut paths = ConditionItem::new("parallel_paths", true);
    for k in (0..l).filter(|&k| g.w[i][k] && k != j && interior[k]) {
        let mut inner = interior.clone();
        inner[k] = false;
        if let Some(p) = g.shortest_path(Source::W(k), &tj, &inner, false) {
            let mut nodes = vec![k];
            nodes.extend(p.nodes);
            paths.witnesses.push(Witness {
                source: Source::W(i),
                nodes,
            });
        }
    }
    paths.passed = paths.witnesses.is_empty();

    let interior_loop: Vec<bool> = (0..l).map(|k| !dm[k] && k != j).collect();
    let mut loops = ConditionItem::new("loops_through_j", true);
    for k in (0..l).filter(|&k| g.w[j][k] && !dm[k]) {
        let mut inner = interior_loop.clone();
        inner[k] = false;
        if let Some(p) = g.shortest_path(Source::W(k), &tj, &inner, false) {
            let mut nodes = vec![k];
            nodes.extend(p.nodes);
            loops.witnesses.push(Witness {
                source: Source::W(j),
                nodes,
            });
        }
    }
    loops.passed = loops.witnesses.is_empty();
    ConditionReport::from_items(vec![paths, loops])
}

/// No confounding variables for `A -> Y` and `A -> B` in the original network.
pub fn check_decomposition(g: &BoolGraph, sel: &Selection) -> ConditionReport {
    let ay = find_confounders(g, &sel.a, &sel.y, &sel.z);
    let ab = find_confounders(g, &sel.a, &sel.b, &sel.z);
    let mut c1 = ConditionItem::new("no_confounders_a_to_y", ay.is_empty());
    c1.confounders = ay.confounders;
    let mut c2 = ConditionItem::new("no_confounders_a_to_b", ab.is_empty());
    c2.confounders = ab.confounders;
    ConditionReport::from_items(vec![c1, c2])
}

/// Conjunction of the conditions that guarantee `Gbar_ji = G_ji`.
pub fn check_invariance_conditions(g: &BoolGraph, sel: &Selection) -> ConditionReport {
    let mut rep =
        check_parallel_path_loop(g, sel.i, sel.j, &sel.d).merge(check_decomposition(g, sel));
    let in_aq = sel.a.contains(&sel.i) || sel.q.contains(&sel.i);
    let mut c = ConditionItem::new("i_in_a_or_q", in_aq);
    if !in_aq {
        c.detail = format!("w{} is in B", sel.i + 1);
    }
    rep.items.push(c);
    let zm = mask(g.l, &sel.z);
    let bm = mask(g.l, &sel.b);
    let mut c = ConditionItem::new("no_unmeasured_path_to_b", true);
    for s in [sel.i, sel.j] {
        if let Some(p) = g.shortest_path(Source::W(s), &bm, &zm, false) {
            c.witnesses.push(p);
        }
    }
    c.passed = c.witnesses.is_empty();
    rep.items.push(c);
    ConditionReport::from_items(rep.items)
}

/// Which parameterised model entries `Gbar(theta)[y][d]` exist and which are
/// constrained strictly proper.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelDelayPattern {
    pub outputs: Vec<usize>,
    pub inputs: Vec<usize>,
    pub present: Vec<Vec<bool>>,
    pub strictly_proper: Vec<Vec<bool>>,
}

impl ModelDelayPattern {
    /// Every structurally allowed entry present, with the given delay flag.
    pub fn uniform(sel: &Selection, strictly_proper: bool) -> Self {
        Self::from_fn(sel, |_, _| strictly_proper)
    }

    pub fn from_fn(sel: &Selection, f: impl Fn(usize, usize) -> bool) -> Self {
        let outputs = sel.outputs();
        let inputs = sel.inputs();
        let present: Vec<Vec<bool>> = outputs
            .iter()
            .map(|&y| inputs.iter().map(|&d| d != y).collect())
            .collect();
        let strictly_proper = outputs
            .iter()
            .map(|&y| inputs.iter().map(|&d| f(y, d)).collect())
            .collect();
        Self {
            outputs,
            inputs,
            present,
            strictly_proper,
        }
    }

    fn delay_free_graph(&self, l: usize) -> BoolGraph {
        let mut g = BoolGraph::from_edges(l, &[], &[]);
        for (r, &y) in self.outputs.iter().enumerate() {
            for (c, &d) in self.inputs.iter().enumerate() {
                if self.present[r][c] {
                    g.w[d][y] = true;
                    g.w_delay_free[d][y] = !self.strictly_proper[r][c];
                }
            }
        }
        g
    }
}

/// Delay conditions on paths and loops into the outputs, for the network and
/// for the parameterised model.
pub fn check_delay_conditions(
    g: &BoolGraph,
    sel: &Selection,
    model: &ModelDelayPattern,
) -> ConditionReport {
    let l = g.l;
    let all = vec![true; l];
    let ym = mask(l, &sel.y);
    let mut sources: Vec<usize> = sel.y.iter().chain(&sel.b).copied().collect();
    sources.sort_unstable();
    let mg = model.delay_free_graph(l);

    let delay_free_from = |gr: &BoolGraph, srcs: &[usize], targets: &[bool]| -> Vec<Witness> {
        srcs.iter()
            .filter_map(|&s| gr.shortest_path(Source::W(s), targets, &all, true))
            .collect()
    };

    let mut items = Vec::new();
    let mut c = ConditionItem::new("network_paths_into_y_delayed", true);
    c.witnesses = delay_free_from(g, &sources, &ym);
    c.passed = c.witnesses.is_empty();
    items.push(c);

    let mut c = ConditionItem::new("model_paths_into_y_delayed", true);
    c.witnesses = delay_free_from(&mg, &sources, &ym);
    c.passed = c.witnesses.is_empty();
    items.push(c);

    for &k in &sel.a {
        let km = mask(l, &[k]);
        let net_w = delay_free_from(g, &sources, &km);
        let model_w = delay_free_from(&mg, &[k], &ym);
        let mut c = ConditionItem::new(
            &format!("a_node_w{}", k + 1),
            net_w.is_empty() || model_w.is_empty(),
        );
        if !c.passed {
            c.detail = format!(
                "delay-free path from {} to w{} in the network and from w{} to Y in the model",
                fmt_set(&sources),
                k + 1,
                k + 1
            );
            c.witnesses = net_w.into_iter().chain(model_w).collect();
        }
        items.push(c);
    }
    ConditionReport::from_items(items)
}
