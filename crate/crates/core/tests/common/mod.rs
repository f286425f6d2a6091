//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use lexanalogy::defparser::{DefEdge, DefGraph, DefNode};
use lexanalogy::evaluation::Embedding;
use lexanalogy::extraction::Analogy;
use lexanalogy::retrofit::{EdgeKind, KnowledgeGraph, RetrofitConfig};
use lexanalogy::ConceptId;
use nalgebra::{DMatrix, DVector};

/// Rebuilds `g` with node labels and edge labels replaced by the callbacks.
pub fn relabel(
    g: &DefGraph,
    node: impl Fn(usize, &DefNode) -> DefNode,
    edge: impl Fn(usize, &DefEdge) -> DefEdge,
) -> DefGraph {
    let n = g.node_count();
    let mut ids = vec![usize::MAX; n];
    let mut out = DefGraph::single(node(g.root(), g.node(g.root())));
    ids[g.root()] = 0;
    for (i, slot) in ids.iter_mut().enumerate() {
        if i != g.root() {
            *slot = out.add_node(node(i, g.node(i)));
        }
    }
    for (k, (s, e, t)) in g.edges().iter().enumerate() {
        out.add_edge(ids[*s], edge(k, e), ids[*t]);
    }
    out
}

fn parents(g: &DefGraph) -> Vec<Option<(usize, DefEdge)>> {
    let mut p = vec![None; g.node_count()];
    for (s, e, t) in g.edges() {
        p[*t] = Some((*s, e.clone()));
    }
    p
}

fn bfs_order(g: &DefGraph) -> Vec<usize> {
    let mut order = vec![g.root()];
    let mut i = 0;
    while i < order.len() {
        let u = order[i];
        for (s, _, t) in g.edges() {
            if *s == u {
                order.push(*t);
            }
        }
        i += 1;
    }
    order
}

/// Brute-force matcher: enumerates every root-preserving bijection that
/// maps each edge onto an edge with the same label, and takes the minimum
/// number of nodes whose labels differ. Returns the differing concepts when
/// that minimum is exactly one and both sides are concepts.
pub fn brute_force_diff(g: &DefGraph, h: &DefGraph) -> Option<(ConceptId, ConceptId)> {
    if g.node_count() != h.node_count() || g.edges().len() != h.edges().len() {
        return None;
    }
    let mut s = Search {
        g,
        h,
        order: bfs_order(g),
        gp: parents(g),
        hp: parents(h),
        map: vec![usize::MAX; g.node_count()],
        used: vec![false; h.node_count()],
        best: None,
    };
    s.run(0, 0);
    let (count, map) = s.best?;
    if count != 1 {
        return None;
    }
    let u = (0..g.node_count()).find(|&u| g.node(u) != h.node(map[u]))?;
    match (g.node(u), h.node(map[u])) {
        (DefNode::Concept(a), DefNode::Concept(b)) => Some((a.clone(), b.clone())),
        _ => None,
    }
}

struct Search<'a> {
    g: &'a DefGraph,
    h: &'a DefGraph,
    order: Vec<usize>,
    gp: Vec<Option<(usize, DefEdge)>>,
    hp: Vec<Option<(usize, DefEdge)>>,
    map: Vec<usize>,
    used: Vec<bool>,
    best: Option<(usize, Vec<usize>)>,
}

impl Search<'_> {
    /// Only whether the minimum is 0, 1 or more matters, so branches with
    /// two mismatches are cut.
    fn run(&mut self, k: usize, mismatches: usize) {
        if mismatches >= 2 || self.best.as_ref().is_some_and(|(b, _)| *b <= mismatches) {
            return;
        }
        if k == self.order.len() {
            self.best = Some((mismatches, self.map.clone()));
            return;
        }
        let u = self.order[k];
        for v in 0..self.h.node_count() {
            if self.used[v] {
                continue;
            }
            let ok = match (&self.gp[u], &self.hp[v]) {
                (None, None) => u == self.g.root() && v == self.h.root(),
                (Some((pu, eu)), Some((pv, ev))) => self.map[*pu] == *pv && eu == ev,
                _ => false,
            };
            if !ok {
                continue;
            }
            let differs = self.g.node(u) != self.h.node(v);
            self.map[u] = v;
            self.used[v] = true;
            self.run(k + 1, mismatches + usize::from(differs));
            self.used[v] = false;
            self.map[u] = usize::MAX;
        }
    }
}

/// Naive 3CosAdd: plain loops over raw rows, ties to the lower index.
pub fn naive_answer(e: &Embedding, q: &Analogy) -> Option<String> {
    let covered = [&q.w1, &q.w2, &q.w3].iter().all(|w| e.contains(w))
        && q.synset.iter().any(|w| e.contains(w));
    if !covered {
        return None;
    }
    let m = e.matrix();
    let (i1, i2, i3) = (e.index(&q.w1)?, e.index(&q.w2)?, e.index(&q.w3)?);
    let d = m.ncols();
    let target: Vec<f64> = (0..d).map(|k| (m[[i3, k]] + m[[i2, k]]) - m[[i1, k]]).collect();
    let tn: f64 = target.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut best = None;
    let mut best_cos = f64::NEG_INFINITY;
    for i in 0..m.nrows() {
        if i == i1 || i == i2 || i == i3 {
            continue;
        }
        let mut dot = 0.0;
        let mut nn = 0.0;
        for k in 0..d {
            dot += m[[i, k]] * target[k];
            nn += m[[i, k]] * m[[i, k]];
        }
        let denom = tn * nn.sqrt();
        let cos = if denom == 0.0 { 0.0 } else { dot / denom };
        if cos > best_cos {
            best_cos = cos;
            best = Some(i);
        }
    }
    best.map(|i| e.words()[i].clone())
}

/// Solves the stationarity system of the retrofitting objective directly.
/// Row `i`: `(deg_i α_i + Σ_j w_ij) q_i − Σ_j w_ij q_j = deg_i α_i q̂_i` for
/// words with neighbours; isolated words keep `q̂_i`.
pub fn dense_retrofit(e: &Embedding, kg: &KnowledgeGraph, cfg: &RetrofitConfig) -> DMatrix<f64> {
    let n = e.len();
    let d = e.dim();
    let weight = |k: EdgeKind| match k {
        EdgeKind::SameTaxon => cfg.same_taxon_weight,
        EdgeKind::HypoHyper => cfg.hypo_hyper_weight,
    };
    let mut w: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (a, b, k) in kg.edges() {
        if let (Some(i), Some(j)) = (e.index(a), e.index(b)) {
            for key in [(i, j), (j, i)] {
                let slot = w.entry(key).or_insert(0.0);
                *slot = slot.max(weight(k));
            }
        }
    }
    let mut deg = vec![0usize; n];
    for &(i, _) in w.keys() {
        deg[i] += 1;
    }
    let alpha: Vec<f64> = e
        .words()
        .iter()
        .map(|word| cfg.word_alpha.get(word).copied().unwrap_or(cfg.alpha))
        .collect();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let anchor = if deg[i] == 0 { 1.0 } else { deg[i] as f64 * alpha[i] };
        a[(i, i)] = anchor;
    }
    for (&(i, j), &wij) in &w {
        a[(i, i)] += wij;
        a[(i, j)] -= wij;
    }
    let m = e.matrix();
    let mut out = DMatrix::<f64>::zeros(n, d);
    let lu = a.lu();
    for k in 0..d {
        let rhs = DVector::from_iterator(
            n,
            (0..n).map(|i| {
                let anchor = if deg[i] == 0 { 1.0 } else { deg[i] as f64 * alpha[i] };
                anchor * m[[i, k]]
            }),
        );
        let x = lu.solve(&rhs).expect("system is non-singular");
        out.set_column(k, &x);
    }
    out
}

/// Fleiss' κ straight from the textbook definition, in floating point.
pub fn fleiss_reference(labels: &[Vec<u8>]) -> f64 {
    let n_items = labels.len() as f64;
    let n = labels[0].len() as f64;
    let cats: BTreeSet<u8> = labels.iter().flatten().copied().collect();
    let mut p_bar = 0.0;
    let mut totals: BTreeMap<u8, f64> = BTreeMap::new();
    for row in labels {
        let mut agree = 0.0;
        for c in &cats {
            let nij = row.iter().filter(|l| *l == c).count() as f64;
            agree += nij * (nij - 1.0);
            *totals.entry(*c).or_default() += nij;
        }
        p_bar += agree / (n * (n - 1.0));
    }
    p_bar /= n_items;
    let p_e: f64 = totals.values().map(|t| (t / (n_items * n)).powi(2)).sum();
    (p_bar - p_e) / (1.0 - p_e)
}

/// Relation classes by transitive closure of the link relation over an
/// explicit reachability matrix.
pub fn closure_classes(analogies: &[Analogy]) -> BTreeSet<BTreeSet<(String, String)>> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    let mut links = Vec::new();
    let id = |p: (String, String), pairs: &mut Vec<(String, String)>| {
        pairs.iter().position(|x| *x == p).unwrap_or_else(|| {
            pairs.push(p);
            pairs.len() - 1
        })
    };
    for a in analogies {
        let h = id((a.w1.clone(), a.w2.clone()), &mut pairs);
        for s in &a.synset {
            let o = id((a.w3.clone(), s.clone()), &mut pairs);
            links.push((h, o));
        }
    }
    let n = pairs.len();
    let mut reach = vec![vec![false; n]; n];
    for (i, row) in reach.iter_mut().enumerate() {
        row[i] = true;
    }
    for (a, b) in links {
        reach[a][b] = true;
        reach[b][a] = true;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if reach[i][k] && reach[k][j] {
                    reach[i][j] = true;
                }
            }
        }
    }
    (0..n)
        .map(|i| (0..n).filter(|&j| reach[i][j]).map(|j| pairs[j].clone()).collect())
        .collect()
}
