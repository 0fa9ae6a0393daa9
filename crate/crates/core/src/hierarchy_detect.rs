//! Krackhardt hierarchy statistics for a whole graph and per-relation
//! hierarchical-ness scores used to classify relations.

use std::collections::HashMap;
use std::fmt;

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{RelationId, RelationKind, TripleStore};
use crate::error::{Error, Result};

/// Weight on the redundant-edge ratio in the efficiency score.
pub const EFFICIENCY_ALPHA: f64 = 500.0;
pub const DEFAULT_THRESHOLD: f64 = 1.1;

/// Directed graph on nodes `0..n` whose edges carry a relation label.
#[derive(Debug, Clone, Default)]
pub struct LabeledGraph {
    pub n: usize,
    pub edges: Vec<(usize, usize, usize)>,
    /// Labels whose induced subgraphs may supply a common ancestor for
    /// LUBedness.
    pub lub_labels: Vec<usize>,
}

impl LabeledGraph {
    /// Single-label graph.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        Self { n, edges: edges.iter().map(|&(u, v)| (u, v, 0)).collect(), lub_labels: vec![0] }
    }

    /// Training edges of every base relation, hypernym edges reversed so all
    /// hierarchical edges point from parent to child. LUBedness uses the
    /// hierarchical relations when any are known, otherwise every relation.
    pub fn from_store(store: &TripleStore) -> Self {
        let vocab = &store.vocab;
        let edges = store
            .train
            .iter()
            .map(|t| match vocab.kind(t.relation) {
                RelationKind::Hypernym => (t.tail, t.head, t.relation),
                _ => (t.head, t.tail, t.relation),
            })
            .collect();
        let hier = vocab.hierarchical_base_relations();
        let lub_labels = if hier.is_empty() { (0..vocab.num_base_relations()).collect() } else { hier };
        Self { n: store.num_entities(), edges, lub_labels }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KrackhardtScores {
    pub connectedness: f64,
    pub hierarchy: f64,
    pub efficiency: f64,
    pub lubedness: f64,
}

impl fmt::Display for KrackhardtScores {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "connectedness {:.4}  hierarchy {:.4}  efficiency {:.4}  LUBedness {:.4}",
            self.connectedness, self.hierarchy, self.efficiency, self.lubedness
        )
    }
}

/// Distinct directed edges without self loops.
fn simple_edges(edges: impl IntoIterator<Item = (usize, usize)>) -> Vec<(usize, usize)> {
    let mut e: Vec<(usize, usize)> = edges.into_iter().filter(|(u, v)| u != v).collect();
    e.sort_unstable();
    e.dedup();
    e
}

fn union_find_sizes(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut parent: Vec<usize> = (0..n).collect();
    for &(u, v) in edges {
        let (a, b) = (find(&mut parent, u), find(&mut parent, v));
        if a != b {
            parent[a] = b;
        }
    }
    let mut sizes: HashMap<usize, usize> = HashMap::new();
    for x in 0..n {
        *sizes.entry(find(&mut parent, x)).or_default() += 1;
    }
    let mut s: Vec<usize> = sizes.into_values().collect();
    s.sort_unstable();
    s
}

/// Ordered pairs `(u, v)`, `u ≠ v`, joined in the underlying undirected
/// graph.
fn connected_ordered_pairs(n: usize, edges: &[(usize, usize)]) -> u128 {
    union_find_sizes(n, edges).into_iter().map(|s| (s as u128) * (s as u128 - 1)).sum()
}

/// Strongly connected components, successors before predecessors.
struct Condensation {
    comp_of: Vec<usize>,
    comps: Vec<Vec<usize>>,
    succ: Vec<Vec<usize>>,
    has_pred: Vec<bool>,
}

fn condense(n: usize, edges: &[(usize, usize)]) -> Condensation {
    let mut g: DiGraph<(), ()> = DiGraph::with_capacity(n, edges.len());
    for _ in 0..n {
        g.add_node(());
    }
    for &(u, v) in edges {
        g.add_edge(NodeIndex::new(u), NodeIndex::new(v), ());
    }
    let comps: Vec<Vec<usize>> =
        tarjan_scc(&g).into_iter().map(|c| c.into_iter().map(|x| x.index()).collect()).collect();
    let mut comp_of = vec![0; n];
    for (i, c) in comps.iter().enumerate() {
        for &x in c {
            comp_of[x] = i;
        }
    }
    let mut succ = vec![Vec::new(); comps.len()];
    let mut has_pred = vec![false; comps.len()];
    for &(u, v) in edges {
        let (a, b) = (comp_of[u], comp_of[v]);
        if a != b {
            succ[a].push(b);
            has_pred[b] = true;
        }
    }
    for s in &mut succ {
        s.sort_unstable();
        s.dedup();
    }
    Condensation { comp_of, comps, succ, has_pred }
}

/// Number of nodes reachable from each component, itself included.
/// Bit rows over node columns are processed in blocks to bound memory.
fn reach_sizes(c: &Condensation, n: usize) -> Vec<u64> {
    let nc = c.comps.len();
    let mut sizes = vec![0u64; nc];
    if n == 0 {
        return sizes;
    }
    let words_total = n.div_ceil(64);
    let block_words = (8_000_000 / nc.max(1)).clamp(1, words_total);
    let mut lo_word = 0;
    while lo_word < words_total {
        let hi_word = (lo_word + block_words).min(words_total);
        let w = hi_word - lo_word;
        let mut rows = vec![0u64; nc * w];
        for a in 0..nc {
            for &x in &c.comps[a] {
                let word = x / 64;
                if (lo_word..hi_word).contains(&word) {
                    rows[a * w + word - lo_word] |= 1 << (x % 64);
                }
            }
            for &b in &c.succ[a] {
                // Successors precede `a` in tarjan order.
                debug_assert!(b < a);
                let (head, tail) = rows.split_at_mut(a * w);
                for (dst, src) in tail[..w].iter_mut().zip(&head[b * w..(b + 1) * w]) {
                    *dst |= *src;
                }
            }
            sizes[a] += rows[a * w..(a + 1) * w].iter().map(|x| x.count_ones() as u64).sum::<u64>();
        }
        lo_word = hi_word;
    }
    sizes
}

/// `(|T|, |S|)`: reachable ordered pairs and those not reachable back.
fn reachability_pairs(n: usize, edges: &[(usize, usize)]) -> (u128, u128) {
    let c = condense(n, edges);
    let reach = reach_sizes(&c, n);
    let (mut t, mut s) = (0u128, 0u128);
    for (a, comp) in c.comps.iter().enumerate() {
        let size = comp.len() as u128;
        let cross = size * (reach[a] as u128 - size);
        t += size * (size - 1) + cross;
        s += cross;
    }
    (t, s)
}

/// `|S| / |T|`, or 1 when nothing is reachable.
pub fn hierarchy_degree(n: usize, edges: &[(usize, usize)]) -> f64 {
    let edges = simple_edges(edges.iter().copied());
    let (t, s) = reachability_pairs(n, &edges);
    if t == 0 {
        1.0
    } else {
        s as f64 / t as f64
    }
}

/// Ordered pairs `(u, v)`, `u ≠ v`, with a common ancestor (a node counts
/// as its own ancestor) inside one of the given edge sets.
fn common_ancestor_pairs(n: usize, edge_sets: &[Vec<(usize, usize)>]) -> u128 {
    // Only source components matter: any ancestor's descendants are covered
    // by those of a source component above it.
    let mut signature: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut children: Vec<Vec<Vec<usize>>> = Vec::with_capacity(edge_sets.len());
    let mut roots: Vec<Vec<Vec<usize>>> = Vec::with_capacity(edge_sets.len());
    let mut stamp = vec![usize::MAX; n];
    let mut generation = 0usize;
    let mut stack = Vec::new();
    for (l, edges) in edge_sets.iter().enumerate() {
        let mut ch = vec![Vec::new(); n];
        for &(u, v) in edges {
            ch[u].push(v);
        }
        let c = condense(n, edges);
        let mut label_roots = Vec::new();
        for (a, comp) in c.comps.iter().enumerate() {
            if c.has_pred[a] || (comp.len() == 1 && c.succ[a].is_empty()) {
                continue;
            }
            let id = label_roots.len();
            generation += 1;
            stack.clear();
            stack.extend(comp.iter().copied());
            for &x in comp {
                stamp[x] = generation;
            }
            while let Some(x) = stack.pop() {
                signature[x].push((l, id));
                for &y in &ch[x] {
                    if stamp[y] != generation {
                        stamp[y] = generation;
                        stack.push(y);
                    }
                }
            }
            label_roots.push(comp.clone());
        }
        debug_assert_eq!(c.comp_of.len(), n);
        children.push(ch);
        roots.push(label_roots);
    }
    let mut groups: HashMap<Vec<(usize, usize)>, u128> = HashMap::new();
    for sig in signature.iter_mut().filter(|s| !s.is_empty()) {
        sig.sort_unstable();
        *groups.entry(std::mem::take(sig)).or_default() += 1;
    }
    let mut groups: Vec<(Vec<(usize, usize)>, u128)> = groups.into_iter().collect();
    groups.sort_unstable();
    // `counted` marks nodes reached by any label of the group; `stamp`
    // marks nodes expanded along the current label.
    let mut counted = vec![usize::MAX; n];
    let mut total = 0u128;
    for (gi, (sig, count)) in groups.into_iter().enumerate() {
        let mut reached = 0u128;
        for &(l, id) in &sig {
            generation += 1;
            stack.clear();
            for &x in &roots[l][id] {
                stamp[x] = generation;
                stack.push(x);
            }
            while let Some(x) = stack.pop() {
                if counted[x] != gi {
                    counted[x] = gi;
                    reached += 1;
                }
                for &y in &children[l][x] {
                    if stamp[y] != generation {
                        stamp[y] = generation;
                        stack.push(y);
                    }
                }
            }
        }
        total += count * (reached - 1);
    }
    total
}

pub fn krackhardt(graph: &LabeledGraph) -> Result<KrackhardtScores> {
    let n = graph.n;
    if n < 2 {
        return Err(Error::Config(format!("Krackhardt scores need at least 2 nodes, got {n}")));
    }
    if let Some(&(u, v, _)) = graph.edges.iter().find(|&&(u, v, _)| u >= n || v >= n) {
        return Err(Error::contract(format!("edge ({u}, {v}) outside 0..{n}")));
    }
    let edges = simple_edges(graph.edges.iter().map(|&(u, v, _)| (u, v)));
    let nf = n as f64;

    let connectedness = connected_ordered_pairs(n, &edges) as f64 / (nf * (nf - 1.0));

    let (t, s) = reachability_pairs(n, &edges);
    let hierarchy = if t == 0 { 1.0 } else { s as f64 / t as f64 };

    let m = edges.len() as f64;
    let efficiency = if n == 2 {
        if m <= 1.0 {
            1.0
        } else {
            0.0
        }
    } else {
        let max_redundant = (nf - 1.0) * (nf - 2.0) / 2.0;
        (1.0 - EFFICIENCY_ALPHA * (m - (nf - 1.0)) / max_redundant).clamp(0.0, 1.0)
    };

    let mut labels = graph.lub_labels.clone();
    labels.sort_unstable();
    labels.dedup();
    let sets: Vec<Vec<(usize, usize)>> = labels
        .iter()
        .map(|&l| simple_edges(graph.edges.iter().filter(|e| e.2 == l).map(|&(u, v, _)| (u, v))))
        .collect();
    let lubedness = common_ancestor_pairs(n, &sets) as f64 / (nf * (nf - 1.0));

    Ok(KrackhardtScores {
        connectedness: connectedness.clamp(0.0, 1.0),
        hierarchy: hierarchy.clamp(0.0, 1.0),
        efficiency,
        lubedness: lubedness.clamp(0.0, 1.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HierarchicalnessScores {
    pub asymmetry: f64,
    pub tree_likeness: f64,
    pub total: f64,
    pub kind: RelationKind,
    /// Fraction of nodes with both incoming and outgoing edges.
    pub decay: f64,
    pub lub_forward: f64,
    pub lub_reverse: f64,
}

/// Scores the graph induced by `edges` (node ids arbitrary).
pub fn scores_from_edges(edges: &[(usize, usize)], threshold: f64) -> Result<HierarchicalnessScores> {
    let mut ids: HashMap<usize, usize> = HashMap::new();
    let mut local = Vec::with_capacity(edges.len());
    for &(u, v) in edges {
        let n = ids.len();
        let a = *ids.entry(u).or_insert(n);
        let n = ids.len();
        let b = *ids.entry(v).or_insert(n);
        local.push((a, b));
    }
    let n = ids.len();
    let edges = simple_edges(local);
    if edges.is_empty() {
        return Err(Error::Empty("induced subgraph"));
    }
    let reversed: Vec<(usize, usize)> = simple_edges(edges.iter().map(|&(u, v)| (v, u)));

    let (t, s) = reachability_pairs(n, &edges);
    let asymmetry = s as f64 / t as f64;

    let p = connected_ordered_pairs(n, &edges) as f64;
    let lub_forward = common_ancestor_pairs(n, std::slice::from_ref(&edges)) as f64 / p;
    let lub_reverse = common_ancestor_pairs(n, std::slice::from_ref(&reversed)) as f64 / p;

    let (mut has_out, mut has_in) = (vec![false; n], vec![false; n]);
    for &(u, v) in &edges {
        has_out[u] = true;
        has_in[v] = true;
    }
    let both = (0..n).filter(|&x| has_out[x] && has_in[x]).count();
    let decay = both as f64 / n as f64;
    // No node with both in- and out-edges: the punishment grows without
    // bound, so the limit value 0 is used.
    let tree_likeness = if both == 0 { 0.0 } else { (lub_forward - lub_reverse) / decay.log10().powi(2).max(1.0) };
    let total = asymmetry + tree_likeness.abs();
    let kind = if total >= threshold && tree_likeness > 0.0 {
        RelationKind::Hyponym
    } else if total >= threshold && tree_likeness < 0.0 {
        RelationKind::Hypernym
    } else {
        RelationKind::NonHierarchical
    };
    Ok(HierarchicalnessScores { asymmetry, tree_likeness, total, kind, decay, lub_forward, lub_reverse })
}

/// Scores of a base relation over its training edges, in stored direction.
pub fn relation_scores(store: &TripleStore, relation: RelationId, threshold: f64) -> Result<HierarchicalnessScores> {
    if relation >= store.vocab.num_base_relations() {
        return Err(Error::contract(format!("relation {relation} is not a base relation")));
    }
    let edges: Vec<(usize, usize)> =
        store.train.iter().filter(|t| t.relation == relation).map(|t| (t.head, t.tail)).collect();
    scores_from_edges(&edges, threshold)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelationClassification {
    pub relation: RelationId,
    pub name: String,
    pub scores: HierarchicalnessScores,
}

pub fn classify_all(store: &TripleStore, threshold: f64) -> Result<Vec<RelationClassification>> {
    (0..store.vocab.num_base_relations())
        .into_par_iter()
        .map(|r| {
            Ok(RelationClassification {
                relation: r,
                name: store.vocab.relation(r).name.clone(),
                scores: relation_scores(store, r, threshold)?,
            })
        })
        .collect()
}

/// Aligned text table, highest total first.
pub fn format_table(rows: &[RelationClassification]) -> String {
    let mut sorted: Vec<&RelationClassification> = rows.iter().collect();
    sorted.sort_by(|a, b| b.scores.total.total_cmp(&a.scores.total).then(a.name.cmp(&b.name)));
    let width = sorted.iter().map(|r| r.name.len()).max().unwrap_or(8).max(8);
    let mut s = format!(
        "{:<width$}  {:>9}  {:>13}  {:>6}  {:<8}  {}\n",
        "relation", "asymmetry", "tree_likeness", "total", "kind", "hierarchical"
    );
    for r in sorted {
        s.push_str(&format!(
            "{:<width$}  {:>9.4}  {:>13.4}  {:>6.2}  {:<8}  {}\n",
            r.name,
            r.scores.asymmetry,
            r.scores.tree_likeness,
            r.scores.total,
            r.scores.kind.as_str(),
            r.scores.kind.is_hierarchical()
        ));
    }
    s
}
