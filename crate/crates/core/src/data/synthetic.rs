//! Synthetic knowledge graph with overlapping hyponym forests and a
//! symmetric sibling relation.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{EntityId, RelationInfo, RelationKind, Triple, TripleStore, Vocab};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub entities: usize,
    pub hierarchies: usize,
    /// Edges on a root-to-leaf path of a full tree.
    pub depth: usize,
    pub branching: usize,
    /// Unordered sibling pairs; each is emitted in both directions.
    pub sibling_links: usize,
    /// Fraction of tree edges withheld from train, split between valid and
    /// test.
    pub missing_rate: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { entities: 300, hierarchies: 2, depth: 4, branching: 3, sibling_links: 100, missing_rate: 0.1 }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticKg {
    pub store: TripleStore,
    /// Relation id of each hierarchy.
    pub hierarchy_relations: Vec<usize>,
    pub sibling_relation: usize,
    /// `parents[h][e]`: parent of `e` in hierarchy `h`.
    pub parents: Vec<Vec<Option<EntityId>>>,
    /// Ground-truth `(ancestor, descendant, gap)` per hierarchy, sorted.
    pub closures: Vec<Vec<(EntityId, EntityId, u32)>>,
}

/// Fills trees breadth-first over `order` until the entities run out.
fn build_forest(order: &[EntityId], n: usize, depth: usize, branching: usize) -> Vec<Option<EntityId>> {
    let mut parent = vec![None; n];
    let mut next = 0;
    while next < order.len() {
        let root = order[next];
        next += 1;
        let mut level = vec![root];
        for _ in 0..depth {
            let mut children = Vec::new();
            for &p in &level {
                for _ in 0..branching {
                    if next == order.len() {
                        return parent;
                    }
                    let c = order[next];
                    next += 1;
                    parent[c] = Some(p);
                    children.push(c);
                }
            }
            level = children;
        }
    }
    parent
}

pub fn synthetic_kg<R: Rng>(spec: &SyntheticSpec, rng: &mut R) -> Result<SyntheticKg> {
    if spec.entities < 2 {
        return Err(Error::Config("synthetic graph needs at least 2 entities".into()));
    }
    if spec.hierarchies == 0 || spec.depth == 0 || spec.branching == 0 {
        return Err(Error::Config("hierarchies, depth and branching must be positive".into()));
    }
    if !(0.0..1.0).contains(&spec.missing_rate) {
        return Err(Error::Config(format!("missing rate {} outside [0, 1)", spec.missing_rate)));
    }
    let n = spec.entities;
    let entities: Vec<String> = (0..n).map(|i| format!("e{i:04}")).collect();
    let mut relations: Vec<RelationInfo> = (0..spec.hierarchies)
        .map(|h| RelationInfo { name: format!("hyponym_{h}"), kind: RelationKind::Hyponym })
        .collect();
    relations.push(RelationInfo { name: "sibling".into(), kind: RelationKind::NonHierarchical });
    let sibling_relation = spec.hierarchies;

    let mut parents = Vec::with_capacity(spec.hierarchies);
    let mut train = Vec::new();
    let mut valid = Vec::new();
    let mut test = Vec::new();
    for h in 0..spec.hierarchies {
        let mut order: Vec<EntityId> = (0..n).collect();
        order.shuffle(rng);
        let parent = build_forest(&order, n, spec.depth, spec.branching);
        let mut edges: Vec<Triple> = (0..n).filter_map(|c| parent[c].map(|p| Triple::new(p, h, c))).collect();
        let withheld = (spec.missing_rate * edges.len() as f64).round() as usize;
        let mut held: Vec<usize> = sample(rng, edges.len(), withheld).into_vec();
        held.sort_unstable();
        for (i, &e) in held.iter().enumerate().rev() {
            let t = edges.swap_remove(e);
            if i % 2 == 0 {
                valid.push(t);
            } else {
                test.push(t);
            }
        }
        train.extend(edges);
        parents.push(parent);
    }

    let mut sibling_pairs = BTreeSet::new();
    for parent in &parents {
        let mut families: Vec<Vec<EntityId>> = vec![Vec::new(); n];
        for (c, p) in parent.iter().enumerate() {
            if let Some(p) = p {
                families[*p].push(c);
            }
        }
        for fam in families {
            for (i, &a) in fam.iter().enumerate() {
                for &b in &fam[i + 1..] {
                    sibling_pairs.insert((a.min(b), a.max(b)));
                }
            }
        }
    }
    let sibling_pairs: Vec<(EntityId, EntityId)> = sibling_pairs.into_iter().collect();
    if spec.sibling_links > sibling_pairs.len() {
        return Err(Error::Config(format!(
            "{} sibling links requested but only {} sibling pairs exist",
            spec.sibling_links,
            sibling_pairs.len()
        )));
    }
    let mut picked = sample(rng, sibling_pairs.len(), spec.sibling_links).into_vec();
    picked.sort_unstable();
    for i in picked {
        let (a, b) = sibling_pairs[i];
        train.push(Triple::new(a, sibling_relation, b));
        train.push(Triple::new(b, sibling_relation, a));
    }

    let closures = parents
        .iter()
        .map(|parent| {
            let mut pairs = Vec::new();
            for d in 0..n {
                let mut cur = parent[d];
                let mut gap = 1;
                while let Some(a) = cur {
                    pairs.push((a, d, gap));
                    cur = parent[a];
                    gap += 1;
                }
            }
            pairs.sort_unstable();
            pairs
        })
        .collect();

    let vocab = Vocab::new(entities, relations)?;
    let (store, _) = TripleStore::from_splits(vocab, train, valid, test)?;
    Ok(SyntheticKg { store, hierarchy_relations: (0..spec.hierarchies).collect(), sibling_relation, parents, closures })
}
