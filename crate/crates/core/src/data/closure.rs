//! Per-relation transitive closures with minimal hierarchy gaps.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::{EntityId, RelationId, RelationKind, TripleStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeSource {
    Train,
    /// Train, valid and test edges together.
    All,
}

/// Parent→child edges of a hierarchical relation. Hypernym edges are
/// reversed; a reciprocal relation yields the same edges as its base.
pub fn oriented_edges(
    store: &TripleStore,
    relation: RelationId,
    source: EdgeSource,
) -> Result<Vec<(EntityId, EntityId)>> {
    let vocab = &store.vocab;
    if relation >= vocab.num_relations() {
        return Err(Error::contract(format!("relation id {relation} out of range")));
    }
    let base = if vocab.is_reciprocal(relation) { vocab.reciprocal(relation) } else { relation };
    let kind = vocab.kind(base);
    if !kind.is_hierarchical() {
        return Err(Error::contract(format!(
            "closure requested for non-hierarchical relation `{}`",
            vocab.relation(relation).name
        )));
    }
    let splits: &[&[super::Triple]] = match source {
        EdgeSource::Train => &[&store.train],
        EdgeSource::All => &[&store.train, &store.valid, &store.test],
    };
    let mut edges: Vec<(EntityId, EntityId)> = splits
        .iter()
        .flat_map(|s| s.iter())
        .filter(|t| t.relation == base)
        .map(|t| match kind {
            RelationKind::Hypernym => (t.tail, t.head),
            _ => (t.head, t.tail),
        })
        .collect();
    edges.sort_unstable();
    edges.dedup();
    Ok(edges)
}

/// All `(ancestor, descendant)` pairs joined by a directed path of one
/// relation, each with its shortest path length. Self pairs are excluded.
#[derive(Debug, Clone, Default)]
pub struct Closure {
    pairs: Vec<(EntityId, EntityId, u32)>,
    gaps: HashMap<(EntityId, EntityId), u32>,
    ancestors: HashMap<EntityId, Vec<(EntityId, u32)>>,
}

impl Closure {
    /// BFS from every node with outgoing edges.
    pub fn from_edges(edges: &[(EntityId, EntityId)]) -> Self {
        let mut children: HashMap<EntityId, Vec<EntityId>> = HashMap::new();
        for &(p, c) in edges {
            children.entry(p).or_default().push(c);
        }
        let mut sources: Vec<EntityId> = children.keys().copied().collect();
        sources.sort_unstable();

        let mut pairs = Vec::new();
        let mut dist: HashMap<EntityId, u32> = HashMap::new();
        let mut queue = VecDeque::new();
        for &s in &sources {
            dist.clear();
            queue.clear();
            dist.insert(s, 0);
            queue.push_back(s);
            while let Some(u) = queue.pop_front() {
                let du = dist[&u];
                for &v in children.get(&u).map(Vec::as_slice).unwrap_or(&[]) {
                    if !dist.contains_key(&v) {
                        dist.insert(v, du + 1);
                        queue.push_back(v);
                    }
                }
            }
            let mut reached: Vec<(EntityId, u32)> =
                dist.iter().filter(|(&v, _)| v != s).map(|(&v, &g)| (v, g)).collect();
            reached.sort_unstable();
            pairs.extend(reached.into_iter().map(|(v, g)| (s, v, g)));
        }

        let gaps = pairs.iter().map(|&(a, d, g)| ((a, d), g)).collect();
        let mut ancestors: HashMap<EntityId, Vec<(EntityId, u32)>> = HashMap::new();
        for &(a, d, g) in &pairs {
            ancestors.entry(d).or_default().push((a, g));
        }
        Self { pairs, gaps, ancestors }
    }

    /// Pairs sorted by `(ancestor, descendant)`.
    pub fn pairs(&self) -> &[(EntityId, EntityId, u32)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, ancestor: EntityId, descendant: EntityId) -> bool {
        self.gaps.contains_key(&(ancestor, descendant))
    }

    pub fn gap(&self, ancestor: EntityId, descendant: EntityId) -> Option<u32> {
        self.gaps.get(&(ancestor, descendant)).copied()
    }

    /// Strict ancestors of `node` with gaps, sorted by ancestor id.
    pub fn ancestors(&self, node: EntityId) -> &[(EntityId, u32)] {
        self.ancestors.get(&node).map(Vec::as_slice).unwrap_or(&[])
    }
}

pub fn transitive_closure(store: &TripleStore, relation: RelationId, source: EdgeSource) -> Result<Closure> {
    Ok(Closure::from_edges(&oriented_edges(store, relation, source)?))
}
