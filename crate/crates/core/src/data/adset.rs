//! Ancestor-descendant test sets with a controlled share of inferred pairs.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{transitive_closure, Closure, EdgeSource, EntityId, RelationId, TripleStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdPair {
    pub ancestor: EntityId,
    pub descendant: EntityId,
    /// Base relation id.
    pub relation: RelationId,
    pub positive: bool,
    /// Positive pair absent from the training closure.
    pub inferred: bool,
    /// Shortest path length in the full graph; `None` (infinite) for
    /// negatives.
    pub gap: Option<u32>,
}

/// Splits `total` over `weights` proportionally with largest remainders,
/// ties going to the lower index.
fn apportion(total: usize, weights: &[usize]) -> Vec<usize> {
    let sum: usize = weights.iter().sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let mut out: Vec<usize> = weights.iter().map(|&w| total * w / sum).collect();
    let mut rem: Vec<(usize, usize)> = weights.iter().enumerate().map(|(i, &w)| (total * w % sum, i)).collect();
    rem.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let short = total - out.iter().sum::<usize>();
    for &(_, i) in rem.iter().take(short) {
        out[i] += 1;
    }
    out
}

/// Draws `k` items, without replacement when `k <= pool.len()`.
fn draw<T: Copy, R: Rng>(pool: &[T], k: usize, rng: &mut R) -> Vec<T> {
    if k <= pool.len() {
        let mut idx = sample(rng, pool.len(), k).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| pool[i]).collect()
    } else {
        (0..k).map(|_| pool[rng.gen_range(0..pool.len())]).collect()
    }
}

/// Samples `pairs` positives, `inferred_fraction` of them from
/// `closure(all) \ closure(train)`, each followed by one negative sharing the
/// ancestor. Positives are stratified over hierarchical relations in
/// proportion to the size of each relation's pool.
pub fn build_ad_testset<R: Rng>(
    store: &TripleStore,
    inferred_fraction: f64,
    pairs: usize,
    rng: &mut R,
) -> Result<Vec<AdPair>> {
    if !(0.0..=1.0).contains(&inferred_fraction) {
        return Err(Error::Config(format!("inferred fraction {inferred_fraction} outside [0, 1]")));
    }
    let relations = store.vocab.hierarchical_base_relations();
    if relations.is_empty() {
        return Err(Error::Unsatisfiable("no hierarchical relation in the store".into()));
    }
    let mut train_pools = Vec::new();
    let mut inferred_pools = Vec::new();
    let mut all_closures: Vec<Closure> = Vec::new();
    for &r in &relations {
        let train = transitive_closure(store, r, EdgeSource::Train)?;
        let all = transitive_closure(store, r, EdgeSource::All)?;
        train_pools.push(train.pairs().iter().map(|&(a, d, _)| (a, d)).collect::<Vec<_>>());
        inferred_pools.push(
            all.pairs().iter().filter(|&&(a, d, _)| !train.contains(a, d)).map(|&(a, d, _)| (a, d)).collect::<Vec<_>>(),
        );
        all_closures.push(all);
    }

    let n_inferred = (inferred_fraction * pairs as f64).round() as usize;
    let n_train = pairs - n_inferred;
    let avail_inferred: usize = inferred_pools.iter().map(Vec::len).sum();
    let avail_train: usize = train_pools.iter().map(Vec::len).sum();
    if n_inferred > 0 && avail_inferred == 0 {
        return Err(Error::Unsatisfiable(format!(
            "{n_inferred} inferred pairs requested but none exist ({avail_train} training-closure pairs available)"
        )));
    }
    if n_train > 0 && avail_train == 0 {
        return Err(Error::Unsatisfiable(format!(
            "{n_train} training-closure pairs requested but none exist ({avail_inferred} inferred pairs available)"
        )));
    }
    if n_inferred > avail_inferred || n_train > avail_train {
        log::warn!(
            "sampling with replacement: requested {n_train} train / {n_inferred} inferred, \
             available {avail_train} / {avail_inferred}"
        );
    }
    let train_quota = apportion(n_train, &train_pools.iter().map(Vec::len).collect::<Vec<_>>());
    let inferred_quota = apportion(n_inferred, &inferred_pools.iter().map(Vec::len).collect::<Vec<_>>());

    let n = store.num_entities();
    let mut out = Vec::with_capacity(2 * pairs);
    for (i, &r) in relations.iter().enumerate() {
        let all = &all_closures[i];
        let chosen = draw(&train_pools[i], train_quota[i], rng)
            .into_iter()
            .map(|p| (p, false))
            .chain(draw(&inferred_pools[i], inferred_quota[i], rng).into_iter().map(|p| (p, true)))
            .collect::<Vec<_>>();
        let mut saturated: HashSet<EntityId> = HashSet::new();
        for ((a, d), inferred) in chosen {
            out.push(AdPair { ancestor: a, descendant: d, relation: r, positive: true, inferred, gap: all.gap(a, d) });
            let corrupted = corrupt(a, all, n, &mut saturated, rng)?;
            out.push(AdPair {
                ancestor: a,
                descendant: corrupted,
                relation: r,
                positive: false,
                inferred: false,
                gap: None,
            });
        }
    }
    Ok(out)
}

/// Random entity that is neither `ancestor` nor one of its descendants.
fn corrupt<R: Rng>(
    ancestor: EntityId,
    all: &Closure,
    n: usize,
    saturated: &mut HashSet<EntityId>,
    rng: &mut R,
) -> Result<EntityId> {
    let ok = |e: EntityId| e != ancestor && !all.contains(ancestor, e);
    if !saturated.contains(&ancestor) {
        for _ in 0..64 {
            let e = rng.gen_range(0..n);
            if ok(e) {
                return Ok(e);
            }
        }
        saturated.insert(ancestor);
    }
    let candidates: Vec<EntityId> = (0..n).filter(|&e| ok(e)).collect();
    if candidates.is_empty() {
        return Err(Error::Unsatisfiable(format!("entity {ancestor} is an ancestor of every other entity")));
    }
    Ok(candidates[rng.gen_range(0..candidates.len())])
}

/// Writes pairs as TSV: `ancestor relation descendant label inferred gap`.
pub fn write_ad_pairs(path: &Path, store: &TripleStore, pairs: &[AdPair]) -> Result<()> {
    let mut s = String::from("ancestor\trelation\tdescendant\tlabel\tinferred\tgap\n");
    for p in pairs {
        let gap = p.gap.map_or_else(|| "inf".to_string(), |g| g.to_string());
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}",
            store.vocab.entity_name(p.ancestor),
            store.vocab.relation(p.relation).name,
            store.vocab.entity_name(p.descendant),
            if p.positive { 1 } else { 0 },
            p.inferred,
            gap
        );
    }
    std::fs::write(path, s)?;
    Ok(())
}
