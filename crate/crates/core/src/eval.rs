//! Filtered link-prediction ranking, ancestor-descendant classification
//! metrics, and lowest-common-ancestor prediction.
//!
//! Ranks use the mean position among ties: `1 + greater + tied / 2`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cone_model::ConeModel;
use crate::data::{transitive_closure, AdPair, Closure, EdgeSource, EntityId, RelationId, Split, TripleStore};
use crate::error::{Error, Result};

pub const HITS_AT: [usize; 3] = [1, 3, 10];

/// Rank of a candidate scoring `target` among `others` (higher is better).
pub fn tie_rank(target: f64, others: impl IntoIterator<Item = f64>) -> f64 {
    let (mut greater, mut tied) = (0usize, 0usize);
    for s in others {
        if s > target {
            greater += 1;
        } else if s == target {
            tied += 1;
        }
    }
    1.0 + greater as f64 + tied as f64 / 2.0
}

/// Rank of `scores[target]` ignoring the entries listed in the sorted slice
/// `filtered` (the target itself is never ignored).
pub fn filtered_rank(scores: &[f64], target: usize, filtered: &[usize]) -> f64 {
    let t = scores[target];
    tie_rank(
        t,
        scores.iter().enumerate().filter(|&(i, _)| i != target && filtered.binary_search(&i).is_err()).map(|(_, &s)| s),
    )
}

pub fn raw_rank(scores: &[f64], target: usize) -> f64 {
    filtered_rank(scores, target, &[])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankingSummary {
    pub queries: usize,
    pub mrr: f64,
    pub hits: BTreeMap<usize, f64>,
}

impl RankingSummary {
    pub fn from_ranks(ranks: &[f64]) -> Self {
        let n = ranks.len();
        let denom = n.max(1) as f64;
        let mrr = ranks.iter().map(|r| 1.0 / r).sum::<f64>() / denom;
        let hits =
            HITS_AT.iter().map(|&k| (k, ranks.iter().filter(|&&r| r <= k as f64).count() as f64 / denom)).collect();
        Self { queries: n, mrr, hits }
    }

    pub fn hits_at(&self, k: usize) -> f64 {
        self.hits.get(&k).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankingReport {
    pub queries: usize,
    pub mrr: f64,
    pub hits: BTreeMap<usize, f64>,
    /// Unfiltered ranking over the same queries.
    pub raw: Option<RankingSummary>,
    pub per_relation: BTreeMap<String, RankingSummary>,
    /// Queries dropped before ranking (e.g. no true answer).
    pub skipped: usize,
}

impl RankingReport {
    fn new(ranks: &[f64], raw: Option<&[f64]>, per_relation: BTreeMap<String, RankingSummary>, skipped: usize) -> Self {
        let s = RankingSummary::from_ranks(ranks);
        Self {
            queries: s.queries,
            mrr: s.mrr,
            hits: s.hits,
            raw: raw.map(RankingSummary::from_ranks),
            per_relation,
            skipped,
        }
    }

    pub fn hits_at(&self, k: usize) -> f64 {
        self.hits.get(&k).copied().unwrap_or(0.0)
    }
}

impl fmt::Display for RankingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "MRR {:.4}  H@1 {:.4}  H@3 {:.4}  H@10 {:.4}  ({} queries",
            self.mrr,
            self.hits_at(1),
            self.hits_at(3),
            self.hits_at(10),
            self.queries
        )?;
        if self.skipped > 0 {
            write!(f, ", {} skipped", self.skipped)?;
        }
        writeln!(f, ")")?;
        for (name, s) in &self.per_relation {
            writeln!(
                f,
                "  {name:<32} MRR {:.4}  H@1 {:.4}  H@10 {:.4}  n={}",
                s.mrr,
                s.hits_at(1),
                s.hits_at(10),
                s.queries
            )?;
        }
        Ok(())
    }
}

fn check_compatible(model: &ConeModel, store: &TripleStore) -> Result<()> {
    if model.vocab.num_entities() != store.num_entities() {
        return Err(Error::DimensionMismatch { expected: store.num_entities(), found: model.vocab.num_entities() });
    }
    if model.vocab.relations() != store.vocab.relations() || model.vocab.entity_names() != store.vocab.entity_names() {
        return Err(Error::contract("model and data dictionaries differ"));
    }
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct KgcOptions {
    /// Evaluate only the first `n` triples of the split.
    pub max_queries: Option<usize>,
}

/// Filtered tail and head (via reciprocal) prediction over a split.
pub fn kg_completion(model: &ConeModel, store: &TripleStore, split: Split, opts: &KgcOptions) -> Result<RankingReport> {
    check_compatible(model, store)?;
    let triples = store.split(split);
    let triples = &triples[..opts.max_queries.map_or(triples.len(), |m| m.min(triples.len()))];
    let vocab = &store.vocab;
    let queries: Vec<(EntityId, RelationId, EntityId, RelationId)> = triples
        .iter()
        .flat_map(|t| {
            [(t.head, t.relation, t.tail, t.relation), (t.tail, vocab.reciprocal(t.relation), t.head, t.relation)]
        })
        .collect();
    let ranks: Vec<(f64, f64)> = queries
        .par_iter()
        .map_init(Vec::new, |buf, &(h, r, t, _)| {
            model.score_all_tails(h, r, buf);
            (filtered_rank(buf, t, store.known_tails(h, r)), raw_rank(buf, t))
        })
        .collect();
    let mut by_rel: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (q, (f, _)) in queries.iter().zip(&ranks) {
        by_rel.entry(vocab.relation(q.3).name.clone()).or_default().push(*f);
    }
    let filtered: Vec<f64> = ranks.iter().map(|r| r.0).collect();
    let raw: Vec<f64> = ranks.iter().map(|r| r.1).collect();
    let per_relation = by_rel.into_iter().map(|(k, v)| (k, RankingSummary::from_ranks(&v))).collect();
    Ok(RankingReport::new(&filtered, Some(&raw), per_relation, 0))
}

/// Average precision where lower scores rank first. Tied scores share one
/// threshold, so every item of a tie group counts at the group's precision.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> f64 {
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 {
        return 0.0;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let (mut seen, mut tp, mut ap) = (0usize, 0usize, 0.0);
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        let mut group_pos = 0;
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            group_pos += labels[idx[j]] as usize;
            j += 1;
        }
        seen += j - i;
        tp += group_pos;
        ap += group_pos as f64 * tp as f64 / seen as f64;
        i = j;
    }
    ap / n_pos as f64
}

/// Area under the ROC curve where lower scores indicate positives; ties
/// count one half. Exact via integer half-unit counting.
pub fn auroc(scores: &[f64], labels: &[bool]) -> f64 {
    let n_pos = labels.iter().filter(|&&l| l).count() as u128;
    let n_neg = labels.len() as u128 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return 0.5;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let (mut neg_below, mut half_units) = (0u128, 0u128);
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        let (mut gp, mut gn) = (0u128, 0u128);
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            if labels[idx[j]] {
                gp += 1;
            } else {
                gn += 1;
            }
            j += 1;
        }
        half_units += gp * (2 * (n_neg - neg_below - gn) + gn);
        neg_below += gn;
        i = j;
    }
    half_units as f64 / (2 * n_pos * n_neg) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdReport {
    pub pairs: usize,
    pub positives: usize,
    pub map: f64,
    pub auroc: f64,
    /// AP of the positives at each gap against all negatives.
    pub per_gap: BTreeMap<u32, f64>,
    pub per_relation: BTreeMap<String, f64>,
}

impl fmt::Display for AdReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "mAP {:.4}  AUROC {:.4}  ({} pairs, {} positive)",
            self.map, self.auroc, self.pairs, self.positives
        )?;
        for (g, ap) in &self.per_gap {
            writeln!(f, "  gap {g:<3} mAP {ap:.4}")?;
        }
        for (r, ap) in &self.per_relation {
            writeln!(f, "  {r:<32} mAP {ap:.4}")?;
        }
        Ok(())
    }
}

/// Pair scores (cone violation of the descendant in the ancestor's cone)
/// using the given masks.
pub fn ad_scores(model: &ConeModel, pairs: &[AdPair], masks: &[Vec<bool>]) -> Result<Vec<f64>> {
    for p in pairs {
        if !model.vocab.kind(p.relation).is_hierarchical() {
            return Err(Error::contract(format!(
                "pair references non-hierarchical relation `{}`",
                model.vocab.relation(p.relation).name
            )));
        }
    }
    Ok(pairs.par_iter().map(|p| model.violation_with_mask(p.ancestor, p.descendant, &masks[p.relation])).collect())
}

pub fn ad_report(model: &ConeModel, pairs: &[AdPair], scores: &[f64]) -> Result<AdReport> {
    if pairs.is_empty() {
        return Err(Error::Empty("ancestor-descendant pairs"));
    }
    let labels: Vec<bool> = pairs.iter().map(|p| p.positive).collect();
    let subset_ap = |keep: &dyn Fn(&AdPair) -> bool| {
        let (s, l): (Vec<f64>, Vec<bool>) =
            pairs.iter().zip(scores).filter(|(p, _)| keep(p)).map(|(p, &s)| (s, p.positive)).unzip();
        average_precision(&s, &l)
    };
    let gaps: std::collections::BTreeSet<u32> = pairs.iter().filter_map(|p| p.gap.filter(|_| p.positive)).collect();
    let per_gap = gaps.into_iter().map(|g| (g, subset_ap(&|p: &AdPair| !p.positive || p.gap == Some(g)))).collect();
    let rels: std::collections::BTreeSet<RelationId> = pairs.iter().map(|p| p.relation).collect();
    let per_relation = rels
        .into_iter()
        .map(|r| (model.vocab.relation(r).name.clone(), subset_ap(&|p: &AdPair| p.relation == r)))
        .collect();
    Ok(AdReport {
        pairs: pairs.len(),
        positives: labels.iter().filter(|&&l| l).count(),
        map: average_precision(scores, &labels),
        auroc: auroc(scores, &labels),
        per_gap,
        per_relation,
    })
}

/// Ranks pairs by cone violation under the model's own masks.
pub fn ad_predict(model: &ConeModel, pairs: &[AdPair]) -> Result<AdReport> {
    let scores = ad_scores(model, pairs, model.masks())?;
    ad_report(model, pairs, &scores)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LcaQuery {
    pub u: EntityId,
    pub v: EntityId,
    /// Base relation id.
    pub relation: RelationId,
    /// Common ancestors minimizing the summed gaps (self gap 0).
    pub truths: Vec<EntityId>,
    /// Smallest, over the truths, of the larger gap to `u` and `v`.
    pub hop: u32,
}

/// LCA set of `u` and `v` under `closure`, with the minimal gap sum and the
/// hop count; `None` without a common ancestor.
pub fn lca_truth(closure: &Closure, u: EntityId, v: EntityId) -> Option<(Vec<EntityId>, u32, u32)> {
    let with_self = |x: EntityId| -> HashMap<EntityId, u32> {
        let mut m: HashMap<EntityId, u32> = closure.ancestors(x).iter().copied().collect();
        m.insert(x, 0);
        m
    };
    let au = with_self(u);
    let av = with_self(v);
    let mut common: Vec<(EntityId, u32, u32)> =
        au.iter().filter_map(|(&a, &gu)| av.get(&a).map(|&gv| (a, gu, gv))).collect();
    if common.is_empty() {
        return None;
    }
    let best = common.iter().map(|&(_, gu, gv)| gu + gv).min()?;
    common.retain(|&(_, gu, gv)| gu + gv == best);
    common.sort_unstable();
    let hop = common.iter().map(|&(_, gu, gv)| gu.max(gv)).min()?;
    Some((common.into_iter().map(|c| c.0).collect(), best, hop))
}

/// Samples up to `count` distinct queries whose LCA lies within `max_hops`
/// under the training closure. Each query picks a relation, an ancestor `w`
/// and two distinct members of `w`'s descendants plus `w` itself.
pub fn build_lca_queries<R: Rng>(
    store: &TripleStore,
    count: usize,
    max_hops: u32,
    rng: &mut R,
) -> Result<Vec<LcaQuery>> {
    let mut pools = Vec::new();
    for r in store.vocab.hierarchical_base_relations() {
        let c = transitive_closure(store, r, EdgeSource::Train)?;
        let mut desc: BTreeMap<EntityId, Vec<EntityId>> = BTreeMap::new();
        for &(a, d, g) in c.pairs() {
            if g <= max_hops {
                desc.entry(a).or_default().push(d);
            }
        }
        if !desc.is_empty() {
            pools.push((r, c, desc.into_iter().collect::<Vec<_>>()));
        }
    }
    if pools.is_empty() {
        return Err(Error::Unsatisfiable("no hierarchical relation has ancestor pairs in train".into()));
    }
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count && attempts < count.saturating_mul(50).max(1000) {
        attempts += 1;
        let (r, closure, ancestors) = &pools[rng.gen_range(0..pools.len())];
        let (w, desc) = &ancestors[rng.gen_range(0..ancestors.len())];
        let pick = |rng: &mut R| {
            let i = rng.gen_range(0..=desc.len());
            if i == desc.len() {
                *w
            } else {
                desc[i]
            }
        };
        let (u, v) = (pick(rng), pick(rng));
        if u == v || !seen.insert((*r, u.min(v), u.max(v))) {
            continue;
        }
        let Some((truths, _, hop)) = lca_truth(closure, u, v) else { continue };
        if hop <= max_hops {
            out.push(LcaQuery { u, v, relation: *r, truths, hop });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LcaReport {
    pub overall: RankingReport,
    /// Metrics over queries with `hop <= N`.
    pub by_hop_limit: BTreeMap<u32, RankingSummary>,
}

impl fmt::Display for LcaReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.overall)?;
        for (h, s) in &self.by_hop_limit {
            writeln!(
                f,
                "  <= {h} hop  H@1 {:.4}  H@3 {:.4}  H@10 {:.4}  n={}",
                s.hits_at(1),
                s.hits_at(3),
                s.hits_at(10),
                s.queries
            )?;
        }
        Ok(())
    }
}

/// Ranks every entity by `Φ_w(u, v)`; a query's rank is that of its best
/// scoring true LCA against all non-LCA entities.
pub fn lca_rank(model: &ConeModel, q: &LcaQuery, mask: &[bool]) -> f64 {
    let scores: Vec<f64> = (0..model.num_entities()).map(|w| model.lca_score_with_mask(w, q.u, q.v, mask)).collect();
    let best = q.truths.iter().map(|&t| scores[t]).fold(f64::NEG_INFINITY, f64::max);
    tie_rank(best, scores.iter().enumerate().filter(|(w, _)| !q.truths.contains(w)).map(|(_, &s)| s))
}

pub fn lca_predict(model: &ConeModel, store: &TripleStore, queries: &[LcaQuery]) -> Result<LcaReport> {
    check_compatible(model, store)?;
    let (valid, skipped): (Vec<&LcaQuery>, Vec<&LcaQuery>) = queries.iter().partition(|q| !q.truths.is_empty());
    for q in &valid {
        if !model.vocab.kind(q.relation).is_hierarchical() {
            return Err(Error::contract("LCA query on a non-hierarchical relation"));
        }
    }
    let ranks: Vec<f64> = valid.par_iter().map(|q| lca_rank(model, q, model.mask(q.relation))).collect();
    let mut by_rel: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (q, &r) in valid.iter().zip(&ranks) {
        by_rel.entry(model.vocab.relation(q.relation).name.clone()).or_default().push(r);
    }
    let max_hop = valid.iter().map(|q| q.hop).max().unwrap_or(0);
    let by_hop_limit = (1..=max_hop)
        .map(|h| {
            let rs: Vec<f64> = valid.iter().zip(&ranks).filter(|(q, _)| q.hop <= h).map(|(_, &r)| r).collect();
            (h, RankingSummary::from_ranks(&rs))
        })
        .collect();
    let per_relation = by_rel.into_iter().map(|(k, v)| (k, RankingSummary::from_ranks(&v))).collect();
    Ok(LcaReport { overall: RankingReport::new(&ranks, None, per_relation, skipped.len()), by_hop_limit })
}

/// Appends one JSON object per line.
pub fn append_jsonl<T: Serialize>(path: &Path, kind: &str, value: &T) -> Result<()> {
    let mut obj = serde_json::to_value(value)?;
    if let serde_json::Value::Object(m) = &mut obj {
        m.insert("report".into(), serde_json::Value::String(kind.into()));
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(f, "{}", serde_json::to_string(&obj)?)?;
    Ok(())
}
