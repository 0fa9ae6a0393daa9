//! Triple ingestion, dictionaries and the filtered-ranking index.
//!
//! Relation ids `0..R` are the relations found in the files; ids `R..2R` are
//! their reciprocals, added at load time so that head prediction can be
//! served as tail prediction on the reciprocal relation.

mod adset;
mod closure;
mod synthetic;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adset::{build_ad_testset, write_ad_pairs, AdPair};
pub use closure::{oriented_edges, transitive_closure, Closure, EdgeSource};
pub use synthetic::{synthetic_kg, SyntheticKg, SyntheticSpec};

pub type EntityId = usize;
pub type RelationId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    /// Edges point from parent (head) to child (tail).
    Hyponym,
    /// Edges point from child (head) to parent (tail).
    Hypernym,
    NonHierarchical,
}

impl RelationKind {
    pub fn is_hierarchical(self) -> bool {
        !matches!(self, RelationKind::NonHierarchical)
    }

    /// Kind of the reciprocal relation.
    pub fn reversed(self) -> Self {
        match self {
            RelationKind::Hyponym => RelationKind::Hypernym,
            RelationKind::Hypernym => RelationKind::Hyponym,
            RelationKind::NonHierarchical => RelationKind::NonHierarchical,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RelationKind::Hyponym => "hyponym",
            RelationKind::Hypernym => "hypernym",
            RelationKind::NonHierarchical => "none",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            RelationKind::Hyponym => 0,
            RelationKind::Hypernym => 1,
            RelationKind::NonHierarchical => 2,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(RelationKind::Hyponym),
            1 => Some(RelationKind::Hypernym),
            2 => Some(RelationKind::NonHierarchical),
            _ => None,
        }
    }
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hyponym" => Ok(RelationKind::Hyponym),
            "hypernym" => Ok(RelationKind::Hypernym),
            "none" | "non_hierarchical" | "non-hierarchical" => Ok(RelationKind::NonHierarchical),
            other => Err(Error::Config(format!("unknown relation kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Self { head, relation, tail }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationInfo {
    pub name: String,
    pub kind: RelationKind,
}

/// Entity and relation dictionaries. Relations are stored base-first; the
/// reciprocal of base relation `r` is `r + base_relations`.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    entities: Vec<String>,
    entity_index: HashMap<String, EntityId>,
    relations: Vec<RelationInfo>,
    relation_index: HashMap<String, RelationId>,
    base_relations: usize,
}

pub const RECIPROCAL_SUFFIX: &str = "_reciprocal";

impl Vocab {
    /// Builds a vocabulary from base relation names; reciprocal entries are
    /// derived automatically.
    pub fn new(entities: Vec<String>, base: Vec<RelationInfo>) -> Result<Self> {
        let mut entity_index = HashMap::with_capacity(entities.len());
        for (i, e) in entities.iter().enumerate() {
            if entity_index.insert(e.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate entity name `{e}`")));
            }
        }
        let base_relations = base.len();
        let mut relations = base.clone();
        relations.extend(
            base.iter()
                .map(|r| RelationInfo { name: format!("{}{RECIPROCAL_SUFFIX}", r.name), kind: r.kind.reversed() }),
        );
        let mut relation_index = HashMap::with_capacity(relations.len());
        for (i, r) in relations.iter().enumerate() {
            if relation_index.insert(r.name.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate relation name `{}`", r.name)));
            }
        }
        Ok(Self { entities, entity_index, relations, relation_index, base_relations })
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    /// Total relation count, reciprocals included.
    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn num_base_relations(&self) -> usize {
        self.base_relations
    }

    pub fn entity_name(&self, id: EntityId) -> &str {
        &self.entities[id]
    }

    pub fn entity_id(&self, name: &str) -> Option<EntityId> {
        self.entity_index.get(name).copied()
    }

    pub fn entity_names(&self) -> &[String] {
        &self.entities
    }

    pub fn relation(&self, id: RelationId) -> &RelationInfo {
        &self.relations[id]
    }

    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        self.relation_index.get(name).copied()
    }

    pub fn relations(&self) -> &[RelationInfo] {
        &self.relations
    }

    pub fn kind(&self, id: RelationId) -> RelationKind {
        self.relations[id].kind
    }

    pub fn reciprocal(&self, id: RelationId) -> RelationId {
        if id < self.base_relations {
            id + self.base_relations
        } else {
            id - self.base_relations
        }
    }

    pub fn is_reciprocal(&self, id: RelationId) -> bool {
        id >= self.base_relations
    }

    /// Sets the kind of a base relation and of its reciprocal.
    pub fn set_kind(&mut self, base: RelationId, kind: RelationKind) {
        assert!(base < self.base_relations, "set_kind expects a base relation id");
        self.relations[base].kind = kind;
        let rec = base + self.base_relations;
        self.relations[rec].kind = kind.reversed();
    }

    pub fn hierarchical_base_relations(&self) -> Vec<RelationId> {
        (0..self.base_relations).filter(|&r| self.relations[r].kind.is_hierarchical()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

/// What to do with valid/test lines that mention entities or relations
/// absent from the training split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnknownPolicy {
    #[default]
    Skip,
    Error,
}

/// Where relation kinds come from when loading.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum KindSource {
    /// Every relation is non-hierarchical.
    #[default]
    AllNonHierarchical,
    /// `relation<TAB>kind` metadata file.
    Metadata(PathBuf),
    /// Hierarchical-ness scores with the given threshold.
    Detect { threshold: f64 },
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub kinds: KindSource,
    pub unknown: UnknownPolicy,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub duplicates_dropped: usize,
    pub unknown_skipped: usize,
}

#[derive(Debug, Clone)]
pub struct TripleStore {
    pub vocab: Vocab,
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    /// `(head, relation) -> sorted true tails` over all splits and all
    /// relations, reciprocals included.
    filter: HashMap<(EntityId, RelationId), Vec<EntityId>>,
}

impl TripleStore {
    /// Builds a store from base-relation triples. Duplicates within a split
    /// are dropped; the count of dropped lines is returned alongside.
    pub fn from_splits(
        vocab: Vocab,
        train: Vec<Triple>,
        valid: Vec<Triple>,
        test: Vec<Triple>,
    ) -> Result<(Self, usize)> {
        let n_e = vocab.num_entities();
        let n_b = vocab.num_base_relations();
        let mut dropped = 0;
        let mut dedup = |v: Vec<Triple>| -> Result<Vec<Triple>> {
            let mut seen = HashSet::with_capacity(v.len());
            let mut out = Vec::with_capacity(v.len());
            for t in v {
                if t.head >= n_e || t.tail >= n_e {
                    return Err(Error::Contract(format!("triple {t:?} references an unknown entity")));
                }
                if t.relation >= n_b {
                    return Err(Error::Contract(format!("triple {t:?} must use a base relation id")));
                }
                if seen.insert(t) {
                    out.push(t);
                } else {
                    dropped += 1;
                }
            }
            Ok(out)
        };
        let train = dedup(train)?;
        let valid = dedup(valid)?;
        let test = dedup(test)?;
        let mut store = Self { vocab, train, valid, test, filter: HashMap::new() };
        store.rebuild_filter();
        Ok((store, dropped))
    }

    fn rebuild_filter(&mut self) {
        let mut filter: HashMap<(EntityId, RelationId), Vec<EntityId>> = HashMap::new();
        for t in self.train.iter().chain(&self.valid).chain(&self.test) {
            filter.entry((t.head, t.relation)).or_default().push(t.tail);
            let rec = self.vocab.reciprocal(t.relation);
            filter.entry((t.tail, rec)).or_default().push(t.head);
        }
        for tails in filter.values_mut() {
            tails.sort_unstable();
            tails.dedup();
        }
        self.filter = filter;
    }

    pub fn num_entities(&self) -> usize {
        self.vocab.num_entities()
    }

    pub fn split(&self, split: Split) -> &[Triple] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    /// Training triples followed by their reciprocal triples.
    pub fn training_triples(&self) -> Vec<Triple> {
        let mut out = self.train.clone();
        out.extend(self.train.iter().map(|t| self.reciprocal_triple(*t)));
        out
    }

    pub fn reciprocal_triple(&self, t: Triple) -> Triple {
        Triple::new(t.tail, self.vocab.reciprocal(t.relation), t.head)
    }

    /// Known true tails of `(head, relation, ?)` across all splits.
    pub fn known_tails(&self, head: EntityId, relation: RelationId) -> &[EntityId] {
        self.filter.get(&(head, relation)).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Known true heads of `(?, relation, tail)` across all splits.
    pub fn known_heads(&self, relation: RelationId, tail: EntityId) -> &[EntityId] {
        self.known_tails(tail, self.vocab.reciprocal(relation))
    }

    pub fn set_kind(&mut self, base: RelationId, kind: RelationKind) {
        self.vocab.set_kind(base, kind);
    }
}

/// Loads `train.txt`, `valid.txt` and `test.txt` (tab-separated
/// `head relation tail`) from `dir`. Missing valid/test files yield empty
/// splits.
pub fn load_triples(dir: &Path, options: &LoadOptions) -> Result<(TripleStore, LoadReport)> {
    let mut report = LoadReport::default();
    let read = |name: &str, required: bool| -> Result<Option<(PathBuf, Vec<(usize, [String; 3])>)>> {
        let path = dir.join(name);
        if !path.exists() {
            if required {
                return Err(Error::Io(std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    format!("{} not found", path.display()),
                )));
            }
            return Ok(None);
        }
        let text = fs::read_to_string(&path)?;
        let rows = parse_tsv(&path, &text)?;
        Ok(Some((path, rows)))
    };
    let (_, train_rows) = read("train.txt", true)?.expect("required split");
    let valid_rows = read("valid.txt", false)?.map(|(_, r)| r).unwrap_or_default();
    let test_rows = read("test.txt", false)?.map(|(_, r)| r).unwrap_or_default();

    let mut entities: Vec<String> = Vec::new();
    let mut entity_index: HashMap<String, usize> = HashMap::new();
    let mut relations: Vec<String> = Vec::new();
    let mut relation_index: HashMap<String, usize> = HashMap::new();
    let intern = |names: &mut Vec<String>, index: &mut HashMap<String, usize>, s: &str| -> usize {
        if let Some(&i) = index.get(s) {
            return i;
        }
        names.push(s.to_string());
        index.insert(s.to_string(), names.len() - 1);
        names.len() - 1
    };
    let mut train = Vec::with_capacity(train_rows.len());
    for (_, [h, r, t]) in &train_rows {
        let h = intern(&mut entities, &mut entity_index, h);
        let r = intern(&mut relations, &mut relation_index, r);
        let t = intern(&mut entities, &mut entity_index, t);
        train.push(Triple::new(h, r, t));
    }

    let mut resolve = |rows: &[(usize, [String; 3])], split: &str| -> Result<Vec<Triple>> {
        let mut out = Vec::with_capacity(rows.len());
        for (line, [h, r, t]) in rows {
            let ids = (entity_index.get(h), relation_index.get(r), entity_index.get(t));
            match ids {
                (Some(&h), Some(&r), Some(&t)) => out.push(Triple::new(h, r, t)),
                _ => {
                    let missing = if ids.0.is_none() {
                        Error::UnknownEntity(h.clone())
                    } else if ids.2.is_none() {
                        Error::UnknownEntity(t.clone())
                    } else {
                        Error::UnknownRelation(r.clone())
                    };
                    match options.unknown {
                        UnknownPolicy::Error => return Err(missing),
                        UnknownPolicy::Skip => {
                            log::warn!("{split} line {line}: {missing}; skipped");
                            report.unknown_skipped += 1;
                        }
                    }
                }
            }
        }
        Ok(out)
    };
    let valid = resolve(&valid_rows, "valid")?;
    let test = resolve(&test_rows, "test")?;

    let base = relations.into_iter().map(|name| RelationInfo { name, kind: RelationKind::NonHierarchical }).collect();
    let vocab = Vocab::new(entities, base)?;
    let (mut store, dropped) = TripleStore::from_splits(vocab, train, valid, test)?;
    if dropped > 0 {
        log::warn!("dropped {dropped} duplicate triples");
    }
    report.duplicates_dropped = dropped;

    match &options.kinds {
        KindSource::AllNonHierarchical => {}
        KindSource::Metadata(path) => {
            for (name, kind) in read_relation_meta(path)? {
                match store.vocab.relation_id(&name) {
                    Some(r) if r < store.vocab.num_base_relations() => store.set_kind(r, kind),
                    _ => log::warn!("metadata names relation `{name}` absent from the training split"),
                }
            }
        }
        KindSource::Detect { threshold } => {
            let kinds = crate::hierarchy_detect::classify_all(&store, *threshold)?;
            for row in kinds {
                store.set_kind(row.relation, row.scores.kind);
            }
        }
    }
    Ok((store, report))
}

fn parse_tsv(path: &Path, text: &str) -> Result<Vec<(usize, [String; 3])>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("expected `head<TAB>relation<TAB>tail`, got {} field(s)", fields.len()),
            });
        }
        rows.push((i + 1, [fields[0].to_string(), fields[1].to_string(), fields[2].to_string()]));
    }
    Ok(rows)
}

/// Reads a `relation<TAB>kind` metadata file.
pub fn read_relation_meta(path: &Path) -> Result<Vec<(String, RelationKind)>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split('\t');
        let (Some(name), Some(kind), None) = (it.next(), it.next(), it.next()) else {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: "expected `relation<TAB>kind`".into(),
            });
        };
        let kind = kind.parse().map_err(|e: Error| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push((name.to_string(), kind));
    }
    Ok(out)
}

pub fn write_relation_meta(path: &Path, vocab: &Vocab) -> Result<()> {
    let mut s = String::new();
    for r in 0..vocab.num_base_relations() {
        let info = vocab.relation(r);
        s.push_str(&format!("{}\t{}\n", info.name, info.kind));
    }
    fs::write(path, s)?;
    Ok(())
}
