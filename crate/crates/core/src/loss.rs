//! Self-adversarial distance loss, angle loss, and their gradients.
//!
//! Each plane term is differentiated in forward mode with [`Dual`] numbers
//! (six slots: head xy, tail xy, raw scale, raw angle); the score, softmax
//! weighting and log-sigmoid layers are back-propagated by hand. Batches are
//! cut into fixed-size chunks whose sparse gradients are merged in chunk
//! order, so the result does not depend on the number of threads.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::cone_model::{plane, ConeModel};
use crate::data::{EntityId, RelationId, RelationKind, Triple};
use crate::error::{Error, Result};
use crate::geometry::PlanePoint;
use crate::real::Dual;

/// Positives per gradient chunk. Part of the summation order, hence of the
/// bit-level result.
pub const GRAD_CHUNK: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingBatch {
    pub positives: Vec<Triple>,
    /// Corrupted tails, one list per positive.
    pub negatives: Vec<Vec<EntityId>>,
}

impl TrainingBatch {
    pub fn new(positives: Vec<Triple>, negatives: Vec<Vec<EntityId>>) -> Result<Self> {
        if positives.len() != negatives.len() {
            return Err(Error::contract(format!(
                "{} positives but {} negative lists",
                positives.len(),
                negatives.len()
            )));
        }
        let k = negatives.first().map_or(0, Vec::len);
        for (p, n) in positives.iter().zip(&negatives) {
            if n.len() != k {
                return Err(Error::contract("negative lists must have equal length"));
            }
            if n.contains(&p.tail) {
                return Err(Error::contract(format!("negative list of {p:?} contains the true tail")));
            }
        }
        Ok(Self { positives, negatives })
    }

    pub fn len(&self) -> usize {
        self.positives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positives.is_empty()
    }
}

/// How the gradient treats the self-adversarial weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AdversarialGrad {
    /// Weights are constants; the update used for training.
    #[default]
    Detached,
    /// Weights are differentiated too, giving the true gradient of
    /// [`total_loss`].
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub distance: f64,
    pub angle: f64,
    pub total: f64,
}

/// `ln σ(x)` without overflow.
pub fn log_sigmoid(x: f64) -> f64 {
    x.min(0.0) - (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax of `alpha · scores`.
pub fn adversarial_weights(scores: &[f64], alpha: f64) -> Vec<f64> {
    let max = scores.iter().fold(f64::NEG_INFINITY, |m, &s| m.max(alpha * s));
    let exps: Vec<f64> = scores.iter().map(|&s| (alpha * s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

struct PositiveTerms {
    loss: f64,
    pos_score: f64,
    neg_scores: Vec<f64>,
    weights: Vec<f64>,
}

fn positive_terms(model: &ConeModel, p: Triple, negs: &[EntityId]) -> PositiveTerms {
    let pos_score = model.score(p.head, p.relation, p.tail);
    let neg_scores: Vec<f64> = negs.iter().map(|&n| model.score(p.head, p.relation, n)).collect();
    let weights = adversarial_weights(&neg_scores, model.config.adv_temperature);
    let neg: f64 = weights.iter().zip(&neg_scores).map(|(w, s)| w * log_sigmoid(-s)).sum();
    PositiveTerms { loss: -log_sigmoid(pos_score) - neg, pos_score, neg_scores, weights }
}

fn hierarchical(model: &ConeModel, r: RelationId) -> bool {
    model.vocab.kind(r).is_hierarchical()
}

fn violation(model: &ConeModel, p: Triple) -> f64 {
    model.angle_violation(p.head, p.relation, p.tail).unwrap_or(0.0)
}

/// Mean over positives of `−ln σ(ψ⁺) − Σⱼ wⱼ ln σ(−ψⱼ)`.
pub fn distance_loss(batch: &TrainingBatch, model: &ConeModel) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("training batch"));
    }
    let sum: f64 = batch.positives.iter().zip(&batch.negatives).map(|(&p, n)| positive_terms(model, p, n).loss).sum();
    Ok(sum / batch.len() as f64)
}

/// Mean cone violation over the hierarchical positives; 0 if there are none.
pub fn angle_loss(batch: &TrainingBatch, model: &ConeModel) -> Result<f64> {
    let hier: Vec<Triple> = batch.positives.iter().copied().filter(|p| hierarchical(model, p.relation)).collect();
    if hier.is_empty() {
        return Ok(0.0);
    }
    Ok(hier.iter().map(|&p| violation(model, p)).sum::<f64>() / hier.len() as f64)
}

pub fn total_loss(batch: &TrainingBatch, model: &ConeModel) -> Result<f64> {
    Ok(distance_loss(batch, model)? + model.config.angle_weight * angle_loss(batch, model)?)
}

/// Gradient rows touched by one chunk, in first-visit order.
struct SparseGrad {
    entity_stride: usize,
    entity_slot: HashMap<EntityId, usize>,
    entity_ids: Vec<EntityId>,
    entity_rows: Vec<f64>,
    relation_slot: HashMap<RelationId, usize>,
    relation_ids: Vec<RelationId>,
    relation_rows: Vec<f64>,
    dim: usize,
}

impl SparseGrad {
    fn new(dim: usize) -> Self {
        Self {
            entity_stride: 2 * dim + 1,
            entity_slot: HashMap::new(),
            entity_ids: Vec::new(),
            entity_rows: Vec::new(),
            relation_slot: HashMap::new(),
            relation_ids: Vec::new(),
            relation_rows: Vec::new(),
            dim,
        }
    }

    /// Row offset of entity `e`: planes interleaved xy, then the bias.
    fn entity(&mut self, e: EntityId) -> usize {
        if let Some(&s) = self.entity_slot.get(&e) {
            return s;
        }
        let s = self.entity_rows.len();
        self.entity_rows.resize(s + self.entity_stride, 0.0);
        self.entity_slot.insert(e, s);
        self.entity_ids.push(e);
        s
    }

    /// Row offset of relation `r`: raw scales, then raw angles.
    fn relation(&mut self, r: RelationId) -> usize {
        if let Some(&s) = self.relation_slot.get(&r) {
            return s;
        }
        let s = self.relation_rows.len();
        self.relation_rows.resize(s + 2 * self.dim, 0.0);
        self.relation_slot.insert(r, s);
        self.relation_ids.push(r);
        s
    }

    fn merge_into(&self, model: &ConeModel, dense: &mut [f64]) {
        let layout = model.layout();
        let d = self.dim;
        for (k, &e) in self.entity_ids.iter().enumerate() {
            let row = &self.entity_rows[k * self.entity_stride..(k + 1) * self.entity_stride];
            let o = layout.entity_row(e);
            for (g, x) in dense[o..o + 2 * d].iter_mut().zip(&row[..2 * d]) {
                *g += x;
            }
            dense[layout.bias(e)] += row[2 * d];
        }
        for (k, &r) in self.relation_ids.iter().enumerate() {
            let row = &self.relation_rows[k * 2 * d..(k + 1) * 2 * d];
            for i in 0..d {
                dense[layout.scale(r, i)] += row[i];
                dense[layout.angle(r, i)] += row[d + i];
            }
        }
    }
}

type D6 = Dual<6>;
type D4 = Dual<4>;

/// Adds `g · ∂ψ(h, r, t)/∂θ` to `sink`.
fn add_score_grad(model: &ConeModel, h: EntityId, r: RelationId, t: EntityId, g: f64, sink: &mut SparseGrad) {
    let d = model.config.dim;
    let k = model.config.k;
    let hyper = model.vocab.kind(r) == RelationKind::Hypernym;
    let mask = model.mask(r);
    let c = -g / d as f64;
    let hs = sink.entity(h);
    let ts = sink.entity(t);
    let rs = sink.relation(r);
    for i in 0..d {
        let hp = model.point(h, i);
        let tp = model.point(t, i);
        let term = plane::distance_term(
            PlanePoint::new(D6::var(hp.x, 0), D6::var(hp.y, 1)),
            PlanePoint::new(D6::var(tp.x, 2), D6::var(tp.y, 3)),
            D6::var(model.scale_raw(r, i), 4),
            D6::var(model.angle_raw(r, i), 5),
            mask[i],
            hyper,
            k,
        );
        let dd = term.d;
        sink.entity_rows[hs + 2 * i] += c * dd[0];
        sink.entity_rows[hs + 2 * i + 1] += c * dd[1];
        sink.entity_rows[ts + 2 * i] += c * dd[2];
        sink.entity_rows[ts + 2 * i + 1] += c * dd[3];
        sink.relation_rows[rs + i] += c * dd[4];
        sink.relation_rows[rs + d + i] += c * dd[5];
    }
    sink.entity_rows[hs + 2 * d] += g;
    sink.entity_rows[ts + 2 * d] += g;
}

/// Adds `g · ∂violation/∂θ` for a hierarchical positive.
fn add_violation_grad(model: &ConeModel, p: Triple, g: f64, sink: &mut SparseGrad) {
    let d = model.config.dim;
    let k = model.config.k;
    let (parent, child) =
        if model.vocab.kind(p.relation) == RelationKind::Hypernym { (p.tail, p.head) } else { (p.head, p.tail) };
    let mask = model.mask(p.relation);
    if !mask.iter().any(|&b| b) {
        return;
    }
    let ps = sink.entity(parent);
    let cs = sink.entity(child);
    for i in (0..d).filter(|&i| mask[i]) {
        let pp = model.point(parent, i);
        let cp = model.point(child, i);
        let v = plane::violation(
            PlanePoint::new(D4::var(pp.x, 0), D4::var(pp.y, 1)),
            PlanePoint::new(D4::var(cp.x, 2), D4::var(cp.y, 3)),
            k,
        );
        sink.entity_rows[ps + 2 * i] += g * v.d[0];
        sink.entity_rows[ps + 2 * i + 1] += g * v.d[1];
        sink.entity_rows[cs + 2 * i] += g * v.d[2];
        sink.entity_rows[cs + 2 * i + 1] += g * v.d[3];
    }
}

struct ChunkResult {
    grad: SparseGrad,
    distance_sum: f64,
    angle_sum: f64,
}

fn process_chunk(
    model: &ConeModel,
    positives: &[Triple],
    negatives: &[Vec<EntityId>],
    inv_batch: f64,
    angle_coef: f64,
    mode: AdversarialGrad,
) -> ChunkResult {
    let mut grad = SparseGrad::new(model.config.dim);
    let mut distance_sum = 0.0;
    let mut angle_sum = 0.0;
    for (&p, negs) in positives.iter().zip(negatives) {
        let terms = positive_terms(model, p, negs);
        distance_sum += terms.loss;
        // dL/dψ⁺ = −σ(−ψ⁺); dL/dψⱼ = wⱼ σ(ψⱼ), plus −α wⱼ (ℓⱼ − Σₖ wₖ ℓₖ)
        // with ℓ = ln σ(−ψ) when the weights are differentiated.
        add_score_grad(model, p.head, p.relation, p.tail, -sigmoid(-terms.pos_score) * inv_batch, &mut grad);
        let alpha = model.config.adv_temperature;
        let ell: Vec<f64> = terms.neg_scores.iter().map(|&s| log_sigmoid(-s)).collect();
        let mean_ell: f64 = terms.weights.iter().zip(&ell).map(|(w, l)| w * l).sum();
        for (j, (&n, &s)) in negs.iter().zip(&terms.neg_scores).enumerate() {
            let w = terms.weights[j];
            let mut g = w * sigmoid(s);
            if mode == AdversarialGrad::Exact {
                g -= alpha * w * (ell[j] - mean_ell);
            }
            add_score_grad(model, p.head, p.relation, n, g * inv_batch, &mut grad);
        }
        if hierarchical(model, p.relation) {
            angle_sum += violation(model, p);
            if angle_coef != 0.0 {
                add_violation_grad(model, p, angle_coef, &mut grad);
            }
        }
    }
    ChunkResult { grad, distance_sum, angle_sum }
}

/// Loss value and dense gradient of `L_d + angle_weight · L_a` w.r.t. the
/// flat parameter vector. Runs on the current rayon pool; the result is
/// bit-identical for any pool size.
pub fn loss_and_grad(batch: &TrainingBatch, model: &ConeModel, angle_weight: f64) -> Result<(LossParts, Vec<f64>)> {
    let mut grad = vec![0.0; model.layout().len()];
    let parts = loss_and_grad_into(batch, model, angle_weight, &mut grad)?;
    Ok((parts, grad))
}

/// As [`loss_and_grad`], overwriting `grad`.
pub fn loss_and_grad_into(
    batch: &TrainingBatch,
    model: &ConeModel,
    angle_weight: f64,
    grad: &mut [f64],
) -> Result<LossParts> {
    loss_and_grad_with(batch, model, angle_weight, AdversarialGrad::Detached, grad)
}

/// Loss value and the exact gradient of [`total_loss`] (the model's own
/// angle weight), adversarial weights included.
pub fn loss_and_grad_exact(batch: &TrainingBatch, model: &ConeModel) -> Result<(LossParts, Vec<f64>)> {
    let mut grad = vec![0.0; model.layout().len()];
    let parts = loss_and_grad_with(batch, model, model.config.angle_weight, AdversarialGrad::Exact, &mut grad)?;
    Ok((parts, grad))
}

pub fn loss_and_grad_with(
    batch: &TrainingBatch,
    model: &ConeModel,
    angle_weight: f64,
    mode: AdversarialGrad,
    grad: &mut [f64],
) -> Result<LossParts> {
    if batch.is_empty() {
        return Err(Error::Empty("training batch"));
    }
    if grad.len() != model.layout().len() {
        return Err(Error::DimensionMismatch { expected: model.layout().len(), found: grad.len() });
    }
    grad.iter_mut().for_each(|g| *g = 0.0);
    let n = batch.len();
    let n_hier = batch.positives.iter().filter(|p| hierarchical(model, p.relation)).count();
    let inv_batch = 1.0 / n as f64;
    let angle_coef = if n_hier > 0 { angle_weight / n_hier as f64 } else { 0.0 };

    let chunks: Vec<(usize, usize)> = (0..n).step_by(GRAD_CHUNK).map(|s| (s, (s + GRAD_CHUNK).min(n))).collect();
    let group = 4 * rayon::current_num_threads().max(1);
    let mut distance_sum = 0.0;
    let mut angle_sum = 0.0;
    for window in chunks.chunks(group) {
        let results: Vec<ChunkResult> = window
            .par_iter()
            .map(|&(a, b)| {
                process_chunk(model, &batch.positives[a..b], &batch.negatives[a..b], inv_batch, angle_coef, mode)
            })
            .collect();
        for r in results {
            r.grad.merge_into(model, grad);
            distance_sum += r.distance_sum;
            angle_sum += r.angle_sum;
        }
    }
    let distance = distance_sum * inv_batch;
    let angle = if n_hier > 0 { angle_sum / n_hier as f64 } else { 0.0 };
    Ok(LossParts { distance, angle, total: distance + angle_weight * angle })
}
