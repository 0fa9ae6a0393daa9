//! Subspace allocation, negative sampling, rotation-only pretraining and the
//! main training loop.

mod adam;
mod checkpoint;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cone_model::{ConeModel, ModelConfig};
use crate::data::{EntityId, Split, Triple, TripleStore, Vocab};
use crate::error::{Error, Result};
use crate::eval::{kg_completion, KgcOptions};
use crate::loss::{loss_and_grad_into, TrainingBatch};

pub use adam::OptimizerState;
pub use checkpoint::{
    checkpoint_bytes, ensure_dim, load_checkpoint, model_from_bytes, save_checkpoint, FORMAT_VERSION, MAGIC,
};

/// RNG stream reserved for subspace allocation.
const MASK_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskMode {
    /// Each hierarchical relation draws its planes independently.
    #[default]
    Overlapping,
    /// Hierarchical relations receive disjoint planes.
    Orthogonal,
}

/// One mask per relation (reciprocals included). Hierarchical base relations
/// get `subspace_dim` random planes, reciprocals copy their base mask, and
/// non-hierarchical relations get all-zero masks.
pub fn allocate_subspaces(
    vocab: &Vocab,
    dim: usize,
    subspace_dim: usize,
    seed: u64,
    mode: MaskMode,
) -> Result<Vec<Vec<bool>>> {
    if subspace_dim == 0 || subspace_dim > dim {
        return Err(Error::Config(format!("subspace dim must lie in 1..={dim}, got {subspace_dim}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(MASK_STREAM);
    let hier = vocab.hierarchical_base_relations();
    let n_base = vocab.num_base_relations();
    let mut masks = vec![vec![false; dim]; vocab.num_relations()];
    match mode {
        MaskMode::Overlapping => {
            for &r in &hier {
                for i in sample(&mut rng, dim, subspace_dim) {
                    masks[r][i] = true;
                }
            }
        }
        MaskMode::Orthogonal => {
            if hier.len() * subspace_dim > dim {
                return Err(Error::Config(format!(
                    "{} hierarchical relations × {subspace_dim} planes exceed dim {dim}",
                    hier.len()
                )));
            }
            let mut planes: Vec<usize> = (0..dim).collect();
            planes.shuffle(&mut rng);
            for (k, &r) in hier.iter().enumerate() {
                for &i in &planes[k * subspace_dim..(k + 1) * subspace_dim] {
                    masks[r][i] = true;
                }
            }
        }
    }
    for r in 0..n_base {
        masks[r + n_base] = masks[r].clone();
    }
    Ok(masks)
}

/// `k` tails drawn uniformly from every entity except `triple.tail`.
pub fn sample_negatives<R: Rng>(triple: Triple, entity_count: usize, k: usize, rng: &mut R) -> Result<Vec<EntityId>> {
    if entity_count < 2 {
        return Err(Error::Config("negative sampling needs at least 2 entities".into()));
    }
    if triple.tail >= entity_count {
        return Err(Error::contract(format!("tail {} out of range", triple.tail)));
    }
    Ok((0..k)
        .map(|_| {
            let e = rng.gen_range(0..entity_count - 1);
            if e >= triple.tail {
                e + 1
            } else {
                e
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Restricted rotations on masked planes plus the angle loss.
    #[default]
    Cone,
    /// Rotation only: zero masks and no angle loss throughout.
    Rotc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Rotation-only warm-up epochs; `None` means 30 % of `epochs`.
    pub pretrain_epochs: Option<usize>,
    /// Entity planes are scaled by this factor after warm-up.
    pub pretrain_recover_factor: f64,
    /// Validation MRR cadence in epochs; 0 disables validation.
    pub validate_every: usize,
    /// Upper bound on validation triples per check.
    pub valid_query_cap: usize,
    pub mask_mode: MaskMode,
    pub variant: Variant,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            epochs: 1000,
            batch_size: 1024,
            lr: 0.001,
            seed: 0,
            pretrain_epochs: None,
            pretrain_recover_factor: 0.5,
            validate_every: 10,
            valid_query_cap: 1000,
            mask_mode: MaskMode::Overlapping,
            variant: Variant::Cone,
            threads: 0,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        let f = self.pretrain_recover_factor;
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::Config(format!("recover factor must lie in (0, 1], got {f}")));
        }
        Ok(())
    }

    pub fn resolved_pretrain_epochs(&self) -> usize {
        self.pretrain_epochs.unwrap_or_else(|| (self.epochs as f64 * 0.3).round() as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pretrain,
    Train,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub phase: Phase,
    /// 1-based within the phase.
    pub epoch: usize,
    pub loss: f64,
    pub distance_loss: f64,
    pub angle_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub epoch: usize,
    pub mrr: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub validation: Vec<ValidationRecord>,
    /// Main-phase epoch whose parameters were kept.
    pub best_epoch: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ConeModel,
    pub history: TrainHistory,
    /// Masks allocated for the hierarchical relations. Equal to the model's
    /// masks except for the rotation-only variant, whose model masks are zero.
    pub allocated_masks: Vec<Vec<bool>>,
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))
}

struct EpochRunner<'a> {
    store: &'a TripleStore,
    triples: Vec<Triple>,
    batch_size: usize,
    negatives: usize,
    grad: Vec<f64>,
}

impl<'a> EpochRunner<'a> {
    fn new(store: &'a TripleStore, model: &ConeModel, schedule: &TrainSchedule) -> Self {
        Self {
            store,
            triples: store.training_triples(),
            batch_size: schedule.batch_size,
            negatives: model.config.negatives,
            grad: vec![0.0; model.layout().len()],
        }
    }

    fn run(
        &mut self,
        model: &mut ConeModel,
        opt: &mut OptimizerState,
        angle_weight: f64,
        phase: Phase,
        epoch: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<EpochRecord> {
        let n = self.store.num_entities();
        let mut order: Vec<usize> = (0..self.triples.len()).collect();
        order.shuffle(rng);
        let (mut loss, mut dist, mut ang, mut batches) = (0.0, 0.0, 0.0, 0usize);
        for idx in order.chunks(self.batch_size) {
            let positives: Vec<Triple> = idx.iter().map(|&i| self.triples[i]).collect();
            let negatives =
                positives.iter().map(|&p| sample_negatives(p, n, self.negatives, rng)).collect::<Result<Vec<_>>>()?;
            let batch = TrainingBatch { positives, negatives };
            let parts = loss_and_grad_into(&batch, model, angle_weight, &mut self.grad)?;
            if !parts.total.is_finite() {
                return Err(Error::Divergence { epoch, detail: format!("{phase:?} loss is {}", parts.total) });
            }
            if let Some(j) = self.grad.iter().position(|g| !g.is_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    detail: format!("{phase:?} gradient of parameter {j} is not finite"),
                });
            }
            opt.step(model.params_mut(), &self.grad);
            model.project_entities();
            if !model.all_finite() {
                return Err(Error::Divergence { epoch, detail: format!("{phase:?} parameters became non-finite") });
            }
            loss += parts.total;
            dist += parts.distance;
            ang += parts.angle;
            batches += 1;
        }
        let b = batches.max(1) as f64;
        Ok(EpochRecord { phase, epoch, loss: loss / b, distance_loss: dist / b, angle_loss: ang / b })
    }
}

fn validation_mrr(model: &ConeModel, store: &TripleStore, cap: usize) -> Result<f64> {
    let report = kg_completion(model, store, Split::Valid, &KgcOptions { max_queries: Some(cap) })?;
    Ok(report.mrr)
}

fn pretrain_phase(
    model: &mut ConeModel,
    store: &TripleStore,
    schedule: &TrainSchedule,
    rng: &mut ChaCha8Rng,
    history: &mut Vec<EpochRecord>,
) -> Result<()> {
    let epochs = schedule.resolved_pretrain_epochs();
    if epochs == 0 {
        return Ok(());
    }
    let masks = model.masks().to_vec();
    model.clear_masks();
    let mut opt = OptimizerState::adam(model.layout().len(), schedule.lr);
    let mut runner = EpochRunner::new(store, model, schedule);
    for epoch in 1..=epochs {
        let rec = runner.run(model, &mut opt, 0.0, Phase::Pretrain, epoch, rng)?;
        log::info!("pretrain epoch {epoch}: loss {:.6}", rec.loss);
        history.push(rec);
    }
    model.shrink_entities(schedule.pretrain_recover_factor);
    model.project_entities();
    model.set_masks(masks)
}

/// Rotation-only training: all masks zero, no angle loss. On return the
/// entity planes have been scaled by the recover factor and the original
/// masks restored, ready for the main phase.
pub fn pretrain_rotc(
    store: &TripleStore,
    cfg: ModelConfig,
    schedule: &TrainSchedule,
) -> Result<(ConeModel, Vec<EpochRecord>)> {
    cfg.validate()?;
    schedule.validate()?;
    let (mut model, mut rng) = initial_model(store, cfg, schedule)?;
    let mut history = Vec::new();
    thread_pool(schedule.threads)?.install(|| pretrain_phase(&mut model, store, schedule, &mut rng, &mut history))?;
    Ok((model, history))
}

fn initial_model(store: &TripleStore, cfg: ModelConfig, schedule: &TrainSchedule) -> Result<(ConeModel, ChaCha8Rng)> {
    let masks = allocate_subspaces(&store.vocab, cfg.dim, cfg.subspace_dim, schedule.seed, schedule.mask_mode)?;
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let model = ConeModel::init(cfg, store.vocab.clone(), masks, &mut rng)?;
    Ok((model, rng))
}

/// Warm-up followed by the main phase. With `epochs = 0` and no warm-up
/// the initialization is returned unchanged.
pub fn train(store: &TripleStore, cfg: ModelConfig, schedule: &TrainSchedule) -> Result<TrainOutcome> {
    cfg.validate()?;
    schedule.validate()?;
    thread_pool(schedule.threads)?.install(|| train_inner(store, cfg, schedule))
}

fn train_inner(store: &TripleStore, cfg: ModelConfig, schedule: &TrainSchedule) -> Result<TrainOutcome> {
    let (mut model, mut rng) = initial_model(store, cfg, schedule)?;
    let allocated_masks = model.masks().to_vec();
    let mut history = TrainHistory::default();
    pretrain_phase(&mut model, store, schedule, &mut rng, &mut history.epochs)?;

    let angle_weight = match schedule.variant {
        Variant::Cone => cfg.angle_weight,
        Variant::Rotc => {
            model.clear_masks();
            0.0
        }
    };
    let validate = schedule.validate_every > 0 && !store.valid.is_empty();
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut opt = OptimizerState::adam(model.layout().len(), schedule.lr);
    let mut runner = EpochRunner::new(store, &model, schedule);
    for epoch in 1..=schedule.epochs {
        let rec = runner.run(&mut model, &mut opt, angle_weight, Phase::Train, epoch, &mut rng)?;
        log::info!(
            "epoch {epoch}: loss {:.6} (distance {:.6}, angle {:.6})",
            rec.loss,
            rec.distance_loss,
            rec.angle_loss
        );
        history.epochs.push(rec);
        let last = epoch == schedule.epochs;
        if validate && (epoch % schedule.validate_every == 0 || last) {
            let mrr = validation_mrr(&model, store, schedule.valid_query_cap)?;
            log::info!("epoch {epoch}: validation MRR {mrr:.4}");
            history.validation.push(ValidationRecord { epoch, mrr });
            if best.as_ref().map_or(true, |(b, _, _)| mrr > *b) {
                best = Some((mrr, epoch, model.params().to_vec()));
            }
        }
    }
    if let Some((_, epoch, params)) = best {
        model.params_mut().copy_from_slice(&params);
        history.best_epoch = Some(epoch);
    } else if schedule.epochs > 0 {
        history.best_epoch = Some(schedule.epochs);
    }
    Ok(TrainOutcome { model, history, allocated_masks })
}
