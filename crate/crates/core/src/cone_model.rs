//! Entity and relation parameterization, the rotation `f1` and restricted
//! rotation `f2`, cone membership, and triple scoring.
//!
//! A model stores all trainable scalars in one flat vector:
//!
//! | block            | length      | element                       |
//! |------------------|-------------|-------------------------------|
//! | entity planes    | `n · d · 2` | `(e·d + i)·2 + {0: x, 1: y}`  |
//! | entity biases    | `n`         | `e`                           |
//! | relation scales  | `R · d`     | `r·d + i` (raw, pre-softplus) |
//! | relation angles  | `R · d`     | `r·d + i` (raw, pre-wrap)     |
//!
//! `R` counts reciprocal relations.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{EntityId, RelationId, RelationKind, Vocab};
use crate::error::{Error, Result};
use crate::geometry::{kernel, project_to_ball, ConeParams, PlanePoint, TangentVector, BALL_EPS};
use crate::real::Real;

/// `softplus⁻¹(1) = ln(e − 1)`.
pub const SCALE_RAW_INIT: f64 = 0.541_324_854_612_918_1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Number of hyperbolic planes.
    pub dim: usize,
    /// Planes per hierarchical relation subspace.
    pub subspace_dim: usize,
    /// Aperture constant.
    pub k: f64,
    pub angle_weight: f64,
    /// Self-adversarial softmax temperature.
    pub adv_temperature: f64,
    pub negatives: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { dim: 500, subspace_dim: 100, k: 0.1, angle_weight: 0.5, adv_temperature: 0.5, negatives: 50 }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("dim must be positive".into()));
        }
        if self.subspace_dim == 0 || self.subspace_dim > self.dim {
            return Err(Error::Config(format!("subspace dim must lie in 1..={}, got {}", self.dim, self.subspace_dim)));
        }
        ConeParams::new(self.k)?;
        if !(self.angle_weight >= 0.0 && self.angle_weight.is_finite()) {
            return Err(Error::Config(format!("angle weight must be >= 0, got {}", self.angle_weight)));
        }
        if !(self.adv_temperature > 0.0 && self.adv_temperature.is_finite()) {
            return Err(Error::Config(format!("temperature must be > 0, got {}", self.adv_temperature)));
        }
        if self.negatives == 0 {
            return Err(Error::Config("at least one negative per positive is required".into()));
        }
        Ok(())
    }

    pub fn cone(&self) -> ConeParams {
        ConeParams { k: self.k }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntityEmbedding {
    pub planes: Vec<PlanePoint>,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationEmbedding {
    pub scale_raw: Vec<f64>,
    pub angle_raw: Vec<f64>,
    pub mask: Vec<bool>,
    pub kind: RelationKind,
}

impl RelationEmbedding {
    pub fn dim(&self) -> usize {
        self.mask.len()
    }

    /// Effective scale `s_i > 0`.
    pub fn scale(&self, i: usize) -> f64 {
        softplus(self.scale_raw[i])
    }

    /// Effective angle `θ_i ∈ [−π, π)`.
    pub fn angle(&self, i: usize) -> f64 {
        wrap_angle(self.angle_raw[i])
    }
}

/// `ln(1 + eˣ)`, linear above 30.
pub fn softplus<T: Real>(x: T) -> T {
    if x.value() > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Wraps into `[−π, π)` with unit slope.
pub fn wrap_angle<T: Real>(raw: T) -> T {
    let v = raw.value();
    let wrapped = (v + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped == v {
        raw
    } else {
        raw + T::cst(wrapped - v)
    }
}

/// Generic per-plane kernels shared by the value and gradient paths.
pub(crate) mod plane {
    use super::*;

    /// Substitutes the projected point for an apex exactly at the origin.
    #[inline]
    pub fn safe_apex<T: Real>(p: PlanePoint<T>) -> PlanePoint<T> {
        if p.x.value() == 0.0 && p.y.value() == 0.0 {
            PlanePoint::new(T::cst(BALL_EPS), T::cst(0.0))
        } else {
            p
        }
    }

    /// `exp₀(G(θ) log₀ h)`, which reduces to the rotation `G(θ) h`.
    #[inline]
    pub fn f1<T: Real>(h: PlanePoint<T>, theta: T) -> PlanePoint<T> {
        kernel::givens_rotate(theta, h.as_tangent()).as_point()
    }

    #[inline]
    pub fn f2<T: Real>(h: PlanePoint<T>, s: T, theta: T, k: f64) -> PlanePoint<T> {
        let h = safe_apex(h);
        let n = h.norm();
        let phi = kernel::half_aperture(h, k);
        let axis = TangentVector::new(h.x / n, h.y / n);
        let v = kernel::givens_rotate(theta * phi.scale(1.0 / PI), axis).scale(s);
        kernel::exp_map(h, v)
    }

    /// Distance term of one plane. `masked` selects `f2`; `hypernym` runs it
    /// from the tail.
    #[inline]
    pub fn distance_term<T: Real>(
        h: PlanePoint<T>,
        t: PlanePoint<T>,
        scale_raw: T,
        angle_raw: T,
        masked: bool,
        hypernym: bool,
        k: f64,
    ) -> T {
        let theta = wrap_angle(angle_raw);
        if !masked {
            return kernel::distance(f1(h, theta), t);
        }
        let s = softplus(scale_raw);
        if hypernym {
            kernel::distance(f2(t, s, theta, k), h)
        } else {
            kernel::distance(f2(h, s, theta, k), t)
        }
    }

    /// `max(0, ∠_parent child − φ(parent))`.
    #[inline]
    pub fn violation<T: Real>(parent: PlanePoint<T>, child: PlanePoint<T>, k: f64) -> T {
        let p = safe_apex(parent);
        let v = kernel::angle_at(p, child) - kernel::half_aperture(p, k);
        if v.value() > 0.0 {
            v
        } else {
            T::cst(0.0)
        }
    }

    /// `2φ(w) − ∠_w u − ∠_w v`.
    #[inline]
    pub fn lca_term(w: PlanePoint, u: PlanePoint, v: PlanePoint, k: f64) -> f64 {
        let w = safe_apex(w);
        2.0 * kernel::half_aperture(w, k) - kernel::angle_at(w, u) - kernel::angle_at(w, v)
    }
}

fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

fn require_hierarchical(kind: RelationKind) -> Result<()> {
    if !kind.is_hierarchical() {
        return Err(Error::contract("operation requires a hierarchical relation"));
    }
    Ok(())
}

/// Rotation about the origin, computed as `exp₀(G(θ) log₀ h)`.
pub fn rotate_f1(h_plane: PlanePoint, theta: f64) -> PlanePoint {
    kernel::exp0(kernel::givens_rotate(theta, kernel::log0(h_plane)))
}

/// Restricted rotation: a step of length `s` from `h_plane` along the
/// outward axis turned by `θ·φ_h/π`. The image always lies in the cone at
/// `h_plane`; long steps from apexes near the boundary may round onto the
/// unit circle, where only the [`kernel`] forms of the geometry apply.
pub fn restricted_rotate_f2(h_plane: PlanePoint, s: f64, theta: f64, params: ConeParams) -> Result<PlanePoint> {
    if h_plane.x == 0.0 && h_plane.y == 0.0 {
        return Err(Error::domain("restricted rotation from the origin"));
    }
    if !(h_plane.norm() < 1.0) {
        return Err(Error::domain(format!("apex {h_plane:?} outside the disk")));
    }
    if !(s > 0.0) {
        return Err(Error::domain(format!("scale must be positive, got {s}")));
    }
    Ok(plane::f2(h_plane, s, theta, params.k))
}

pub fn in_cone(apex: PlanePoint, y: PlanePoint, params: ConeParams) -> Result<bool> {
    let angle = crate::geometry::angle_at(apex, y)?;
    Ok(angle <= crate::geometry::half_aperture(apex, params)?)
}

/// Triple score `ψ(h, r, t)`; higher means more plausible.
pub fn score(h: &EntityEmbedding, r: &RelationEmbedding, t: &EntityEmbedding, cfg: &ModelConfig) -> Result<f64> {
    check_dims(cfg.dim, h.planes.len())?;
    check_dims(cfg.dim, t.planes.len())?;
    check_dims(cfg.dim, r.dim())?;
    let hyper = r.kind == RelationKind::Hypernym;
    let total: f64 = (0..cfg.dim)
        .map(|i| {
            plane::distance_term(h.planes[i], t.planes[i], r.scale_raw[i], r.angle_raw[i], r.mask[i], hyper, cfg.k)
        })
        .sum();
    Ok(-total / cfg.dim as f64 + h.bias + t.bias)
}

/// Summed cone violation over masked planes; the parent is `h` for hyponym
/// relations and `t` for hypernym relations.
pub fn angle_violation(
    h: &EntityEmbedding,
    r: &RelationEmbedding,
    t: &EntityEmbedding,
    cfg: &ModelConfig,
) -> Result<f64> {
    require_hierarchical(r.kind)?;
    check_dims(cfg.dim, h.planes.len())?;
    check_dims(cfg.dim, t.planes.len())?;
    check_dims(cfg.dim, r.dim())?;
    let (parent, child) = if r.kind == RelationKind::Hypernym { (t, h) } else { (h, t) };
    Ok((0..cfg.dim).filter(|&i| r.mask[i]).map(|i| plane::violation(parent.planes[i], child.planes[i], cfg.k)).sum())
}

/// `Φ_w(u, v)` over the masked planes of `r`; larger ranks `w` higher as the
/// lowest common ancestor of `u` and `v`.
pub fn lca_score(
    w: &EntityEmbedding,
    u: &EntityEmbedding,
    v: &EntityEmbedding,
    r: &RelationEmbedding,
    cfg: &ModelConfig,
) -> Result<f64> {
    require_hierarchical(r.kind)?;
    for e in [w, u, v] {
        check_dims(cfg.dim, e.planes.len())?;
    }
    check_dims(cfg.dim, r.dim())?;
    Ok((0..cfg.dim).filter(|&i| r.mask[i]).map(|i| plane::lca_term(w.planes[i], u.planes[i], v.planes[i], cfg.k)).sum())
}

/// Offsets of the parameter blocks in the flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub entities: usize,
    pub relations: usize,
    pub dim: usize,
}

impl ParamLayout {
    pub fn plane(&self, e: EntityId, i: usize) -> usize {
        (e * self.dim + i) * 2
    }

    pub fn entity_row(&self, e: EntityId) -> usize {
        e * self.dim * 2
    }

    pub fn bias(&self, e: EntityId) -> usize {
        self.entities * self.dim * 2 + e
    }

    pub fn scale(&self, r: RelationId, i: usize) -> usize {
        self.entities * (self.dim * 2 + 1) + r * self.dim + i
    }

    pub fn angle(&self, r: RelationId, i: usize) -> usize {
        self.entities * (self.dim * 2 + 1) + (self.relations + r) * self.dim + i
    }

    /// End of the entity-plane block.
    pub fn planes_end(&self) -> usize {
        self.entities * self.dim * 2
    }

    pub fn relations_start(&self) -> usize {
        self.entities * (self.dim * 2 + 1)
    }

    pub fn len(&self) -> usize {
        self.relations_start() + 2 * self.relations * self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeModel {
    pub config: ModelConfig,
    pub vocab: Vocab,
    layout: ParamLayout,
    params: Vec<f64>,
    /// One mask per relation, reciprocals included.
    masks: Vec<Vec<bool>>,
}

impl ConeModel {
    /// Random initialization: plane directions uniform, norms uniform in
    /// `[0.2, 0.8]`, biases 0, scales 1, angles uniform in `[−π, π)`.
    pub fn init<R: Rng>(config: ModelConfig, vocab: Vocab, masks: Vec<Vec<bool>>, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout { entities: vocab.num_entities(), relations: vocab.num_relations(), dim: config.dim };
        let mut params = vec![0.0; layout.len()];
        for e in 0..layout.entities {
            for i in 0..layout.dim {
                let r = rng.gen_range(0.2..=0.8);
                let a: f64 = rng.gen_range(-PI..PI);
                let o = layout.plane(e, i);
                params[o] = r * a.cos();
                params[o + 1] = r * a.sin();
            }
        }
        for r in 0..layout.relations {
            for i in 0..layout.dim {
                params[layout.scale(r, i)] = SCALE_RAW_INIT;
                params[layout.angle(r, i)] = rng.gen_range(-PI..PI);
            }
        }
        Self::from_parts(config, vocab, params, masks)
    }

    pub fn from_parts(config: ModelConfig, vocab: Vocab, params: Vec<f64>, masks: Vec<Vec<bool>>) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout { entities: vocab.num_entities(), relations: vocab.num_relations(), dim: config.dim };
        check_dims(layout.len(), params.len())?;
        let model = Self { config, vocab, layout, params, masks };
        model.check_masks()?;
        Ok(model)
    }

    /// Non-hierarchical masks are all zero; hierarchical masks hold exactly
    /// `subspace_dim` ones or are all zero (rotation-only model); a
    /// reciprocal shares its base relation's mask.
    fn check_masks(&self) -> Result<()> {
        let d = self.config.dim;
        check_dims(self.layout.relations, self.masks.len())?;
        for (r, m) in self.masks.iter().enumerate() {
            check_dims(d, m.len())?;
            let ones = m.iter().filter(|&&b| b).count();
            let kind = self.vocab.kind(r);
            let name = &self.vocab.relation(r).name;
            if !kind.is_hierarchical() && ones != 0 {
                return Err(Error::Config(format!("non-hierarchical relation `{name}` has a non-zero mask")));
            }
            if kind.is_hierarchical() && ones != 0 && ones != self.config.subspace_dim {
                return Err(Error::Config(format!(
                    "relation `{name}` mask has {ones} planes, expected {}",
                    self.config.subspace_dim
                )));
            }
            if m != &self.masks[self.vocab.reciprocal(r)] {
                return Err(Error::Config(format!("relation `{name}` and its reciprocal have different masks")));
            }
        }
        Ok(())
    }

    pub fn layout(&self) -> ParamLayout {
        self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn masks(&self) -> &[Vec<bool>] {
        &self.masks
    }

    pub fn mask(&self, r: RelationId) -> &[bool] {
        &self.masks[r]
    }

    /// Replaces every mask with zeros (rotation-only model).
    pub fn clear_masks(&mut self) {
        for m in &mut self.masks {
            m.iter_mut().for_each(|b| *b = false);
        }
    }

    pub fn set_masks(&mut self, masks: Vec<Vec<bool>>) -> Result<()> {
        let old = std::mem::replace(&mut self.masks, masks);
        if let Err(e) = self.check_masks() {
            self.masks = old;
            return Err(e);
        }
        Ok(())
    }

    pub fn num_entities(&self) -> usize {
        self.layout.entities
    }

    pub fn num_relations(&self) -> usize {
        self.layout.relations
    }

    #[inline]
    pub fn point(&self, e: EntityId, i: usize) -> PlanePoint {
        let o = self.layout.plane(e, i);
        PlanePoint::new(self.params[o], self.params[o + 1])
    }

    pub fn set_point(&mut self, e: EntityId, i: usize, p: PlanePoint) {
        let o = self.layout.plane(e, i);
        self.params[o] = p.x;
        self.params[o + 1] = p.y;
    }

    #[inline]
    pub fn bias(&self, e: EntityId) -> f64 {
        self.params[self.layout.bias(e)]
    }

    #[inline]
    pub fn scale_raw(&self, r: RelationId, i: usize) -> f64 {
        self.params[self.layout.scale(r, i)]
    }

    #[inline]
    pub fn angle_raw(&self, r: RelationId, i: usize) -> f64 {
        self.params[self.layout.angle(r, i)]
    }

    pub fn entity(&self, e: EntityId) -> EntityEmbedding {
        EntityEmbedding { planes: (0..self.config.dim).map(|i| self.point(e, i)).collect(), bias: self.bias(e) }
    }

    pub fn relation(&self, r: RelationId) -> RelationEmbedding {
        let d = self.config.dim;
        RelationEmbedding {
            scale_raw: (0..d).map(|i| self.scale_raw(r, i)).collect(),
            angle_raw: (0..d).map(|i| self.angle_raw(r, i)).collect(),
            mask: self.masks[r].clone(),
            kind: self.vocab.kind(r),
        }
    }

    /// Clamps every entity plane into `[ε, 1 − ε]`.
    pub fn project_entities(&mut self) {
        let end = self.layout.planes_end();
        for c in self.params[..end].chunks_exact_mut(2) {
            let p = project_to_ball(PlanePoint::new(c[0], c[1]), BALL_EPS);
            c[0] = p.x;
            c[1] = p.y;
        }
    }

    /// Scales every entity plane toward the origin; biases are untouched.
    pub fn shrink_entities(&mut self, factor: f64) {
        let end = self.layout.planes_end();
        self.params[..end].iter_mut().for_each(|x| *x *= factor);
    }

    fn is_hypernym(&self, r: RelationId) -> bool {
        self.vocab.kind(r) == RelationKind::Hypernym
    }

    pub fn score(&self, h: EntityId, r: RelationId, t: EntityId) -> f64 {
        let d = self.config.dim;
        let hyper = self.is_hypernym(r);
        let mask = &self.masks[r];
        let mut total = 0.0;
        for i in 0..d {
            total += plane::distance_term(
                self.point(h, i),
                self.point(t, i),
                self.scale_raw(r, i),
                self.angle_raw(r, i),
                mask[i],
                hyper,
                self.config.k,
            );
        }
        -total / d as f64 + self.bias(h) + self.bias(t)
    }

    /// Scores `(h, r, e)` for every entity `e`. Transforms that do not
    /// depend on the candidate are computed once.
    pub fn score_all_tails(&self, h: EntityId, r: RelationId, out: &mut Vec<f64>) {
        let d = self.config.dim;
        let k = self.config.k;
        let hyper = self.is_hypernym(r);
        let mask = &self.masks[r];
        let head: Vec<PlanePoint> = (0..d).map(|i| self.point(h, i)).collect();
        let query: Vec<PlanePoint> = (0..d)
            .map(|i| {
                let theta = wrap_angle(self.angle_raw(r, i));
                if !mask[i] {
                    plane::f1(head[i], theta)
                } else if hyper {
                    head[i]
                } else {
                    plane::f2(head[i], softplus(self.scale_raw(r, i)), theta, k)
                }
            })
            .collect();
        let scales: Vec<f64> = (0..d).map(|i| softplus(self.scale_raw(r, i))).collect();
        let angles: Vec<f64> = (0..d).map(|i| wrap_angle(self.angle_raw(r, i))).collect();
        let hb = self.bias(h);
        out.clear();
        out.extend((0..self.num_entities()).map(|e| {
            let mut total = 0.0;
            for i in 0..d {
                let t = self.point(e, i);
                total += if mask[i] && hyper {
                    kernel::distance(plane::f2(t, scales[i], angles[i], k), query[i])
                } else {
                    kernel::distance(query[i], t)
                };
            }
            -total / d as f64 + hb + self.bias(e)
        }));
    }

    /// Cone violation of a true pair under relation `r`; zero for an
    /// all-zero mask.
    pub fn angle_violation(&self, h: EntityId, r: RelationId, t: EntityId) -> Result<f64> {
        require_hierarchical(self.vocab.kind(r))?;
        let (parent, child) = if self.is_hypernym(r) { (t, h) } else { (h, t) };
        Ok(self.violation_with_mask(parent, child, &self.masks[r]))
    }

    /// Cone violation of `child` w.r.t. `parent` on the planes of `mask`.
    pub fn violation_with_mask(&self, parent: EntityId, child: EntityId, mask: &[bool]) -> f64 {
        (0..self.config.dim)
            .filter(|&i| mask[i])
            .map(|i| plane::violation(self.point(parent, i), self.point(child, i), self.config.k))
            .sum()
    }

    pub fn lca_score(&self, w: EntityId, u: EntityId, v: EntityId, r: RelationId) -> Result<f64> {
        require_hierarchical(self.vocab.kind(r))?;
        Ok(self.lca_score_with_mask(w, u, v, &self.masks[r]))
    }

    pub fn lca_score_with_mask(&self, w: EntityId, u: EntityId, v: EntityId, mask: &[bool]) -> f64 {
        (0..self.config.dim)
            .filter(|&i| mask[i])
            .map(|i| plane::lca_term(self.point(w, i), self.point(u, i), self.point(v, i), self.config.k))
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|x| x.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RelationInfo;
    use crate::geometry::{angle_at, half_aperture};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p(x: f64, y: f64) -> PlanePoint {
        PlanePoint::new(x, y)
    }

    fn cfg(dim: usize, ds: usize) -> ModelConfig {
        ModelConfig { dim, subspace_dim: ds, ..Default::default() }
    }

    fn rel(kind: RelationKind, mask: Vec<bool>, angle: f64) -> RelationEmbedding {
        let d = mask.len();
        RelationEmbedding { scale_raw: vec![SCALE_RAW_INIT; d], angle_raw: vec![angle; d], mask, kind }
    }

    fn ent(planes: Vec<PlanePoint>, bias: f64) -> EntityEmbedding {
        EntityEmbedding { planes, bias }
    }

    #[test]
    fn softplus_and_wrap() {
        assert!((softplus(SCALE_RAW_INIT) - 1.0).abs() < 1e-15);
        assert_eq!(softplus(40.0), 40.0);
        assert!(softplus(-800.0) >= 0.0);
        assert_eq!(wrap_angle(0.5), 0.5);
        assert!((wrap_angle(PI) + PI).abs() < 1e-15);
        assert!((wrap_angle(7.0) - (7.0 - 2.0 * PI)).abs() < 1e-15);
        assert!((wrap_angle(-4.0) - (-4.0 + 2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn f1_identities() {
        let h = p(0.35, -0.5);
        let id = rotate_f1(h, 0.0);
        assert!((id.x - h.x).abs() < 1e-12 && (id.y - h.y).abs() < 1e-12);
        let twice = rotate_f1(rotate_f1(h, -PI), -PI);
        assert!((twice.x - h.x).abs() < 1e-12 && (twice.y - h.y).abs() < 1e-12);
        let fast = plane::f1(h, 1.3);
        let slow = rotate_f1(h, 1.3);
        assert!((fast.x - slow.x).abs() < 1e-12 && (fast.y - slow.y).abs() < 1e-12);
        assert!((slow.norm() - h.norm()).abs() < 1e-12);
    }

    #[test]
    fn f2_zero_angle_stays_on_axis_and_realizes_apex_angle() {
        let cone = ConeParams::default();
        let h = p(0.3, 0.4);
        let out = restricted_rotate_f2(h, 0.7, 0.0, cone).unwrap();
        assert!(angle_at(h, out).unwrap() < 1e-7);
        let phi = half_aperture(h, cone).unwrap();
        for theta in [-3.0, -1.0, 0.5, 2.9] {
            let out = restricted_rotate_f2(h, 1.2, theta, cone).unwrap();
            let a = angle_at(h, out).unwrap();
            assert!((a - theta.abs() * phi / PI).abs() < 1e-9, "{a}");
        }
        assert!(restricted_rotate_f2(p(0.0, 0.0), 1.0, 0.1, cone).is_err());
    }

    #[test]
    fn in_cone_examples() {
        let cone = ConeParams::default();
        let apex = p(0.5, 0.0);
        assert!(in_cone(apex, restricted_rotate_f2(apex, 0.4, 2.0, cone).unwrap(), cone).unwrap());
        assert!(!in_cone(apex, p(0.2, 0.0), cone).unwrap());
        assert!(in_cone(p(0.0, 0.0), p(0.2, 0.0), cone).is_err());
    }

    #[test]
    fn score_examples() {
        let c = cfg(3, 1);
        let h = ent(vec![p(0.1, 0.2), p(-0.3, 0.4), p(0.5, -0.1)], 0.25);
        let r = rel(RelationKind::NonHierarchical, vec![false; 3], 0.0);
        assert!((score(&h, &r, &h, &c).unwrap() - 0.5).abs() < 1e-12);

        let t = ent(vec![p(0.4, 0.1), p(0.2, 0.2), p(-0.6, 0.3)], -0.1);
        let mut r = rel(RelationKind::Hyponym, vec![true, false, false], 0.7);
        let base = score(&h, &r, &t, &c).unwrap();
        r.scale_raw[1] = 3.0;
        r.scale_raw[2] = -2.0;
        assert!((score(&h, &r, &t, &c).unwrap() - base).abs() < 1e-12);
        r.scale_raw[0] = 2.0;
        assert!((score(&h, &r, &t, &c).unwrap() - base).abs() > 1e-6);

        let shifted_h = ent(h.planes.clone(), h.bias + 0.3);
        let shifted_t = ent(t.planes.clone(), t.bias + 0.3);
        let s = score(&shifted_h, &r, &shifted_t, &c).unwrap();
        assert!((s - score(&h, &r, &t, &c).unwrap() - 0.6).abs() < 1e-12);

        let bad = ent(vec![p(0.1, 0.1)], 0.0);
        assert!(matches!(score(&bad, &r, &t, &c), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn hypernym_with_full_mask_is_a_role_swap() {
        let c = cfg(2, 2);
        let h = ent(vec![p(0.1, 0.6), p(-0.3, 0.4)], 0.1);
        let t = ent(vec![p(0.4, 0.1), p(0.2, -0.2)], 0.3);
        let mut hyper = rel(RelationKind::Hypernym, vec![true, true], 1.1);
        hyper.scale_raw = vec![0.2, -0.4];
        let mut hypo = hyper.clone();
        hypo.kind = RelationKind::Hyponym;
        let a = score(&h, &hyper, &t, &c).unwrap();
        let b = score(&t, &hypo, &h, &c).unwrap();
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn violation_examples() {
        let c = cfg(2, 1);
        let parent = ent(vec![p(0.5, 0.0), p(0.3, 0.3)], 0.0);
        let r = rel(RelationKind::Hyponym, vec![true, false], 0.0);
        let child_in = ent(vec![restricted_rotate_f2(p(0.5, 0.0), 0.9, 2.5, c.cone()).unwrap(), p(-0.9, 0.0)], 0.0);
        assert_eq!(angle_violation(&parent, &r, &child_in, &c).unwrap(), 0.0);
        let child_out = ent(vec![p(-0.5, 0.0), p(0.0, 0.0)], 0.0);
        let v = angle_violation(&parent, &r, &child_out, &c).unwrap();
        assert!((v - (PI - 0.15f64.asin())).abs() < 1e-7, "{v}");
        let hyper = RelationEmbedding { kind: RelationKind::Hypernym, ..r.clone() };
        assert_eq!(angle_violation(&child_out, &hyper, &parent, &c).unwrap(), v);
        let none = rel(RelationKind::NonHierarchical, vec![false, false], 0.0);
        assert!(matches!(angle_violation(&parent, &none, &child_out, &c), Err(Error::Contract(_))));
    }

    #[test]
    fn lca_examples() {
        let c = cfg(1, 1);
        let cone = c.cone();
        let w = p(0.4, 0.3);
        let theta = 1.3;
        let child = restricted_rotate_f2(w, 0.8, theta, cone).unwrap();
        let r = rel(RelationKind::Hyponym, vec![true], 0.0);
        let s = lca_score(&ent(vec![w], 0.0), &ent(vec![child], 0.0), &ent(vec![child], 0.0), &r, &c).unwrap();
        let phi = half_aperture(w, cone).unwrap();
        assert!((s - (2.0 * phi - 2.0 * theta * phi / PI)).abs() < 1e-9);
        let anti = p(-0.4, -0.3);
        let neg = lca_score(&ent(vec![w], 0.0), &ent(vec![anti], 0.0), &ent(vec![anti], 0.0), &r, &c).unwrap();
        assert!(neg < 0.0);
    }

    fn tiny_model() -> ConeModel {
        let vocab = Vocab::new(
            (0..5).map(|i| format!("e{i}")).collect(),
            vec![
                RelationInfo { name: "a".into(), kind: RelationKind::Hyponym },
                RelationInfo { name: "b".into(), kind: RelationKind::NonHierarchical },
            ],
        )
        .unwrap();
        let m = vec![vec![true, false, true], vec![false; 3], vec![true, false, true], vec![false; 3]];
        ConeModel::init(cfg(3, 2), vocab, m, &mut ChaCha8Rng::seed_from_u64(4)).unwrap()
    }

    #[test]
    fn model_views_agree_with_free_functions() {
        let m = tiny_model();
        for r in 0..4 {
            let mut all = Vec::new();
            m.score_all_tails(1, r, &mut all);
            for t in 0..5 {
                let free = score(&m.entity(1), &m.relation(r), &m.entity(t), &m.config).unwrap();
                assert!((m.score(1, r, t) - free).abs() < 1e-12);
                assert!((all[t] - free).abs() < 1e-12);
            }
        }
        let v = m.angle_violation(0, 2, 3).unwrap();
        let free = angle_violation(&m.entity(0), &m.relation(2), &m.entity(3), &m.config).unwrap();
        assert_eq!(v, free);
    }

    #[test]
    fn init_respects_ranges_and_mask_rules() {
        let m = tiny_model();
        for e in 0..5 {
            for i in 0..3 {
                let n = m.point(e, i).norm();
                assert!((0.2..=0.8 + 1e-12).contains(&n));
            }
            assert_eq!(m.bias(e), 0.0);
        }
        let mut bad = m.masks().to_vec();
        bad[1][0] = true;
        bad[3][0] = true;
        let mut m2 = m.clone();
        assert!(m2.set_masks(bad).is_err());
        assert_eq!(m2.masks(), m.masks());
    }
}
