//! Training: negative sampling, self-adversarial margin loss, width
//! regularization, an analytic backward pass and Adam.
//!
//! For one positive triple with distance `d+` and negatives with distances
//! `d_i`, the loss is
//!
//! ```text
//! L = -log sigmoid(margin - d+) - sum_i p_i * log sigmoid(d_i - margin)
//! p = softmax(-alpha * d)            (held constant in the backward pass)
//! ```
//!
//! A step minimizes the batch mean of `L` plus `lambda` times the mean squared
//! realized width per relation.


use rand::seq::SliceRandom;
use rand::distr::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluator::{evaluate_queries, split_queries, Direction};
use crate::geometry::{dist_1d, dist_1d_partials, offset_wrapped, wrap_scalar, NormKind};
use crate::kg_store::{build_filter_index, KnowledgeGraphDataset, Triple};
use crate::model::{realize_width, side_distance, EntityParams, Model, ModelConfig, RegionView, RelationParams, Side};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub margin: f64,
    pub adversarial_temperature: f64,
    pub reg_lambda: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub negatives_per_positive: usize,
    pub max_steps: usize,
    pub valid_interval: usize,
    /// Validation rounds without improvement before stopping; 0 disables.
    pub patience: usize,
    pub seed: u64,
    /// Upper bound on validation queries scored during training.
    pub valid_sample: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            margin: 9.0,
            adversarial_temperature: 0.5,
            reg_lambda: 0.5,
            learning_rate: 1e-3,
            batch_size: 512,
            negatives_per_positive: 1024,
            max_steps: 100_000,
            valid_interval: 1000,
            patience: 5,
            seed: 42,
            valid_sample: 2000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.margin.is_finite() && self.margin > 0.0) {
            return fail(format!("margin must be positive, got {}", self.margin));
        }
        if !(self.adversarial_temperature.is_finite() && self.adversarial_temperature >= 0.0) {
            return fail(format!(
                "adversarial temperature must be >= 0, got {}",
                self.adversarial_temperature
            ));
        }
        if !(self.reg_lambda.is_finite() && self.reg_lambda >= 0.0) {
            return fail(format!("lambda must be >= 0, got {}", self.reg_lambda));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return fail(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        for (name, v) in [
            ("batch size", self.batch_size),
            ("negatives per positive", self.negatives_per_positive),
            ("max steps", self.max_steps),
            ("validation interval", self.valid_interval),
            ("validation sample", self.valid_sample),
        ] {
            if v == 0 {
                return fail(format!("{name} must be at least 1"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorruptSide {
    Head,
    Tail,
}

/// A positive triple and its corrupted copies.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativeBatch {
    pub positive: Triple,
    pub negatives: Vec<Triple>,
    pub sides: Vec<CorruptSide>,
}

/// Corrupts `positive` `n` times. Each negative swaps the head or the tail
/// (side picked per negative) for a uniformly drawn different entity.
pub fn sample_negatives<R: Rng + ?Sized>(
    rng: &mut R,
    positive: Triple,
    n: usize,
    num_entities: usize,
) -> Result<NegativeBatch> {
    if num_entities < 2 {
        return Err(Error::CannotCorrupt(num_entities));
    }
    if n == 0 {
        return Err(Error::invalid("need at least one negative per positive"));
    }
    let mut negatives = Vec::with_capacity(n);
    let mut sides = Vec::with_capacity(n);
    // one draw picks the side (low bit) and a replacement among the other
    // num_entities - 1 entities
    let choices = Uniform::new(0, 2 * (num_entities - 1)).expect("at least two entities");
    for _ in 0..n {
        let r = choices.sample(rng);
        let mut neg = positive;
        let (side, slot) = if r & 1 == 0 {
            (CorruptSide::Head, &mut neg.head)
        } else {
            (CorruptSide::Tail, &mut neg.tail)
        };
        let e = r >> 1;
        *slot = if e >= *slot { e + 1 } else { e };
        negatives.push(neg);
        sides.push(side);
    }
    Ok(NegativeBatch {
        positive,
        negatives,
        sides,
    })
}

/// Gradient contributions of one positive and its negatives. Only the rows of
/// entities that appear are stored.
#[derive(Debug, Clone)]
pub struct SparseGrad {
    dim: usize,
    relation: usize,
    /// `[head center | head width raw | tail center | tail width raw]`
    relation_row: Vec<f64>,
    slots: FxHashMap<usize, usize>,
    entity_ids: Vec<usize>,
    /// `[base | bump]` per slot.
    entity_rows: Vec<f64>,
}

impl SparseGrad {
    fn new(dim: usize, relation: usize) -> Self {
        Self {
            dim,
            relation,
            relation_row: vec![0.0; 4 * dim],
            slots: FxHashMap::default(),
            entity_ids: Vec::new(),
            entity_rows: Vec::new(),
        }
    }

    fn slot(&mut self, entity: usize) -> usize {
        if let Some(&s) = self.slots.get(&entity) {
            return s;
        }
        let s = self.entity_ids.len();
        self.slots.insert(entity, s);
        self.entity_ids.push(entity);
        self.entity_rows.resize(self.entity_rows.len() + 2 * self.dim, 0.0);
        s
    }

    fn add_point(&mut self, own: usize, other: usize, bump_enabled: bool, g: &[f64]) {
        let d = self.dim;
        let s = self.slot(own);
        for (dst, v) in self.entity_rows[2 * s * d..(2 * s + 1) * d].iter_mut().zip(g) {
            *dst += v;
        }
        if bump_enabled {
            let s = self.slot(other);
            for (dst, v) in self.entity_rows[(2 * s + 1) * d..(2 * s + 2) * d].iter_mut().zip(g) {
                *dst += v;
            }
        }
    }

    pub fn entity_base(&self, entity: usize) -> Option<&[f64]> {
        let s = *self.slots.get(&entity)?;
        Some(&self.entity_rows[2 * s * self.dim..(2 * s + 1) * self.dim])
    }

    pub fn entity_bump(&self, entity: usize) -> Option<&[f64]> {
        let s = *self.slots.get(&entity)?;
        Some(&self.entity_rows[(2 * s + 1) * self.dim..(2 * s + 2) * self.dim])
    }

    pub fn relation(&self) -> usize {
        self.relation
    }

    /// `(center, width_raw)` gradient rows for one side.
    pub fn region(&self, side: Side) -> (&[f64], &[f64]) {
        let d = self.dim;
        let off = match side {
            Side::Head => 0,
            Side::Tail => 2 * d,
        };
        (
            &self.relation_row[off..off + d],
            &self.relation_row[off + d..off + 2 * d],
        )
    }
}

/// Dense gradient buffers shaped like the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub entities: EntityParams,
    pub relations: RelationParams,
}

impl Gradients {
    pub fn zeros_like(model: &Model) -> Self {
        Self {
            entities: EntityParams::zeros(model.num_entities(), model.dim()),
            relations: RelationParams::zeros(model.num_relations(), model.dim()),
        }
    }

    pub fn clear(&mut self) {
        for arr in self.arrays_mut() {
            arr.fill(0.0);
        }
    }

    /// Arrays in the same order as [`Model::arrays`].
    pub fn arrays(&self) -> [&[f64]; 6] {
        [
            &self.entities.base,
            &self.entities.bump,
            &self.relations.head_center_raw,
            &self.relations.head_width_raw,
            &self.relations.tail_center_raw,
            &self.relations.tail_width_raw,
        ]
    }

    fn arrays_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.entities.base,
            &mut self.entities.bump,
            &mut self.relations.head_center_raw,
            &mut self.relations.head_width_raw,
            &mut self.relations.tail_center_raw,
            &mut self.relations.tail_width_raw,
        ]
    }

    pub fn add_sparse(&mut self, g: &SparseGrad, scale: f64) {
        let d = g.dim;
        for (s, &e) in g.entity_ids.iter().enumerate() {
            let rows = &g.entity_rows[2 * s * d..(2 * s + 2) * d];
            let (base, bump) = rows.split_at(d);
            for (dst, v) in self.entities.base[e * d..(e + 1) * d].iter_mut().zip(base) {
                *dst += scale * v;
            }
            for (dst, v) in self.entities.bump[e * d..(e + 1) * d].iter_mut().zip(bump) {
                *dst += scale * v;
            }
        }
        let r = g.relation;
        let row = &g.relation_row;
        let targets = [
            &mut self.relations.head_center_raw,
            &mut self.relations.head_width_raw,
            &mut self.relations.tail_center_raw,
            &mut self.relations.tail_width_raw,
        ];
        for (k, arr) in targets.into_iter().enumerate() {
            for (dst, v) in arr[r * d..(r + 1) * d].iter_mut().zip(&row[k * d..(k + 1) * d]) {
                *dst += scale * v;
            }
        }
    }
}

/// Numerically stable `-log sigmoid(z)`.
#[inline]
pub fn neg_log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `softmax(-alpha * distances)`.
pub fn adversarial_weights(distances: &[f64], alpha: f64) -> Vec<f64> {
    let logits: Vec<f64> = distances.iter().map(|d| -alpha * d).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    pub positive_loss: f64,
    pub negative_loss: f64,
    pub weights: Vec<f64>,
    pub grad: SparseGrad,
}

/// Accumulates `coef * d(side distance)` into the point, center and raw-width
/// gradient buffers.
#[allow(clippy::too_many_arguments)]
fn side_backward(
    base: &[f64],
    bump: Option<&[f64]>,
    region: &RegionView,
    torus: bool,
    norm: NormKind,
    coef: f64,
    g_point: &mut [f64],
    g_center: &mut [f64],
    g_width_raw: &mut [f64],
) {
    let total = match norm {
        NormKind::L2 => side_distance(base, bump, region, torus, norm),
        _ => 1.0,
    };
    if total == 0.0 {
        return;
    }
    let out = (g_point, g_center, g_width_raw);
    match (bump, torus, norm) {
        (Some(b), true, NormKind::L1) => backward_dims::<true, true, 0>(base, b, region, coef, total, out),
        (Some(b), true, NormKind::L2) => backward_dims::<true, true, 1>(base, b, region, coef, total, out),
        (Some(b), true, NormKind::EL2) => backward_dims::<true, true, 2>(base, b, region, coef, total, out),
        (Some(b), false, NormKind::L1) => backward_dims::<true, false, 0>(base, b, region, coef, total, out),
        (Some(b), false, NormKind::L2) => backward_dims::<true, false, 1>(base, b, region, coef, total, out),
        (Some(b), false, NormKind::EL2) => backward_dims::<true, false, 2>(base, b, region, coef, total, out),
        (None, true, NormKind::L1) => backward_dims::<false, true, 0>(base, base, region, coef, total, out),
        (None, true, NormKind::L2) => backward_dims::<false, true, 1>(base, base, region, coef, total, out),
        (None, true, NormKind::EL2) => backward_dims::<false, true, 2>(base, base, region, coef, total, out),
        (None, false, NormKind::L1) => backward_dims::<false, false, 0>(base, base, region, coef, total, out),
        (None, false, NormKind::L2) => backward_dims::<false, false, 1>(base, base, region, coef, total, out),
        (None, false, NormKind::EL2) => backward_dims::<false, false, 2>(base, base, region, coef, total, out),
    }
}

/// Per-dimension body of [`side_backward`]; `NORM` is 0 for L1, 1 for L2 and
/// 2 for eL2.
#[inline(always)]
fn backward_dims<const BUMP: bool, const TORUS: bool, const NORM: u8>(
    base: &[f64],
    bump: &[f64],
    region: &RegionView,
    coef: f64,
    total: f64,
    (g_point, g_center, g_width_raw): (&mut [f64], &mut [f64], &mut [f64]),
) {
    let d = base.len();
    let (bump, center, width) = (&bump[..d], &region.center[..d], &region.width[..d]);
    let (g_point, g_center, g_width_raw) = (&mut g_point[..d], &mut g_center[..d], &mut g_width_raw[..d]);
    for i in 0..d {
        let x = if BUMP { base[i] + bump[i] } else { base[i] };
        let (delta, sign) = if TORUS {
            offset_wrapped(wrap_scalar(x), center[i])
        } else {
            let diff = x - center[i];
            let s = if diff > 0.0 { 1.0 } else { 0.0 } - if diff < 0.0 { 1.0 } else { 0.0 };
            (diff.abs(), s)
        };
        let w = width[i];
        let (d_delta, d_w) = dist_1d_partials(delta, w);
        let norm_grad = match NORM {
            0 => 1.0,
            1 => dist_1d(delta, w) / total,
            _ => 2.0 * dist_1d(delta, w),
        };
        let k = coef * norm_grad;
        let gx = k * d_delta * sign;
        g_point[i] += gx;
        g_center[i] -= gx;
        g_width_raw[i] += k * d_w * w * (1.0 - 2.0 * w);
    }
}

/// Loss of one positive and its negatives, with gradients of that loss.
pub fn self_adversarial_loss(
    model: &Model,
    batch: &NegativeBatch,
    config: &TrainConfig,
) -> Result<LossOutput> {
    model.check_triple(&batch.positive)?;
    let relation = batch.positive.relation;
    let head_region = model.region_view(relation, Side::Head);
    let tail_region = model.region_view(relation, Side::Tail);
    let gamma = config.margin;

    let d_pos = model.distance_with(&batch.positive, &head_region, &tail_region);
    // Negatives repeat often on small graphs; score each distinct one once
    // and carry its multiplicity.
    let mut unique: Vec<Triple> = Vec::new();
    let mut count: Vec<f64> = Vec::new();
    let mut index: FxHashMap<Triple, usize> = FxHashMap::default();
    let slot_of: Vec<usize> = batch
        .negatives
        .iter()
        .map(|t| {
            let u = *index.entry(*t).or_insert_with(|| {
                unique.push(*t);
                count.push(0.0);
                unique.len() - 1
            });
            count[u] += 1.0;
            u
        })
        .collect();
    for t in &unique {
        model.check_triple(t)?;
        if t.relation != relation {
            return Err(Error::invalid("negatives must share the positive's relation"));
        }
    }
    let d_unique: Vec<f64> = unique
        .iter()
        .map(|t| model.distance_with(t, &head_region, &tail_region))
        .collect();

    // softmax(-alpha * d) over all negatives, grouped by distinct triple
    let alpha = config.adversarial_temperature;
    let top = d_unique
        .iter()
        .map(|d| -alpha * d)
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = d_unique.iter().map(|d| (-alpha * d - top).exp()).collect();
    let total: f64 = exps.iter().zip(&count).map(|(e, m)| e * m).sum();
    let p_unique: Vec<f64> = exps.iter().map(|e| e / total).collect();
    let weights: Vec<f64> = slot_of.iter().map(|&u| p_unique[u]).collect();

    let positive_loss = neg_log_sigmoid(gamma - d_pos);
    let negative_loss: f64 = p_unique
        .iter()
        .zip(&count)
        .zip(&d_unique)
        .map(|((p, m), d)| m * p * neg_log_sigmoid(d - gamma))
        .sum();
    let unique_coef: Vec<f64> = p_unique
        .iter()
        .zip(&count)
        .zip(&d_unique)
        .map(|((p, m), d)| -m * p * sigmoid(gamma - d))
        .collect();

    let dim = model.dim();
    let torus = model.config.torus_enabled;
    let norm = model.config.norm;
    let bump_enabled = model.config.bump_enabled;
    let mut grad = SparseGrad::new(dim, relation);
    let mut g_point = vec![0.0; dim];

    let coefs = std::iter::once((&batch.positive, sigmoid(d_pos - gamma)))
        .chain(unique.iter().zip(unique_coef.iter().copied()));
    let mut rel = vec![0.0; 4 * dim];
    for (t, coef) in coefs {
        if coef == 0.0 {
            continue;
        }
        let (head_rel, tail_rel) = rel.split_at_mut(2 * dim);
        let (hc, hw) = head_rel.split_at_mut(dim);
        let (tc, tw) = tail_rel.split_at_mut(dim);

        g_point.fill(0.0);
        side_backward(
            model.base(t.head),
            model.bump(t.tail),
            &head_region,
            torus,
            norm,
            coef,
            &mut g_point,
            hc,
            hw,
        );
        grad.add_point(t.head, t.tail, bump_enabled, &g_point);

        g_point.fill(0.0);
        side_backward(
            model.base(t.tail),
            model.bump(t.head),
            &tail_region,
            torus,
            norm,
            coef,
            &mut g_point,
            tc,
            tw,
        );
        grad.add_point(t.tail, t.head, bump_enabled, &g_point);
    }
    grad.relation_row = rel;

    Ok(LossOutput {
        loss: positive_loss + negative_loss,
        positive_loss,
        negative_loss,
        weights,
        grad,
    })
}

/// Mean squared realized width per relation, and its gradient with respect to
/// the raw width parameters.
pub fn width_regularization(model: &Model) -> (f64, RelationParams) {
    let n_rel = model.num_relations();
    let mut grad = RelationParams::zeros(n_rel, model.dim());
    if n_rel == 0 {
        return (0.0, grad);
    }
    let scale = 1.0 / n_rel as f64;
    let mut total = 0.0;
    for (raw, g) in [
        (&model.relations.head_width_raw, &mut grad.head_width_raw),
        (&model.relations.tail_width_raw, &mut grad.tail_width_raw),
    ] {
        for (r, g) in raw.iter().zip(g.iter_mut()) {
            let w = realize_width(*r);
            total += w * w;
            *g = scale * 2.0 * w * w * (1.0 - 2.0 * w);
        }
    }
    (scale * total, grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    /// `loss_kge + lambda * loss_reg`.
    pub loss: f64,
    /// Mean self-adversarial loss over the positives of the batch.
    pub loss_kge: f64,
    /// Unweighted width penalty.
    pub loss_reg: f64,
}

/// Batch loss and its gradient, accumulated deterministically in batch order
/// whatever the number of worker threads.
pub fn batch_gradient(
    model: &Model,
    batch: &[NegativeBatch],
    config: &TrainConfig,
    grads: &mut Gradients,
) -> Result<StepReport> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    grads.clear();
    let scale = 1.0 / batch.len() as f64;
    let chunk = (rayon::current_num_threads() * 4).max(1);
    let mut loss_kge = 0.0;
    for (c, part) in batch.chunks(chunk).enumerate() {
        let outputs: Vec<Result<LossOutput>> = part
            .par_iter()
            .map(|b| self_adversarial_loss(model, b, config))
            .collect();
        for (i, out) in outputs.into_iter().enumerate() {
            let out = out?;
            if !out.loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step: 0,
                    triple: c * chunk + i,
                });
            }
            loss_kge += out.loss;
            grads.add_sparse(&out.grad, scale);
        }
    }
    loss_kge *= scale;
    let (loss_reg, reg_grad) = width_regularization(model);
    if config.reg_lambda > 0.0 {
        let lambda = config.reg_lambda;
        for (dst, g) in [
            (&mut grads.relations.head_width_raw, &reg_grad.head_width_raw),
            (&mut grads.relations.tail_width_raw, &reg_grad.tail_width_raw),
        ] {
            for (d, g) in dst.iter_mut().zip(g) {
                *d += lambda * g;
            }
        }
    }
    Ok(StepReport {
        loss: loss_kge + config.reg_lambda * loss_reg,
        loss_kge,
        loss_reg,
    })
}

/// Adam moments for every parameter array.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub first_moment: Gradients,
    pub second_moment: Gradients,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(model: &Model) -> Self {
        Self {
            first_moment: Gradients::zeros_like(model),
            second_moment: Gradients::zeros_like(model),
            step: 0,
        }
    }

    pub fn apply(&mut self, model: &mut Model, grads: &Gradients, learning_rate: f64) {
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - ADAM_BETA1.powi(t);
        let bias2 = 1.0 - ADAM_BETA2.powi(t);
        let params = model.arrays_mut();
        let m = self.first_moment.arrays_mut();
        let v = self.second_moment.arrays_mut();
        for (((p, g), m), v) in params.into_iter().zip(grads.arrays()).zip(m).zip(v) {
            for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *p -= learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
            }
        }
    }
}

/// One optimization step: batch gradient, then an Adam update.
pub fn train_step(
    model: &mut Model,
    optimizer: &mut OptimizerState,
    batch: &[NegativeBatch],
    config: &TrainConfig,
    grads: &mut Gradients,
) -> Result<StepReport> {
    let report = batch_gradient(model, batch, config, grads).map_err(|e| match e {
        Error::NonFiniteLoss { triple, .. } => Error::NonFiniteLoss {
            step: optimizer.step as usize + 1,
            triple,
        },
        other => other,
    })?;
    optimizer.apply(model, grads, config.learning_rate);
    Ok(report)
}

/// One validation event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub step: usize,
    /// Means over the steps since the previous record.
    pub loss: f64,
    pub loss_kge: f64,
    pub loss_reg: f64,
    pub valid_mrr: Option<f64>,
    pub valid_hits1: Option<f64>,
    pub valid_hits3: Option<f64>,
    pub valid_hits10: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the best validation MRR (the final ones without a
    /// validation split).
    pub best: Model,
    pub best_step: usize,
    pub best_mrr: Option<f64>,
    pub last: Model,
    pub optimizer: OptimizerState,
    pub history: Vec<HistoryRecord>,
    pub steps: usize,
}

pub fn train(
    dataset: &KnowledgeGraphDataset,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with_observer(dataset, model_config, train_config, |_| {})
}

/// [`train`] with a callback invoked after every validation event.
pub fn train_with_observer<F>(
    dataset: &KnowledgeGraphDataset,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    mut observer: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&HistoryRecord),
{
    train_config.validate()?;
    model_config.validate()?;
    if dataset.train.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    let num_entities = dataset.num_entities();
    if num_entities < 2 {
        return Err(Error::CannotCorrupt(num_entities));
    }
    let mut model = Model::init(model_config.clone(), num_entities, dataset.num_relations())?;
    let mut optimizer = OptimizerState::new(&model);
    let mut grads = Gradients::zeros_like(&model);
    let filter = build_filter_index(dataset);
    let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed);
    let valid_queries = validation_subsample(&dataset.valid, train_config);

    let mut order: Vec<usize> = (0..dataset.train.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;

    let mut history = Vec::new();
    let mut best: Option<(Model, usize, f64)> = None;
    let mut stale = 0;
    let mut window = (0.0, 0.0, 0.0, 0usize);
    let mut steps = 0;

    for step in 1..=train_config.max_steps {
        if cursor == order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let end = (cursor + train_config.batch_size).min(order.len());
        let positions = &order[cursor..end];
        cursor = end;
        let batch = positions
            .iter()
            .map(|&i| {
                sample_negatives(
                    &mut rng,
                    dataset.train[i],
                    train_config.negatives_per_positive,
                    num_entities,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let report = train_step(&mut model, &mut optimizer, &batch, train_config, &mut grads)
            .map_err(|e| match e {
                Error::NonFiniteLoss { step, triple } => Error::NonFiniteLoss {
                    step,
                    triple: positions[triple],
                },
                other => other,
            })?;
        steps = step;
        window.0 += report.loss;
        window.1 += report.loss_kge;
        window.2 += report.loss_reg;
        window.3 += 1;

        if step % train_config.valid_interval != 0 && step != train_config.max_steps {
            continue;
        }
        let metrics = if valid_queries.is_empty() {
            None
        } else {
            Some(evaluate_queries(&model, &valid_queries, &filter)?)
        };
        let n = window.3 as f64;
        let record = HistoryRecord {
            step,
            loss: window.0 / n,
            loss_kge: window.1 / n,
            loss_reg: window.2 / n,
            valid_mrr: metrics.as_ref().map(|m| m.mrr()),
            valid_hits1: metrics.as_ref().map(|m| m.hits_at(1)),
            valid_hits3: metrics.as_ref().map(|m| m.hits_at(3)),
            valid_hits10: metrics.as_ref().map(|m| m.hits_at(10)),
        };
        window = (0.0, 0.0, 0.0, 0);
        log::info!(
            "{}",
            serde_json::to_string(&record).unwrap_or_else(|_| format!("{record:?}"))
        );
        observer(&record);
        history.push(record);

        if let Some(m) = metrics {
            let mrr = m.mrr();
            if best.as_ref().is_none_or(|(_, _, b)| mrr > *b) {
                best = Some((model.clone(), step, mrr));
                stale = 0;
            } else {
                stale += 1;
                if train_config.patience > 0 && stale >= train_config.patience {
                    break;
                }
            }
        }
    }

    let (best_model, best_step, best_mrr) = match best {
        Some((m, s, mrr)) => (m, s, Some(mrr)),
        None => (model.clone(), steps, None),
    };
    Ok(TrainOutcome {
        best: best_model,
        best_step,
        best_mrr,
        last: model,
        optimizer,
        history,
        steps,
    })
}

/// Fixed random subset of at most `valid_sample` validation queries, in split
/// order.
fn validation_subsample(valid: &[Triple], config: &TrainConfig) -> Vec<(Triple, Direction)> {
    let queries = split_queries(valid);
    if queries.len() <= config.valid_sample {
        return queries;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e37_79b9));
    let mut picked: Vec<usize> = (0..queries.len()).collect();
    picked.shuffle(&mut rng);
    picked.truncate(config.valid_sample);
    picked.sort_unstable();
    picked.into_iter().map(|i| queries[i]).collect()
}
