//! Parameters and forward scoring.
//!
//! Every entity owns a base position `e` and a bump `b`. Inside a triple
//! `(h, r, t)` the head is shown at `wrap(e_h + b_t)` and the tail at
//! `wrap(e_t + b_h)`. Each relation owns one head region and one tail region.
//! The triple distance is the norm of the head's per-dimension region distance
//! plus the norm of the tail's, and the score is its negation.
//!
//! All parameters are stored unconstrained. Centers are wrapped on read and
//! widths are realized as `0.5 * sigmoid(raw)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, dist_1d, offset_wrapped, wrap_scalar, CyclicOrthotope, NormKind};
use crate::kg_store::Triple;

/// Realized widths never drop below this, which keeps distances finite.
pub const MIN_WIDTH: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub dim: usize,
    pub norm: NormKind,
    /// When false, nothing is wrapped and offsets are plain `|x - c|`.
    pub torus_enabled: bool,
    /// When false, entity bumps are not added to counterpart positions.
    pub bump_enabled: bool,
    pub seed: u64,
    /// Realized half-width every region starts with.
    pub init_width: f64,
    /// Bumps start uniform in `[-init_bump, init_bump]`.
    pub init_bump: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dim: 500,
            norm: NormKind::EL2,
            torus_enabled: true,
            bump_enabled: true,
            seed: 42,
            init_width: 0.2,
            init_bump: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("dim must be at least 1".into()));
        }
        if !(self.init_width > 0.0 && self.init_width < 0.5) {
            return Err(Error::Config(format!(
                "init_width = {} must lie in (0, 0.5)",
                self.init_width
            )));
        }
        if !(self.init_bump.is_finite() && self.init_bump >= 0.0) {
            return Err(Error::Config(format!(
                "init_bump = {} must be finite and nonnegative",
                self.init_bump
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Head,
    Tail,
}

/// Row-major `(|E|, d)` arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityParams {
    pub base: Vec<f64>,
    pub bump: Vec<f64>,
}

impl EntityParams {
    pub fn zeros(num_entities: usize, dim: usize) -> Self {
        Self {
            base: vec![0.0; num_entities * dim],
            bump: vec![0.0; num_entities * dim],
        }
    }
}

/// Row-major `(|R|, d)` arrays of raw (pre-activation) region parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationParams {
    pub head_center_raw: Vec<f64>,
    pub head_width_raw: Vec<f64>,
    pub tail_center_raw: Vec<f64>,
    pub tail_width_raw: Vec<f64>,
}

impl RelationParams {
    pub fn zeros(num_relations: usize, dim: usize) -> Self {
        let n = num_relations * dim;
        Self {
            head_center_raw: vec![0.0; n],
            head_width_raw: vec![0.0; n],
            tail_center_raw: vec![0.0; n],
            tail_width_raw: vec![0.0; n],
        }
    }

    pub fn center_raw(&self, side: Side) -> &[f64] {
        match side {
            Side::Head => &self.head_center_raw,
            Side::Tail => &self.tail_center_raw,
        }
    }

    pub fn width_raw(&self, side: Side) -> &[f64] {
        match side {
            Side::Head => &self.head_width_raw,
            Side::Tail => &self.tail_width_raw,
        }
    }
}

/// `0.5 * sigmoid(raw)`, floored at [`MIN_WIDTH`].
#[inline]
pub fn realize_width(raw: f64) -> f64 {
    let s = if raw >= 0.0 {
        1.0 / (1.0 + (-raw).exp())
    } else {
        let e = raw.exp();
        e / (1.0 + e)
    };
    (0.5 * s).max(MIN_WIDTH)
}

/// Inverse of [`realize_width`] for widths in `(0, 0.5)`.
pub fn width_to_raw(width: f64) -> f64 {
    let p = 2.0 * width;
    (p / (1.0 - p)).ln()
}

/// A prediction query with one entity slot left open.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Query {
    /// `(head, relation, ?)`
    Tail { head: usize, relation: usize },
    /// `(?, relation, tail)`
    Head { relation: usize, tail: usize },
}

impl Query {
    pub fn relation(&self) -> usize {
        match *self {
            Query::Tail { relation, .. } | Query::Head { relation, .. } => relation,
        }
    }

    pub fn complete(&self, entity: usize) -> Triple {
        match *self {
            Query::Tail { head, relation } => Triple::new(head, relation, entity),
            Query::Head { relation, tail } => Triple::new(entity, relation, tail),
        }
    }
}

/// Realized region in the form the scoring kernels consume.
#[derive(Debug, Clone)]
pub(crate) struct RegionView {
    /// Wrapped when the torus is enabled, raw otherwise.
    pub center: Vec<f64>,
    pub width: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub entities: EntityParams,
    pub relations: RelationParams,
    num_entities: usize,
    num_relations: usize,
}

impl Model {
    /// Seeded initialization: bases and centers uniform on `[0, 1)`, bumps
    /// uniform on `[-init_bump, init_bump]`, every width at `init_width`.
    pub fn init(config: ModelConfig, num_entities: usize, num_relations: usize) -> Result<Self> {
        config.validate()?;
        let d = config.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut uniform = |n: usize, lo: f64, hi: f64| -> Vec<f64> {
            (0..n)
                .map(|_| if hi > lo { rng.random_range(lo..hi) } else { lo })
                .collect()
        };
        let base = uniform(num_entities * d, 0.0, 1.0);
        let bump = uniform(num_entities * d, -config.init_bump, config.init_bump);
        let head_center_raw = uniform(num_relations * d, 0.0, 1.0);
        let tail_center_raw = uniform(num_relations * d, 0.0, 1.0);
        let raw_width = width_to_raw(config.init_width);
        let relations = RelationParams {
            head_center_raw,
            head_width_raw: vec![raw_width; num_relations * d],
            tail_center_raw,
            tail_width_raw: vec![raw_width; num_relations * d],
        };
        Ok(Self {
            config,
            entities: EntityParams { base, bump },
            relations,
            num_entities,
            num_relations,
        })
    }

    /// Assembles a model from existing arrays, checking their shapes.
    pub fn from_parts(
        config: ModelConfig,
        entities: EntityParams,
        relations: RelationParams,
    ) -> Result<Self> {
        config.validate()?;
        let d = config.dim;
        let shape_err = |what: &str, len: usize| {
            Error::invalid(format!("{what} has length {len}, not a multiple of dim {d}"))
        };
        if !entities.base.len().is_multiple_of(d) {
            return Err(shape_err("entity base", entities.base.len()));
        }
        if !relations.head_center_raw.len().is_multiple_of(d) {
            return Err(shape_err("head centers", relations.head_center_raw.len()));
        }
        let num_entities = entities.base.len() / d;
        let num_relations = relations.head_center_raw.len() / d;
        if entities.bump.len() != entities.base.len() {
            return Err(Error::invalid("entity bump and base arrays differ in length"));
        }
        let rel_len = num_relations * d;
        for (name, arr) in [
            ("head widths", &relations.head_width_raw),
            ("tail centers", &relations.tail_center_raw),
            ("tail widths", &relations.tail_width_raw),
        ] {
            if arr.len() != rel_len {
                return Err(Error::invalid(format!(
                    "{name} has length {}, expected {rel_len}",
                    arr.len()
                )));
            }
        }
        Ok(Self {
            config,
            entities,
            relations,
            num_entities,
            num_relations,
        })
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    pub(crate) fn check_entity(&self, id: usize) -> Result<()> {
        if id >= self.num_entities {
            return Err(Error::invalid(format!(
                "entity id {id} out of range (|E| = {})",
                self.num_entities
            )));
        }
        Ok(())
    }

    pub(crate) fn check_relation(&self, id: usize) -> Result<()> {
        if id >= self.num_relations {
            return Err(Error::invalid(format!(
                "relation id {id} out of range (|R| = {})",
                self.num_relations
            )));
        }
        Ok(())
    }

    pub(crate) fn check_triple(&self, t: &Triple) -> Result<()> {
        self.check_entity(t.head)?;
        self.check_entity(t.tail)?;
        self.check_relation(t.relation)
    }

    #[inline]
    pub(crate) fn base(&self, entity: usize) -> &[f64] {
        let d = self.config.dim;
        &self.entities.base[entity * d..(entity + 1) * d]
    }

    #[inline]
    pub(crate) fn bump(&self, entity: usize) -> Option<&[f64]> {
        let d = self.config.dim;
        self.config
            .bump_enabled
            .then(|| &self.entities.bump[entity * d..(entity + 1) * d])
    }

    fn embed(&self, own: usize, other: usize) -> Vec<f64> {
        let base = self.base(own);
        let shifted: Vec<f64> = match self.bump(other) {
            Some(b) => base.iter().zip(b).map(|(e, b)| e + b).collect(),
            None => base.to_vec(),
        };
        if self.config.torus_enabled {
            shifted.into_iter().map(wrap_scalar).collect()
        } else {
            shifted
        }
    }

    /// Head position in the context of `triple`: `wrap(e_h + b_t)`.
    pub fn head_embedding(&self, triple: &Triple) -> Result<Vec<f64>> {
        self.check_triple(triple)?;
        Ok(self.embed(triple.head, triple.tail))
    }

    /// Tail position in the context of `triple`: `wrap(e_t + b_h)`.
    pub fn tail_embedding(&self, triple: &Triple) -> Result<Vec<f64>> {
        self.check_triple(triple)?;
        Ok(self.embed(triple.tail, triple.head))
    }

    /// Realized torus region. The center is always wrapped here, including in
    /// the Euclidean ablation.
    pub fn realized_region(&self, relation: usize, side: Side) -> Result<CyclicOrthotope> {
        self.check_relation(relation)?;
        let d = self.config.dim;
        let range = relation * d..(relation + 1) * d;
        let center = &self.relations.center_raw(side)[range.clone()];
        let width = self.relations.width_raw(side)[range]
            .iter()
            .map(|&r| realize_width(r))
            .collect();
        CyclicOrthotope::new(center, width)
    }

    pub(crate) fn region_view(&self, relation: usize, side: Side) -> RegionView {
        let d = self.config.dim;
        let range = relation * d..(relation + 1) * d;
        let raw = &self.relations.center_raw(side)[range.clone()];
        let center = if self.config.torus_enabled {
            raw.iter().map(|&c| wrap_scalar(c)).collect()
        } else {
            raw.to_vec()
        };
        let width = self.relations.width_raw(side)[range]
            .iter()
            .map(|&r| realize_width(r))
            .collect();
        RegionView { center, width }
    }

    /// Norm of the per-dimension region distance of `base + bump`.
    #[inline]
    pub(crate) fn side_distance(&self, base: &[f64], bump: Option<&[f64]>, region: &RegionView) -> f64 {
        side_distance(
            base,
            bump,
            region,
            self.config.torus_enabled,
            self.config.norm,
        )
    }

    pub(crate) fn distance_with(&self, t: &Triple, head_region: &RegionView, tail_region: &RegionView) -> f64 {
        let head = self.side_distance(self.base(t.head), self.bump(t.tail), head_region);
        let tail = self.side_distance(self.base(t.tail), self.bump(t.head), tail_region);
        head + tail
    }

    /// Head-side norm plus tail-side norm; zero when both sit at their centers.
    pub fn triple_distance(&self, triple: &Triple) -> Result<f64> {
        self.check_triple(triple)?;
        let head = self.region_view(triple.relation, Side::Head);
        let tail = self.region_view(triple.relation, Side::Tail);
        Ok(self.distance_with(triple, &head, &tail))
    }

    pub fn score(&self, triple: &Triple) -> Result<f64> {
        Ok(-self.triple_distance(triple)?)
    }

    /// Scores of the query completed with every entity, in id order.
    pub fn score_all_candidates(&self, query: Query) -> Result<Vec<f64>> {
        match query {
            Query::Tail { head, relation } => {
                self.check_entity(head)?;
                self.check_relation(relation)?;
            }
            Query::Head { relation, tail } => {
                self.check_entity(tail)?;
                self.check_relation(relation)?;
            }
        }
        let head_region = self.region_view(query.relation(), Side::Head);
        let tail_region = self.region_view(query.relation(), Side::Tail);
        Ok((0..self.num_entities)
            .map(|e| -self.distance_with(&query.complete(e), &head_region, &tail_region))
            .collect())
    }

    /// Mean realized half-width over all relations, sides and dimensions.
    pub fn mean_width(&self) -> f64 {
        let r = &self.relations;
        let n = r.head_width_raw.len() + r.tail_width_raw.len();
        if n == 0 {
            return 0.0;
        }
        let sum: f64 = r
            .head_width_raw
            .iter()
            .chain(&r.tail_width_raw)
            .map(|&raw| realize_width(raw))
            .sum();
        sum / n as f64
    }

    /// Parameter arrays in checkpoint order.
    pub fn arrays(&self) -> [(&'static str, &[f64]); 6] {
        [
            ("entity_base", &self.entities.base),
            ("entity_bump", &self.entities.bump),
            ("head_center_raw", &self.relations.head_center_raw),
            ("head_width_raw", &self.relations.head_width_raw),
            ("tail_center_raw", &self.relations.tail_center_raw),
            ("tail_width_raw", &self.relations.tail_width_raw),
        ]
    }

    pub(crate) fn arrays_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.entities.base,
            &mut self.entities.bump,
            &mut self.relations.head_center_raw,
            &mut self.relations.head_width_raw,
            &mut self.relations.tail_center_raw,
            &mut self.relations.tail_width_raw,
        ]
    }
}

#[inline]
pub(crate) fn side_distance(
    base: &[f64],
    bump: Option<&[f64]>,
    region: &RegionView,
    torus: bool,
    norm: NormKind,
) -> f64 {
    let square = norm != NormKind::L1;
    let acc = match (bump, torus, square) {
        (Some(b), true, true) => side_sum::<true, true, true>(base, b, region),
        (Some(b), true, false) => side_sum::<true, true, false>(base, b, region),
        (Some(b), false, true) => side_sum::<true, false, true>(base, b, region),
        (Some(b), false, false) => side_sum::<true, false, false>(base, b, region),
        (None, true, true) => side_sum::<false, true, true>(base, base, region),
        (None, true, false) => side_sum::<false, true, false>(base, base, region),
        (None, false, true) => side_sum::<false, false, true>(base, base, region),
        (None, false, false) => side_sum::<false, false, false>(base, base, region),
    };
    match norm {
        NormKind::L2 => acc.sqrt(),
        _ => acc,
    }
}

/// Sum of per-dimension distances (squared when `SQUARE`), in index order.
#[inline(always)]
fn side_sum<const BUMP: bool, const TORUS: bool, const SQUARE: bool>(
    base: &[f64],
    bump: &[f64],
    region: &RegionView,
) -> f64 {
    let d = base.len();
    let (bump, center, width) = (&bump[..d], &region.center[..d], &region.width[..d]);
    let mut acc = 0.0;
    for i in 0..d {
        let x = if BUMP { base[i] + bump[i] } else { base[i] };
        let delta = if TORUS {
            offset_wrapped(wrap_scalar(x), center[i]).0
        } else {
            (x - center[i]).abs()
        };
        let v = dist_1d(delta, width[i]);
        acc += if SQUARE { v * v } else { v };
    }
    acc
}

/// Geometry-module route to the same distance, used to cross-check the kernels.
pub fn reference_triple_distance(model: &Model, triple: &Triple) -> Result<f64> {
    let head = model.head_embedding(triple)?;
    let tail = model.tail_embedding(triple)?;
    let hr = model.realized_region(triple.relation, Side::Head)?;
    let tr = model.realized_region(triple.relation, Side::Tail)?;
    let norm = model.config.norm;
    Ok(geometry::aggregate_norm(&geometry::region_distance(&head, &hr)?, norm)?
        + geometry::aggregate_norm(&geometry::region_distance(&tail, &tr)?, norm)?)
}
