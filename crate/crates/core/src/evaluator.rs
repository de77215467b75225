//! Filtered link-prediction ranking, MRR / Hits@K, and geometric checks of
//! relation patterns on learned regions.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    self, arc_intersection, arc_subsume_slack, overlap_slack, subsume_slack, Arc, CyclicOrthotope,
};
use crate::kg_store::{FilterIndex, Triple};
use crate::model::{Model, Query, Side};

/// Cut-offs reported in every [`MetricsReport`].
pub const HITS_AT: [usize; 3] = [1, 3, 10];

/// L-infinity tolerance for parameter-equality patterns (symmetry, inversion).
pub const PARAM_TOLERANCE: f64 = 1e-3;

/// Rounding allowance for containment patterns, so that a region counts as
/// containing an identical copy of itself.
pub const CONTAINMENT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Rank the true head of `(?, r, t)`.
    Head,
    /// Rank the true tail of `(h, r, ?)`.
    Tail,
}

impl Direction {
    pub fn query(self, t: &Triple) -> Query {
        match self {
            Direction::Head => Query::Head {
                relation: t.relation,
                tail: t.tail,
            },
            Direction::Tail => Query::Tail {
                head: t.head,
                relation: t.relation,
            },
        }
    }

    pub fn target(self, t: &Triple) -> usize {
        match self {
            Direction::Head => t.head,
            Direction::Tail => t.tail,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankResult {
    pub triple: Triple,
    pub direction: Direction,
    /// Tie-averaged rank in `[1, |E|]`.
    pub rank: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionMetrics {
    pub mrr: f64,
    pub hits: BTreeMap<usize, f64>,
    pub count: usize,
}

impl DirectionMetrics {
    pub fn from_ranks(ranks: &[f64]) -> Self {
        let count = ranks.len();
        let n = count.max(1) as f64;
        let mrr = ranks.iter().map(|r| 1.0 / r).sum::<f64>() / n;
        let hits = HITS_AT
            .iter()
            .map(|&k| {
                let hit = ranks.iter().filter(|&&r| r <= k as f64).count();
                (k, hit as f64 / n)
            })
            .collect();
        Self { mrr, hits, count }
    }

    pub fn hits_at(&self, k: usize) -> f64 {
        self.hits.get(&k).copied().unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub head: DirectionMetrics,
    pub tail: DirectionMetrics,
    pub overall: DirectionMetrics,
}

impl MetricsReport {
    pub fn from_ranks(ranks: &[RankResult]) -> Self {
        let pick = |dir: Option<Direction>| -> Vec<f64> {
            ranks
                .iter()
                .filter(|r| dir.is_none_or(|d| r.direction == d))
                .map(|r| r.rank)
                .collect()
        };
        Self {
            head: DirectionMetrics::from_ranks(&pick(Some(Direction::Head))),
            tail: DirectionMetrics::from_ranks(&pick(Some(Direction::Tail))),
            overall: DirectionMetrics::from_ranks(&pick(None)),
        }
    }

    pub fn mrr(&self) -> f64 {
        self.overall.mrr
    }

    pub fn hits_at(&self, k: usize) -> f64 {
        self.overall.hits_at(k)
    }
}

/// Tie-averaged rank of `target_score` among the unmasked candidates.
pub(crate) fn tie_averaged_rank(scores: &[f64], target: usize, masked: &[usize]) -> f64 {
    let target_score = scores[target];
    let mut greater = 0usize;
    let mut equal = 0usize;
    for (e, &s) in scores.iter().enumerate() {
        if e == target || masked.binary_search(&e).is_ok() {
            continue;
        }
        if s > target_score {
            greater += 1;
        } else if s == target_score {
            equal += 1;
        }
    }
    1.0 + greater as f64 + equal as f64 / 2.0
}

/// Rank of the true entity among all candidates, with every other known-true
/// completion removed.
pub fn filtered_rank(
    model: &Model,
    triple: &Triple,
    direction: Direction,
    filter: &FilterIndex,
) -> Result<RankResult> {
    let scores = model.score_all_candidates(direction.query(triple))?;
    let masked = match direction {
        Direction::Head => filter.true_heads(triple.relation, triple.tail),
        Direction::Tail => filter.true_tails(triple.head, triple.relation),
    };
    Ok(RankResult {
        triple: *triple,
        direction,
        rank: tie_averaged_rank(&scores, direction.target(triple), masked),
    })
}

/// Ranks an explicit list of queries. Output order follows input order.
pub fn rank_queries(
    model: &Model,
    queries: &[(Triple, Direction)],
    filter: &FilterIndex,
) -> Result<Vec<RankResult>> {
    queries
        .par_iter()
        .map(|(t, dir)| filtered_rank(model, t, *dir, filter))
        .collect()
}

pub fn evaluate_queries(
    model: &Model,
    queries: &[(Triple, Direction)],
    filter: &FilterIndex,
) -> Result<MetricsReport> {
    if queries.is_empty() {
        return Err(Error::invalid("cannot evaluate an empty query set"));
    }
    Ok(MetricsReport::from_ranks(&rank_queries(model, queries, filter)?))
}

/// Both directions of every triple in `split`.
pub fn split_queries(split: &[Triple]) -> Vec<(Triple, Direction)> {
    split
        .iter()
        .flat_map(|t| [(*t, Direction::Head), (*t, Direction::Tail)])
        .collect()
}

pub fn evaluate(model: &Model, split: &[Triple], filter: &FilterIndex) -> Result<MetricsReport> {
    if split.is_empty() {
        return Err(Error::invalid("cannot evaluate an empty split"));
    }
    evaluate_queries(model, &split_queries(split), filter)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatternKind {
    Symmetry,
    AntiSymmetry,
    Inversion,
    Subsumption,
    Intersection,
    MutualExclusion,
}

impl PatternKind {
    pub const ALL: [PatternKind; 6] = [
        PatternKind::Symmetry,
        PatternKind::AntiSymmetry,
        PatternKind::Inversion,
        PatternKind::Subsumption,
        PatternKind::Intersection,
        PatternKind::MutualExclusion,
    ];

    /// Number of relations the pattern involves.
    pub fn arity(self) -> usize {
        match self {
            PatternKind::Symmetry | PatternKind::AntiSymmetry => 1,
            PatternKind::Inversion | PatternKind::Subsumption | PatternKind::MutualExclusion => 2,
            PatternKind::Intersection => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PatternKind::Symmetry => "symmetry",
            PatternKind::AntiSymmetry => "anti-symmetry",
            PatternKind::Inversion => "inversion",
            PatternKind::Subsumption => "subsumption",
            PatternKind::Intersection => "intersection",
            PatternKind::MutualExclusion => "mutual-exclusion",
        }
    }
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PatternKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        PatternKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm || k.as_str().replace('-', "") == norm)
            .ok_or_else(|| Error::invalid(format!("unknown pattern kind '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternReport {
    pub kind: PatternKind,
    pub relations: Vec<usize>,
    pub verdict: bool,
    /// Per-dimension margins; positive means the condition holds in that
    /// dimension with room to spare. Head-side dimensions come first when both
    /// sides are involved.
    pub slack: Vec<f64>,
    /// Sampled point pairs that satisfy the premise but break the conclusion.
    pub counterexamples: usize,
    pub samples: usize,
}

/// Tests the geometric condition behind `kind` on the realized regions of
/// `relations`, and runs a sampled implication check with `sample_count`
/// point pairs drawn from the premise regions.
///
/// Conjunctive conditions (symmetry, inversion, subsumption, intersection)
/// hold when every slack is nonnegative. Disjointness conditions
/// (anti-symmetry, mutual exclusion) hold when some slack on the relevant side
/// is strictly positive.
pub fn pattern_check(
    model: &Model,
    kind: PatternKind,
    relations: &[usize],
    sample_count: usize,
) -> Result<PatternReport> {
    if relations.len() != kind.arity() {
        return Err(Error::invalid(format!(
            "{kind} takes {} relation(s), got {}",
            kind.arity(),
            relations.len()
        )));
    }
    let regions = relations
        .iter()
        .map(|&r| {
            Ok((
                model.realized_region(r, Side::Head)?,
                model.realized_region(r, Side::Tail)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let (verdict, slack) = match kind {
        PatternKind::Symmetry => {
            let (h, t) = &regions[0];
            let slack = equality_slack(h, t);
            (slack.iter().all(|&s| s >= 0.0), slack)
        }
        PatternKind::AntiSymmetry => {
            let (h, t) = &regions[0];
            let slack: Vec<f64> = overlap_slack(h, t).map(|s| -s).collect();
            (slack.iter().any(|&s| s > 0.0), slack)
        }
        PatternKind::Inversion => {
            let (h1, t1) = &regions[0];
            let (h2, t2) = &regions[1];
            let mut slack = equality_slack(h1, t2);
            slack.extend(equality_slack(t1, h2));
            (slack.iter().all(|&s| s >= 0.0), slack)
        }
        PatternKind::Subsumption => {
            let (h1, t1) = &regions[0];
            let (h2, t2) = &regions[1];
            let slack: Vec<f64> = subsume_slack(h2, h1).chain(subsume_slack(t2, t1)).collect();
            (slack.iter().all(|&s| s >= -CONTAINMENT_TOLERANCE), slack)
        }
        PatternKind::Intersection => {
            let (h1, t1) = &regions[0];
            let (h2, t2) = &regions[1];
            let (h3, t3) = &regions[2];
            let (head_ok, mut slack) = intersection_slack(h1, h2, h3);
            let (tail_ok, tail_slack) = intersection_slack(t1, t2, t3);
            slack.extend(tail_slack);
            (head_ok && tail_ok, slack)
        }
        PatternKind::MutualExclusion => {
            let (h1, t1) = &regions[0];
            let (h2, t2) = &regions[1];
            let head: Vec<f64> = overlap_slack(h1, h2).map(|s| -s).collect();
            let tail: Vec<f64> = overlap_slack(t1, t2).map(|s| -s).collect();
            let verdict = head.iter().any(|&s| s > 0.0) || tail.iter().any(|&s| s > 0.0);
            let mut slack = head;
            slack.extend(tail);
            (verdict, slack)
        }
    };
    let seed = model.config.seed ^ 0x5e_ed0f_9a77;
    let counterexamples = sample_implication(kind, &regions, sample_count, seed)?;
    Ok(PatternReport {
        kind,
        relations: relations.to_vec(),
        verdict,
        slack,
        counterexamples,
        samples: sample_count,
    })
}

fn equality_slack(a: &CyclicOrthotope, b: &CyclicOrthotope) -> Vec<f64> {
    (0..a.dim())
        .map(|i| {
            let dc = geometry::offset_1d(a.center()[i], b.center()[i], true).0;
            let dw = (a.width()[i] - b.width()[i]).abs();
            PARAM_TOLERANCE - dc.max(dw)
        })
        .collect()
}

/// Whether `a ∩ b ⊆ target`, with one slack per dimension. A dimension where
/// `a` and `b` miss each other makes the intersection empty; its slack is the
/// gap between them.
fn intersection_slack(
    a: &CyclicOrthotope,
    b: &CyclicOrthotope,
    target: &CyclicOrthotope,
) -> (bool, Vec<f64>) {
    let mut empty = false;
    let mut all_contained = true;
    let mut slack = Vec::with_capacity(a.dim());
    for i in 0..a.dim() {
        let pieces = arc_intersection(
            Arc {
                center: a.center()[i],
                half: a.width()[i],
            },
            Arc {
                center: b.center()[i],
                half: b.width()[i],
            },
        );
        if pieces.is_empty() {
            empty = true;
            let gap = geometry::offset_1d(a.center()[i], b.center()[i], true).0
                - a.width()[i]
                - b.width()[i];
            slack.push(gap);
            continue;
        }
        let s = pieces
            .iter()
            .map(|p| arc_subsume_slack(target.center()[i], target.width()[i], p.center, p.half))
            .fold(f64::INFINITY, f64::min);
        all_contained &= s >= -CONTAINMENT_TOLERANCE;
        slack.push(s);
    }
    (empty || all_contained, slack)
}

fn sample_in(region: &CyclicOrthotope, rng: &mut ChaCha8Rng) -> Vec<f64> {
    region
        .center()
        .iter()
        .zip(region.width())
        .map(|(&c, &w)| geometry::wrap_scalar(c + rng.random_range(-w..=w)))
        .collect()
}

/// Counts sampled `(x, y)` pairs where the pattern's logical premise holds
/// but its conclusion fails, with `x` a head point and `y` a tail point.
fn sample_implication(
    kind: PatternKind,
    regions: &[(CyclicOrthotope, CyclicOrthotope)],
    samples: usize,
    seed: u64,
) -> Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let holds = |(h, t): &(CyclicOrthotope, CyclicOrthotope), x: &[f64], y: &[f64]| -> Result<bool> {
        Ok(geometry::contains(h, x)? && geometry::contains(t, y)?)
    };
    let mut bad = 0;
    for _ in 0..samples {
        let x = sample_in(&regions[0].0, &mut rng);
        let y = sample_in(&regions[0].1, &mut rng);
        let premise = holds(&regions[0], &x, &y)?;
        let violated = match kind {
            // r(x, y) => r(y, x)
            PatternKind::Symmetry => premise && !holds(&regions[0], &y, &x)?,
            // r(x, y) => not r(y, x)
            PatternKind::AntiSymmetry => premise && holds(&regions[0], &y, &x)?,
            // r1(x, y) => r2(y, x)
            PatternKind::Inversion => premise && !holds(&regions[1], &y, &x)?,
            // r1(x, y) => r2(x, y)
            PatternKind::Subsumption => premise && !holds(&regions[1], &x, &y)?,
            // r1(x, y) and r2(x, y) => r3(x, y)
            PatternKind::Intersection => {
                premise && holds(&regions[1], &x, &y)? && !holds(&regions[2], &x, &y)?
            }
            // r1(x, y) and r2(x, y) => false
            PatternKind::MutualExclusion => premise && holds(&regions[1], &x, &y)?,
        };
        bad += usize::from(violated);
    }
    Ok(bad)
}
