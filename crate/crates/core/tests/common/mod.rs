//! Independent reference implementations used by the integration tests.
//!
//! Nothing here calls into the library's scoring or ranking code paths; the
//! formulas are re-derived from scratch so disagreements point at real bugs.

#![allow(dead_code)]

use core_kge::kg_store::Triple;
use core_kge::Model;

pub fn wrap(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Circular distance between two coordinates of the unit circle.
pub fn circ(x: f64, c: f64) -> f64 {
    let a = (wrap(x) - wrap(c)).abs();
    a.min(1.0 - a)
}

pub fn piecewise(delta: f64, w: f64) -> f64 {
    if delta <= w {
        delta / w
    } else {
        (delta - w) / (w * w) + 1.0
    }
}

pub fn width(raw: f64) -> f64 {
    (0.5 / (1.0 + (-raw).exp())).max(1e-12)
}

pub fn norm(v: &[f64], kind: core_kge::NormKind) -> f64 {
    use core_kge::NormKind::*;
    match kind {
        L1 => v.iter().map(|x| x.abs()).sum(),
        L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        EL2 => v.iter().map(|x| x * x).sum(),
    }
}

/// Per-dimension offsets of one side: `(delta, width)` pairs.
pub fn side_offsets(model: &Model, t: &Triple, head_side: bool) -> Vec<(f64, f64)> {
    let d = model.dim();
    let cfg = &model.config;
    let (own, other) = if head_side { (t.head, t.tail) } else { (t.tail, t.head) };
    let r = t.relation;
    let rel = &model.relations;
    let (centers, widths) = if head_side {
        (&rel.head_center_raw, &rel.head_width_raw)
    } else {
        (&rel.tail_center_raw, &rel.tail_width_raw)
    };
    (0..d)
        .map(|i| {
            let mut x = model.entities.base[own * d + i];
            if cfg.bump_enabled {
                x += model.entities.bump[other * d + i];
            }
            let c = centers[r * d + i];
            let delta = if cfg.torus_enabled { circ(x, c) } else { (x - c).abs() };
            (delta, width(widths[r * d + i]))
        })
        .collect()
}

pub fn distance(model: &Model, t: &Triple) -> f64 {
    let side = |head| {
        let v: Vec<f64> = side_offsets(model, t, head)
            .into_iter()
            .map(|(delta, w)| piecewise(delta, w))
            .collect();
        norm(&v, model.config.norm)
    };
    side(true) + side(false)
}

/// Brute-force filtered rank: every candidate scored one triple at a time,
/// known-true completions found by scanning the raw triple list.
pub fn oracle_rank(model: &Model, known: &[Triple], t: &Triple, head_query: bool) -> f64 {
    let n = model.num_entities();
    let complete = |e: usize| {
        if head_query {
            Triple::new(e, t.relation, t.tail)
        } else {
            Triple::new(t.head, t.relation, e)
        }
    };
    let target = if head_query { t.head } else { t.tail };
    let target_score = model.score(t).unwrap();
    let (mut greater, mut equal) = (0usize, 0usize);
    for e in 0..n {
        if e == target {
            continue;
        }
        let cand = complete(e);
        if known.contains(&cand) {
            continue;
        }
        let s = model.score(&cand).unwrap();
        if s > target_score {
            greater += 1;
        } else if s == target_score {
            equal += 1;
        }
    }
    1.0 + greater as f64 + equal as f64 / 2.0
}

/// `(mrr, hits@1, hits@3, hits@10)` of a list of ranks.
pub fn oracle_metrics(ranks: &[f64]) -> (f64, f64, f64, f64) {
    let n = ranks.len() as f64;
    let hits = |k: f64| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
    (
        ranks.iter().map(|r| 1.0 / r).sum::<f64>() / n,
        hits(1.0),
        hits(3.0),
        hits(10.0),
    )
}

pub fn softmax_neg(d: &[f64], alpha: f64) -> Vec<f64> {
    let m = d.iter().map(|x| -alpha * x).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = d.iter().map(|x| (-alpha * x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

pub fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

pub fn width_penalty(model: &Model) -> f64 {
    let rel = &model.relations;
    let total: f64 = rel
        .head_width_raw
        .iter()
        .chain(&rel.tail_width_raw)
        .map(|&r| width(r).powi(2))
        .sum();
    total / model.num_relations() as f64
}

/// Batch loss with the adversarial weights held at `weights`.
pub fn frozen_loss(
    model: &Model,
    batch: &[(Triple, Vec<Triple>)],
    weights: &[Vec<f64>],
    gamma: f64,
    lambda: f64,
) -> f64 {
    let mut total = 0.0;
    for ((pos, negs), p) in batch.iter().zip(weights) {
        total -= log_sigmoid(gamma - distance(model, pos));
        for (n, w) in negs.iter().zip(p) {
            total -= w * log_sigmoid(distance(model, n) - gamma);
        }
    }
    total / batch.len() as f64 + lambda * width_penalty(model)
}

/// Mutable access to parameter `index` of array `array` (checkpoint order).
pub fn param_mut(model: &mut Model, array: usize, index: usize) -> &mut f64 {
    match array {
        0 => &mut model.entities.base[index],
        1 => &mut model.entities.bump[index],
        2 => &mut model.relations.head_center_raw[index],
        3 => &mut model.relations.head_width_raw[index],
        4 => &mut model.relations.tail_center_raw[index],
        _ => &mut model.relations.tail_width_raw[index],
    }
}

/// Scratch directory holding a dataset written from named triples.
pub fn write_dataset(ds: &core_kge::KnowledgeGraphDataset) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ds.save(dir.path()).unwrap();
    dir
}
