//! Acceptance suite. Each test prints one `PASS` / `FAIL` / `SKIP` line to
//! stderr, captured or not; one test thread keeps them in order:
//!
//! ```text
//! cargo test --release -p core-kge --test acceptance -- --nocapture --test-threads=1
//! ```
//!
//! Benchmark-backed checks look for data under `$CORE_KGE_DATA` (default
//! `<workspace>/data`), one directory per dataset.

mod common;

use std::io::Write;
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use core_kge::cli::{self, Checkpoint, RunConfig};
use core_kge::evaluator::{rank_queries, split_queries};
use core_kge::geometry::{self, dist_1d};
use core_kge::kg_store::Triple;
use core_kge::model::{width_to_raw, EntityParams, RelationParams};
use core_kge::synthetic::{toy_dataset, ToySpec};
use core_kge::trainer::{batch_gradient, sample_negatives, train_with_observer, Gradients, NegativeBatch};
use core_kge::{
    build_filter_index, dataset_stats, evaluate, pattern_check, CyclicOrthotope, KnowledgeGraphDataset, Model,
    ModelConfig, NormKind, PatternKind, TrainConfig,
};

// Written straight to the stderr handle so the line shows even when the
// harness captures test output.
fn announce(line: &str) {
    let _ = writeln!(std::io::stderr(), "{line}");
}

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    announce(&format!(
        "criterion {id:>2} {:<4} {name}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    ));
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn skip(id: u32, name: &str, why: &str) {
    announce(&format!("criterion {id:>2} SKIP {name}: {why}"));
}

fn data_root() -> PathBuf {
    std::env::var_os("CORE_KGE_DATA")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

fn find_dataset(names: &[&str]) -> Option<PathBuf> {
    let root = data_root();
    names
        .iter()
        .map(|n| root.join(n))
        .find(|p| p.join("train.txt").is_file())
}

// ---------------------------------------------------------------------------
// 1. geometry properties

#[test]
fn c01_geometry_suite() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cases = 10_000;
    let mut failures = Vec::new();

    for case in 0..cases {
        let d = rng.random_range(1..=8);
        let center: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
        let width: Vec<f64> = (0..d).map(|_| rng.random_range(0.15..=0.5)).collect();
        let r = CyclicOrthotope::new(&center, width.clone()).unwrap();

        // seam continuity: just above 0 versus just below 1
        let lo: Vec<f64> = (0..d).map(|_| rng.random_range(1e-9..=1e-6)).collect();
        let hi: Vec<f64> = (0..d).map(|_| 1.0 - rng.random_range(1e-9..=1e-6)).collect();
        let a = geometry::region_distance(&lo, &r).unwrap();
        let b = geometry::region_distance(&hi, &r).unwrap();
        if a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-4) {
            failures.push(format!("seam case {case}: {a:?} vs {b:?}"));
        }

        // branch continuity: exact at delta = w, on dyadic grids so the
        // offset itself is exact
        let c = rng.random_range(0..1024) as f64 / 1024.0;
        let w = rng.random_range(1..=512) as f64 / 1024.0;
        let dyadic = CyclicOrthotope::new(&[c], vec![w]).unwrap();
        let at_boundary = geometry::region_distance(&[c + w], &dyadic).unwrap()[0];
        let outer_formula = (w - w) / (w * w) + 1.0;
        if at_boundary != 1.0 || dist_1d(w, w) != outer_formula {
            failures.push(format!("branch case {case}: c={c} w={w} -> {at_boundary}"));
        }
        let wr = rng.random_range(1e-6..=0.5);
        let just_outside = dist_1d(wr * (1.0 + 1e-12), wr);
        if (just_outside - 1.0).abs() > 1e-4 {
            failures.push(format!("branch limit case {case}: w={wr} -> {just_outside}"));
        }

        // periodicity: integer shifts of dyadic points change nothing
        let x: Vec<f64> = (0..d)
            .map(|_| rng.random_range(-(1i64 << 31)..(1i64 << 31)) as f64 / (1u64 << 30) as f64)
            .collect();
        let k = rng.random_range(-1000..=1000) as f64;
        let shifted: Vec<f64> = x.iter().map(|v| v + k).collect();
        let base = geometry::region_distance(&x, &r).unwrap();
        let wrapped = geometry::region_distance(&geometry::wrap(&shifted).unwrap(), &r).unwrap();
        let raw = geometry::region_distance(&shifted, &r).unwrap();
        if base != wrapped || base != raw {
            failures.push(format!("periodicity case {case}: shift {k}"));
        }

        // delta symmetry and bound
        let p: Vec<f64> = (0..d).map(|_| rng.random_range(-10.0..10.0)).collect();
        let q: Vec<f64> = (0..d).map(|_| rng.random_range(-10.0..10.0)).collect();
        let pq = geometry::torus_delta(&p, &q).unwrap();
        let qp = geometry::torus_delta(&q, &p).unwrap();
        if pq != qp || pq.iter().any(|v| !(0.0..=0.5).contains(v)) {
            failures.push(format!("delta case {case}: {pq:?} / {qp:?}"));
        }
    }
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && elapsed < Duration::from_secs(10);
    report(
        1,
        "geometry suite",
        pass,
        &format!(
            "{cases} cases, {} failures{}, {:.2}s (< 10s)",
            failures.len(),
            failures.first().map(|f| format!(" e.g. {f}")).unwrap_or_default(),
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------------------
// 2. gradients against central differences

const KINK: f64 = 1e-3;

fn near_kink(delta: f64, w: f64) -> bool {
    (delta - w).abs() <= KINK || delta <= KINK || (delta - 0.5).abs() <= KINK
}

fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

fn geometry_gradient_errors(rng: &mut ChaCha8Rng, points: usize) -> (f64, usize) {
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < points {
        let d = 4;
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let c: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
        let w: Vec<f64> = (0..d).map(|_| rng.random_range(0.05..0.49)).collect();
        let r = CyclicOrthotope::new(&c, w.clone()).unwrap();
        let g = geometry::region_distance_grad(&x, &r).unwrap();
        for i in 0..d {
            let delta = common::circ(x[i], c[i]);
            if near_kink(delta, w[i]) {
                continue;
            }
            let f = |x: &[f64], c: &[f64], w: &[f64]| common::piecewise(common::circ(x[i], c[i]), w[i]);
            let bump = |v: &[f64], s: f64| {
                let mut v = v.to_vec();
                v[i] += s;
                v
            };
            let fd_x = (f(&bump(&x, h), &c, &w) - f(&bump(&x, -h), &c, &w)) / (2.0 * h);
            let fd_c = (f(&x, &bump(&c, h), &w) - f(&x, &bump(&c, -h), &w)) / (2.0 * h);
            let fd_w = (f(&x, &c, &bump(&w, h)) - f(&x, &c, &bump(&w, -h))) / (2.0 * h);
            worst = worst
                .max(rel_err(g.d_point[i], fd_x, 1e-8))
                .max(rel_err(g.d_center[i], fd_c, 1e-8))
                .max(rel_err(g.d_width[i], fd_w, 1e-8));
        }
        checked += 1;
    }
    (worst, checked)
}

struct LossCase {
    model: Model,
    batch: Vec<NegativeBatch>,
    config: TrainConfig,
}

fn random_loss_case(rng: &mut ChaCha8Rng) -> LossCase {
    let norms = [NormKind::L1, NormKind::L2, NormKind::EL2];
    let mc = ModelConfig {
        dim: 4,
        norm: norms[rng.random_range(0..3)],
        torus_enabled: rng.random_bool(0.8),
        bump_enabled: rng.random_bool(0.8),
        seed: rng.random(),
        init_width: rng.random_range(0.1..0.45),
        init_bump: 0.2,
    };
    let (ne, nr) = (6, 2);
    let mut model = Model::init(mc, ne, nr).unwrap();
    // spread the widths so they are not all equal
    for raw in model
        .relations
        .head_width_raw
        .iter_mut()
        .chain(model.relations.tail_width_raw.iter_mut())
    {
        *raw += rng.random_range(-0.5..0.5);
    }
    let positives: Vec<Triple> = (0..2)
        .map(|_| Triple::new(rng.random_range(0..ne), rng.random_range(0..nr), rng.random_range(0..ne)))
        .collect();
    let batch: Vec<NegativeBatch> = positives
        .iter()
        .map(|&p| sample_negatives(rng, p, 4, ne).unwrap())
        .collect();
    // margin near the observed distances so both sigmoids are active
    let mut ds: Vec<f64> = batch
        .iter()
        .flat_map(|b| std::iter::once(&b.positive).chain(&b.negatives))
        .map(|t| common::distance(&model, t))
        .collect();
    ds.sort_by(f64::total_cmp);
    let config = TrainConfig {
        margin: ds[ds.len() / 2].max(0.5),
        adversarial_temperature: rng.random_range(0.0..1.0),
        reg_lambda: rng.random_range(0.0..1.0),
        ..TrainConfig::default()
    };
    LossCase { model, batch, config }
}

fn case_near_kink(case: &LossCase, dim: usize) -> bool {
    case.batch
        .iter()
        .flat_map(|b| std::iter::once(&b.positive).chain(&b.negatives))
        .any(|t| {
            [true, false].iter().any(|&head| {
                let (delta, w) = common::side_offsets(&case.model, t, head)[dim];
                near_kink(delta, w)
            })
        })
}

/// Worst relative error of the analytic loss gradient against central
/// differences of the loss with adversarial weights frozen at the base point.
fn loss_gradient_errors(rng: &mut ChaCha8Rng, points: usize) -> (f64, f64, usize) {
    let h = 1e-5;
    let mut worst_frozen: f64 = 0.0;
    let mut worst_uniform: f64 = 0.0;
    let mut checked = 0;
    while checked < points {
        let mut case = random_loss_case(rng);
        let uniform = checked % 4 == 0;
        if uniform {
            case.config.adversarial_temperature = 0.0;
        }
        let mut grads = Gradients::zeros_like(&case.model);
        batch_gradient(&case.model, &case.batch, &case.config, &mut grads).unwrap();
        let plain: Vec<(Triple, Vec<Triple>)> =
            case.batch.iter().map(|b| (b.positive, b.negatives.clone())).collect();
        let weights: Vec<Vec<f64>> = plain
            .iter()
            .map(|(_, negs)| {
                let d: Vec<f64> = negs.iter().map(|n| common::distance(&case.model, n)).collect();
                common::softmax_neg(&d, case.config.adversarial_temperature)
            })
            .collect();
        let (gamma, lambda) = (case.config.margin, case.config.reg_lambda);

        for _ in 0..10 {
            let array = rng.random_range(0..6);
            let len = grads.arrays()[array].len();
            let index = rng.random_range(0..len);
            if case_near_kink(&case, index % 4) {
                continue;
            }
            let analytic = grads.arrays()[array][index];
            let mut m = case.model.clone();
            let orig = *common::param_mut(&mut m, array, index);
            *common::param_mut(&mut m, array, index) = orig + h;
            let up = common::frozen_loss(&m, &plain, &weights, gamma, lambda);
            let up_lib = uniform.then(|| loss_of(&m, &case));
            *common::param_mut(&mut m, array, index) = orig - h;
            let down = common::frozen_loss(&m, &plain, &weights, gamma, lambda);
            let down_lib = uniform.then(|| loss_of(&m, &case));
            let fd = (up - down) / (2.0 * h);
            worst_frozen = worst_frozen.max(rel_err(analytic, fd, 1e-5));
            if let (Some(u), Some(d)) = (up_lib, down_lib) {
                worst_uniform = worst_uniform.max(rel_err(analytic, (u - d) / (2.0 * h), 1e-5));
            }
            checked += 1;
        }
    }
    (worst_frozen, worst_uniform, checked)
}

fn loss_of(model: &Model, case: &LossCase) -> f64 {
    let mut g = Gradients::zeros_like(model);
    batch_gradient(model, &case.batch, &case.config, &mut g).unwrap().loss
}

#[test]
fn c02_gradient_suite() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (geo, geo_n) = geometry_gradient_errors(&mut rng, 1000);
    let (frozen, uniform, loss_n) = loss_gradient_errors(&mut rng, 1000);
    let elapsed = start.elapsed();
    let pass = geo <= 1e-4 && frozen <= 1e-3 && uniform <= 1e-3 && elapsed < Duration::from_secs(30);
    report(
        2,
        "gradient suite",
        pass,
        &format!(
            "geometry worst rel err {geo:.2e} over {geo_n} points (<= 1e-4); loss worst {frozen:.2e}, \
             alpha=0 worst {uniform:.2e} over {loss_n} points (<= 1e-3); {:.2}s (< 30s)",
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------------------
// 3. ranking against a brute-force oracle

fn random_kg(rng: &mut ChaCha8Rng) -> KnowledgeGraphDataset {
    let ne = rng.random_range(2..=20);
    let nr = rng.random_range(1..=4);
    let mut all: Vec<(String, String, String)> = Vec::new();
    let n = rng.random_range(3..=60);
    for _ in 0..n {
        all.push((
            format!("e{}", rng.random_range(0..ne)),
            format!("r{}", rng.random_range(0..nr)),
            format!("e{}", rng.random_range(0..ne)),
        ));
    }
    let mut splits: [Vec<(String, String, String)>; 3] = Default::default();
    for t in all {
        splits[rng.random_range(0..3)].push(t);
    }
    if splits[2].is_empty() {
        let moved = splits[0].pop().unwrap_or(("e0".into(), "r0".into(), "e1".into()));
        splits[2].push(moved);
    }
    let mut ds = KnowledgeGraphDataset::from_named(&splits[0], &splits[1], &splits[2]);
    // make sure at least two entities exist
    if ds.num_entities() < 2 {
        ds = KnowledgeGraphDataset::from_named(&splits[0], &splits[1], &[("e0".into(), "r0".into(), "e1".into())]);
    }
    ds
}

#[test]
fn c03_ranking_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let norms = [NormKind::L1, NormKind::L2, NormKind::EL2];
    let (mut worst_rank, mut worst_metric): (f64, f64) = (0.0, 0.0);
    let mut queries = 0;
    let mut ties = 0;
    for trial in 0..100 {
        let ds = random_kg(&mut rng);
        let mc = ModelConfig {
            dim: rng.random_range(1..=6),
            norm: norms[trial % 3],
            torus_enabled: rng.random_bool(0.8),
            bump_enabled: rng.random_bool(0.8),
            seed: rng.random(),
            init_width: rng.random_range(0.05..0.45),
            init_bump: 0.3,
        };
        let mut model = Model::init(mc, ds.num_entities(), ds.num_relations()).unwrap();
        if trial % 4 == 0 {
            // clone one entity onto another to force exact score ties
            let d = model.dim();
            let (a, b) = (0, model.num_entities() - 1);
            for i in 0..d {
                model.entities.base[b * d + i] = model.entities.base[a * d + i];
                model.entities.bump[b * d + i] = model.entities.bump[a * d + i];
            }
        }
        let filter = build_filter_index(&ds);
        let known: Vec<Triple> = ds.all_triples().copied().collect();
        let lib_ranks = rank_queries(&model, &split_queries(&ds.test), &filter).unwrap();
        let mut oracle = Vec::new();
        for r in &lib_ranks {
            let head_query = r.direction == core_kge::Direction::Head;
            let o = common::oracle_rank(&model, &known, &r.triple, head_query);
            worst_rank = worst_rank.max((o - r.rank).abs());
            ties += usize::from(o.fract() != 0.0);
            oracle.push(o);
        }
        queries += oracle.len();
        let report = evaluate(&model, &ds.test, &filter).unwrap();
        let (mrr, h1, h3, h10) = common::oracle_metrics(&oracle);
        for (a, b) in [
            (report.mrr(), mrr),
            (report.hits_at(1), h1),
            (report.hits_at(3), h3),
            (report.hits_at(10), h10),
        ] {
            worst_metric = worst_metric.max((a - b).abs());
        }
    }
    let elapsed = start.elapsed();
    let pass = worst_rank <= 1e-12 && worst_metric <= 1e-12 && elapsed < Duration::from_secs(60);
    report(
        3,
        "ranking oracle",
        pass,
        &format!(
            "100 models, {queries} queries ({ties} with ties); max rank diff {worst_rank:.1e}, \
             max metric diff {worst_metric:.1e} (<= 1e-12); {:.2}s (< 60s)",
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------------------
// 4. loader against the benchmark statistics table

#[test]
fn c04_loader_statistics() {
    // (directory names, entities, relations, train, valid, test)
    let table: [(&[&str], usize, usize, usize, usize, usize); 4] = [
        (&["FB15k", "fb15k"], 14_951, 1_345, 483_142, 50_000, 59_071),
        (&["FB15k-237", "fb15k-237", "FB15k_237"], 14_541, 237, 272_115, 17_535, 20_466),
        (&["WN18", "wn18"], 40_943, 18, 141_442, 5_000, 5_000),
        (&["WN18RR", "wn18rr"], 40_943, 11, 86_835, 3_034, 3_134),
    ];
    let mut checked = Vec::new();
    let mut mismatches = Vec::new();
    for (names, e, r, tr, va, te) in table {
        let Some(dir) = find_dataset(names) else {
            continue;
        };
        let ds = KnowledgeGraphDataset::load(&dir).unwrap();
        let s = dataset_stats(&ds);
        let got = (s.entities, s.relations, s.train, s.valid, s.test);
        if got != (e, r, tr, va, te) {
            mismatches.push(format!("{}: got {got:?}, table {:?}", names[0], (e, r, tr, va, te)));
        }
        checked.push(names[0]);
    }
    if checked.is_empty() {
        skip(4, "loader statistics", &format!("no benchmark data under {}", data_root().display()));
        return;
    }
    report(
        4,
        "loader statistics",
        mismatches.is_empty(),
        &format!("checked {checked:?}; mismatches {mismatches:?}"),
    );
}

// ---------------------------------------------------------------------------
// 5. pattern constructions

fn regions_model(regions: &[([f64; 4], [f64; 4], [f64; 4], [f64; 4])]) -> Model {
    let flat = |f: fn(&([f64; 4], [f64; 4], [f64; 4], [f64; 4])) -> [f64; 4], raw: bool| -> Vec<f64> {
        regions
            .iter()
            .flat_map(|r| f(r).map(|v| if raw { width_to_raw(v) } else { v }))
            .collect()
    };
    Model::from_parts(
        ModelConfig {
            dim: 4,
            ..ModelConfig::default()
        },
        EntityParams::zeros(2, 4),
        RelationParams {
            head_center_raw: flat(|r| r.0, false),
            head_width_raw: flat(|r| r.1, true),
            tail_center_raw: flat(|r| r.2, false),
            tail_width_raw: flat(|r| r.3, true),
        },
    )
    .unwrap()
}

fn inside(rng: &mut ChaCha8Rng, region: &CyclicOrthotope) -> Vec<f64> {
    region
        .center()
        .iter()
        .zip(region.width())
        .map(|(c, w)| common::wrap(c + rng.random_range(-w..=*w)))
        .collect()
}

fn in_region(region: &CyclicOrthotope, x: &[f64]) -> bool {
    x.iter()
        .zip(region.center().iter())
        .zip(region.width())
        .all(|((x, c), w)| common::circ(*x, *c) <= *w)
}

/// Independent sampled check of the pattern's logical implication.
fn oracle_counterexamples(model: &Model, kind: PatternKind, rels: &[usize], samples: usize) -> usize {
    use core_kge::Side;
    let reg = |r: usize| {
        (
            model.realized_region(rels[r], Side::Head).unwrap(),
            model.realized_region(rels[r], Side::Tail).unwrap(),
        )
    };
    let regions: Vec<_> = (0..rels.len()).map(reg).collect();
    let holds = |i: usize, x: &[f64], y: &[f64]| in_region(&regions[i].0, x) && in_region(&regions[i].1, y);
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut bad = 0;
    for _ in 0..samples {
        let x = inside(&mut rng, &regions[0].0);
        let y = inside(&mut rng, &regions[0].1);
        if !holds(0, &x, &y) {
            continue;
        }
        let violated = match kind {
            PatternKind::Symmetry => !holds(0, &y, &x),
            PatternKind::AntiSymmetry => holds(0, &y, &x),
            PatternKind::Inversion => !holds(1, &y, &x),
            PatternKind::Subsumption => !holds(1, &x, &y),
            PatternKind::Intersection => holds(1, &x, &y) && !holds(2, &x, &y),
            PatternKind::MutualExclusion => holds(1, &x, &y),
        };
        bad += usize::from(violated);
    }
    bad
}

#[test]
fn c05_pattern_constructions() {
    let start = Instant::now();
    let a = [0.1, 0.4, 0.7, 0.95];
    let b = [0.6, 0.2, 0.05, 0.5];
    let w = [0.2, 0.1, 0.3, 0.15];
    let narrow = [0.05, 0.04, 0.1, 0.05];
    let cases: Vec<(PatternKind, Model, Vec<usize>)> = vec![
        // same box on both sides
        (PatternKind::Symmetry, regions_model(&[(a, w, a, w)]), vec![0]),
        // head and tail boxes apart in the first dimension
        (PatternKind::AntiSymmetry, regions_model(&[(a, narrow, b, narrow)]), vec![0]),
        // r2 swaps the boxes of r1
        (PatternKind::Inversion, regions_model(&[(a, w, b, narrow), (b, narrow, a, w)]), vec![0, 1]),
        // r1 nested in r2, including a box that straddles the seam
        (
            PatternKind::Subsumption,
            regions_model(&[(a, narrow, b, narrow), ([0.12, 0.41, 0.72, 0.0], w, b, w)]),
            vec![0, 1],
        ),
        // r1 and r2 overlap; r3 covers their overlap
        (
            PatternKind::Intersection,
            regions_model(&[
                ([0.1, 0.4, 0.7, 0.9], w, b, w),
                ([0.25, 0.45, 0.8, 0.05], w, b, w),
                ([0.175, 0.43, 0.75, 0.97], [0.14, 0.1, 0.3, 0.15], b, w),
            ]),
            vec![0, 1, 2],
        ),
        // disjoint heads
        (PatternKind::MutualExclusion, regions_model(&[(a, narrow, b, w), (b, narrow, b, w)]), vec![0, 1]),
    ];
    let samples = 10_000;
    let mut lines = Vec::new();
    let mut pass = true;
    for (kind, model, rels) in &cases {
        let rep = pattern_check(model, *kind, rels, samples).unwrap();
        let oracle = oracle_counterexamples(model, *kind, rels, samples);
        let ok = rep.verdict && rep.counterexamples == 0 && oracle == 0;
        pass &= ok;
        lines.push(format!(
            "{kind}: verdict {} / {} + {} counterexamples",
            rep.verdict, rep.counterexamples, oracle
        ));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(30);
    report(
        5,
        "pattern constructions",
        pass,
        &format!("{}; {:.2}s (< 30s)", lines.join("; "), elapsed.as_secs_f64()),
    );
}

// ---------------------------------------------------------------------------
// toy runs shared by criteria 6 to 8

const TOY_SEED: u64 = 42;

struct ToyRun {
    test_mrr: f64,
    mean_width: f64,
    /// First validation event with Hits@1 >= 0.90, as (step, seconds).
    first_hit: Option<(usize, f64)>,
    best_hits1: f64,
    steps: usize,
    elapsed: f64,
}

/// Default hyperparameters at d = 32, validating every 100 steps. Early
/// stopping keeps its default patience.
fn convergence_configs() -> (ModelConfig, TrainConfig) {
    let model = ModelConfig {
        dim: 32,
        ..ModelConfig::default()
    };
    let train = TrainConfig {
        max_steps: 5000,
        valid_interval: 100,
        ..TrainConfig::default()
    };
    (model, train)
}

/// Fixed-length runs for the comparisons of criteria 7 and 8.
fn comparison_configs() -> (ModelConfig, TrainConfig) {
    let (model, train) = convergence_configs();
    (
        model,
        TrainConfig {
            max_steps: 1000,
            patience: 0,
            ..train
        },
    )
}

fn toy_run(model: ModelConfig, train: TrainConfig) -> ToyRun {
    let ds = toy_dataset(ToySpec::default(), TOY_SEED);
    let start = Instant::now();
    let mut first_hit = None;
    let mut best_hits1: f64 = 0.0;
    let outcome = train_with_observer(&ds, &model, &train, |rec| {
        let h1 = rec.valid_hits1.unwrap_or(0.0);
        best_hits1 = best_hits1.max(h1);
        if first_hit.is_none() && h1 >= 0.90 {
            first_hit = Some((rec.step, start.elapsed().as_secs_f64()));
        }
    })
    .unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let filter = build_filter_index(&ds);
    ToyRun {
        test_mrr: evaluate(&outcome.best, &ds.test, &filter).unwrap().mrr(),
        mean_width: outcome.last.mean_width(),
        first_hit,
        best_hits1,
        steps: outcome.steps,
        elapsed,
    }
}

/// The default-configuration comparison run, shared by criteria 7 and 8.
fn default_run() -> &'static ToyRun {
    static RUN: OnceLock<ToyRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let (m, t) = comparison_configs();
        toy_run(m, t)
    })
}

// ---------------------------------------------------------------------------
// 6. toy convergence

#[test]
fn c06_toy_convergence() {
    let (m, t) = convergence_configs();
    let run = toy_run(m, t);
    let pass = matches!(run.first_hit, Some((step, secs)) if step <= 5000 && secs < 300.0);
    report(
        6,
        "toy convergence",
        pass,
        &format!(
            "first valid Hits@1 >= 0.90 at {:?} (step, s); best valid Hits@1 {:.3}; {} steps in {:.1}s",
            run.first_hit, run.best_hits1, run.steps, run.elapsed
        ),
    );
}

// ---------------------------------------------------------------------------
// 7. width regularization

#[test]
fn c07_regularizer_direction() {
    let widths: Vec<(f64, f64)> = [0.0, 0.5, 1.0]
        .into_iter()
        .map(|lambda| {
            let width = if lambda == TrainConfig::default().reg_lambda {
                default_run().mean_width
            } else {
                let (m, t) = comparison_configs();
                toy_run(m, TrainConfig { reg_lambda: lambda, ..t }).mean_width
            };
            (lambda, width)
        })
        .collect();
    let pass = widths.windows(2).all(|p| p[1].1 <= p[0].1);
    report(
        7,
        "regularizer direction",
        pass,
        &format!("mean realized width per lambda {widths:?} (non-increasing)"),
    );
}

// ---------------------------------------------------------------------------
// 8. ablations

#[test]
fn c08_ablation_direction() {
    let full = default_run().test_mrr;
    let (m, t) = comparison_configs();
    let no_torus = toy_run(
        ModelConfig {
            torus_enabled: false,
            ..m.clone()
        },
        t.clone(),
    )
    .test_mrr;
    let no_bump = toy_run(
        ModelConfig {
            bump_enabled: false,
            ..m
        },
        t,
    )
    .test_mrr;
    let pass = full >= no_torus - 0.01 && full >= no_bump - 0.01;
    report(
        8,
        "ablation direction",
        pass,
        &format!("test MRR full {full:.4}, no torus {no_torus:.4}, no bump {no_bump:.4} (tolerance 0.01)"),
    );
}

// ---------------------------------------------------------------------------
// 9. reduced-scale benchmark run (hours; opt in with --ignored)

#[test]
#[ignore = "trains for hours; run with --ignored when WN18RR is present"]
fn c09_wn18rr_reduced_scale() {
    let Some(dir) = find_dataset(&["WN18RR", "wn18rr"]) else {
        skip(9, "WN18RR reduced scale", &format!("no WN18RR under {}", data_root().display()));
        return;
    };
    let ds = KnowledgeGraphDataset::load(&dir).unwrap();
    let model = ModelConfig {
        dim: 100,
        ..ModelConfig::default()
    };
    let train = TrainConfig {
        max_steps: 50_000,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let outcome = core_kge::train(&ds, &model, &train).unwrap();
    let mrr = evaluate(&outcome.best, &ds.test, &build_filter_index(&ds)).unwrap().mrr();
    report(
        9,
        "WN18RR reduced scale",
        mrr >= 0.30,
        &format!(
            "filtered test MRR {mrr:.4} (>= 0.30) after {} steps, {:.0}s",
            outcome.steps,
            start.elapsed().as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------------------
// 10. determinism and checkpoint round trip

fn small_config(data: &std::path::Path, out: &std::path::Path) -> RunConfig {
    let mut c = RunConfig::default();
    for (k, v) in [
        ("dim", "8"),
        ("max_steps", "200"),
        ("valid_interval", "50"),
        ("negatives", "64"),
        ("batch", "64"),
    ] {
        c.set(k, v).unwrap();
    }
    c.data = Some(data.to_path_buf());
    c.out = Some(out.to_path_buf());
    c
}

#[test]
fn c10_determinism_and_round_trip() {
    let ds = toy_dataset(ToySpec::default(), TOY_SEED);
    let data = common::write_dataset(&ds);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut sink = Vec::new();
    let run_a = cli::cmd_train(&small_config(data.path(), a.path()), &mut sink).unwrap();
    let run_b = cli::cmd_train(&small_config(data.path(), b.path()), &mut sink).unwrap();
    let hist_a = std::fs::read(&run_a.history_path).unwrap();
    let hist_b = std::fs::read(&run_b.history_path).unwrap();
    let same_history = !hist_a.is_empty() && hist_a == hist_b;
    let same_params = run_a.outcome.last == run_b.outcome.last;

    // saved and reloaded model gives the same metrics as the in-memory one
    let filter = build_filter_index(&ds);
    let in_memory = evaluate(&run_a.outcome.best, &ds.test, &filter).unwrap();
    let loaded = Checkpoint::load(&run_a.best_path).unwrap();
    let reloaded = evaluate(&loaded.model, &ds.test, &filter).unwrap();
    let mut eval_config = small_config(data.path(), a.path());
    eval_config.checkpoint = Some(run_a.best_path.clone());
    let record = cli::cmd_evaluate(&eval_config, &mut sink).unwrap();
    let same_metrics = in_memory == reloaded && record.overall == in_memory.overall;
    let same_model = loaded.model == run_a.outcome.best;

    report(
        10,
        "determinism and round trip",
        same_history && same_params && same_metrics && same_model,
        &format!(
            "history identical {same_history} ({} bytes), parameters identical {same_params}, \
             reloaded parameters identical {same_model}, metrics identical {same_metrics} (MRR {:.4})",
            hist_a.len(),
            in_memory.mrr()
        ),
    );
}
