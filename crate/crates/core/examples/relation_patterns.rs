//! Pattern checks on relations whose regions are set by hand.

use core_kge::model::{width_to_raw, EntityParams, RelationParams};
use core_kge::{pattern_check, Model, ModelConfig, PatternKind};

fn main() -> core_kge::Result<()> {
    // relation 0: head and tail regions coincide (symmetric)
    // relation 1: tail region inside relation 0's (subsumed)
    // relation 2: head region far from everything else (exclusive)
    let dim = 2;
    let w = |x: f64| width_to_raw(x);
    let relations = RelationParams {
        head_center_raw: vec![0.3, 0.3, 0.3, 0.3, 0.8, 0.8],
        head_width_raw: vec![w(0.1), w(0.1), w(0.05), w(0.05), w(0.05), w(0.05)],
        tail_center_raw: vec![0.3, 0.3, 0.3, 0.3, 0.3, 0.3],
        tail_width_raw: vec![w(0.1), w(0.1), w(0.05), w(0.05), w(0.1), w(0.1)],
    };
    let config = ModelConfig {
        dim,
        ..ModelConfig::default()
    };
    let model = Model::from_parts(config, EntityParams::zeros(1, dim), relations)?;

    let checks: [(PatternKind, &[usize]); 5] = [
        (PatternKind::Symmetry, &[0]),
        (PatternKind::AntiSymmetry, &[0]),
        (PatternKind::Subsumption, &[1, 0]),
        (PatternKind::Subsumption, &[0, 1]),
        (PatternKind::MutualExclusion, &[0, 2]),
    ];
    for (kind, rels) in checks {
        let rep = pattern_check(&model, kind, rels, 2000)?;
        println!(
            "{:<16} {rels:?}: verdict {:<5}  min slack {:+.3}  counterexamples {}/{}",
            kind.as_str(),
            rep.verdict,
            rep.slack.iter().copied().fold(f64::INFINITY, f64::min),
            rep.counterexamples,
            rep.samples
        );
    }
    Ok(())
}
