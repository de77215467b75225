//! Raw versus filtered ranks on a hand-made five-entity model.

use core_kge::model::{width_to_raw, EntityParams, RelationParams};
use core_kge::{
    build_filter_index, evaluate, filtered_rank, Direction, FilterIndex, KnowledgeGraphDataset, Model,
    ModelConfig,
};

fn main() -> core_kge::Result<()> {
    let ds = KnowledgeGraphDataset::from_named(
        &[("a", "likes", "b"), ("a", "likes", "c")],
        &[("a", "likes", "d")],
        &[("a", "likes", "e")],
    );
    // one dimension: the tail region around 0.5 holds b, c and d closest
    let config = ModelConfig {
        dim: 1,
        bump_enabled: false,
        ..ModelConfig::default()
    };
    let order = ["a", "b", "c", "d", "e"];
    let base: Vec<f64> = order
        .iter()
        .map(|n| match *n {
            "a" => 0.1,
            "b" => 0.5,
            "c" => 0.52,
            "d" => 0.56,
            _ => 0.6,
        })
        .collect();
    let mut by_id = vec![0.0; 5];
    for (n, x) in order.iter().zip(&base) {
        by_id[ds.vocab.entity_id(n).unwrap()] = *x;
    }
    let model = Model::from_parts(
        config,
        EntityParams {
            base: by_id,
            bump: vec![0.0; 5],
        },
        RelationParams {
            head_center_raw: vec![0.1],
            head_width_raw: vec![width_to_raw(0.05)],
            tail_center_raw: vec![0.5],
            tail_width_raw: vec![width_to_raw(0.02)],
        },
    )?;

    let filter = build_filter_index(&ds);
    let raw = FilterIndex::from_triples(std::iter::empty());
    for t in &ds.test {
        let (h, r, tl) = ds.vocab.decode(*t).unwrap();
        let f = filtered_rank(&model, t, Direction::Tail, &filter)?;
        let u = filtered_rank(&model, t, Direction::Tail, &raw)?;
        println!("{h} {r} ?  (answer {tl}): raw rank {}  filtered rank {}", u.rank, f.rank);
    }
    let report = evaluate(&model, &ds.test, &filter)?;
    println!(
        "test: MRR {:.3}  Hits@1 {:.3}  Hits@3 {:.3}  Hits@10 {:.3}",
        report.mrr(),
        report.hits_at(1),
        report.hits_at(3),
        report.hits_at(10)
    );
    Ok(())
}
