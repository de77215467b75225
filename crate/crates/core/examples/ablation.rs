//! Full model against the variants without the torus wrap and without the
//! entity bump, on the toy graph. The gap opens after a few hundred steps.
//!
//! ```text
//! cargo run --release --example ablation -- 1000
//! ```

use core_kge::synthetic::{toy_dataset, ToySpec};
use core_kge::{build_filter_index, evaluate, train, ModelConfig, TrainConfig};

fn main() -> core_kge::Result<()> {
    let steps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let ds = toy_dataset(ToySpec::default(), 42);
    let filter = build_filter_index(&ds);
    let tc = TrainConfig {
        max_steps: steps,
        valid_interval: steps,
        patience: 0,
        ..TrainConfig::default()
    };
    let full = ModelConfig {
        dim: 32,
        ..ModelConfig::default()
    };
    let variants = [
        ("full", full.clone()),
        (
            "no torus",
            ModelConfig {
                torus_enabled: false,
                ..full.clone()
            },
        ),
        (
            "no bump",
            ModelConfig {
                bump_enabled: false,
                ..full
            },
        ),
    ];
    for (name, mc) in variants {
        let out = train(&ds, &mc, &tc)?;
        let m = evaluate(&out.last, &ds.test, &filter)?;
        println!(
            "{name:<9} test MRR {:.3}  Hits@1 {:.3}  Hits@10 {:.3}",
            m.mrr(),
            m.hits_at(1),
            m.hits_at(10)
        );
    }
    Ok(())
}
