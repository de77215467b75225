//! Trains on the synthetic toy graph and prints validation progress.
//!
//! Settings use the config-file keys, e.g.
//!
//! ```text
//! cargo run --release --example train_toy -- dim=32 max_steps=5000 lambda=0.5
//! ```

use std::time::Instant;

use core_kge::cli::RunConfig;
use core_kge::synthetic::{toy_dataset, ToySpec};
use core_kge::trainer::train_with_observer;
use core_kge::{build_filter_index, evaluate};

fn main() -> core_kge::Result<()> {
    let mut config = RunConfig::default();
    config.model.dim = 32;
    config.train.max_steps = 5000;
    config.train.valid_interval = 100;
    config.train.patience = 0;
    for arg in std::env::args().skip(1) {
        let (k, v) = arg
            .split_once('=')
            .ok_or_else(|| core_kge::Error::Config(format!("expected key=value, got '{arg}'")))?;
        config.set(k, v)?;
    }
    config.validate()?;

    let dataset = toy_dataset(ToySpec::default(), 42);
    let start = Instant::now();
    let outcome = train_with_observer(&dataset, &config.model, &config.train, |rec| {
        println!(
            "step {:>5}  loss {:>9.4}  valid mrr {:.3}  hits@1 {:.3}  ({:.1}s)",
            rec.step,
            rec.loss,
            rec.valid_mrr.unwrap_or(f64::NAN),
            rec.valid_hits1.unwrap_or(f64::NAN),
            start.elapsed().as_secs_f64()
        );
    })?;

    let filter = build_filter_index(&dataset);
    let test = evaluate(&outcome.best, &dataset.test, &filter)?;
    println!(
        "best step {}  test mrr {:.3}  hits@1 {:.3}  hits@10 {:.3}  mean width {:.4}",
        outcome.best_step,
        test.mrr(),
        test.hits_at(1),
        test.hits_at(10),
        outcome.last.mean_width()
    );
    Ok(())
}
