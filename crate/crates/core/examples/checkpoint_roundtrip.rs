//! Saves a trained model, reloads it and checks that nothing changed.

use core_kge::cli::Checkpoint;
use core_kge::synthetic::{toy_dataset, ToySpec};
use core_kge::{build_filter_index, evaluate, train, ModelConfig, TrainConfig};

fn main() -> core_kge::Result<()> {
    let ds = toy_dataset(ToySpec::default(), 42);
    let out = train(
        &ds,
        &ModelConfig {
            dim: 16,
            ..ModelConfig::default()
        },
        &TrainConfig {
            max_steps: 50,
            valid_interval: 50,
            negatives_per_positive: 64,
            ..TrainConfig::default()
        },
    )?;
    let ckpt = Checkpoint {
        model: out.last.clone(),
        vocab: ds.vocab.clone(),
        step: out.steps,
        optimizer: Some(out.optimizer.clone()),
    };
    let dir = tempfile::tempdir().expect("scratch dir");
    let path = dir.path().join("model.ckpt");
    ckpt.save(&path)?;
    for entry in std::fs::read_dir(dir.path()).expect("listing") {
        let entry = entry.expect("entry");
        println!("{}  {} bytes", entry.file_name().to_string_lossy(), entry.metadata().unwrap().len());
    }

    let back = Checkpoint::load(&path)?;
    back.check_compatible(&ds.vocab)?;
    let filter = build_filter_index(&ds);
    let a = evaluate(&ckpt.model, &ds.test, &filter)?;
    let b = evaluate(&back.model, &ds.test, &filter)?;
    println!("parameters identical: {}", back == ckpt);
    println!("test MRR before {:.6}  after {:.6}", a.mrr(), b.mrr());
    Ok(())
}
