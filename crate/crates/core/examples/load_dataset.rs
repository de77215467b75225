//! Loads a dataset directory and prints its statistics.
//!
//! ```text
//! cargo run --example load_dataset -- data/WN18RR
//! ```
//!
//! Without an argument the synthetic toy graph is written to a scratch
//! directory and loaded back.

use std::path::PathBuf;

use core_kge::synthetic::{toy_dataset, ToySpec};
use core_kge::{build_filter_index, dataset_stats, KnowledgeGraphDataset};

fn main() -> core_kge::Result<()> {
    let _scratch;
    let dir = match std::env::args().nth(1) {
        Some(d) => PathBuf::from(d),
        None => {
            _scratch = tempfile::tempdir().expect("scratch dir");
            toy_dataset(ToySpec::default(), 42).save(_scratch.path())?;
            _scratch.path().to_path_buf()
        }
    };
    let ds = KnowledgeGraphDataset::load(&dir)?;
    let s = dataset_stats(&ds);
    println!("{}", dir.display());
    println!(
        "entities {}  relations {}  train {}  valid {}  test {}",
        s.entities, s.relations, s.train, s.valid, s.test
    );
    let filter = build_filter_index(&ds);
    if let Some(t) = ds.train.first() {
        let (h, r, tl) = ds.vocab.decode(*t).unwrap();
        println!("first training triple: {h} {r} {tl}");
        println!(
            "known tails of ({h}, {r}): {}",
            filter.true_tails(t.head, t.relation).len()
        );
    }
    Ok(())
}
