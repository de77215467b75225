//! Trains on the toy graph through the command layer, then answers queries.
//!
//! ```text
//! cargo run --release --example link_prediction -- "g0_m0 partner_of ?"
//! ```

use core_kge::cli::{cmd_predict, cmd_train, RunConfig};
use core_kge::synthetic::{toy_dataset, ToySpec};

fn main() -> core_kge::Result<()> {
    let queries: Vec<String> = std::env::args().skip(1).collect();
    let queries = if queries.is_empty() {
        vec!["g0_m0 partner_of ?".to_owned(), "? part_of hub0".to_owned()]
    } else {
        queries
    };
    let data = tempfile::tempdir().expect("scratch dir");
    let out = tempfile::tempdir().expect("scratch dir");
    toy_dataset(ToySpec::default(), 42).save(data.path())?;

    let mut config = RunConfig::default();
    config.data = Some(data.path().to_path_buf());
    config.out = Some(out.path().to_path_buf());
    config.model.dim = 32;
    config.train.max_steps = 500;
    config.train.valid_interval = 100;
    let summary = cmd_train(&config, &mut std::io::stdout())?;

    config.checkpoint = Some(summary.best_path);
    config.top_k = 5;
    config.filtered = Some(false);
    let mut stdout = std::io::stdout();
    for q in &queries {
        println!("\n{q}");
        cmd_predict(&config, q, &mut stdout)?;
    }
    Ok(())
}
