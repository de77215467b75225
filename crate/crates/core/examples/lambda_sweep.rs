//! Width-regularization sweep on the toy graph; prints the CSV that
//! `core-kge sweep` would write.
//!
//! ```text
//! cargo run --release --example lambda_sweep -- 1000
//! ```

use core_kge::cli::{cmd_sweep, sweep_csv, RunConfig};
use core_kge::synthetic::{toy_dataset, ToySpec};

fn main() -> core_kge::Result<()> {
    let steps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let data = tempfile::tempdir().expect("scratch dir");
    let out = tempfile::tempdir().expect("scratch dir");
    toy_dataset(ToySpec::default(), 42).save(data.path())?;

    let mut config = RunConfig::default();
    config.data = Some(data.path().to_path_buf());
    config.out = Some(out.path().to_path_buf());
    config.model.dim = 16;
    config.train.max_steps = steps;
    config.train.valid_interval = steps;
    config.train.negatives_per_positive = 256;
    config.lambdas = vec![0.0, 0.5, 1.0];

    let rows = cmd_sweep(&config, &mut std::io::sink())?;
    print!("{}", sweep_csv(&rows));
    Ok(())
}
