//! Runs the skewed synthetic benchmark and prints the summary table.
//!
//! Usage: `cargo run --release --example benchmark -- [seed] [trials] [epochs]`

use std::time::Instant;

use alac::harness::{benchmark_config, run_experiment_on, ExperimentConfig, PreparedData};

fn main() -> alac::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().map_or(2024, |s| s.parse().expect("seed"));
    let base = benchmark_config(seed);
    let trials = args.next().map_or(base.trials, |s| s.parse().expect("trials"));
    let epochs = args.next().map_or(base.epochs_per_cycle, |s| s.parse().expect("epochs"));
    let config = ExperimentConfig {
        trials,
        epochs_per_cycle: epochs,
        ..base
    };
    let start = Instant::now();
    let data = PreparedData::from_config(&config)?;
    let out = run_experiment_on(&config, &data)?;
    println!("{:<16} {:>9} {:>9} {:>9} {:>9}", "variant", "mae", "mae_std", "mse", "mse_std");
    for row in &out.table.rows {
        println!(
            "{:<16} {:>9.3} {:>9.3} {:>9.3} {:>9.3}",
            row.strategy, row.mae_mean, row.mae_std, row.mse_mean, row.mse_std
        );
    }
    println!("elapsed {:.1?}", start.elapsed());
    Ok(())
}
