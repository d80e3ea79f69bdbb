//! Runs the bundled toy configuration and prints a one-line summary per cycle.
//!
//! Usage: cargo run --release -p crystal-evolve --example run_toy [-- <run.json>]

use std::path::PathBuf;

use crystal_evolve::atl::{run, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/toy/run.json"));
    let config = RunConfig::load(&path)?;
    let start = std::time::Instant::now();
    let report = run(&config)?;
    for c in &report.cycles {
        let first = c.generations.first().unwrap();
        let last = c.generations.last().unwrap();
        let mses: Vec<String> = c.training.iter().map(|t| format!("{}={:.1e}/{}", t.property, t.report.final_train_mse, t.report.epochs_run)).collect();
        println!(
            "cycle {}: train {} [{}], mean {:.3} -> {:.3}, best {:.3} -> {:.3}",
            c.cycle, c.training_set_size, mses.join(" "), first.fitness_mean, last.fitness_mean, first.fitness_max, last.fitness_max
        );
    }
    println!("final set {}, best {:?}, {:?}", report.final_training_set_size, report.best, start.elapsed());
    Ok(())
}
