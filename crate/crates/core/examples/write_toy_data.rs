//! Regenerates the bundled toy data set.
//!
//! Usage: cargo run -p crystal-evolve --example write_toy_data [-- <out_dir>]
//! (default: data/toy at the workspace root).

use std::fs;
use std::path::PathBuf;

use crystal_evolve::dataset::{manifest_line, LabeledEntry};
use crystal_evolve::{toy, write_cif};

fn write_labeled(dir: &PathBuf, sub: &str, manifest: &str, entries: &[LabeledEntry]) -> std::io::Result<()> {
    fs::create_dir_all(dir.join(sub))?;
    let mut lines = String::new();
    for e in entries {
        let rel = format!("{sub}/{}.cif", e.structure.id);
        fs::write(dir.join(&rel), write_cif(&e.structure))?;
        lines += &manifest_line(&rel, &e.labels, e.provenance);
        lines.push('\n');
    }
    fs::write(dir.join(manifest), lines)
}

fn main() -> std::io::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/toy"));
    fs::create_dir_all(out.join("pool"))?;
    for s in toy::pool() {
        fs::write(out.join("pool").join(format!("{}.cif", s.id)), write_cif(&s))?;
    }
    write_labeled(&out, "train", "manifest.jsonl", &toy::training_set())?;
    write_labeled(&out, "validation", "validation.jsonl", &toy::validation_set())?;
    println!("wrote toy data to {}", out.display());
    Ok(())
}
