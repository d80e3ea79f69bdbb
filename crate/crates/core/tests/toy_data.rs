//! The files under data/toy must be exactly what the generator produces
//! (regenerate with `cargo run -p crystal-evolve --example write_toy_data`).

use std::fs;
use std::path::{Path, PathBuf};

use crystal_evolve::dataset::{load_dataset, manifest_line, LabeledEntry};
use crystal_evolve::{toy, write_cif};

fn toy_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/toy")
}

#[test]
fn pool_files_match_generator() {
    let pool = toy::pool();
    let mut names: Vec<_> = fs::read_dir(toy_dir().join("pool")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 60);
    for s in &pool {
        let on_disk = fs::read_to_string(toy_dir().join("pool").join(format!("{}.cif", s.id))).unwrap();
        assert_eq!(on_disk, write_cif(s), "{}", s.id);
    }
}

fn check_manifest(name: &str, sub: &str, entries: &[LabeledEntry]) {
    let text = fs::read_to_string(toy_dir().join(name)).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), entries.len());
    for (line, e) in lines.iter().zip(entries) {
        let rel = format!("{sub}/{}.cif", e.structure.id);
        assert_eq!(*line, manifest_line(&rel, &e.labels, e.provenance));
        assert_eq!(fs::read_to_string(toy_dir().join(&rel)).unwrap(), write_cif(&e.structure));
    }
    let loaded = load_dataset(&toy_dir().join(name)).unwrap();
    assert_eq!(loaded.len(), entries.len());
}

#[test]
fn manifests_match_generator() {
    check_manifest("manifest.jsonl", "train", &toy::training_set());
    check_manifest("validation.jsonl", "validation", &toy::validation_set());
}
