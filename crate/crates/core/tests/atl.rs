use std::fs;
use std::path::{Path, PathBuf};

use crystal_evolve::atl::{self, AtlError, RunCheckpoint, RunConfig};
use crystal_evolve::dataset::Provenance;
use crystal_evolve::parse_cif;

fn toy_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/toy")
}

/// The bundled toy config shrunk further so each cycle takes a second or two.
fn quick_config(out: &Path, cycles: usize) -> RunConfig {
    let mut c = RunConfig::load(&toy_dir().join("run.json")).unwrap();
    c.output_dir = out.to_path_buf();
    c.atl_cycles = cycles;
    c.train_epochs = 60;
    for m in [&mut c.models.fe, &mut c.models.v, &mut c.models.de] {
        m.embed_dim = 8;
        m.hidden_dim = 8;
        m.n_conv = 2;
    }
    c.evolution.generations = 3;
    c
}

#[test]
fn growth_law_and_layout() {
    let dir = tempfile::tempdir().unwrap();
    let config = quick_config(dir.path(), 2);
    let report = atl::run(&config).unwrap();
    assert_eq!(report.initial_training_set_size, 15);
    assert_eq!(report.final_training_set_size, 25);
    assert_eq!(report.cycles.len(), 2);
    for (t, c) in report.cycles.iter().enumerate() {
        assert_eq!(c.training_set_size, 15 + t * 5);
        assert_eq!(c.maxima.len(), 5);
        assert_eq!(c.generations.len(), 3);
        let cycle_dir = dir.path().join(format!("cycle_{}", c.cycle));
        for p in ["fe", "v", "de"] {
            assert!(cycle_dir.join("models").join(format!("{p}.json")).is_file());
        }
        let lines = fs::read_to_string(cycle_dir.join("generations.jsonl")).unwrap();
        assert_eq!(lines.lines().count(), 3);
        // every appended structure is valid and re-scores exactly
        for m in &c.maxima {
            let text = fs::read_to_string(cycle_dir.join("maxima").join(format!("{}.cif", atl::file_stem(&m.id)))).unwrap();
            let s = parse_cif(&text).unwrap();
            s.validate().unwrap();
            assert_eq!(s.id, m.id);
        }
        // validation rows: every held-out structure × property
        assert_eq!(c.validation.len(), 10 * 3);
    }
    let best = report.best.as_ref().unwrap();
    assert!(best.fitness >= report.cycles[0].generations[0].fitness_max);
    assert!(dir.path().join("report.json").is_file());

    let cp = RunCheckpoint::load(&dir.path().join("checkpoint.json")).unwrap();
    assert_eq!(cp.completed_cycles, 2);
    assert_eq!(cp.training_set.len(), 25);
    assert_eq!(cp.training_set.iter().filter(|e| e.provenance == Provenance::Predicted).count(), 10);
    // predicted labels and in-memory structures re-score exactly with the cycle's models
    for entry in cp.training_set.iter().skip(15).take(5) {
        let (p, _) = atl::rescore(dir.path(), 1, &entry.structure, &config).unwrap();
        assert_eq!(entry.labels.fe, Some(p.fe));
        assert_eq!(entry.labels.v, Some(p.v));
        assert_eq!(entry.labels.de, Some(p.de));
    }
}

#[test]
fn deterministic_and_resumable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    atl::run(&quick_config(a.path(), 2)).unwrap();
    atl::run(&quick_config(b.path(), 2)).unwrap();
    let report_a = fs::read(a.path().join("report.json")).unwrap();
    assert_eq!(report_a, fs::read(b.path().join("report.json")).unwrap());

    // stop after one cycle, then resume to two
    atl::run(&quick_config(c.path(), 1)).unwrap();
    let resumed = atl::resume(&quick_config(c.path(), 2), &c.path().join("checkpoint.json")).unwrap();
    assert_eq!(resumed.cycles.len(), 2);
    assert_eq!(report_a, fs::read(c.path().join("report.json")).unwrap());

    // nothing left to do: the report is the checkpointed one
    let again = atl::resume(&quick_config(c.path(), 2), &c.path().join("checkpoint.json")).unwrap();
    assert_eq!(again, resumed);
}

#[test]
fn checkpoint_errors() {
    let dir = tempfile::tempdir().unwrap();
    let config = quick_config(dir.path(), 1);
    atl::run(&config).unwrap();
    let path = dir.path().join("checkpoint.json");
    let text = fs::read_to_string(&path).unwrap();

    let truncated = dir.path().join("truncated.json");
    fs::write(&truncated, &text[..text.len() / 2]).unwrap();
    assert!(matches!(atl::resume(&config, &truncated), Err(AtlError::PartialCheckpoint(_))));

    let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
    value["complete"] = serde_json::Value::Bool(false);
    fs::write(&truncated, value.to_string()).unwrap();
    assert!(matches!(atl::resume(&config, &truncated), Err(AtlError::PartialCheckpoint(_))));

    value["complete"] = serde_json::Value::Bool(true);
    value["schema_version"] = serde_json::json!(99);
    fs::write(&truncated, value.to_string()).unwrap();
    assert!(matches!(atl::resume(&config, &truncated), Err(AtlError::SchemaVersionMismatch { found: 99 })));

    let mut other = config.clone();
    other.learning_rate = 0.01;
    assert!(matches!(atl::resume(&other, &path), Err(AtlError::ConfigMismatch(_))));
}

#[test]
fn config_validation() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = quick_config(dir.path(), 1);
    config.maxima_per_cycle = 11;
    assert!(matches!(config.validate(), Err(AtlError::InvalidConfig(_))));
    let mut config = quick_config(dir.path(), 1);
    config.evolution.elite_k = 100;
    assert!(matches!(atl::run(&config), Err(AtlError::InvalidConfig(_))));
    // nothing was written
    assert!(fs::read_dir(dir.path()).unwrap().next().is_none());
    let mut config = quick_config(dir.path(), 0);
    config.atl_cycles = 0;
    assert!(config.validate().is_err());

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"atl_cycles": 2, "colour": "red"}"#).unwrap();
    assert!(matches!(RunConfig::load(&bad), Err(AtlError::InvalidConfig(_))));
}

#[test]
fn degenerate_labels_fail_in_training_phase() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fs::create_dir(&data).unwrap();
    let src = toy_dir();
    let mut lines = String::new();
    for k in 0..3 {
        fs::copy(src.join(format!("train/train0{k}.cif")), data.join(format!("t{k}.cif"))).unwrap();
        lines += &format!("{{\"cif\":\"t{k}.cif\",\"fe_percent\":50,\"voltage_v\":{k},\"free_energy_ev_atom\":{k}}}\n");
    }
    fs::write(data.join("m.jsonl"), lines).unwrap();
    let mut config = quick_config(&dir.path().join("out"), 1);
    config.dataset_manifest = data.join("m.jsonl");
    config.validation_manifest = None;
    match atl::run(&config) {
        Err(AtlError::Cycle { cycle: 1, phase: atl::Phase::Train, .. }) => {}
        other => panic!("expected a training failure, got {other:?}"),
    }
}
