//! The active transfer learning loop.
//!
//! Each cycle trains one surrogate per property from scratch, evolves the seed
//! pool against them, and appends the best distinct structures of the final
//! generation to the training set, labeled with their own predictions.
//!
//! Output directory layout:
//!
//! ```text
//! cycle_<t>/models/{fe,v,de}.json
//! cycle_<t>/generations.jsonl
//! cycle_<t>/maxima/<id>.cif
//! report.json
//! checkpoint.json
//! ```

use std::collections::BTreeSet;
use std::error::Error as StdError;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cif::{parse_cif, write_cif, CifError};
use crate::dataset::{load_dataset, DatasetError, LabeledEntry, Labels, Provenance};
use crate::evolution::{run_evolution, select_elite, EvolutionConfig, Evaluator, GenerationRecord, SurrogateEvaluator};
use crate::fitness::{FitnessWeights, ModelSet, Property, PropertyVector};
use crate::graph::{build_graph, GraphConfig};
use crate::structure::CrystalStructure;
use crate::surrogate::{ModelConfig, SurrogateModel, TrainConfig, TrainReport};

pub const RUN_CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfigs {
    pub fe: ModelConfig,
    pub v: ModelConfig,
    pub de: ModelConfig,
}

impl ModelConfigs {
    pub fn get(&self, property: Property) -> &ModelConfig {
        match property {
            Property::Fe => &self.fe,
            Property::V => &self.v,
            Property::De => &self.de,
        }
    }
}

/// Relative paths are resolved against the directory of the config file
/// (see [`RunConfig::load`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset_manifest: PathBuf,
    pub pool_dir: PathBuf,
    pub atl_cycles: usize,
    pub maxima_per_cycle: usize,
    pub graph: GraphConfig,
    pub models: ModelConfigs,
    pub evolution: EvolutionConfig,
    pub train_epochs: usize,
    pub learning_rate: f64,
    /// Stop training a model once its full-batch MSE drops below this.
    pub stop_below_mse: Option<f64>,
    pub fitness: FitnessWeights,
    /// Held-out labeled structures scored by every cycle's models.
    pub validation_manifest: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset_manifest: PathBuf::from("manifest.jsonl"),
            pool_dir: PathBuf::from("pool"),
            atl_cycles: 3,
            maxima_per_cycle: 5,
            graph: GraphConfig::default(),
            models: ModelConfigs::default(),
            evolution: EvolutionConfig::default(),
            train_epochs: 1000,
            learning_rate: 0.05,
            stop_below_mse: None,
            fitness: FitnessWeights::default(),
            validation_manifest: None,
            output_dir: PathBuf::from("run"),
        }
    }
}

impl RunConfig {
    /// Reads a JSON config and resolves its relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<RunConfig, AtlError> {
        let text = fs::read_to_string(path).map_err(|source| AtlError::Io { path: path.to_path_buf(), source })?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| AtlError::InvalidConfig(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset_manifest);
        fix(&mut self.pool_dir);
        fix(&mut self.output_dir);
        if let Some(v) = &mut self.validation_manifest {
            fix(v);
        }
    }

    pub fn validate(&self) -> Result<(), AtlError> {
        let bad = |m: String| Err(AtlError::InvalidConfig(m));
        if self.atl_cycles == 0 {
            return bad("atl_cycles must be at least 1".into());
        }
        if self.maxima_per_cycle == 0 || self.maxima_per_cycle > self.evolution.elite_k {
            return bad(format!(
                "maxima_per_cycle must be in 1..={} (elite_k), got {}",
                self.evolution.elite_k, self.maxima_per_cycle
            ));
        }
        if self.train_epochs == 0 {
            return bad("train_epochs must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        self.evolution.validate().map_err(|e| AtlError::InvalidConfig(e.to_string()))?;
        self.graph.validate().map_err(|e| AtlError::InvalidConfig(e.to_string()))?;
        for p in Property::ALL {
            self.model_config(p).validate().map_err(|e| AtlError::InvalidConfig(format!("{p} model: {e}")))?;
        }
        let w = self.fitness;
        if !(w.fe_div.is_finite() && w.fe_div != 0.0 && w.v_div.is_finite() && w.v_div != 0.0 && w.de_mul.is_finite()) {
            return bad(format!("fitness weights must be finite with non-zero divisors, got {w:?}"));
        }
        Ok(())
    }

    /// The model config actually used: edge width follows the graph basis.
    pub fn model_config(&self, property: Property) -> ModelConfig {
        ModelConfig { edge_dim: self.graph.basis_size(), ..self.models.get(property).clone() }
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig { stop_below_mse: self.stop_below_mse, ..TrainConfig::new(self.train_epochs, self.learning_rate) }
    }

    /// Everything except the cycle count and output location must match for a
    /// checkpoint to be resumable under this config.
    fn resumable_from(&self, other: &RunConfig) -> bool {
        let strip = |c: &RunConfig| RunConfig { atl_cycles: 0, output_dir: PathBuf::new(), ..c.clone() };
        strip(self) == strip(other)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Train,
    Evolve,
    Select,
    Validate,
    Write,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Phase::Train => "train",
            Phase::Evolve => "evolve",
            Phase::Select => "select",
            Phase::Validate => "validate",
            Phase::Write => "write",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AtlError {
    #[error("invalid run config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("{}: {source}", path.display())]
    Pool { path: PathBuf, source: CifError },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("pool directory {} holds no .cif files", .0.display())]
    EmptyPool(PathBuf),
    #[error("cycle {cycle}, {phase}: {source}")]
    Cycle { cycle: usize, phase: Phase, source: Box<dyn StdError + Send + Sync> },
    #[error("run checkpoint schema version {found} is not supported (expected {RUN_CHECKPOINT_SCHEMA_VERSION})")]
    SchemaVersionMismatch { found: i64 },
    #[error("checkpoint is incomplete or truncated: {0}")]
    PartialCheckpoint(String),
    #[error("checkpoint was written by a different run config: {0}")]
    ConfigMismatch(String),
}

fn cycle_error(cycle: usize, phase: Phase) -> impl Fn(Box<dyn StdError + Send + Sync>) -> AtlError {
    move |source| AtlError::Cycle { cycle, phase, source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyTraining {
    pub property: Property,
    pub n_samples: usize,
    pub report: TrainReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Maximum {
    pub id: String,
    pub properties: PropertyVector,
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub id: String,
    pub property: Property,
    pub label: f64,
    pub prediction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    /// 1-based.
    pub cycle: usize,
    pub training_set_size: usize,
    pub training: Vec<PropertyTraining>,
    pub generations: Vec<GenerationRecord>,
    /// Top of the final generation, whether or not it was appended.
    pub best: Maximum,
    pub maxima: Vec<Maximum>,
    pub validation: Vec<ValidationRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestStructure {
    pub cycle: usize,
    pub id: String,
    pub properties: PropertyVector,
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunReport {
    pub initial_training_set_size: usize,
    pub final_training_set_size: usize,
    pub cycles: Vec<CycleReport>,
    /// Highest fitness of any cycle's final generation, scored by that cycle's models.
    pub best: Option<BestStructure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunCheckpoint {
    pub schema_version: u32,
    pub config: RunConfig,
    pub completed_cycles: usize,
    pub training_set: Vec<LabeledEntry>,
    pub report: RunReport,
    /// Written last; a checkpoint without it was cut off mid-write.
    pub complete: bool,
}

impl RunCheckpoint {
    pub fn load(path: &Path) -> Result<RunCheckpoint, AtlError> {
        let text = fs::read_to_string(path).map_err(|source| AtlError::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<RunCheckpoint, AtlError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| {
            if e.is_eof() {
                AtlError::PartialCheckpoint(e.to_string())
            } else {
                AtlError::InvalidConfig(format!("checkpoint is not valid JSON: {e}"))
            }
        })?;
        if value.get("complete").and_then(|c| c.as_bool()) != Some(true) {
            return Err(AtlError::PartialCheckpoint("missing completion marker".into()));
        }
        match value.get("schema_version").and_then(|v| v.as_i64()) {
            Some(v) if v == RUN_CHECKPOINT_SCHEMA_VERSION as i64 => {}
            Some(found) => return Err(AtlError::SchemaVersionMismatch { found }),
            None => return Err(AtlError::PartialCheckpoint("missing schema_version".into())),
        }
        serde_json::from_value(value).map_err(|e| AtlError::PartialCheckpoint(e.to_string()))
    }
}

/// Every `*.cif` file in `dir`, sorted by file name.
pub fn load_pool(dir: &Path) -> Result<Vec<CrystalStructure>, AtlError> {
    let io_err = |source| AtlError::Io { path: dir.to_path_buf(), source };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err)?
        .collect::<Result<Vec<_>, _>>()
        .map_err(io_err)?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("cif")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(AtlError::EmptyPool(dir.to_path_buf()));
    }
    paths
        .into_iter()
        .map(|path| {
            let text = fs::read_to_string(&path).map_err(|source| AtlError::Io { path: path.clone(), source })?;
            parse_cif(&text).map_err(|source| AtlError::Pool { path, source })
        })
        .collect()
}

fn write_file(path: &Path, contents: &str) -> Result<(), AtlError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| AtlError::Io { path: parent.to_path_buf(), source })?;
    }
    fs::write(path, contents).map_err(|source| AtlError::Io { path: path.to_path_buf(), source })
}

/// Writes through a temporary file so a crash never leaves a half-written target.
fn write_atomic(path: &Path, contents: &str) -> Result<(), AtlError> {
    let tmp = path.with_extension("json.tmp");
    write_file(&tmp, contents)?;
    fs::rename(&tmp, path).map_err(|source| AtlError::Io { path: path.to_path_buf(), source })
}

/// File-name-safe version of a structure id.
pub fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.~".contains(c) { c } else { '_' }).collect()
}

/// Trains the three surrogates on every entry that carries the property's label.
pub fn train_models(
    training_set: &[LabeledEntry],
    config: &RunConfig,
) -> Result<(ModelSet, Vec<PropertyTraining>), Box<dyn StdError + Send + Sync>> {
    let graphs = training_set
        .iter()
        .map(|e| build_graph(&e.structure, &config.graph))
        .collect::<Result<Vec<_>, _>>()?;
    let mut trained = Vec::with_capacity(3);
    let mut reports = Vec::with_capacity(3);
    for property in Property::ALL {
        let data: Vec<_> = training_set
            .iter()
            .zip(&graphs)
            .filter_map(|(e, g)| e.labels.get(property).map(|y| (g.clone(), y)))
            .collect();
        let model = SurrogateModel::init(config.model_config(property), property)
            .map_err(|e| format!("{property} model: {e}"))?;
        let (model, report) =
            model.train(&data, &config.train_config()).map_err(|e| format!("{property} model: {e}"))?;
        log::info!("{property}: {} samples, final mse {:.3e}", data.len(), report.final_train_mse);
        reports.push(PropertyTraining { property, n_samples: data.len(), report });
        trained.push(model);
    }
    let mut it = trained.into_iter();
    let mut next = || it.next().expect("three models");
    let models = ModelSet { fe: next(), v: next(), de: next() };
    Ok((models, reports))
}

fn validation_rows(
    models: &ModelSet,
    held_out: &[LabeledEntry],
    graph: &GraphConfig,
) -> Result<Vec<ValidationRow>, Box<dyn StdError + Send + Sync>> {
    let mut rows = Vec::new();
    for entry in held_out {
        let g = build_graph(&entry.structure, graph)?;
        for property in Property::ALL {
            if let Some(label) = entry.labels.get(property) {
                let prediction = models.get(property).predict_physical(&g)?;
                rows.push(ValidationRow { id: entry.structure.id.clone(), property, label, prediction });
            }
        }
    }
    Ok(rows)
}

struct RunState {
    training_set: Vec<LabeledEntry>,
    report: RunReport,
    completed_cycles: usize,
}

/// Runs every cycle from scratch.
pub fn run(config: &RunConfig) -> Result<RunReport, AtlError> {
    config.validate()?;
    let training_set = load_dataset(&config.dataset_manifest)?;
    let initial = training_set.len();
    let state = RunState {
        training_set,
        report: RunReport { initial_training_set_size: initial, final_training_set_size: initial, ..Default::default() },
        completed_cycles: 0,
    };
    continue_run(config, state)
}

/// Continues from a checkpoint up to `config.atl_cycles`. The config must
/// match the checkpointed one except for `atl_cycles` and `output_dir`.
pub fn resume(config: &RunConfig, checkpoint: &Path) -> Result<RunReport, AtlError> {
    config.validate()?;
    let cp = RunCheckpoint::load(checkpoint)?;
    if !config.resumable_from(&cp.config) {
        return Err(AtlError::ConfigMismatch(format!(
            "{} was written with a different dataset, pool, model, evolution or training setting",
            checkpoint.display()
        )));
    }
    let state = RunState { training_set: cp.training_set, report: cp.report, completed_cycles: cp.completed_cycles };
    continue_run(config, state)
}

fn continue_run(config: &RunConfig, mut state: RunState) -> Result<RunReport, AtlError> {
    let pool = load_pool(&config.pool_dir)?;
    let held_out = match &config.validation_manifest {
        Some(path) => load_dataset(path)?,
        None => Vec::new(),
    };
    let out = &config.output_dir;
    for cycle in state.completed_cycles + 1..=config.atl_cycles {
        log::info!("cycle {cycle}/{}: training on {} entries", config.atl_cycles, state.training_set.len());
        let cycle_report = run_cycle(config, cycle, &pool, &held_out, &mut state.training_set)?;
        let top = &cycle_report.best;
        if state.report.best.as_ref().is_none_or(|b| top.fitness > b.fitness) {
            state.report.best =
                Some(BestStructure { cycle, id: top.id.clone(), properties: top.properties, fitness: top.fitness });
        }
        state.report.cycles.push(cycle_report);
        state.report.final_training_set_size = state.training_set.len();
        state.completed_cycles = cycle;

        let checkpoint = RunCheckpoint {
            schema_version: RUN_CHECKPOINT_SCHEMA_VERSION,
            config: config.clone(),
            completed_cycles: cycle,
            training_set: state.training_set.clone(),
            report: state.report.clone(),
            complete: true,
        };
        let json = serde_json::to_string(&checkpoint).expect("checkpoint serializes");
        write_atomic(&out.join("checkpoint.json"), &json).map_err(|e| cycle_error(cycle, Phase::Write)(Box::new(e)))?;
    }
    let report_json = serde_json::to_string_pretty(&state.report).expect("report serializes");
    write_atomic(&out.join("report.json"), &report_json)?;
    Ok(state.report)
}

fn run_cycle(
    config: &RunConfig,
    cycle: usize,
    pool: &[CrystalStructure],
    held_out: &[LabeledEntry],
    training_set: &mut Vec<LabeledEntry>,
) -> Result<CycleReport, AtlError> {
    let dir = config.output_dir.join(format!("cycle_{cycle}"));
    let training_set_size = training_set.len();

    let (models, training) = train_models(training_set, config).map_err(cycle_error(cycle, Phase::Train))?;
    let models_dir = dir.join("models");
    fs::create_dir_all(&models_dir)
        .map_err(|source| cycle_error(cycle, Phase::Write)(Box::new(AtlError::Io { path: models_dir.clone(), source })))?;
    for p in Property::ALL {
        models
            .get(p)
            .save(&models_dir.join(format!("{p}.json")))
            .map_err(|e| cycle_error(cycle, Phase::Write)(Box::new(e)))?;
    }

    let evaluator = SurrogateEvaluator { models: &models, graph_config: &config.graph, weights: config.fitness };
    let evolution = EvolutionConfig {
        rng_seed: config.evolution.rng_seed.wrapping_add(cycle as u64 - 1),
        ..config.evolution.clone()
    };
    let outcome = run_evolution(pool, &evaluator, &evolution, &format!("c{cycle}"))
        .map_err(|e| cycle_error(cycle, Phase::Evolve)(Box::new(e)))?;
    let lines: String = outcome
        .records
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect();
    write_file(&dir.join("generations.jsonl"), &lines).map_err(|e| cycle_error(cycle, Phase::Write)(Box::new(e)))?;

    // best distinct structures not already in the training set
    let known: BTreeSet<&str> = training_set.iter().map(|e| e.structure.id.as_str()).collect();
    let ranked = select_elite(&outcome.final_population, outcome.final_population.members.len());
    let best = Maximum { id: ranked[0].structure.id.clone(), properties: ranked[0].properties, fitness: ranked[0].fitness };
    let mut chosen = Vec::with_capacity(config.maxima_per_cycle);
    let mut seen = BTreeSet::new();
    for member in ranked {
        if chosen.len() == config.maxima_per_cycle {
            break;
        }
        let id = member.structure.id.clone();
        if known.contains(id.as_str()) || !seen.insert(id) {
            continue;
        }
        chosen.push(member);
    }
    if chosen.len() < config.maxima_per_cycle {
        return Err(cycle_error(cycle, Phase::Select)(
            format!("only {} new distinct structures, need {}", chosen.len(), config.maxima_per_cycle).into(),
        ));
    }

    let mut maxima = Vec::with_capacity(chosen.len());
    for m in chosen {
        write_file(&dir.join("maxima").join(format!("{}.cif", file_stem(&m.structure.id))), &write_cif(&m.structure))
            .map_err(|e| cycle_error(cycle, Phase::Write)(Box::new(e)))?;
        maxima.push(Maximum { id: m.structure.id.clone(), properties: m.properties, fitness: m.fitness });
        training_set.push(LabeledEntry {
            structure: m.structure,
            labels: Labels::from(m.properties),
            provenance: Provenance::Predicted,
        });
    }

    let validation =
        validation_rows(&models, held_out, &config.graph).map_err(cycle_error(cycle, Phase::Validate))?;

    Ok(CycleReport { cycle, training_set_size, training, generations: outcome.records, best, maxima, validation })
}

/// Re-scores a structure with a cycle's saved models.
pub fn rescore(
    run_dir: &Path,
    cycle: usize,
    structure: &CrystalStructure,
    config: &RunConfig,
) -> Result<(PropertyVector, f64), Box<dyn StdError + Send + Sync>> {
    let models_dir = run_dir.join(format!("cycle_{cycle}")).join("models");
    let load = |p: Property| SurrogateModel::load(&models_dir.join(format!("{p}.json")));
    let models = ModelSet { fe: load(Property::Fe)?, v: load(Property::V)?, de: load(Property::De)? };
    let evaluator = SurrogateEvaluator { models: &models, graph_config: &config.graph, weights: config.fitness };
    Ok(evaluator.evaluate(structure)?)
}
