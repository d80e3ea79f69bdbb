//! `crystal-evolve` command-line tool.
//!
//! Exit codes: 0 success, 1 config or flag error, 2 parse error, 3 training
//! error, 4 run error, 5 report error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use crystal_evolve::atl::{self, AtlError, RunConfig, RunReport};
use crystal_evolve::dataset::load_dataset;
use crystal_evolve::evolution::{run_evolution, EvolutionError, select_elite, EvolutionConfig, SurrogateEvaluator};
use crystal_evolve::graph::{build_graph, GraphConfig};
use crystal_evolve::surrogate::{ModelConfig, SurrogateModel, TrainConfig};
use crystal_evolve::{fitness, parse_cif, write_cif, FitnessWeights, ModelSet, Property, PropertyVector};

const EXIT_CONFIG: u8 = 1;
const EXIT_PARSE: u8 = 2;
const EXIT_TRAIN: u8 = 3;
const EXIT_RUN: u8 = 4;
const EXIT_REPORT: u8 = 5;

#[derive(Parser)]
#[command(name = "crystal-evolve", version, about = "Surrogate-guided evolutionary search over crystal structures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a CIF and print a one-line summary.
    Parse {
        #[arg(long)]
        cif: PathBuf,
        /// Also print the canonical CIF.
        #[arg(long)]
        echo: bool,
    },
    /// Build the crystal graph of a CIF and print it as JSON.
    Graph {
        #[arg(long)]
        cif: PathBuf,
        #[arg(long, default_value_t = 8.0)]
        cutoff: f64,
        #[arg(long, default_value_t = 12)]
        max_neighbors: usize,
        /// Include node and edge feature matrices.
        #[arg(long)]
        features: bool,
    },
    /// Train one property model from a manifest.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        property: Property,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        epochs: usize,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        embed_dim: usize,
        #[arg(long, default_value_t = 3)]
        n_conv: usize,
        #[arg(long, default_value_t = 32)]
        hidden_dim: usize,
        /// Stop early once the training MSE falls below this value.
        #[arg(long)]
        stop_below: Option<f64>,
    },
    /// Predict properties of structures with trained models.
    Predict {
        /// Model checkpoint; repeat for several properties.
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
        #[arg(long = "cif", required = true)]
        cifs: Vec<PathBuf>,
    },
    /// Evolve a pool of CIFs against three trained models.
    Evolve {
        #[arg(long)]
        pool: PathBuf,
        /// Directory holding fe.json, v.json and de.json.
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Evolution config JSON; defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        generations: Option<usize>,
    },
    /// Run the full active-learning loop.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Override the config's output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Emit CSV data from a finished run.
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        what: ReportKind,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// ATL cycle to report on (default: the last one).
        #[arg(long)]
        cycle: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportKind {
    FitnessHist,
    Validation,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

trait ExitWith<T> {
    fn exit_with(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> ExitWith<T> for Result<T, E> {
    fn exit_with(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure { code, error: e.into() })
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(f) = configure_threads() {
        eprintln!("error: {:#}", f.error);
        return ExitCode::from(f.code);
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("CRYSTAL_EVOLVE_THREADS") else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| anyhow!("CRYSTAL_EVOLVE_THREADS must be a positive integer, got `{raw}`"))
        .exit_with(EXIT_CONFIG)?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().exit_with(EXIT_CONFIG)
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Parse { cif, echo } => cmd_parse(&cif, echo),
        Command::Graph { cif, cutoff, max_neighbors, features } => {
            let config = GraphConfig { cutoff, max_neighbors, ..Default::default() };
            cmd_graph(&cif, &config, features)
        }
        Command::Train { manifest, property, out, epochs, lr, seed, embed_dim, n_conv, hidden_dim, stop_below } => {
            let model = ModelConfig { embed_dim, n_conv, hidden_dim, seed, ..Default::default() };
            let train = TrainConfig { stop_below_mse: stop_below, ..TrainConfig::new(epochs, lr) };
            cmd_train(&manifest, property, &out, model, &train)
        }
        Command::Predict { models, cifs } => cmd_predict(&models, &cifs),
        Command::Evolve { pool, models, out, config, seed, generations } => {
            cmd_evolve(&pool, &models, &out, config.as_deref(), seed, generations)
        }
        Command::Run { config, resume, output_dir } => cmd_run(&config, resume.as_deref(), output_dir),
        Command::Report { run, what, format: Format::Csv, cycle } => cmd_report(&run, what, cycle),
    }
}

fn read_structure(path: &Path) -> Result<crystal_evolve::CrystalStructure, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).exit_with(EXIT_PARSE)?;
    parse_cif(&text).with_context(|| path.display().to_string()).exit_with(EXIT_PARSE)
}

fn cmd_parse(path: &Path, echo: bool) -> Result<(), Failure> {
    let s = read_structure(path)?;
    let c = &s.cell;
    println!(
        "{} {} a={} b={} c={} alpha={} beta={} gamma={} sites={}",
        s.id,
        s.formula(),
        c.a,
        c.b,
        c.c,
        c.alpha,
        c.beta,
        c.gamma,
        s.sites.len()
    );
    if echo {
        print!("{}", write_cif(&s));
    }
    Ok(())
}

fn cmd_graph(path: &Path, config: &GraphConfig, features: bool) -> Result<(), Failure> {
    config.validate().exit_with(EXIT_CONFIG)?;
    let s = read_structure(path)?;
    let g = build_graph(&s, config).exit_with(EXIT_PARSE)?;
    let edges: Vec<_> = g
        .edges
        .iter()
        .map(|e| serde_json::json!({ "i": e.i, "j": e.j, "image": e.image, "distance": e.distance }))
        .collect();
    let mut out = serde_json::json!({
        "id": g.source_id,
        "atomic_numbers": g.atomic_numbers,
        "n_nodes": g.n_nodes(),
        "n_edges": g.edges.len(),
        "node_feature_dim": g.node_feature_dim,
        "edge_feature_dim": g.edge_feature_dim,
        "edges": edges,
    });
    if features {
        out["node_features"] = serde_json::json!(g.node_features);
        out["edge_features"] = serde_json::json!(g.edge_features);
    }
    println!("{}", serde_json::to_string_pretty(&out).expect("json value serializes"));
    Ok(())
}

fn cmd_train(
    manifest: &Path,
    property: Property,
    out: &Path,
    model_config: ModelConfig,
    train: &TrainConfig,
) -> Result<(), Failure> {
    let graph_config = GraphConfig::default();
    let model_config = ModelConfig { edge_dim: graph_config.basis_size(), ..model_config };
    model_config.validate().exit_with(EXIT_CONFIG)?;
    if train.epochs == 0 || !(train.learning_rate > 0.0 && train.learning_rate.is_finite()) {
        return Err(anyhow!("--epochs must be positive and --lr a positive number")).exit_with(EXIT_CONFIG);
    }
    let entries = load_dataset(manifest).exit_with(EXIT_PARSE)?;
    let mut data = Vec::new();
    for e in &entries {
        if let Some(y) = e.labels.get(property) {
            let g = build_graph(&e.structure, &graph_config).exit_with(EXIT_PARSE)?;
            data.push((g, y));
        }
    }
    let model = SurrogateModel::init(model_config, property).exit_with(EXIT_CONFIG)?;
    let (model, report) = model.train(&data, train).exit_with(EXIT_TRAIN)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| parent.display().to_string()).exit_with(EXIT_TRAIN)?;
    }
    model.save(out).with_context(|| out.display().to_string()).exit_with(EXIT_TRAIN)?;
    println!(
        "trained {property} on {} samples for {} epochs; final mse {}",
        data.len(),
        report.epochs_run,
        report.final_train_mse
    );
    Ok(())
}

fn load_model(path: &Path) -> Result<SurrogateModel, Failure> {
    SurrogateModel::load(path).with_context(|| path.display().to_string()).exit_with(EXIT_PARSE)
}

fn cmd_predict(model_paths: &[PathBuf], cifs: &[PathBuf]) -> Result<(), Failure> {
    let models = model_paths.iter().map(|p| load_model(p)).collect::<Result<Vec<_>, _>>()?;
    let structures = cifs.iter().map(|p| read_structure(p)).collect::<Result<Vec<_>, _>>()?;
    let graph_config = GraphConfig::default();
    for s in &structures {
        let g = build_graph(s, &graph_config).exit_with(EXIT_PARSE)?;
        let mut values = [None; 3];
        for m in &models {
            let y = m.predict_physical(&g).exit_with(EXIT_PARSE)?;
            println!("{}\t{}\t{}", s.id, m.property, y);
            values[m.property as usize] = Some(y);
        }
        if let [Some(fe), Some(v), Some(de)] = values {
            let f = fitness(&PropertyVector::new(fe, v, de)).exit_with(EXIT_PARSE)?;
            println!("{}\tfitness\t{}", s.id, f);
        }
    }
    Ok(())
}

fn cmd_evolve(
    pool_dir: &Path,
    models_dir: &Path,
    out: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
    generations: Option<usize>,
) -> Result<(), Failure> {
    let mut config: EvolutionConfig = match config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| p.display().to_string()).exit_with(EXIT_CONFIG)?;
            serde_json::from_str(&text).with_context(|| p.display().to_string()).exit_with(EXIT_CONFIG)?
        }
        None => EvolutionConfig::default(),
    };
    if let Some(s) = seed {
        config.rng_seed = s;
    }
    if let Some(g) = generations {
        config.generations = g;
    }
    config.validate().exit_with(EXIT_CONFIG)?;
    let pool = atl::load_pool(pool_dir).exit_with(EXIT_PARSE)?;
    let load = |p: Property| load_model(&models_dir.join(format!("{p}.json")));
    let models = ModelSet { fe: load(Property::Fe)?, v: load(Property::V)?, de: load(Property::De)? };
    let graph_config = GraphConfig::default();
    let evaluator = SurrogateEvaluator { models: &models, graph_config: &graph_config, weights: FitnessWeights::default() };
    let outcome = run_evolution(&pool, &evaluator, &config, "").map_err(|e| {
        let code = match e {
            EvolutionError::PoolTooSmall { .. } | EvolutionError::InvalidConfig(_) => EXIT_CONFIG,
            _ => EXIT_RUN,
        };
        Failure { code, error: e.into() }
    })?;

    let top_dir = out.join("top");
    fs::create_dir_all(&top_dir).with_context(|| top_dir.display().to_string()).exit_with(EXIT_RUN)?;
    let lines: String = outcome
        .records
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect();
    fs::write(out.join("generations.jsonl"), lines).exit_with(EXIT_RUN)?;
    let elite = select_elite(&outcome.final_population, config.elite_k);
    for m in &elite {
        let path = top_dir.join(format!("{}.cif", atl::file_stem(&m.structure.id)));
        fs::write(&path, write_cif(&m.structure)).with_context(|| path.display().to_string()).exit_with(EXIT_RUN)?;
    }
    for r in &outcome.records {
        println!(
            "generation {}: min {:.4} mean {:.4} max {:.4}",
            r.generation_index + 1,
            r.fitness_min,
            r.fitness_mean,
            r.fitness_max
        );
    }
    if let Some(best) = elite.first() {
        println!("best {} fitness {}", best.structure.id, best.fitness);
    }
    Ok(())
}

fn cmd_run(config_path: &Path, resume: Option<&Path>, output_dir: Option<PathBuf>) -> Result<(), Failure> {
    let mut config = RunConfig::load(config_path).exit_with(EXIT_CONFIG)?;
    if let Some(dir) = output_dir {
        config.output_dir = dir;
    }
    config.validate().exit_with(EXIT_CONFIG)?;
    let result = match resume {
        Some(cp) => atl::resume(&config, cp),
        None => atl::run(&config),
    };
    let report = result.map_err(|e| Failure { code: run_error_code(&e), error: e.into() })?;
    match &report.best {
        Some(b) => println!("best {} (cycle {}) fitness {}", b.id, b.cycle, b.fitness),
        None => println!("no cycles run"),
    }
    Ok(())
}

fn run_error_code(e: &AtlError) -> u8 {
    match e {
        AtlError::InvalidConfig(_) | AtlError::ConfigMismatch(_) => EXIT_CONFIG,
        _ => EXIT_RUN,
    }
}

fn cmd_report(run_dir: &Path, what: ReportKind, cycle: Option<usize>) -> Result<(), Failure> {
    let path = run_dir.join("report.json");
    let text = fs::read_to_string(&path).with_context(|| format!("no run report at {}", path.display())).exit_with(EXIT_REPORT)?;
    let report: RunReport =
        serde_json::from_str(&text).with_context(|| path.display().to_string()).exit_with(EXIT_REPORT)?;
    let selected = match cycle {
        Some(t) => report.cycles.iter().find(|c| c.cycle == t),
        None => report.cycles.last(),
    }
    .ok_or_else(|| anyhow!("{} has no records for the requested cycle", path.display()))
    .exit_with(EXIT_REPORT)?;
    let mut out = String::new();
    match what {
        ReportKind::FitnessHist => {
            out.push_str("generation,bin_low,bin_high,count\n");
            for r in &selected.generations {
                for (k, count) in r.histogram.iter().enumerate() {
                    let (low, high) = r.bin_edges(k);
                    out.push_str(&format!("{},{low},{high},{count}\n", r.generation_index + 1));
                }
            }
        }
        ReportKind::Validation => {
            if selected.validation.is_empty() {
                return Err(anyhow!("run has no validation records (no validation_manifest configured)"))
                    .exit_with(EXIT_REPORT);
            }
            out.push_str("id,property,label,prediction\n");
            for v in &selected.validation {
                out.push_str(&format!("{},{},{},{}\n", v.id, v.property, v.label, v.prediction));
            }
        }
    }
    print!("{out}");
    Ok(())
}
