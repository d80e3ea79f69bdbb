//! Browser bindings for the static demo page in `www/`.
//!
//! Everything crosses the boundary as numbers, strings or JSON text.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use crystal_evolve::evolution::{run_evolution, select_elite, EvolutionConfig, GenerationRecord};
use crystal_evolve::graph::{build_graph, expand_distance, GraphConfig};
use crystal_evolve::toy::{self, ReferenceEvaluator};
use crystal_evolve::{parse_cif, write_cif, FitnessWeights, Lattice, PropertyVector};

fn js_err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Fitness with the default weights. NaN for non-finite input.
#[wasm_bindgen]
pub fn fitness(fe: f64, v: f64, de: f64) -> f64 {
    crystal_evolve::fitness(&PropertyVector::new(fe, v, de)).unwrap_or(f64::NAN)
}

/// Row-major `n × n` grid of fitness over V (columns) and ΔE (rows) at fixed FE.
#[wasm_bindgen]
pub fn fitness_grid(fe: f64, v_min: f64, v_max: f64, de_min: f64, de_max: f64, n: usize) -> Vec<f64> {
    let step = |lo: f64, hi: f64, k: usize| if n > 1 { lo + (hi - lo) * k as f64 / (n - 1) as f64 } else { lo };
    let mut out = Vec::with_capacity(n * n);
    for r in 0..n {
        let de = step(de_min, de_max, r);
        for c in 0..n {
            out.push(fitness(fe, step(v_min, v_max, c), de));
        }
    }
    out
}

#[derive(Serialize)]
struct GraphView {
    id: String,
    formula: String,
    /// Cartesian positions of the unit-cell atoms, Å.
    positions: Vec<[f64; 3]>,
    atomic_numbers: Vec<u8>,
    edges: Vec<EdgeView>,
    basis_centers: Vec<f64>,
}

#[derive(Serialize)]
struct EdgeView {
    i: usize,
    j: usize,
    image: [i32; 3],
    distance: f64,
    expansion: Vec<f64>,
}

/// Parses a CIF and returns its neighbour graph as JSON, with the Gaussian
/// expansion of every edge distance.
#[wasm_bindgen]
pub fn cif_graph(cif: &str, cutoff: f64, max_neighbors: usize) -> Result<String, JsValue> {
    graph_json(cif, cutoff, max_neighbors).map_err(|e| JsValue::from_str(&e))
}

fn graph_json(cif: &str, cutoff: f64, max_neighbors: usize) -> Result<String, String> {
    let config = GraphConfig { cutoff, max_neighbors, ..GraphConfig::default() };
    config.validate().map_err(js_err)?;
    let s = parse_cif(cif).map_err(js_err)?;
    let g = build_graph(&s, &config).map_err(js_err)?;
    let lattice = Lattice::from_cell(&s.cell).map_err(js_err)?;
    let view = GraphView {
        id: s.id.clone(),
        formula: s.formula(),
        positions: s.sites.iter().map(|a| lattice.frac_to_cart(a.frac)).collect(),
        atomic_numbers: g.atomic_numbers.clone(),
        edges: g
            .edges
            .iter()
            .map(|e| EdgeView {
                i: e.i,
                j: e.j,
                image: e.image,
                distance: e.distance,
                expansion: expand_distance(e.distance, &config),
            })
            .collect(),
        basis_centers: (0..config.basis_size()).map(|k| config.gaussian_min + k as f64 * config.gaussian_step).collect(),
    };
    Ok(serde_json::to_string(&view).expect("graph view serializes"))
}

/// A structure from the bundled toy pool, as CIF text.
#[wasm_bindgen]
pub fn sample_cif(index: usize) -> String {
    let pool = toy::pool();
    write_cif(&pool[index % pool.len()])
}

#[derive(Serialize)]
struct EvolutionView {
    records: Vec<GenerationRecord>,
    best_id: String,
    best_fitness: f64,
    best_properties: PropertyVector,
    best_cif: String,
}

/// Evolves the 60-structure toy pool against the synthetic reference
/// properties and returns per-generation records plus the best structure.
#[wasm_bindgen]
pub fn evolve_toy(seed: u64, generations: usize, elite_k: usize) -> Result<String, JsValue> {
    evolution_json(seed, generations, elite_k).map_err(|e| JsValue::from_str(&e))
}

fn evolution_json(seed: u64, generations: usize, elite_k: usize) -> Result<String, String> {
    let pool = toy::pool();
    let config = EvolutionConfig { pool_size: pool.len(), elite_k, generations, rng_seed: seed, ..Default::default() };
    let evaluator = ReferenceEvaluator { graph_config: GraphConfig::default(), weights: FitnessWeights::default() };
    let outcome = run_evolution(&pool, &evaluator, &config, "").map_err(js_err)?;
    let best = select_elite(&outcome.final_population, 1).into_iter().next().ok_or_else(|| js_err("empty population"))?;
    let view = EvolutionView {
        records: outcome.records,
        best_id: best.structure.id.clone(),
        best_fitness: best.fitness,
        best_properties: best.properties,
        best_cif: write_cif(&best.structure),
    };
    Ok(serde_json::to_string(&view).expect("evolution view serializes"))
}
