//! Elitist evolutionary search over crystal structures.
//!
//! Each step keeps the top `elite_k` members verbatim and refills the rest of
//! the pool with children of uniformly chosen elite parents, produced by one of
//! four operators: structure mutation, atom replacement, atom addition and slab
//! crossover.
//!
//! Every child slot gets its own RNG stream (the step seed plus the slot index
//! as the ChaCha stream id), so the result does not depend on whether slots are
//! filled serially or in parallel.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::element::Element;
use crate::fitness::{evaluate_candidate, FitnessError, FitnessWeights, ModelSet, PropertyVector};
use crate::graph::GraphConfig;
use crate::lattice::Lattice;
use crate::structure::{wrap_fraction, AtomSite, Cell, CrystalStructure};

pub const HISTOGRAM_BINS: usize = 20;

/// Elements always admitted by the default element universe.
pub const EXTRA_ELEMENTS: [&str; 4] = ["Mg", "Se", "Sn", "Zn"];

const CROSSOVER_TRIES: usize = 8;
const SLOT_ATTEMPTS: usize = 20;

#[derive(Debug, thiserror::Error)]
pub enum EvolutionError {
    #[error("pool has {have} structures but pool_size is {need}")]
    PoolTooSmall { have: usize, need: usize },
    #[error("invalid evolution config: {0}")]
    InvalidConfig(String),
    #[error("no replacement element available: every site already holds the only allowed element")]
    SingleElementUniverse,
    #[error("evaluating `{id}`: {source}")]
    Evaluation { id: String, source: FitnessError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    pub pool_size: usize,
    pub elite_k: usize,
    /// Number of populations, counting the seeded one.
    pub generations: usize,
    pub p_struct_mut: f64,
    pub p_replace: f64,
    pub p_add: f64,
    pub p_crossover: f64,
    /// Å.
    pub struct_mut_sigma: f64,
    /// Empty means: every element in the seed pool plus Mg, Se, Sn and Zn.
    pub allowed_elements: Vec<Element>,
    pub rng_seed: u64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            pool_size: 500,
            elite_k: 50,
            generations: 15,
            p_struct_mut: 0.2,
            p_replace: 0.4,
            p_add: 0.1,
            p_crossover: 0.3,
            struct_mut_sigma: 0.3,
            allowed_elements: Vec::new(),
            rng_seed: 0,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<(), EvolutionError> {
        let bad = |m: String| Err(EvolutionError::InvalidConfig(m));
        let probs = [self.p_struct_mut, self.p_replace, self.p_add, self.p_crossover];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad(format!("operator probabilities must lie in [0, 1], got {probs:?}"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return bad(format!("operator probabilities sum to {total}, expected 1"));
        }
        if self.pool_size == 0 {
            return bad("pool_size must be positive".into());
        }
        if self.elite_k == 0 || self.elite_k > self.pool_size {
            return bad(format!("elite_k must be in 1..={}, got {}", self.pool_size, self.elite_k));
        }
        if self.generations == 0 {
            return bad("generations must be positive".into());
        }
        if !(self.struct_mut_sigma >= 0.0 && self.struct_mut_sigma.is_finite()) {
            return bad(format!("struct_mut_sigma must be finite and ≥ 0, got {}", self.struct_mut_sigma));
        }
        Ok(())
    }

    /// Copy with `allowed_elements` filled in from `pool` when it was left empty.
    /// The element list is sorted and deduplicated either way.
    pub fn resolved(&self, pool: &[CrystalStructure]) -> EvolutionConfig {
        let mut set: BTreeSet<Element> = self.allowed_elements.iter().copied().collect();
        if set.is_empty() {
            set.extend(pool.iter().flat_map(|s| s.sites.iter().map(|site| site.element)));
            set.extend(EXTRA_ELEMENTS.iter().map(|s| Element::from_symbol(s).expect("known symbol")));
        }
        EvolutionConfig { allowed_elements: set.into_iter().collect(), ..self.clone() }
    }
}

/// Scores a structure. Implementations must be deterministic.
pub trait Evaluator: Sync {
    fn evaluate(&self, structure: &CrystalStructure) -> Result<(PropertyVector, f64), FitnessError>;
}

/// The usual evaluator: three trained surrogates combined by the fitness weights.
pub struct SurrogateEvaluator<'a> {
    pub models: &'a ModelSet,
    pub graph_config: &'a GraphConfig,
    pub weights: FitnessWeights,
}

impl Evaluator for SurrogateEvaluator<'_> {
    fn evaluate(&self, structure: &CrystalStructure) -> Result<(PropertyVector, f64), FitnessError> {
        evaluate_candidate(self.models, structure, self.graph_config, &self.weights)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub structure: CrystalStructure,
    pub properties: PropertyVector,
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub members: Vec<Member>,
    pub generation_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation_index: usize,
    pub fitness_min: f64,
    pub fitness_mean: f64,
    pub fitness_max: f64,
    pub elite_ids: Vec<String>,
    /// Equal-width bins over `[fitness_min, fitness_max]`.
    pub histogram: Vec<usize>,
}

impl GenerationRecord {
    /// `(low, high)` edges of histogram bin `k`.
    pub fn bin_edges(&self, k: usize) -> (f64, f64) {
        let width = (self.fitness_max - self.fitness_min) / self.histogram.len() as f64;
        let low = self.fitness_min + width * k as f64;
        let high = if k + 1 == self.histogram.len() { self.fitness_max } else { self.fitness_min + width * (k + 1) as f64 };
        (low, high)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operator {
    StructureMutation,
    Replace,
    Add,
    Crossover,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtomMutation {
    Replace,
    Add,
}

fn evaluate_member<E: Evaluator + ?Sized>(evaluator: &E, structure: CrystalStructure) -> Result<Member, FitnessError> {
    let (properties, fitness) = evaluator.evaluate(&structure)?;
    Ok(Member { structure, properties, fitness })
}

#[cfg(feature = "parallel")]
fn map_slots<T: Send, F: Fn(usize) -> T + Sync + Send>(n: usize, f: F) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_slots<T, F: Fn(usize) -> T>(n: usize, f: F) -> Vec<T> {
    (0..n).map(f).collect()
}

/// Evaluates the first `config.pool_size` structures of `pool`.
pub fn seed_population<E: Evaluator + ?Sized>(
    pool: &[CrystalStructure],
    evaluator: &E,
    config: &EvolutionConfig,
) -> Result<Population, EvolutionError> {
    config.validate()?;
    if pool.len() < config.pool_size {
        return Err(EvolutionError::PoolTooSmall { have: pool.len(), need: config.pool_size });
    }
    let members = map_slots(config.pool_size, |k| {
        let s = pool[k].clone();
        let id = s.id.clone();
        evaluate_member(evaluator, s).map_err(|source| EvolutionError::Evaluation { id, source })
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    Ok(Population { members, generation_index: 0 })
}

/// Top `k` members by fitness, ties broken by ascending id.
pub fn select_elite(pop: &Population, k: usize) -> Vec<Member> {
    let mut order: Vec<&Member> = pop.members.iter().collect();
    order.sort_by(|a, b| b.fitness.total_cmp(&a.fitness).then_with(|| a.structure.id.cmp(&b.structure.id)));
    order.into_iter().take(k).cloned().collect()
}

/// Summary of a population; the elite list uses `elite_k`.
pub fn generation_record(pop: &Population, elite_k: usize) -> GenerationRecord {
    let f: Vec<f64> = pop.members.iter().map(|m| m.fitness).collect();
    let min = f.iter().copied().fold(f64::INFINITY, f64::min);
    let max = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = (f.iter().sum::<f64>() / f.len() as f64).clamp(min, max);
    let mut histogram = vec![0; HISTOGRAM_BINS];
    let range = max - min;
    for x in &f {
        let bin = if range > 0.0 { (((x - min) / range) * HISTOGRAM_BINS as f64) as usize } else { 0 };
        histogram[bin.min(HISTOGRAM_BINS - 1)] += 1;
    }
    GenerationRecord {
        generation_index: pop.generation_index,
        fitness_min: min,
        fitness_mean: mean,
        fitness_max: max,
        elite_ids: select_elite(pop, elite_k).into_iter().map(|m| m.structure.id).collect(),
        histogram,
    }
}

/// Gaussian displacement of every site (σ in Å, in Cartesian space) and an
/// independent scale factor per lattice length from Normal(1, σ/10) clamped to
/// [0.8, 1.2]. Angles and elements are untouched.
pub fn mutate_structure(s: &CrystalStructure, sigma: f64, child_id: &str, rng: &mut impl Rng) -> CrystalStructure {
    let mut child = s.clone();
    child.id = child_id.to_string();
    if sigma == 0.0 {
        return child;
    }
    let lattice = Lattice::from_cell(&s.cell).expect("parent cell is valid");
    let displacement = Normal::new(0.0, sigma).expect("sigma is finite and non-negative");
    for site in &mut child.sites {
        let delta = [displacement.sample(rng), displacement.sample(rng), displacement.sample(rng)];
        let df = lattice.cart_to_frac(delta);
        for d in 0..3 {
            site.frac[d] = wrap_fraction(site.frac[d] + df[d]);
        }
    }
    let scale = Normal::new(1.0, sigma / 10.0).expect("finite scale");
    let mut factor = || scale.sample(rng).clamp(0.8, 1.2);
    child.cell.a *= factor();
    child.cell.b *= factor();
    child.cell.c *= factor();
    child
}

/// `Replace`: one uniformly chosen site whose element has an alternative gets
/// a different allowed element. `Add`: one new site at a uniform position.
pub fn mutate_atoms(
    s: &CrystalStructure,
    mode: AtomMutation,
    allowed: &[Element],
    child_id: &str,
    rng: &mut impl Rng,
) -> Result<CrystalStructure, EvolutionError> {
    if allowed.is_empty() {
        return Err(EvolutionError::InvalidConfig("allowed_elements is empty".into()));
    }
    let mut child = s.clone();
    child.id = child_id.to_string();
    match mode {
        AtomMutation::Replace => {
            let candidates: Vec<usize> = (0..s.sites.len())
                .filter(|&k| allowed.iter().any(|&e| e != s.sites[k].element))
                .collect();
            if candidates.is_empty() {
                return Err(EvolutionError::SingleElementUniverse);
            }
            let k = candidates[rng.random_range(0..candidates.len())];
            let current = s.sites[k].element;
            let choices: Vec<Element> = allowed.iter().copied().filter(|&e| e != current).collect();
            child.sites[k].element = choices[rng.random_range(0..choices.len())];
        }
        AtomMutation::Add => {
            let frac = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
            let element = allowed[rng.random_range(0..allowed.len())];
            child.sites.push(AtomSite::new(element, frac));
        }
    }
    Ok(child)
}

/// Slab crossover with a fixed axis (0, 1, 2) and cut: `a`'s sites below the
/// cut plus `b`'s sites at or above it, on the parameter-wise mean cell.
/// `None` when either side would contribute nothing or the mean cell is invalid.
pub fn crossover_at(
    a: &CrystalStructure,
    b: &CrystalStructure,
    axis: usize,
    cut: f64,
    child_id: &str,
) -> Option<CrystalStructure> {
    let lower: Vec<AtomSite> = a.sites.iter().filter(|s| s.frac[axis] < cut).cloned().collect();
    let upper: Vec<AtomSite> = b.sites.iter().filter(|s| s.frac[axis] >= cut).cloned().collect();
    if lower.is_empty() || upper.is_empty() {
        return None;
    }
    let cell: Cell = a.cell.mean(&b.cell);
    if cell.validate().is_err() {
        return None;
    }
    Some(CrystalStructure::new(child_id, cell, lower.into_iter().chain(upper).collect()))
}

/// Random axis and cut in [0.3, 0.7], retried up to 8 times. On failure the
/// child is a copy of `a` and the flag is `false`.
pub fn crossover_slab(
    a: &CrystalStructure,
    b: &CrystalStructure,
    child_id: &str,
    rng: &mut impl Rng,
) -> (CrystalStructure, bool) {
    for _ in 0..CROSSOVER_TRIES {
        let axis = rng.random_range(0..3);
        let cut = rng.random_range(0.3..=0.7);
        if let Some(child) = crossover_at(a, b, axis, cut, child_id) {
            return (child, true);
        }
    }
    let mut copy = a.clone();
    copy.id = child_id.to_string();
    (copy, false)
}

pub fn draw_operator(config: &EvolutionConfig, rng: &mut impl Rng) -> Operator {
    let u: f64 = rng.random();
    let mut acc = config.p_struct_mut;
    if u < acc {
        return Operator::StructureMutation;
    }
    acc += config.p_replace;
    if u < acc {
        return Operator::Replace;
    }
    acc += config.p_add;
    if u < acc {
        return Operator::Add;
    }
    // anything left, including rounding slack, goes to crossover
    if config.p_crossover > 0.0 {
        Operator::Crossover
    } else if config.p_add > 0.0 {
        Operator::Add
    } else if config.p_replace > 0.0 {
        Operator::Replace
    } else {
        Operator::StructureMutation
    }
}

/// Lineage root of an id: everything before the first `~`.
fn root_id(id: &str) -> &str {
    id.split('~').next().unwrap_or(id)
}

/// Id of the child filling `slot` in generation `generation`. `tag` separates
/// otherwise identical ids from different runs (the ATL loop passes the cycle).
pub fn child_id(parent: &str, tag: &str, generation: usize, slot: usize) -> String {
    format!("{}~{tag}g{generation}s{slot}", root_id(parent))
}

fn make_child<E: Evaluator + ?Sized>(
    elite: &[Member],
    evaluator: &E,
    config: &EvolutionConfig,
    name: impl Fn(&str) -> String,
    rng: &mut ChaCha8Rng,
) -> Result<Member, EvolutionError> {
    let mut first_parent = None;
    for _ in 0..SLOT_ATTEMPTS {
        let parent = &elite[rng.random_range(0..elite.len())];
        first_parent.get_or_insert(parent);
        let id = name(&parent.structure.id);
        let child = match draw_operator(config, rng) {
            Operator::StructureMutation => mutate_structure(&parent.structure, config.struct_mut_sigma, &id, rng),
            Operator::Replace => {
                match mutate_atoms(&parent.structure, AtomMutation::Replace, &config.allowed_elements, &id, rng) {
                    Ok(c) => c,
                    Err(EvolutionError::SingleElementUniverse) => continue,
                    Err(e) => return Err(e),
                }
            }
            Operator::Add => mutate_atoms(&parent.structure, AtomMutation::Add, &config.allowed_elements, &id, rng)?,
            Operator::Crossover => {
                let other = &elite[rng.random_range(0..elite.len())];
                crossover_slab(&parent.structure, &other.structure, &id, rng).0
            }
        };
        match evaluate_member(evaluator, child) {
            Ok(m) => return Ok(m),
            // no usable graph (edgeless, degenerate cell): try again
            Err(FitnessError::Graph(_)) => continue,
            Err(source) => return Err(EvolutionError::Evaluation { id, source }),
        }
    }
    let parent = first_parent.expect("at least one attempt");
    let mut copy = parent.clone();
    copy.structure.id = name(&parent.structure.id);
    Ok(copy)
}

/// One elitist step. Returns the next population and the record of `pop`.
/// `tag` is folded into child ids (see [`child_id`]).
pub fn step_generation<E: Evaluator + ?Sized>(
    pop: &Population,
    evaluator: &E,
    config: &EvolutionConfig,
    tag: &str,
    rng: &mut ChaCha8Rng,
) -> Result<(Population, GenerationRecord), EvolutionError> {
    config.validate()?;
    if config.allowed_elements.is_empty() {
        return Err(EvolutionError::InvalidConfig("allowed_elements must be resolved before stepping".into()));
    }
    if pop.members.len() != config.pool_size {
        return Err(EvolutionError::InvalidConfig(format!(
            "population has {} members, config expects {}",
            pop.members.len(),
            config.pool_size
        )));
    }
    let record = generation_record(pop, config.elite_k);
    let elite = select_elite(pop, config.elite_k);
    let step_seed: u64 = rng.random();
    let generation = pop.generation_index + 1;
    let children = map_slots(config.pool_size - config.elite_k, |k| {
        let slot = config.elite_k + k;
        let mut slot_rng = ChaCha8Rng::seed_from_u64(step_seed);
        slot_rng.set_stream(slot as u64);
        make_child(&elite, evaluator, config, |parent| child_id(parent, tag, generation, slot), &mut slot_rng)
    });
    let mut members = elite;
    for child in children {
        members.push(child?);
    }
    Ok((Population { members, generation_index: generation }, record))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionOutcome {
    /// One record per population, seeded population first.
    pub records: Vec<GenerationRecord>,
    pub final_population: Population,
}

/// Seeds from `pool` and steps until `config.generations` populations exist.
pub fn run_evolution<E: Evaluator + ?Sized>(
    pool: &[CrystalStructure],
    evaluator: &E,
    config: &EvolutionConfig,
    tag: &str,
) -> Result<EvolutionOutcome, EvolutionError> {
    let config = config.resolved(pool);
    let mut pop = seed_population(pool, evaluator, &config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut records = Vec::with_capacity(config.generations);
    for _ in 1..config.generations {
        let (next, record) = step_generation(&pop, evaluator, &config, tag, &mut rng)?;
        records.push(record);
        pop = next;
    }
    records.push(generation_record(&pop, config.elite_k));
    Ok(EvolutionOutcome { records, final_population: pop })
}
