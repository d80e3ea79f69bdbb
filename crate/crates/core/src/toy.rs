//! Small synthetic dataset used for demos, tests and the bundled example run.
//!
//! Structures are random 2–4 atom cells drawn from a fixed palette. Labels come
//! from a smooth made-up function of composition and density, so the surrogate
//! has something learnable and evolution has something to climb. None of the
//! numbers are meant to be physically meaningful.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{LabeledEntry, Labels, Provenance};
use crate::element::Element;
use crate::evolution::Evaluator;
use crate::fitness::{FitnessError, FitnessWeights, PropertyVector};
use crate::graph::{build_graph, GraphConfig};
use crate::lattice::{norm, Lattice};
use crate::structure::{AtomSite, Cell, CrystalStructure};

pub const POOL_SIZE: usize = 60;
pub const TRAINING_SIZE: usize = 15;
const POOL_SEED: u64 = 0x7001;
const TRAINING_SEED: u64 = 0x7002;
const VALIDATION_SEED: u64 = 0x7003;
pub const VALIDATION_SIZE: usize = 10;

/// Symbols the toy structures are drawn from.
pub const PALETTE: [&str; 8] = ["C", "N", "O", "Mg", "Cu", "Zn", "Se", "Sn"];

/// Minimum interatomic distance in generated structures, Å.
const MIN_SEPARATION: f64 = 1.6;

// (fe, v, de) contributions per palette element
const WEIGHTS: [(f64, f64, f64); 8] = [
    (-0.8, 0.9, -0.10),
    (-0.4, 1.1, 0.05),
    (-1.0, 0.6, -0.30),
    (0.2, -0.8, -0.45),
    (0.9, -0.2, -0.05),
    (1.1, -0.4, -0.20),
    (1.6, 0.3, -0.15),
    (0.6, -0.6, 0.10),
];

fn weights(element: Element) -> (f64, f64, f64) {
    PALETTE
        .iter()
        .position(|s| *s == element.symbol())
        .map(|k| WEIGHTS[k])
        .unwrap_or((0.0, 0.0, 0.0))
}

/// The synthetic ground truth. FE in (0, 100), V roughly in [−2, 2], ΔE
/// roughly in [−1, 0.5].
pub fn reference_properties(structure: &CrystalStructure) -> PropertyVector {
    let n = structure.sites.len().max(1) as f64;
    let (mut wf, mut wv, mut wd) = (0.0, 0.0, 0.0);
    for site in &structure.sites {
        let (f, v, d) = weights(site.element);
        wf += f;
        wv += v;
        wd += d;
    }
    let (wf, wv, wd) = (wf / n, wv / n, wd / n);
    let volume = structure.cell.volume().unwrap_or(f64::INFINITY);
    // atoms per 20 Å³, around 1 for these cells
    let density = 20.0 * n / volume;
    let fe = 100.0 / (1.0 + (-(2.0 * wf + 1.5 * (density - 1.0))).exp());
    let v = wv + 0.5 * (density - 1.0);
    let de = wd - 0.2 * density;
    PropertyVector { fe, v, de }
}

fn random_structure(id: String, rng: &mut ChaCha8Rng) -> CrystalStructure {
    loop {
        let cell = Cell {
            a: rng.random_range(3.6..5.2),
            b: rng.random_range(3.6..5.2),
            c: rng.random_range(3.6..5.2),
            alpha: rng.random_range(80.0..100.0),
            beta: rng.random_range(80.0..100.0),
            gamma: rng.random_range(80.0..100.0),
        };
        let Ok(lattice) = Lattice::from_cell(&cell) else { continue };
        let n_atoms = rng.random_range(2..=4);
        let mut sites: Vec<AtomSite> = Vec::with_capacity(n_atoms);
        let mut attempts = 0;
        while sites.len() < n_atoms && attempts < 200 {
            attempts += 1;
            let frac = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
            if sites.iter().all(|s| min_image_distance(&lattice, s.frac, frac) >= MIN_SEPARATION) {
                let symbol = PALETTE[rng.random_range(0..PALETTE.len())];
                sites.push(AtomSite::new(Element::from_symbol(symbol).expect("palette symbol"), frac));
            }
        }
        if sites.len() < 2 {
            continue;
        }
        let structure = CrystalStructure::new(id.clone(), cell, sites);
        if build_graph(&structure, &GraphConfig::default()).is_ok() {
            return structure;
        }
    }
}

fn min_image_distance(lattice: &Lattice, a: [f64; 3], b: [f64; 3]) -> f64 {
    let mut best = f64::INFINITY;
    for i in -1..=1 {
        for j in -1..=1 {
            for k in -1..=1 {
                let d = [b[0] - a[0] + i as f64, b[1] - a[1] + j as f64, b[2] - a[2] + k as f64];
                best = best.min(norm(lattice.frac_to_cart(d)));
            }
        }
    }
    best
}

/// Scores structures with [`reference_properties`] instead of trained models.
/// Structures without a usable graph are rejected the same way the surrogate
/// evaluator rejects them.
#[derive(Debug, Clone, Default)]
pub struct ReferenceEvaluator {
    pub graph_config: GraphConfig,
    pub weights: FitnessWeights,
}

impl Evaluator for ReferenceEvaluator {
    fn evaluate(&self, structure: &CrystalStructure) -> Result<(PropertyVector, f64), FitnessError> {
        build_graph(structure, &self.graph_config)?;
        let p = reference_properties(structure);
        Ok((p, self.weights.fitness(&p)?))
    }
}

/// The 60-structure seed pool.
pub fn pool() -> Vec<CrystalStructure> {
    let mut rng = ChaCha8Rng::seed_from_u64(POOL_SEED);
    (0..POOL_SIZE).map(|k| random_structure(format!("pool{k:02}"), &mut rng)).collect()
}

fn labeled(prefix: &str, seed: u64, count: usize) -> Vec<LabeledEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            let structure = random_structure(format!("{prefix}{k:02}"), &mut rng);
            let labels = Labels::from(reference_properties(&structure));
            LabeledEntry { structure, labels, provenance: Provenance::Measured }
        })
        .collect()
}

/// The 15-entry measured training set, fully labeled by [`reference_properties`].
pub fn training_set() -> Vec<LabeledEntry> {
    labeled("train", TRAINING_SEED, TRAINING_SIZE)
}

/// Held-out labeled structures for validation reports.
pub fn validation_set() -> Vec<LabeledEntry> {
    labeled("valid", VALIDATION_SEED, VALIDATION_SIZE)
}
