//! Periodic crystal graphs: one node per atom, one directed edge per
//! neighbouring periodic image, with Gaussian-expanded edge lengths.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::element::MAX_ATOMIC_NUMBER;
use crate::lattice::{norm, Lattice, LatticeError, Vec3};
use crate::structure::CrystalStructure;

/// Width of the one-hot node features.
pub const ATOM_FEATURE_DIM: usize = MAX_ATOMIC_NUMBER as usize;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("atomic number {0} outside 1..=100")]
    OutOfRange(u32),
    #[error("structure `{id}`: atom {atom} has no neighbours within the cutoff")]
    EdgelessGraph { id: String, atom: usize },
    #[error("structure `{id}`: {source}")]
    Lattice { id: String, source: LatticeError },
    #[error("invalid graph config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub cutoff: f64,
    pub max_neighbors: usize,
    pub gaussian_min: f64,
    pub gaussian_max: f64,
    pub gaussian_step: f64,
    pub gaussian_width: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            cutoff: 8.0,
            max_neighbors: 12,
            gaussian_min: 0.0,
            gaussian_max: 8.0,
            gaussian_step: 0.2,
            gaussian_width: 0.2,
        }
    }
}

impl GraphConfig {
    pub fn validate(&self) -> Result<(), GraphError> {
        let bad = |msg: &str| Err(GraphError::InvalidConfig(msg.to_string()));
        if !(self.cutoff.is_finite() && self.cutoff > 0.0) {
            return bad("cutoff must be positive");
        }
        if self.max_neighbors == 0 {
            return bad("max_neighbors must be at least 1");
        }
        if !(self.gaussian_max > self.gaussian_min) {
            return bad("gaussian_max must exceed gaussian_min");
        }
        if !(self.gaussian_step > 0.0) || !(self.gaussian_width > 0.0) {
            return bad("gaussian_step and gaussian_width must be positive");
        }
        Ok(())
    }

    /// Number of Gaussian centres, `floor((max − min) / step) + 1`.
    pub fn basis_size(&self) -> usize {
        ((self.gaussian_max - self.gaussian_min) / self.gaussian_step + 1e-9).floor() as usize + 1
    }
}

/// Directed edge from atom `i` to the periodic copy of atom `j` shifted by
/// `image` cell vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub image: [i32; 3],
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrystalGraph {
    pub source_id: String,
    pub atomic_numbers: Vec<u8>,
    /// N × F0, row-major.
    pub node_features: Vec<f64>,
    pub node_feature_dim: usize,
    pub edges: Vec<Edge>,
    /// E × G, row-major, aligned with `edges`.
    pub edge_features: Vec<f64>,
    pub edge_feature_dim: usize,
}

impl CrystalGraph {
    pub fn n_nodes(&self) -> usize {
        self.atomic_numbers.len()
    }

    pub fn node_feature(&self, i: usize) -> &[f64] {
        &self.node_features[i * self.node_feature_dim..(i + 1) * self.node_feature_dim]
    }

    pub fn edge_feature(&self, e: usize) -> &[f64] {
        &self.edge_features[e * self.edge_feature_dim..(e + 1) * self.edge_feature_dim]
    }

    /// Relabels nodes so that old node `k` becomes node `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> CrystalGraph {
        let n = self.n_nodes();
        assert_eq!(perm.len(), n, "permutation length");
        let f0 = self.node_feature_dim;
        let mut atomic_numbers = vec![0; n];
        let mut node_features = vec![0.0; n * f0];
        for (old, &new) in perm.iter().enumerate() {
            atomic_numbers[new] = self.atomic_numbers[old];
            node_features[new * f0..(new + 1) * f0].copy_from_slice(self.node_feature(old));
        }
        let edges = self
            .edges
            .iter()
            .map(|e| Edge { i: perm[e.i], j: perm[e.j], ..*e })
            .collect();
        CrystalGraph {
            source_id: self.source_id.clone(),
            atomic_numbers,
            node_features,
            node_feature_dim: f0,
            edges,
            edge_features: self.edge_features.clone(),
            edge_feature_dim: self.edge_feature_dim,
        }
    }
}

fn sub(u: Vec3, v: Vec3) -> Vec3 {
    [u[0] - v[0], u[1] - v[1], u[2] - v[2]]
}

fn add(u: Vec3, v: Vec3) -> Vec3 {
    [u[0] + v[0], u[1] + v[1], u[2] + v[2]]
}

/// Up to `max_neighbors` nearest periodic images per atom within the cutoff,
/// then closed under edge reversal.
///
/// Candidates come from scanning every lattice translation in a supercell
/// whose half-width along each axis is `ceil(cutoff / perpendicular width)`.
/// Equal distances are ordered by `(j, image)` ascending. Edges come back
/// sorted by `(i, j, image)`.
pub fn neighbor_list(structure: &CrystalStructure, config: &GraphConfig) -> Result<Vec<Edge>, GraphError> {
    let lattice = Lattice::from_cell(&structure.cell).map_err(|source| GraphError::Lattice {
        id: structure.id.clone(),
        source,
    })?;
    let widths = lattice.perpendicular_widths();
    let reach: [i32; 3] = widths.map(|w| (config.cutoff / w).ceil() as i32);

    let mut translations = Vec::new();
    for n0 in -reach[0]..=reach[0] {
        for n1 in -reach[1]..=reach[1] {
            for n2 in -reach[2]..=reach[2] {
                let image = [n0, n1, n2];
                translations.push((image, lattice.frac_to_cart(image.map(f64::from))));
            }
        }
    }

    let cart: Vec<Vec3> = structure.sites.iter().map(|s| lattice.frac_to_cart(s.frac)).collect();
    let mut selected: BTreeMap<(usize, usize, [i32; 3]), f64> = BTreeMap::new();
    let mut candidates = Vec::new();
    for (i, &ci) in cart.iter().enumerate() {
        candidates.clear();
        for (j, &cj) in cart.iter().enumerate() {
            let base = sub(cj, ci);
            for &(image, shift) in &translations {
                let d = norm(add(base, shift));
                if d > 0.0 && d <= config.cutoff {
                    candidates.push((d, j, image));
                }
            }
        }
        candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        for &(d, j, image) in candidates.iter().take(config.max_neighbors) {
            selected.insert((i, j, image), d);
        }
    }

    // (j, i, −image) has exactly the same length: the difference vector is negated
    let reversed: Vec<_> = selected
        .iter()
        .map(|(&(i, j, image), &d)| ((j, i, image.map(|n| -n)), d))
        .collect();
    for (key, d) in reversed {
        selected.entry(key).or_insert(d);
    }

    Ok(selected
        .into_iter()
        .map(|((i, j, image), distance)| Edge { i, j, image, distance })
        .collect())
}

/// Gaussian responses `exp(−(d − μₖ)² / width²)` on the centres
/// `μₖ = gaussian_min + k·gaussian_step`.
pub fn expand_distance(d: f64, config: &GraphConfig) -> Vec<f64> {
    let inv_w2 = 1.0 / (config.gaussian_width * config.gaussian_width);
    (0..config.basis_size())
        .map(|k| {
            let mu = config.gaussian_min + k as f64 * config.gaussian_step;
            (-(d - mu) * (d - mu) * inv_w2).exp()
        })
        .collect()
}

/// One-hot encoding of the atomic number.
pub fn atom_features(z: u32) -> Result<Vec<f64>, GraphError> {
    if !(1..=MAX_ATOMIC_NUMBER as u32).contains(&z) {
        return Err(GraphError::OutOfRange(z));
    }
    let mut v = vec![0.0; ATOM_FEATURE_DIM];
    v[z as usize - 1] = 1.0;
    Ok(v)
}

pub fn build_graph(structure: &CrystalStructure, config: &GraphConfig) -> Result<CrystalGraph, GraphError> {
    config.validate()?;
    let edges = neighbor_list(structure, config)?;

    let n = structure.sites.len();
    let mut degree = vec![0usize; n];
    for e in &edges {
        degree[e.i] += 1;
    }
    if let Some(atom) = degree.iter().position(|&d| d == 0) {
        return Err(GraphError::EdgelessGraph { id: structure.id.clone(), atom });
    }

    let mut node_features = Vec::with_capacity(n * ATOM_FEATURE_DIM);
    let mut atomic_numbers = Vec::with_capacity(n);
    for site in &structure.sites {
        let z = site.element.atomic_number();
        atomic_numbers.push(z);
        node_features.extend(atom_features(z as u32)?);
    }
    let g = config.basis_size();
    let mut edge_features = Vec::with_capacity(edges.len() * g);
    for e in &edges {
        edge_features.extend(expand_distance(e.distance, config));
    }
    Ok(CrystalGraph {
        source_id: structure.id.clone(),
        atomic_numbers,
        node_features,
        node_feature_dim: ATOM_FEATURE_DIM,
        edges,
        edge_features,
        edge_feature_dim: g,
    })
}
