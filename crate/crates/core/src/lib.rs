//! Evolutionary search for electrocatalytic crystal structures guided by
//! crystal-graph neural surrogates, with active transfer learning.
//!
//! The pipeline: [`cif`] structures become periodic [`graph`]s, one
//! [`surrogate`] per property predicts FE, V and ΔE, [`fitness`] combines them,
//! [`evolution`] searches the candidate pool, and [`atl`] feeds the best
//! candidates back into the training set.


pub mod atl;
pub mod cif;
pub mod dataset;
pub mod element;
pub mod evolution;

pub mod fitness;
pub mod graph;
pub mod lattice;
pub mod structure;
pub mod surrogate;
pub mod toy;


pub use cif::{parse_cif, write_cif, CifError};
pub use dataset::{load_dataset, LabeledEntry, Labels, Provenance};
pub use element::Element;
pub use fitness::{evaluate_candidate, fitness, FitnessWeights, ModelSet, Property, PropertyVector};
pub use graph::{build_graph, CrystalGraph, GraphConfig};
pub use lattice::Lattice;
pub use structure::{AtomSite, Cell, CrystalStructure};
pub use surrogate::{ModelConfig, SurrogateModel, TrainConfig, TrainReport};
