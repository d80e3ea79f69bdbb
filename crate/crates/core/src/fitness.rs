//! The three electrocatalytic properties and the scalar fitness built from them.
//!
//! `fitness = FE / fe_div − ΔE · de_mul − |V| / v_div`, with defaults 5, 5 and 2,
//! evaluated on raw physical units (FE in percent, V in volts, ΔE in eV/atom).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::graph::{build_graph, GraphConfig, GraphError};
use crate::structure::CrystalStructure;
use crate::surrogate::{SurrogateError, SurrogateModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Property {
    /// Faradaic efficiency, percent.
    Fe,
    /// Voltage potential, volts.
    V,
    /// Free energy of formation, eV/atom.
    De,
}

impl Property {
    pub const ALL: [Property; 3] = [Property::Fe, Property::V, Property::De];

    pub fn name(self) -> &'static str {
        match self {
            Property::Fe => "fe",
            Property::V => "v",
            Property::De => "de",
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Property {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fe" => Ok(Property::Fe),
            "v" => Ok(Property::V),
            "de" => Ok(Property::De),
            other => Err(format!("unknown property `{other}` (expected fe, v or de)")),
        }
    }
}

/// FE in percent, V in volts (signed), ΔE in eV/atom (signed).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropertyVector {
    pub fe: f64,
    pub v: f64,
    pub de: f64,
}

impl PropertyVector {
    pub fn new(fe: f64, v: f64, de: f64) -> Self {
        PropertyVector { fe, v, de }
    }

    pub fn get(&self, property: Property) -> f64 {
        match property {
            Property::Fe => self.fe,
            Property::V => self.v,
            Property::De => self.de,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitnessWeights {
    pub fe_div: f64,
    pub de_mul: f64,
    pub v_div: f64,
}

impl Default for FitnessWeights {
    fn default() -> Self {
        FitnessWeights { fe_div: 5.0, de_mul: 5.0, v_div: 2.0 }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FitnessError {
    #[error("non-finite property value in {0:?}")]
    NonFiniteInput(PropertyVector),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("structure `{id}`: {property} model failed: {source}")]
    Model { id: String, property: Property, source: SurrogateError },
}

impl FitnessWeights {
    pub fn fitness(&self, p: &PropertyVector) -> Result<f64, FitnessError> {
        if !(p.fe.is_finite() && p.v.is_finite() && p.de.is_finite()) {
            return Err(FitnessError::NonFiniteInput(*p));
        }
        Ok(p.fe / self.fe_div - p.de * self.de_mul - p.v.abs() / self.v_div)
    }
}

/// Fitness with the default coefficients.
pub fn fitness(p: &PropertyVector) -> Result<f64, FitnessError> {
    FitnessWeights::default().fitness(p)
}

/// One trained surrogate per property.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSet {
    pub fe: SurrogateModel,
    pub v: SurrogateModel,
    pub de: SurrogateModel,
}

impl ModelSet {
    pub fn get(&self, property: Property) -> &SurrogateModel {
        match property {
            Property::Fe => &self.fe,
            Property::V => &self.v,
            Property::De => &self.de,
        }
    }
}

/// Builds the structure's graph once and scores it with all three models.
pub fn evaluate_candidate(
    models: &ModelSet,
    structure: &CrystalStructure,
    graph_config: &GraphConfig,
    weights: &FitnessWeights,
) -> Result<(PropertyVector, f64), FitnessError> {
    let graph = build_graph(structure, graph_config)?;
    let predict = |property: Property| {
        models.get(property).predict_physical(&graph).map_err(|source| FitnessError::Model {
            id: structure.id.clone(),
            property,
            source,
        })
    };
    let p = PropertyVector { fe: predict(Property::Fe)?, v: predict(Property::V)?, de: predict(Property::De)? };
    let f = weights.fitness(&p)?;
    Ok((p, f))
}
