//! JSON-lines manifests of labeled structures.
//!
//! Each non-blank line is an object with a relative `cif` path and any of
//! `fe_percent`, `voltage_v`, `free_energy_ev_atom`, plus an optional
//! `provenance` (`measured` or `predicted`, default `measured`).

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cif::{parse_cif, CifError};
use crate::fitness::{Property, PropertyVector};
use crate::structure::CrystalStructure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    #[default]
    Measured,
    Predicted,
}

/// A subset of the three properties; at least one is present.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Labels {
    #[serde(rename = "fe_percent", skip_serializing_if = "Option::is_none", default)]
    pub fe: Option<f64>,
    #[serde(rename = "voltage_v", skip_serializing_if = "Option::is_none", default)]
    pub v: Option<f64>,
    #[serde(rename = "free_energy_ev_atom", skip_serializing_if = "Option::is_none", default)]
    pub de: Option<f64>,
}

impl Labels {
    pub fn get(&self, property: Property) -> Option<f64> {
        match property {
            Property::Fe => self.fe,
            Property::V => self.v,
            Property::De => self.de,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.fe.is_none() && self.v.is_none() && self.de.is_none()
    }

    fn check(&self) -> Result<(), String> {
        if self.is_empty() {
            return Err("entry carries no labels".into());
        }
        for (name, value) in [("fe_percent", self.fe), ("voltage_v", self.v), ("free_energy_ev_atom", self.de)] {
            if value.is_some_and(|x| !x.is_finite()) {
                return Err(format!("{name} is not finite"));
            }
        }
        Ok(())
    }
}

impl From<PropertyVector> for Labels {
    fn from(p: PropertyVector) -> Self {
        Labels { fe: Some(p.fe), v: Some(p.v), de: Some(p.de) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledEntry {
    pub structure: CrystalStructure,
    pub labels: Labels,
    pub provenance: Provenance,
}

impl LabeledEntry {
    pub fn validate(&self) -> Result<(), String> {
        self.labels.check()?;
        if self.provenance == Provenance::Measured {
            if let Some(fe) = self.labels.fe {
                if !(0.0..=100.0).contains(&fe) {
                    return Err(format!("measured fe_percent {fe} outside [0, 100]"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestLine {
    cif: String,
    fe_percent: Option<f64>,
    voltage_v: Option<f64>,
    free_energy_ev_atom: Option<f64>,
    #[serde(default)]
    provenance: Provenance,
}

impl ManifestLine {
    fn labels(&self) -> Labels {
        Labels { fe: self.fe_percent, v: self.voltage_v, de: self.free_energy_ev_atom }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{}: cannot read manifest: {source}", path.display())]
    ManifestUnreadable { path: PathBuf, source: io::Error },
    #[error("manifest line {line}: file not found: {}", path.display())]
    FileNotFound { path: PathBuf, line: usize },
    #[error("manifest line {line}: {reason}")]
    LineParseError { line: usize, reason: String },
    #[error("manifest line {line}: {}: {source}", path.display())]
    Cif { path: PathBuf, line: usize, source: CifError },
}

/// Loads every entry of a manifest; CIF paths resolve against its directory.
pub fn load_dataset(manifest: &Path) -> Result<Vec<LabeledEntry>, DatasetError> {
    let text = fs::read_to_string(manifest).map_err(|source| DatasetError::ManifestUnreadable {
        path: manifest.to_path_buf(),
        source,
    })?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let parsed: ManifestLine = serde_json::from_str(raw)
            .map_err(|e| DatasetError::LineParseError { line, reason: e.to_string() })?;
        let path = base.join(&parsed.cif);
        let cif_text = fs::read_to_string(&path).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => DatasetError::FileNotFound { path: path.clone(), line },
            _ => DatasetError::LineParseError { line, reason: format!("{}: {e}", path.display()) },
        })?;
        let structure = parse_cif(&cif_text).map_err(|source| DatasetError::Cif {
            path: path.clone(),
            line,
            source,
        })?;
        let entry = LabeledEntry { structure, labels: parsed.labels(), provenance: parsed.provenance };
        entry.validate().map_err(|reason| DatasetError::LineParseError { line, reason })?;
        entries.push(entry);
    }
    Ok(entries)
}

/// One manifest line referencing `cif_path`, in the format [`load_dataset`] reads.
pub fn manifest_line(cif_path: &str, labels: &Labels, provenance: Provenance) -> String {
    #[derive(Serialize)]
    struct Line<'a> {
        cif: &'a str,
        #[serde(flatten)]
        labels: &'a Labels,
        provenance: Provenance,
    }
    serde_json::to_string(&Line { cif: cif_path, labels, provenance }).expect("manifest line serializes")
}
