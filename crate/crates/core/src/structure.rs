//! Crystal structures: cell parameters plus fractional atomic sites.

use serde::{Deserialize, Serialize};

use crate::element::Element;

/// Cell lengths in Å and angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Cell {
    pub fn cubic(a: f64) -> Self {
        Cell { a, b: a, c: a, alpha: 90.0, beta: 90.0, gamma: 90.0 }
    }

    pub fn lengths(&self) -> [f64; 3] {
        [self.a, self.b, self.c]
    }

    pub fn angles(&self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }

    /// `1 − cos²α − cos²β − cos²γ + 2·cosα·cosβ·cosγ`; the squared cell volume
    /// divided by `(abc)²`. Non-positive for unrealizable angle triples.
    pub fn volume_factor(&self) -> f64 {
        let (ca, cb, cg) = (cos_deg(self.alpha), cos_deg(self.beta), cos_deg(self.gamma));
        1.0 - ca * ca - cb * cb - cg * cg + 2.0 * ca * cb * cg
    }

    /// Analytic cell volume in Å³, `None` when the cell is degenerate.
    pub fn volume(&self) -> Option<f64> {
        let factor = self.volume_factor();
        (factor > 0.0).then(|| self.a * self.b * self.c * factor.sqrt())
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, len) in [("a", self.a), ("b", self.b), ("c", self.c)] {
            if !(len.is_finite() && len > 0.0) {
                return Err(format!("cell length {name} = {len} is not positive"));
            }
        }
        for (name, angle) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(angle.is_finite() && angle > 0.0 && angle < 180.0) {
                return Err(format!("cell angle {name} = {angle} outside (0, 180)"));
            }
        }
        if self.volume().is_none() {
            return Err("cell angles do not describe a realizable cell".to_string());
        }
        Ok(())
    }

    /// Parameter-wise arithmetic mean of two cells.
    pub fn mean(&self, other: &Cell) -> Cell {
        Cell {
            a: (self.a + other.a) / 2.0,
            b: (self.b + other.b) / 2.0,
            c: (self.c + other.c) / 2.0,
            alpha: (self.alpha + other.alpha) / 2.0,
            beta: (self.beta + other.beta) / 2.0,
            gamma: (self.gamma + other.gamma) / 2.0,
        }
    }
}

/// Cosine of an angle in degrees, exact at 90°.
pub(crate) fn cos_deg(angle: f64) -> f64 {
    if angle == 90.0 {
        0.0
    } else {
        angle.to_radians().cos()
    }
}

/// Sine of an angle in degrees, exact at 90°.
pub(crate) fn sin_deg(angle: f64) -> f64 {
    if angle == 90.0 {
        1.0
    } else {
        angle.to_radians().sin()
    }
}

/// Maps a fractional coordinate into `[0, 1)`.
pub fn wrap_fraction(x: f64) -> f64 {
    let wrapped = x - x.floor();
    // x slightly below an integer can round up to exactly 1.0
    if wrapped >= 1.0 {
        0.0
    } else {
        wrapped
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomSite {
    pub element: Element,
    pub frac: [f64; 3],
}

impl AtomSite {
    /// Creates a site with its coordinates wrapped into the unit cell.
    pub fn new(element: Element, frac: [f64; 3]) -> Self {
        AtomSite { element, frac: frac.map(wrap_fraction) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrystalStructure {
    pub id: String,
    pub cell: Cell,
    pub sites: Vec<AtomSite>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StructureError {
    #[error("structure `{id}`: {reason}")]
    InvalidCell { id: String, reason: String },
    #[error("structure `{id}` has no atom sites")]
    NoSites { id: String },
    #[error("structure `{id}` site {index} has coordinates {frac:?} outside [0, 1)")]
    BadCoordinate { id: String, index: usize, frac: [f64; 3] },
}

impl CrystalStructure {
    pub fn new(id: impl Into<String>, cell: Cell, sites: Vec<AtomSite>) -> Self {
        CrystalStructure { id: id.into(), cell, sites }
    }

    pub fn validate(&self) -> Result<(), StructureError> {
        self.cell.validate().map_err(|reason| StructureError::InvalidCell {
            id: self.id.clone(),
            reason,
        })?;
        if self.sites.is_empty() {
            return Err(StructureError::NoSites { id: self.id.clone() });
        }
        for (index, site) in self.sites.iter().enumerate() {
            if !site.frac.iter().all(|x| x.is_finite() && (0.0..1.0).contains(x)) {
                return Err(StructureError::BadCoordinate {
                    id: self.id.clone(),
                    index,
                    frac: site.frac,
                });
            }
        }
        Ok(())
    }

    /// Hill-ordered chemical formula (C first, H second, then alphabetical).
    pub fn formula(&self) -> String {
        let mut counts: std::collections::BTreeMap<&'static str, usize> = Default::default();
        for site in &self.sites {
            *counts.entry(site.element.symbol()).or_default() += 1;
        }
        let mut order: Vec<&'static str> = counts.keys().copied().collect();
        if counts.contains_key("C") {
            order.sort_by_key(|s| match *s {
                "C" => (0, *s),
                "H" => (1, *s),
                _ => (2, *s),
            });
        }
        order
            .into_iter()
            .map(|s| match counts[s] {
                1 => s.to_string(),
                n => format!("{s}{n}"),
            })
            .collect()
    }

    /// Distinct elements present, in atomic-number order.
    pub fn elements(&self) -> Vec<Element> {
        let mut els: Vec<Element> = self.sites.iter().map(|s| s.element).collect();
        els.sort();
        els.dedup();
        els
    }
}
