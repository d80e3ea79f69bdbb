//! Chemical elements up to fermium (Z = 100).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Largest atomic number accepted anywhere in the pipeline.
pub const MAX_ATOMIC_NUMBER: u8 = 100;

const SYMBOLS: [&str; MAX_ATOMIC_NUMBER as usize] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl",
    "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
    "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In",
    "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb",
    "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl",
    "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk",
    "Cf", "Es", "Fm",
];

/// An element identified by its atomic number, always in `1..=100`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Element(u8);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ElementError {
    #[error("atomic number {0} outside 1..=100")]
    OutOfRange(u32),
    #[error("unknown element symbol `{0}`")]
    UnknownSymbol(String),
}

impl Element {
    pub fn from_atomic_number(z: u32) -> Result<Self, ElementError> {
        if (1..=MAX_ATOMIC_NUMBER as u32).contains(&z) {
            Ok(Element(z as u8))
        } else {
            Err(ElementError::OutOfRange(z))
        }
    }

    /// Looks up a symbol, case-insensitively. Trailing oxidation-state or
    /// label decorations (`Zn2+`, `O1`) are stripped first.
    pub fn from_symbol(raw: &str) -> Result<Self, ElementError> {
        let letters: String = raw.chars().take_while(|c| c.is_ascii_alphabetic()).collect();
        let mut normalized = String::with_capacity(letters.len());
        for (k, ch) in letters.chars().enumerate() {
            if k == 0 {
                normalized.push(ch.to_ascii_uppercase());
            } else {
                normalized.push(ch.to_ascii_lowercase());
            }
        }
        SYMBOLS
            .iter()
            .position(|s| *s == normalized)
            .map(|idx| Element(idx as u8 + 1))
            .ok_or_else(|| ElementError::UnknownSymbol(raw.to_string()))
    }

    pub fn atomic_number(self) -> u8 {
        self.0
    }

    pub fn symbol(self) -> &'static str {
        SYMBOLS[self.0 as usize - 1]
    }

    /// Every element in atomic-number order.
    pub fn all() -> impl Iterator<Item = Element> {
        (1..=MAX_ATOMIC_NUMBER).map(Element)
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for Element {
    type Err = ElementError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Element::from_symbol(s)
    }
}

impl Serialize for Element {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.symbol())
    }
}

impl<'de> Deserialize<'de> for Element {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let symbol = String::deserialize(deserializer)?;
        Element::from_symbol(&symbol).map_err(serde::de::Error::custom)
    }
}
