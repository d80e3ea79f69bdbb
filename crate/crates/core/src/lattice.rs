//! Cell matrices and coordinate transforms.

use serde::{Deserialize, Serialize};

use crate::structure::{cos_deg, sin_deg, Cell};

pub type Vec3 = [f64; 3];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LatticeError {
    #[error("degenerate cell: {0}")]
    DegenerateCell(String),
}

/// Row-major 3×3 matrix whose rows are the cell vectors, in Å.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub rows: [Vec3; 3],
}

pub(crate) fn dot(u: Vec3, v: Vec3) -> f64 {
    u[0] * v[0] + u[1] * v[1] + u[2] * v[2]
}

pub(crate) fn cross(u: Vec3, v: Vec3) -> Vec3 {
    [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]]
}

pub(crate) fn norm(u: Vec3) -> f64 {
    dot(u, u).sqrt()
}

impl Lattice {
    /// Conventional orientation: `a` along x, `b` in the xy plane.
    pub fn from_params(a: f64, b: f64, c: f64, alpha: f64, beta: f64, gamma: f64) -> Result<Self, LatticeError> {
        let cell = Cell { a, b, c, alpha, beta, gamma };
        cell.validate().map_err(LatticeError::DegenerateCell)?;
        let (ca, cb, cg) = (cos_deg(alpha), cos_deg(beta), cos_deg(gamma));
        let sg = sin_deg(gamma);
        let cy = (ca - cb * cg) / sg;
        let cz2 = 1.0 - cb * cb - cy * cy;
        if cz2 <= 0.0 {
            return Err(LatticeError::DegenerateCell("third cell vector has no out-of-plane component".into()));
        }
        Ok(Lattice {
            rows: [[a, 0.0, 0.0], [b * cg, b * sg, 0.0], [c * cb, c * cy, c * cz2.sqrt()]],
        })
    }

    pub fn from_cell(cell: &Cell) -> Result<Self, LatticeError> {
        Self::from_params(cell.a, cell.b, cell.c, cell.alpha, cell.beta, cell.gamma)
    }

    pub fn determinant(&self) -> f64 {
        dot(self.rows[0], cross(self.rows[1], self.rows[2]))
    }

    /// Recovers `(a, b, c, α, β, γ)` from the matrix.
    pub fn to_cell(&self) -> Cell {
        let [r0, r1, r2] = self.rows;
        let (a, b, c) = (norm(r0), norm(r1), norm(r2));
        let angle = |u: Vec3, v: Vec3, lu: f64, lv: f64| (dot(u, v) / (lu * lv)).clamp(-1.0, 1.0).acos().to_degrees();
        Cell { a, b, c, alpha: angle(r1, r2, b, c), beta: angle(r0, r2, a, c), gamma: angle(r0, r1, a, b) }
    }

    /// `fracᵀ · L`.
    pub fn frac_to_cart(&self, frac: Vec3) -> Vec3 {
        let mut out = [0.0; 3];
        for (k, row) in self.rows.iter().enumerate() {
            for d in 0..3 {
                out[d] += frac[k] * row[d];
            }
        }
        out
    }

    pub fn cart_to_frac(&self, cart: Vec3) -> Vec3 {
        let inv = self.inverse();
        let mut out = [0.0; 3];
        for (d, inv_row) in inv.iter().enumerate() {
            for k in 0..3 {
                out[k] += cart[d] * inv_row[k];
            }
        }
        out
    }

    fn inverse(&self) -> [Vec3; 3] {
        let [r0, r1, r2] = self.rows;
        let det = self.determinant();
        // columns of the inverse are the reciprocal vectors
        let c0 = cross(r1, r2);
        let c1 = cross(r2, r0);
        let c2 = cross(r0, r1);
        let mut inv = [[0.0; 3]; 3];
        for d in 0..3 {
            inv[d] = [c0[d] / det, c1[d] / det, c2[d] / det];
        }
        inv
    }

    /// Distances between opposite faces of the cell, one per axis.
    pub fn perpendicular_widths(&self) -> Vec3 {
        let volume = self.determinant().abs();
        let [r0, r1, r2] = self.rows;
        [volume / norm(cross(r1, r2)), volume / norm(cross(r2, r0)), volume / norm(cross(r0, r1))]
    }
}
