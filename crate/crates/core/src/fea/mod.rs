//! Linear-elastic plane-stress finite elements on a regular grid of unit
//! square bilinear quadrilaterals.
//!
//! Layout conventions used throughout the crate:
//!
//! * Elements are addressed `(ex, ey)` with `ey = 0` the top row, so element
//!   arrays are row-major images (`ey * nelx + ex`).
//! * Nodes are `(ix, iy)` with `iy = 0` on the top edge and numbered
//!   column-major, y fastest: `node = ix * (nely + 1) + iy`.
//! * Each node carries two DOFs `[2 * node, 2 * node + 1]` = `[u_x, u_y]`
//!   with the physical y axis pointing *up* (opposite to `iy`).
//! * Element DOFs run counterclockwise from the lower-left node:
//!   LL, LR, UR, UL.

mod assembly;
mod element;
mod fields;
mod solver;
mod sparse;

pub use assembly::{
    assemble_stiffness, compliance, fixed_dofs, load_vector, simp_modulus, solve_static,
    solve_system, StaticSolution, Stiffness, RESIDUAL_TOL,
};
pub(crate) use assembly::{check_constraints, solve_constrained};
pub use element::{
    constitutive_matrix, element_stiffness, strain_displacement_center, ElementMatrix,
};
pub(crate) use fields::problem_fields_with;
pub use fields::{element_fields, normalize_fields, problem_fields, von_mises, FieldImage};
pub use solver::{pcg, Factor, LinearSolver, PcgReport, SymbolicFactor};
pub use sparse::{SparsePattern, SparseSym};

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Regular grid of unit square elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    pub nelx: usize,
    pub nely: usize,
}

impl Grid {
    pub fn new(nelx: usize, nely: usize) -> Result<Self> {
        if nelx == 0 || nely == 0 {
            return Err(Error::InvalidArgument(format!(
                "grid must have at least one element per axis, got {nelx}x{nely}"
            )));
        }
        Ok(Grid { nelx, nely })
    }

    pub fn square(n: usize) -> Result<Self> {
        Grid::new(n, n)
    }

    /// Element edge length. Fixed at one.
    pub fn element_size(&self) -> f64 {
        1.0
    }

    pub fn n_elements(&self) -> usize {
        self.nelx * self.nely
    }

    pub fn n_nodes(&self) -> usize {
        (self.nelx + 1) * (self.nely + 1)
    }

    pub fn n_dofs(&self) -> usize {
        2 * self.n_nodes()
    }

    #[inline]
    pub fn node(&self, ix: usize, iy: usize) -> usize {
        ix * (self.nely + 1) + iy
    }

    #[inline]
    pub fn node_coords(&self, node: usize) -> (usize, usize) {
        (node / (self.nely + 1), node % (self.nely + 1))
    }

    #[inline]
    pub fn element_index(&self, ex: usize, ey: usize) -> usize {
        ey * self.nelx + ex
    }

    #[inline]
    pub fn element_coords(&self, e: usize) -> (usize, usize) {
        (e % self.nelx, e / self.nelx)
    }

    /// Corner nodes of element `(ex, ey)`: LL, LR, UR, UL.
    #[inline]
    pub fn element_nodes(&self, ex: usize, ey: usize) -> [usize; 4] {
        [
            self.node(ex, ey + 1),
            self.node(ex + 1, ey + 1),
            self.node(ex + 1, ey),
            self.node(ex, ey),
        ]
    }

    #[inline]
    pub fn element_dofs(&self, ex: usize, ey: usize) -> [usize; 8] {
        let n = self.element_nodes(ex, ey);
        [
            2 * n[0],
            2 * n[0] + 1,
            2 * n[1],
            2 * n[1] + 1,
            2 * n[2],
            2 * n[2] + 1,
            2 * n[3],
            2 * n[3] + 1,
        ]
    }

    pub fn is_boundary_node(&self, ix: usize, iy: usize) -> bool {
        ix == 0 || iy == 0 || ix == self.nelx || iy == self.nely
    }

    pub fn is_boundary_element(&self, ex: usize, ey: usize) -> bool {
        ex == 0 || ey == 0 || ex + 1 == self.nelx || ey + 1 == self.nely
    }

    /// Boundary elements in row-major order.
    pub fn boundary_elements(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for ey in 0..self.nely {
            for ex in 0..self.nelx {
                if self.is_boundary_element(ex, ey) {
                    out.push((ex, ey));
                }
            }
        }
        out
    }
}

/// Isotropic linear-elastic material with a SIMP void floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub e0: f64,
    pub emin: f64,
    pub nu: f64,
}

impl Default for Material {
    fn default() -> Self {
        Material {
            e0: 1.0,
            emin: 1e-9,
            nu: 0.3,
        }
    }
}

impl Material {
    pub fn validate(&self) -> Result<()> {
        if !(self.emin > 0.0 && self.emin < self.e0) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < Emin < E0, got Emin={} E0={}",
                self.emin, self.e0
            )));
        }
        if !(0.0..0.5).contains(&self.nu) {
            return Err(Error::InvalidArgument(format!(
                "Poisson's ratio must lie in [0, 0.5), got {}",
                self.nu
            )));
        }
        Ok(())
    }
}
