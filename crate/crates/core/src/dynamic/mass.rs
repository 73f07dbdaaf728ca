use serde::{Deserialize, Serialize};

use crate::density::DensityField;
use crate::fea::{SparseSym, Stiffness};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MassMode {
    /// Element mass split equally over the four nodes.
    #[default]
    Lumped,
    /// `integral rho N^T N` over the element.
    Consistent,
}

/// Consistent mass of a unit square element with unit mass (x and y decoupled),
/// DOF order as the stiffness matrix.
pub fn consistent_element_mass() -> [[f64; 8]; 8] {
    // Scalar bilinear mass on the unit square, nodes LL, LR, UR, UL.
    const S: [[f64; 4]; 4] = [
        [4.0, 2.0, 1.0, 2.0],
        [2.0, 4.0, 2.0, 1.0],
        [1.0, 2.0, 4.0, 2.0],
        [2.0, 1.0, 2.0, 4.0],
    ];
    let mut m = [[0.0; 8]; 8];
    for a in 0..4 {
        for b in 0..4 {
            let v = S[a][b] / 36.0;
            m[2 * a][2 * b] = v;
            m[2 * a + 1][2 * b + 1] = v;
        }
    }
    m
}

pub fn lumped_element_mass() -> [[f64; 8]; 8] {
    let mut m = [[0.0; 8]; 8];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 0.25;
    }
    m
}

/// Global mass matrix with element mass `mass_density * rho_e` (unit area).
pub fn assemble_mass(
    stiffness: &Stiffness,
    density: &DensityField,
    mode: MassMode,
    mass_density: f64,
) -> Result<SparseSym> {
    density.check_grid(stiffness.grid())?;
    density.check_range()?;
    if !(mass_density >= 0.0 && mass_density.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "mass density must be >= 0, got {mass_density}"
        )));
    }
    let me = match mode {
        MassMode::Lumped => lumped_element_mass(),
        MassMode::Consistent => consistent_element_mass(),
    };
    let scale: Vec<f64> = density.values.iter().map(|&r| mass_density * r).collect();
    stiffness.assemble_element_matrix(&me, &scale)
}
