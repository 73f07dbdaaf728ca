use serde::{Deserialize, Serialize};

use super::element::constitutive_matrix;
use super::{strain_displacement_center, Grid, LinearSolver, Material, Stiffness};
use crate::density::DensityField;
use crate::problem::ProblemSpec;
use crate::{Error, Result};

/// Two-channel per-element image: strain energy density and von Mises stress,
/// both row-major `nely x nelx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldImage {
    pub nelx: usize,
    pub nely: usize,
    pub sed: Vec<f64>,
    pub vm: Vec<f64>,
}

impl FieldImage {
    pub fn grid(&self) -> Grid {
        Grid {
            nelx: self.nelx,
            nely: self.nely,
        }
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        match c {
            0 => &self.sed,
            _ => &self.vm,
        }
    }
}

/// Plane-stress von Mises stress.
#[inline]
pub fn von_mises(sx: f64, sy: f64, txy: f64) -> f64 {
    (sx * sx - sx * sy + sy * sy + 3.0 * txy * txy)
        .max(0.0)
        .sqrt()
}

/// Raw element-center strain energy density and von Mises stress for solid material.
pub fn element_fields(grid: &Grid, material: &Material, u: &[f64]) -> Result<FieldImage> {
    if u.len() != grid.n_dofs() {
        return Err(Error::Dimension {
            what: "displacement field",
            expected: grid.n_dofs(),
            actual: u.len(),
        });
    }
    let b = strain_displacement_center();
    let d = constitutive_matrix(material.e0, material.nu);
    let n = grid.n_elements();
    let mut sed = Vec::with_capacity(n);
    let mut vm = Vec::with_capacity(n);
    for ey in 0..grid.nely {
        for ex in 0..grid.nelx {
            let ue = grid.element_dofs(ex, ey).map(|dof| u[dof]);
            let mut eps = [0.0; 3];
            for (r, e) in eps.iter_mut().enumerate() {
                *e = (0..8).map(|k| b[r][k] * ue[k]).sum();
            }
            let mut sig = [0.0; 3];
            for (r, s) in sig.iter_mut().enumerate() {
                *s = (0..3).map(|k| d[r][k] * eps[k]).sum();
            }
            let w = 0.5 * (sig[0] * eps[0] + sig[1] * eps[1] + sig[2] * eps[2]);
            sed.push(w.max(0.0));
            vm.push(von_mises(sig[0], sig[1], sig[2]));
        }
    }
    Ok(FieldImage {
        nelx: grid.nelx,
        nely: grid.nely,
        sed,
        vm,
    })
}

/// Divide each channel by its own maximum; all-zero channels stay zero.
pub fn normalize_fields(raw: &FieldImage) -> Result<FieldImage> {
    fn norm(c: &[f64], name: &str) -> Result<Vec<f64>> {
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{name} channel")));
        }
        if let Some(v) = c.iter().find(|&&v| v < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "{name} channel has negative value {v}"
            )));
        }
        let max = c.iter().cloned().fold(0.0, f64::max);
        if max == 0.0 {
            return Ok(c.to_vec());
        }
        Ok(c.iter().map(|v| v / max).collect())
    }
    Ok(FieldImage {
        nelx: raw.nelx,
        nely: raw.nely,
        sed: norm(&raw.sed, "strain energy")?,
        vm: norm(&raw.vm, "von Mises")?,
    })
}

/// Normalized input fields of `spec`, computed on the full-material domain.
pub fn problem_fields(
    spec: &ProblemSpec,
    material: &Material,
    solver: &LinearSolver,
) -> Result<FieldImage> {
    let st = Stiffness::shared(&spec.grid, material)?;
    problem_fields_with(&st, spec, solver)
}

pub(crate) fn problem_fields_with(
    st: &Stiffness,
    spec: &ProblemSpec,
    solver: &LinearSolver,
) -> Result<FieldImage> {
    spec.load.validate(&spec.grid)?;
    let grid = &spec.grid;
    let k = st.assemble(&DensityField::uniform(grid, 1.0), 1.0)?;
    let fixed = super::fixed_dofs(grid, &spec.bc);
    let f = super::load_vector(grid, &spec.load.nodal_forces(grid))?;
    let sol = st.solve(&k, &fixed, &f, solver)?;
    normalize_fields(&element_fields(grid, st.material(), &sol.u)?)
}
