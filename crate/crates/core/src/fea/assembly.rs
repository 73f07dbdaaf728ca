use std::sync::{Arc, Mutex, OnceLock};

use super::element::{quad_form, unit_stiffness};
use super::solver::{dot, norm};
use super::{
    ElementMatrix, Grid, LinearSolver, Material, SparsePattern, SparseSym, SymbolicFactor,
};
use crate::density::DensityField;
use crate::problem::{BoundarySpec, PointLoad};
use crate::{Error, Result};

/// Required relative residual of every static solve.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// SIMP modulus `Emin + rho^p (E0 - Emin)`.
#[inline]
pub fn simp_modulus(material: &Material, rho: f64, penalty: f64) -> f64 {
    material.emin + rho.powf(penalty) * (material.e0 - material.emin)
}

/// Contexts kept alive by [`Stiffness::shared`].
const SHARED_CAPACITY: usize = 8;

type SharedKey = (usize, usize, [u64; 3]);

static SHARED: Mutex<Vec<(SharedKey, Arc<Stiffness>)>> = Mutex::new(Vec::new());

/// Assembly context for one grid and material: shared sparsity pattern, unit
/// element matrix and a lazily computed symbolic factorization.
pub struct Stiffness {
    grid: Grid,
    material: Material,
    pattern: Arc<SparsePattern>,
    ke_unit: ElementMatrix,
    symbolic: OnceLock<SymbolicFactor>,
}

impl Stiffness {
    pub fn new(grid: &Grid, material: &Material) -> Result<Self> {
        material.validate()?;
        Ok(Stiffness {
            grid: *grid,
            material: *material,
            pattern: SparsePattern::for_grid(grid),
            ke_unit: unit_stiffness(material.nu),
            symbolic: OnceLock::new(),
        })
    }

    /// Process-wide context for `grid` and `material`, so the pattern and the
    /// symbolic factorization are built once per shape. Keeps the most
    /// recently used few.
    pub fn shared(grid: &Grid, material: &Material) -> Result<Arc<Self>> {
        material.validate()?;
        let key = (
            grid.nelx,
            grid.nely,
            [material.e0, material.emin, material.nu].map(f64::to_bits),
        );
        let mut cache = SHARED.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(i) = cache.iter().position(|(k, _)| *k == key) {
            let hit = cache.remove(i);
            let st = Arc::clone(&hit.1);
            cache.push(hit);
            return Ok(st);
        }
        let st = Arc::new(Stiffness::new(grid, material)?);
        if cache.len() == SHARED_CAPACITY {
            cache.remove(0);
        }
        cache.push((key, Arc::clone(&st)));
        Ok(st)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn material(&self) -> &Material {
        &self.material
    }

    pub fn pattern(&self) -> &Arc<SparsePattern> {
        &self.pattern
    }

    /// Element stiffness for unit modulus.
    pub fn unit_element(&self) -> &ElementMatrix {
        &self.ke_unit
    }

    /// `K = sum_e scale_e * K_e^unit`.
    pub fn assemble_scaled(&self, scale: &[f64]) -> Result<SparseSym> {
        self.assemble_element_matrix(&self.ke_unit, scale)
    }

    /// `sum_e scale_e * A_e` for one 8x8 element matrix shared by all elements.
    pub fn assemble_element_matrix(&self, ae: &ElementMatrix, scale: &[f64]) -> Result<SparseSym> {
        if scale.len() != self.grid.n_elements() {
            return Err(Error::Dimension {
                what: "element scale factors",
                expected: self.grid.n_elements(),
                actual: scale.len(),
            });
        }
        let mut k = SparseSym::zeros(self.pattern.clone());
        let scatter = self.pattern.scatter();
        let vals = k.values_mut();
        for (e, &s) in scale.iter().enumerate() {
            if s == 0.0 {
                continue;
            }
            let map = &scatter[e * 64..(e + 1) * 64];
            for a in 0..8 {
                for b in 0..8 {
                    vals[map[8 * a + b] as usize] += s * ae[a][b];
                }
            }
        }
        Ok(k)
    }

    pub fn moduli(&self, density: &DensityField, penalty: f64) -> Result<Vec<f64>> {
        density.check_grid(&self.grid)?;
        density.check_range()?;
        if !(penalty >= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "penalty must be >= 1, got {penalty}"
            )));
        }
        Ok(density
            .values
            .iter()
            .map(|&r| simp_modulus(&self.material, r, penalty))
            .collect())
    }

    pub fn assemble(&self, density: &DensityField, penalty: f64) -> Result<SparseSym> {
        let moduli = self.moduli(density, penalty)?;
        self.assemble_scaled(&moduli)
    }

    pub fn symbolic(&self) -> Result<&SymbolicFactor> {
        if let Some(s) = self.symbolic.get() {
            return Ok(s);
        }
        let s = SymbolicFactor::new(&self.pattern)?;
        Ok(self.symbolic.get_or_init(|| s))
    }

    /// Solve `K u = f` with the rows and columns of `fixed` DOFs eliminated.
    pub fn solve(
        &self,
        k: &SparseSym,
        fixed: &[bool],
        f: &[f64],
        solver: &LinearSolver,
    ) -> Result<StaticSolution> {
        solve_with(&self.grid, k, fixed, f, solver, || self.symbolic())
    }

    /// Per-element `u_e^T K_e^unit u_e`.
    pub fn element_energies(&self, u: &[f64]) -> Vec<f64> {
        element_energies(&self.grid, &self.ke_unit, u)
    }
}

pub(crate) fn element_energies(grid: &Grid, ke: &ElementMatrix, u: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.n_elements());
    for ey in 0..grid.nely {
        for ex in 0..grid.nelx {
            let ue = grid.element_dofs(ex, ey).map(|d| u[d]);
            out.push(quad_form(ke, &ue));
        }
    }
    out
}

/// Solve an already constrained SPD system, with at most two refinement sweeps
/// if the direct residual misses the tolerance.
pub(crate) fn solve_constrained<'a>(
    kc: &SparseSym,
    rhs: &[f64],
    solver: &LinearSolver,
    symbolic: impl FnOnce() -> Result<&'a SymbolicFactor>,
) -> Result<Vec<f64>> {
    let n = kc.dim();
    if norm(rhs) == 0.0 {
        return Ok(vec![0.0; n]);
    }
    match *solver {
        LinearSolver::Cholesky => {
            let factor = symbolic()?.factor(kc)?;
            let mut u = factor.solve(rhs);
            for _ in 0..2 {
                if relative_residual(kc, &u, rhs) < RESIDUAL_TOL {
                    break;
                }
                let ku = kc.matvec(&u);
                let r: Vec<f64> = rhs.iter().zip(&ku).map(|(b, a)| b - a).collect();
                let du = factor.solve(&r);
                u.iter_mut().zip(&du).for_each(|(x, d)| *x += d);
            }
            check_solution(kc, &u, rhs)?;
            Ok(u)
        }
        LinearSolver::Pcg {
            rel_tol,
            max_iter_factor,
        } => {
            let mut u = vec![0.0; n];
            super::pcg(kc, rhs, &mut u, rel_tol, max_iter_factor.max(1) * n)?;
            check_solution(kc, &u, rhs)?;
            Ok(u)
        }
    }
}

fn check_solution(kc: &SparseSym, u: &[f64], rhs: &[f64]) -> Result<()> {
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("displacement solution".into()));
    }
    let rel = relative_residual(kc, u, rhs);
    if !(rel < RESIDUAL_TOL) {
        return Err(Error::NoConvergence {
            iterations: 0,
            residual: rel,
        });
    }
    Ok(())
}

pub(crate) fn relative_residual(k: &SparseSym, u: &[f64], f: &[f64]) -> f64 {
    let fnorm = norm(f);
    if fnorm == 0.0 {
        return norm(u);
    }
    let ku = k.matvec(u);
    let r: f64 = ku.iter().zip(f).map(|(a, b)| (a - b) * (a - b)).sum();
    r.sqrt() / fnorm
}

/// Reject fixture sets that leave a rigid-body mode free.
///
/// The system is nonsingular iff no nonzero combination of the two
/// translations and the rotation vanishes on every fixed DOF.
pub(crate) fn check_constraints(grid: &Grid, fixed: &[bool]) -> Result<()> {
    let mut gram = [[0.0f64; 3]; 3];
    let cx = grid.nelx as f64 / 2.0;
    let cy = grid.nely as f64 / 2.0;
    let scale = cx.max(cy).max(1.0);
    for (dof, _) in fixed.iter().enumerate().filter(|(_, &f)| f) {
        let (ix, iy) = grid.node_coords(dof / 2);
        let x = (ix as f64 - cx) / scale;
        let y = ((grid.nely - iy) as f64 - cy) / scale;
        let row = if dof % 2 == 0 {
            [1.0, 0.0, -y]
        } else {
            [0.0, 1.0, x]
        };
        for a in 0..3 {
            for b in 0..3 {
                gram[a][b] += row[a] * row[b];
            }
        }
    }
    // Cholesky of the 3x3 Gram matrix with a relative pivot floor.
    let trace = gram[0][0] + gram[1][1] + gram[2][2];
    let mut l = [[0.0f64; 3]; 3];
    for j in 0..3 {
        let mut d = gram[j][j];
        for k in 0..j {
            d -= l[j][k] * l[j][k];
        }
        if !(d > 1e-12 * trace.max(1e-300)) {
            return Err(Error::Singular(
                "fixed DOFs do not suppress all rigid-body modes".into(),
            ));
        }
        l[j][j] = d.sqrt();
        for i in (j + 1)..3 {
            let mut s = gram[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = s / l[j][j];
        }
    }
    Ok(())
}

/// Stiffness matrix of `density` with SIMP interpolation.
pub fn assemble_stiffness(
    grid: &Grid,
    material: &Material,
    density: &DensityField,
    penalty: f64,
) -> Result<SparseSym> {
    Stiffness::new(grid, material)?.assemble(density, penalty)
}

/// Global load vector from nodal forces `(node, fx, fy)`.
pub fn load_vector(grid: &Grid, forces: &[(usize, f64, f64)]) -> Result<Vec<f64>> {
    let mut f = vec![0.0; grid.n_dofs()];
    for &(node, fx, fy) in forces {
        if node >= grid.n_nodes() {
            return Err(Error::InvalidArgument(format!("node {node} outside grid")));
        }
        f[2 * node] += fx;
        f[2 * node + 1] += fy;
    }
    Ok(f)
}

/// Mask of DOFs clamped by `bc`.
pub fn fixed_dofs(grid: &Grid, bc: &BoundarySpec) -> Vec<bool> {
    let mut fixed = vec![false; grid.n_dofs()];
    for n in bc.fixed_nodes(grid) {
        fixed[2 * n] = true;
        fixed[2 * n + 1] = true;
    }
    fixed
}

#[derive(Debug, Clone)]
pub struct StaticSolution {
    /// Displacements, exactly zero at fixed DOFs.
    pub u: Vec<f64>,
    /// Load vector with fixed entries removed.
    pub f: Vec<f64>,
    pub compliance: f64,
    pub rel_residual: f64,
}

/// Static solve for a point load on an assembled stiffness matrix.
pub fn solve_static(
    grid: &Grid,
    bc: &BoundarySpec,
    load: &PointLoad,
    k: &SparseSym,
    solver: &LinearSolver,
) -> Result<StaticSolution> {
    load.validate(grid)?;
    let fixed = fixed_dofs(grid, bc);
    let f = load_vector(grid, &load.nodal_forces(grid))?;
    solve_system(grid, k, &fixed, &f, solver)
}

/// Static solve for an arbitrary load vector and fixed-DOF mask.
pub fn solve_system(
    grid: &Grid,
    k: &SparseSym,
    fixed: &[bool],
    f: &[f64],
    solver: &LinearSolver,
) -> Result<StaticSolution> {
    let symbolic = OnceLock::new();
    solve_with(grid, k, fixed, f, solver, || {
        let s = SymbolicFactor::new(k.pattern())?;
        Ok(symbolic.get_or_init(|| s))
    })
}

fn solve_with<'a>(
    grid: &Grid,
    k: &SparseSym,
    fixed: &[bool],
    f: &[f64],
    solver: &LinearSolver,
    symbolic: impl FnOnce() -> Result<&'a SymbolicFactor>,
) -> Result<StaticSolution> {
    let n = grid.n_dofs();
    if k.dim() != n || fixed.len() != n || f.len() != n {
        return Err(Error::Dimension {
            what: "static system",
            expected: n,
            actual: f.len().min(k.dim()).min(fixed.len()),
        });
    }
    check_constraints(grid, fixed)?;
    let mut kc = k.clone();
    kc.constrain(fixed);
    let rhs: Vec<f64> = f
        .iter()
        .zip(fixed)
        .map(|(&v, &fx)| if fx { 0.0 } else { v })
        .collect();
    let u = solve_constrained(&kc, &rhs, solver, symbolic)?;
    let rel_residual = relative_residual(&kc, &u, &rhs);
    Ok(StaticSolution {
        compliance: compliance(&u, &rhs),
        u,
        f: rhs,
        rel_residual,
    })
}

/// Compliance `f^T u`.
pub fn compliance(u: &[f64], f: &[f64]) -> f64 {
    dot(u, f)
}
