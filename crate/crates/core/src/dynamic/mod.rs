//! Transient response of SIMP designs and dynamic-compliance minimization.

mod mass;
mod newmark;

pub use mass::{assemble_mass, consistent_element_mass, lumped_element_mass, MassMode};
pub use newmark::{
    newmark_integrate, InitialState, LoadHistory, NewmarkParams, Response, TimeGrid,
};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::density::DensityField;
use crate::fea::{fixed_dofs, load_vector, SparseSym, Stiffness};
use crate::problem::{LoadShape, ProblemSpec};
use crate::simp::{run_oc, OptimizationResult, OptimizerConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DampingModel {
    /// `C = alpha M + beta K`.
    Rayleigh { alpha: f64, beta: f64 },
    /// `C = sum_e c(rho_e) K_e^unit` with `c = c_min + rho^p (c0 - c_min)`.
    Interpolated { c_min: f64, c0: f64, penalty: f64 },
}

impl Default for DampingModel {
    fn default() -> Self {
        DampingModel::Rayleigh {
            alpha: 0.1,
            beta: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicsConfig {
    pub time: TimeGrid,
    pub newmark: NewmarkParams,
    pub mass: MassMode,
    /// Mass per unit area of solid material.
    pub mass_density: f64,
    pub damping: DampingModel,
}

/// Solid mass density placing the first mode of a full 64x64 cantilever near
/// 1.6 Hz, so the one-second load window excites the structure rather than
/// only its inertia. At unit density that mode sits near 1.6 mHz.
pub const DEFAULT_MASS_DENSITY: f64 = 1e-6;

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            time: TimeGrid::default(),
            newmark: NewmarkParams::default(),
            mass: MassMode::default(),
            mass_density: DEFAULT_MASS_DENSITY,
            damping: DampingModel::default(),
        }
    }
}

impl DynamicsConfig {
    pub fn validate(&self) -> Result<()> {
        self.time.validate()?;
        if !(self.mass_density >= 0.0 && self.mass_density.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "mass density must be >= 0, got {}",
                self.mass_density
            )));
        }
        match self.damping {
            DampingModel::Rayleigh { alpha, beta } if alpha < 0.0 || beta < 0.0 => Err(
                Error::InvalidArgument(format!("Rayleigh coefficients must be >= 0, got ({alpha}, {beta})")),
            ),
            DampingModel::Interpolated { c_min, c0, penalty } if c_min < 0.0 || c0 < c_min || penalty < 1.0 => {
                Err(Error::InvalidArgument(format!(
                    "damping interpolation needs 0 <= c_min <= c0 and p >= 1, got ({c_min}, {c0}, {penalty})"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Rayleigh damping `alpha M + beta K`.
pub fn assemble_damping(m: &SparseSym, k: &SparseSym, alpha: f64, beta: f64) -> Result<SparseSym> {
    SparseSym::combination(&[(alpha, m), (beta, k)])
}

/// Design-dependent element damping `sum_e c(rho_e) K_e^unit`.
pub fn interpolated_damping(
    st: &Stiffness,
    density: &DensityField,
    c_min: f64,
    c0: f64,
    penalty: f64,
) -> Result<SparseSym> {
    density.check_grid(st.grid())?;
    let scale: Vec<f64> = density
        .values
        .iter()
        .map(|&r| c_min + r.powf(penalty) * (c0 - c_min))
        .collect();
    st.assemble_scaled(&scale)
}

/// `C_dyn = sum_{i=1..N} f(t_i)^T u(t_i) dt`; the `t_0` term is dropped.
pub fn dynamic_compliance(load: &LoadHistory, u: &[Vec<f64>], dt: f64) -> Result<f64> {
    if u.len() != load.samples.len() {
        return Err(Error::Dimension {
            what: "response history",
            expected: load.samples.len(),
            actual: u.len(),
        });
    }
    let mut total = 0.0;
    for (i, ui) in u.iter().enumerate().skip(1) {
        if ui.len() != load.vector.len() {
            return Err(Error::Dimension {
                what: "displacement snapshot",
                expected: load.vector.len(),
                actual: ui.len(),
            });
        }
        total += load.samples[i] * ui.iter().zip(&load.vector).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(total * dt)
}

/// `-sum_{i=1..N} p rho_e^(p-1) (E0 - Emin) u_e(t_i)^T K_e^unit u_e(t_i) dt`.
///
/// Only the stiffness derivative enters; mass and damping derivatives are
/// left out, so this is a descent direction rather than the exact gradient.
/// The sign matches the static sensitivity so the OC update lowers `C_dyn`.
pub fn dynamic_sensitivities(
    st: &Stiffness,
    u: &[Vec<f64>],
    density: &DensityField,
    dt: f64,
    penalty: f64,
) -> Result<Vec<f64>> {
    density.check_grid(st.grid())?;
    let m = st.material();
    let mut acc = vec![0.0; st.grid().n_elements()];
    for ui in u.iter().skip(1) {
        for (a, w) in acc.iter_mut().zip(st.element_energies(ui)) {
            *a += w;
        }
    }
    Ok(density
        .values
        .iter()
        .zip(&acc)
        .map(|(&r, &w)| -penalty * r.powf(penalty - 1.0) * (m.e0 - m.emin) * w * dt)
        .collect())
}

/// Sampled temporal magnitudes `g(t_i)` on the time grid.
pub fn sample_shape(shape: LoadShape, time: &TimeGrid) -> Vec<f64> {
    time.times().into_iter().map(|t| shape.eval(t)).collect()
}

/// Everything needed to simulate designs of one dynamic problem.
pub struct DynamicProblem {
    st: Arc<Stiffness>,
    fixed: Vec<bool>,
    load: LoadHistory,
    cfg: DynamicsConfig,
    opt: OptimizerConfig,
}

impl DynamicProblem {
    pub fn new(problem: &ProblemSpec, cfg: &DynamicsConfig, opt: &OptimizerConfig) -> Result<Self> {
        problem.validate()?;
        cfg.validate()?;
        opt.validate()?;
        let shape = problem
            .shape
            .ok_or_else(|| Error::InvalidArgument("dynamic analysis needs a load shape".into()))?;
        let grid = problem.grid;
        let st = Stiffness::shared(&grid, &opt.material)?;
        let fixed = fixed_dofs(&grid, &problem.bc);
        crate::fea::check_constraints(&grid, &fixed)?;
        let vector = load_vector(&grid, &problem.load.nodal_forces(&grid))?;
        Ok(DynamicProblem {
            st,
            fixed,
            load: LoadHistory {
                vector,
                samples: sample_shape(shape, &cfg.time),
            },
            cfg: *cfg,
            opt: *opt,
        })
    }

    pub fn stiffness(&self) -> &Stiffness {
        &self.st
    }

    pub fn load(&self) -> &LoadHistory {
        &self.load
    }

    /// Transient response of `density`, with stiffness penalized by `penalty`.
    pub fn simulate(&self, density: &DensityField, penalty: f64) -> Result<Response> {
        let k = self.st.assemble(density, penalty)?;
        let m = assemble_mass(&self.st, density, self.cfg.mass, self.cfg.mass_density)?;
        let c = match self.cfg.damping {
            DampingModel::Rayleigh { alpha, beta } => assemble_damping(&m, &k, alpha, beta)?,
            DampingModel::Interpolated { c_min, c0, penalty } => {
                interpolated_damping(&self.st, density, c_min, c0, penalty)?
            }
        };
        let symbolic = match self.opt.solver {
            crate::fea::LinearSolver::Cholesky => Some(self.st.symbolic()?),
            _ => None,
        };
        newmark_integrate(
            &m,
            &c,
            &k,
            &self.fixed,
            &self.load,
            &self.cfg.time,
            &self.cfg.newmark,
            None,
            &self.opt.solver,
            symbolic,
        )
    }

    /// `C_dyn` of `density`.
    pub fn compliance(&self, density: &DensityField, penalty: f64) -> Result<f64> {
        let r = self.simulate(density, penalty)?;
        dynamic_compliance(&self.load, &r.u, self.cfg.time.dt())
    }

    /// `C_dyn` and its approximate sensitivities.
    pub fn evaluate(&self, density: &DensityField) -> Result<(f64, Vec<f64>)> {
        let r = self.simulate(density, self.opt.penalty)?;
        let dt = self.cfg.time.dt();
        let c = dynamic_compliance(&self.load, &r.u, dt)?;
        let dc = dynamic_sensitivities(&self.st, &r.u, density, dt, self.opt.penalty)?;
        Ok((c, dc))
    }
}

/// Dynamic-compliance minimization from a uniform start `rho = vf`.
pub fn optimize_dynamic(
    problem: &ProblemSpec,
    cfg: &DynamicsConfig,
    opt: &OptimizerConfig,
) -> Result<OptimizationResult> {
    let dp = DynamicProblem::new(problem, cfg, opt)?;
    run_oc(&problem.grid, problem.vf, opt, |x| dp.evaluate(x))
}
