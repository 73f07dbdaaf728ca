//! SIMP compliance minimization with an optimality-criteria update.

mod filter;
mod oc;

pub use filter::{filter_sensitivities, SensitivityFilter, FILTER_GAMMA};
pub use oc::{oc_update, VOLUME_TOL};

use serde::{Deserialize, Serialize};

use crate::density::DensityField;
use crate::fea::{fixed_dofs, load_vector, Grid, LinearSolver, Material, Stiffness};
use crate::problem::ProblemSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub penalty: f64,
    pub rmin: f64,
    pub move_limit: f64,
    /// OC damping exponent.
    pub eta: f64,
    /// Relative objective change below which an iteration counts as settled.
    pub tol: f64,
    pub max_iter: usize,
    /// Number of consecutive settled iterations required to stop.
    pub patience: usize,
    pub material: Material,
    pub solver: LinearSolver,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            penalty: 3.0,
            rmin: 1.5,
            move_limit: 0.2,
            eta: 0.5,
            tol: 1e-3,
            max_iter: 300,
            patience: 5,
            material: Material::default(),
            solver: LinearSolver::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        self.material.validate()?;
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.penalty >= 1.0) {
            return bad(format!("penalty must be >= 1, got {}", self.penalty));
        }
        if !(self.rmin >= 1.0) {
            return bad(format!("filter radius must be >= 1, got {}", self.rmin));
        }
        if !(self.move_limit > 0.0 && self.move_limit <= 0.5) {
            return bad(format!(
                "move limit must lie in (0, 0.5], got {}",
                self.move_limit
            ));
        }
        if !(self.eta > 0.0) {
            return bad(format!("OC exponent must be positive, got {}", self.eta));
        }
        if !(self.tol > 0.0) {
            return bad(format!("tolerance must be positive, got {}", self.tol));
        }
        if self.max_iter == 0 || self.patience == 0 {
            return bad("iteration cap and patience must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    /// Continuous design whose objective is the last history entry.
    pub density: DensityField,
    /// Objective value at every iteration.
    pub history: Vec<f64>,
    pub iterations: usize,
    /// Whether the stopping rule fired before the iteration cap.
    pub converged: bool,
}

/// `dC/drho_e = -p rho_e^(p-1) (E0 - Emin) u_e^T K_e^unit u_e`.
pub fn sensitivities(
    stiffness: &Stiffness,
    density: &DensityField,
    u: &[f64],
    penalty: f64,
) -> Result<Vec<f64>> {
    density.check_grid(stiffness.grid())?;
    if u.len() != stiffness.grid().n_dofs() {
        return Err(Error::Dimension {
            what: "displacement field",
            expected: stiffness.grid().n_dofs(),
            actual: u.len(),
        });
    }
    let m = stiffness.material();
    let energies = stiffness.element_energies(u);
    Ok(density
        .values
        .iter()
        .zip(&energies)
        .map(|(&r, &w)| -penalty * r.powf(penalty - 1.0) * (m.e0 - m.emin) * w)
        .collect())
}

/// Whether the relative changes seen so far satisfy the stopping rule: the
/// last `min(k, patience)` changes must all be below `tol`.
pub(crate) fn settled(changes: &[f64], tol: f64, patience: usize) -> bool {
    let k = changes.len().min(patience);
    k > 0 && changes[changes.len() - k..].iter().all(|&c| c < tol)
}

/// Shared OC loop. `evaluate` returns the objective and raw sensitivities of a design.
pub(crate) fn run_oc(
    grid: &Grid,
    vf: f64,
    cfg: &OptimizerConfig,
    mut evaluate: impl FnMut(&DensityField) -> Result<(f64, Vec<f64>)>,
) -> Result<OptimizationResult> {
    cfg.validate()?;
    let filter = SensitivityFilter::new(grid, cfg.rmin)?;
    let mut x = DensityField::uniform(grid, vf);
    let mut history: Vec<f64> = Vec::new();
    let mut changes = Vec::new();
    for it in 1..=cfg.max_iter {
        let (c, dc) = evaluate(&x)?;
        if !c.is_finite() {
            return Err(Error::NonFinite(format!("objective at iteration {it}")));
        }
        let change = match history.last() {
            None => f64::MAX,
            Some(&prev) => ((c - prev) / prev).abs(),
        };
        history.push(c);
        changes.push(change);
        log::trace!("iteration {it}: objective {c:.6e}, change {change:.3e}");
        if settled(&changes, cfg.tol, cfg.patience) {
            return Ok(OptimizationResult {
                density: x,
                history,
                iterations: it,
                converged: true,
            });
        }
        if it == cfg.max_iter {
            break;
        }
        debug_assert!(dc.iter().all(|&s| s <= 0.0), "positive sensitivity");
        let filtered = filter.apply(&x.values, &dc)?;
        x.values = oc_update(&x.values, &filtered, vf, cfg.move_limit, cfg.eta)?;
    }
    Ok(OptimizationResult {
        density: x,
        history,
        iterations: cfg.max_iter,
        converged: false,
    })
}

/// Static compliance minimization from a uniform start `rho = vf`.
pub fn optimize_static(problem: &ProblemSpec, cfg: &OptimizerConfig) -> Result<OptimizationResult> {
    problem.validate()?;
    let grid = problem.grid;
    let st = Stiffness::shared(&grid, &cfg.material)?;
    let fixed = fixed_dofs(&grid, &problem.bc);
    let f = load_vector(&grid, &problem.load.nodal_forces(&grid))?;
    run_oc(&grid, problem.vf, cfg, |x| {
        let k = st.assemble(x, cfg.penalty)?;
        let sol = st.solve(&k, &fixed, &f, &cfg.solver)?;
        let dc = sensitivities(&st, x, &sol.u, cfg.penalty)?;
        Ok((sol.compliance, dc))
    })
}

/// `1` where `rho >= threshold`, else `0`.
pub fn heaviside_binarize(density: &DensityField, threshold: f64) -> DensityField {
    DensityField {
        nelx: density.nelx,
        nely: density.nely,
        values: density
            .values
            .iter()
            .map(|&r| if r >= threshold { 1.0 } else { 0.0 })
            .collect(),
    }
}

/// Volume shift beyond which the default threshold is rejected.
pub const BINARIZE_SHIFT: f64 = 0.02;
/// Volume error targeted by the fallback threshold.
pub const BINARIZE_TARGET: f64 = 0.01;

/// Threshold at `threshold`; if that moves the volume away from `vf` by more
/// than [`BINARIZE_SHIFT`], pick the threshold whose binary volume is closest
/// to `vf`. Returns the binary design and the threshold used.
pub fn binarize_to_volume(density: &DensityField, vf: f64, threshold: f64) -> (DensityField, f64) {
    let first = heaviside_binarize(density, threshold);
    if (first.mean() - vf).abs() <= BINARIZE_SHIFT {
        return (first, threshold);
    }
    let n = density.values.len();
    let mut sorted = density.values.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    // Candidate thresholds are the distinct density values; the binary volume
    // at `sorted[k]` counts every entry >= it.
    let count_at = |t: f64| density.values.iter().filter(|&&r| r >= t).count();
    let k = ((vf * n as f64).round() as usize).clamp(1, n);
    let mut best = (f64::INFINITY, threshold);
    let t0 = sorted[k - 1];
    let above = sorted[..k - 1].iter().rev().find(|&&v| v > t0).copied();
    for t in std::iter::once(t0).chain(above) {
        let err = (count_at(t) as f64 / n as f64 - vf).abs();
        if err < best.0 {
            best = (err, t);
        }
    }
    if best.0 > BINARIZE_TARGET {
        log::debug!("volume-matched threshold misses target by {:.4}", best.0);
    }
    (heaviside_binarize(density, best.1), best.1)
}
