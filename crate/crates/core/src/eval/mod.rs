//! Validation metrics for surrogate predictions and the optimizer/inference
//! runtime comparison.

mod bench;
mod metrics;

pub use bench::{bench_speedup, predict_design, SpeedupReport, MIN_BENCH_PROBLEMS};
pub use metrics::{
    evaluate, has_load_path, write_per_sample_csv, Binarization, EvalOptions, EvalOutput, Failure,
    MetricsReport, ModelPredictor, OraclePredictor, Predictor, SampleMetrics, SolidPredictor,
    CE_FAIL_PCT,
};

use crate::density::DensityField;
use crate::dynamic::{DynamicProblem, DynamicsConfig};
use crate::fea::{solve_static, Stiffness};
use crate::problem::{ProblemKind, ProblemSpec};
use crate::simp::OptimizerConfig;
use crate::Result;

/// Static compliance `u^T K u`, or `C_dyn` for dynamic specs, of a fixed design
/// under SIMP interpolation. A design without any material returns
/// `f64::INFINITY`, the failure sentinel.
pub fn compliance_of_design(
    spec: &ProblemSpec,
    design: &DensityField,
    opt: &OptimizerConfig,
    dynamics: &DynamicsConfig,
) -> Result<f64> {
    spec.validate()?;
    design.check_grid(&spec.grid)?;
    design.check_range()?;
    if design.values.iter().all(|&v| v == 0.0) {
        return Ok(f64::INFINITY);
    }
    match spec.kind() {
        ProblemKind::Static => {
            let st = Stiffness::shared(&spec.grid, &opt.material)?;
            let k = st.assemble(design, opt.penalty)?;
            Ok(solve_static(&spec.grid, &spec.bc, &spec.load, &k, &opt.solver)?.compliance)
        }
        ProblemKind::Dynamic => {
            DynamicProblem::new(spec, dynamics, opt)?.compliance(design, opt.penalty)
        }
    }
}
