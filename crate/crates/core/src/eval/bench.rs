use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{model_inputs, GeneratorConfig};
use crate::dynamic::optimize_dynamic;
use crate::problem::{ProblemKind, ProblemSpec};
use crate::simp::{heaviside_binarize, optimize_static};
use crate::train::cond_dim_for;
use crate::vit::{Batch, ViT};
use crate::{DensityField, Error, Result};

/// Fewest problems a speedup measurement accepts.
pub const MIN_BENCH_PROBLEMS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupReport {
    pub kind: ProblemKind,
    pub problems: usize,
    pub optimizer_mean_s: f64,
    /// Field solve, FFT features, forward pass and thresholding.
    pub inference_mean_s: f64,
    pub ratio: f64,
    pub optimizer_s: Vec<f64>,
    pub inference_s: Vec<f64>,
}

/// Soft density the surrogate predicts for `spec`: solid-domain fields, FFT
/// features for dynamic loads, one forward pass.
pub fn predict_design(
    model: &ViT,
    spec: &ProblemSpec,
    cfg: &GeneratorConfig,
) -> Result<DensityField> {
    if spec.grid.nelx != model.cfg.grid || spec.grid.nely != model.cfg.grid {
        return Err(Error::Schema(format!(
            "model predicts {0}x{0} designs, problem is {1}x{2}",
            model.cfg.grid, spec.grid.nelx, spec.grid.nely
        )));
    }
    if cond_dim_for(spec.kind()) != model.cfg.cond_dim {
        return Err(Error::Schema(format!(
            "model takes {} condition values, {} problems provide {}",
            model.cfg.cond_dim,
            spec.kind(),
            cond_dim_for(spec.kind())
        )));
    }
    let (fields, fft) = model_inputs(spec, cfg)?;
    let cond = spec.condition_vector(fft.as_ref().map(|f| f.as_slice()))?;
    let pred = model.predict(&Batch::new(&model.cfg, &[&fields], &[cond])?)?;
    DensityField::from_values(&spec.grid, pred.into_vec())
}

/// Wall-clock the optimizer and the surrogate on the same specs, one problem
/// at a time.
pub fn bench_speedup(
    model: &ViT,
    specs: &[ProblemSpec],
    cfg: &GeneratorConfig,
) -> Result<SpeedupReport> {
    if specs.len() < MIN_BENCH_PROBLEMS {
        return Err(Error::InvalidArgument(format!(
            "speedup needs at least {MIN_BENCH_PROBLEMS} problems, got {}",
            specs.len()
        )));
    }
    let kind = specs[0].kind();
    if specs.iter().any(|s| s.kind() != kind) {
        return Err(Error::InvalidArgument(
            "speedup problems mix static and dynamic specs".into(),
        ));
    }
    if cond_dim_for(kind) != model.cfg.cond_dim {
        return Err(Error::Schema(format!(
            "model takes {} condition values, {kind} problems provide {}",
            model.cfg.cond_dim,
            cond_dim_for(kind)
        )));
    }
    let mut optimizer_s = Vec::with_capacity(specs.len());
    let mut inference_s = Vec::with_capacity(specs.len());
    for spec in specs {
        let t = Instant::now();
        let r = match kind {
            ProblemKind::Static => optimize_static(spec, &cfg.optimizer)?,
            ProblemKind::Dynamic => optimize_dynamic(spec, &cfg.dynamics, &cfg.optimizer)?,
        };
        optimizer_s.push(t.elapsed().as_secs_f64());
        std::hint::black_box(r);

        let t = Instant::now();
        let soft = predict_design(model, spec, cfg)?;
        std::hint::black_box(heaviside_binarize(&soft, 0.5));
        inference_s.push(t.elapsed().as_secs_f64());
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (o, i) = (mean(&optimizer_s), mean(&inference_s));
    Ok(SpeedupReport {
        kind,
        problems: specs.len(),
        optimizer_mean_s: o,
        inference_mean_s: i,
        ratio: o / i,
        optimizer_s,
        inference_s,
    })
}
