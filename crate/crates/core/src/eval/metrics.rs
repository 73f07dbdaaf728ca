use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::compliance_of_design;
use crate::dataset::{Dataset, Sample};
use crate::density::DensityField;
use crate::dynamic::DynamicsConfig;
use crate::losses::connected_components;
use crate::problem::ProblemSpec;
use crate::simp::{heaviside_binarize, OptimizerConfig};
use crate::vit::{Batch, ViT};
use crate::{Error, Result};

/// Compliance error (percent) above which a prediction counts as failed.
pub const CE_FAIL_PCT: f64 = 30.0;

/// Anything producing soft densities for a batch of samples.
pub trait Predictor: Sync {
    fn name(&self) -> &str;
    fn predict(&self, samples: &[&Sample]) -> Result<Vec<DensityField>>;
}

pub struct ModelPredictor<'a> {
    pub model: &'a ViT,
    pub batch: usize,
}

impl Predictor for ModelPredictor<'_> {
    fn name(&self) -> &str {
        "model"
    }

    fn predict(&self, samples: &[&Sample]) -> Result<Vec<DensityField>> {
        let cfg = &self.model.cfg;
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(self.batch.max(1)) {
            let t = self.model.predict(&Batch::from_samples(cfg, chunk)?)?;
            for img in t.data().chunks(cfg.grid * cfg.grid) {
                out.push(DensityField {
                    nelx: cfg.grid,
                    nely: cfg.grid,
                    values: img.to_vec(),
                });
            }
        }
        Ok(out)
    }
}

/// Returns the stored ground-truth topology.
pub struct OraclePredictor;

impl Predictor for OraclePredictor {
    fn name(&self) -> &str {
        "ground_truth"
    }

    fn predict(&self, samples: &[&Sample]) -> Result<Vec<DensityField>> {
        Ok(samples.iter().map(|s| s.topology.clone()).collect())
    }
}

/// Fills the whole domain.
pub struct SolidPredictor;

impl Predictor for SolidPredictor {
    fn name(&self) -> &str {
        "all_solid"
    }

    fn predict(&self, samples: &[&Sample]) -> Result<Vec<DensityField>> {
        Ok(samples
            .iter()
            .map(|s| DensityField::uniform(&s.spec.grid, 1.0))
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binarization {
    Threshold(f64),
    /// The `round(f n)` largest densities become solid.
    VolumeMatched,
}

impl Binarization {
    pub fn apply(&self, soft: &DensityField, vf: f64) -> DensityField {
        match *self {
            Binarization::Threshold(t) => heaviside_binarize(soft, t),
            Binarization::VolumeMatched => {
                let n = soft.values.len();
                let k = ((vf * n as f64).round() as usize).min(n);
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by(|&a, &b| soft.values[b].total_cmp(&soft.values[a]).then(a.cmp(&b)));
                let mut values = vec![0.0; n];
                for &i in &order[..k] {
                    values[i] = 1.0;
                }
                DensityField {
                    nelx: soft.nelx,
                    nely: soft.nely,
                    values,
                }
            }
        }
    }

    fn label(&self) -> String {
        match self {
            Binarization::Threshold(t) => format!("threshold {t}"),
            Binarization::VolumeMatched => "volume matched".into(),
        }
    }
}

/// Why a prediction has no meaningful compliance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Failure {
    Void,
    /// No solid path from the load element to a support.
    NoLoadPath,
    /// The solver rejected the system.
    Singular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub index: usize,
    pub seed: u64,
    pub gt_compliance: f64,
    /// `+inf` for failed designs.
    pub pred_compliance: f64,
    /// `None` exactly when `failure` is set.
    pub ce_pct: Option<f64>,
    pub failure: Option<Failure>,
    pub vf_err_pct: f64,
    /// No material at the load element.
    pub load_discrepancy: bool,
    /// More than one connected component.
    pub floating: bool,
    pub components: usize,
    /// `1 - rho` at the load element of the soft prediction.
    pub load_loss: f64,
}

impl SampleMetrics {
    fn over_limit(&self) -> bool {
        self.ce_pct.is_none_or(|c| c > CE_FAIL_PCT)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub predictor: String,
    pub binarization: String,
    pub samples: usize,
    /// Void, unsupported or unsolvable designs.
    pub failed: usize,
    /// Mean CE over designs that did not fail.
    pub mean_ce_pct: Option<f64>,
    /// Mean CE over designs with CE at most 30%.
    pub mean_ce_filtered_pct: Option<f64>,
    /// Share of samples with CE above 30%, failed designs included.
    pub ce_over_30_pct: f64,
    /// Median CE over designs with CE at most 30%.
    pub median_ce_pct: Option<f64>,
    pub mean_vf_err_pct: f64,
    pub load_discrepancy_pct: f64,
    pub floating_material_pct: f64,
    pub mean_load_loss: f64,
    pub predict_seconds: f64,
    pub score_seconds: f64,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

impl MetricsReport {
    fn aggregate(
        predictor: &str,
        bin: &Binarization,
        rows: &[SampleMetrics],
        predict_s: f64,
        score_s: f64,
    ) -> Self {
        let n = rows.len() as f64;
        let pct = |f: &dyn Fn(&SampleMetrics) -> bool| {
            100.0 * rows.iter().filter(|r| f(r)).count() as f64 / n
        };
        let finite: Vec<f64> = rows.iter().filter_map(|r| r.ce_pct).collect();
        let kept: Vec<f64> = finite
            .iter()
            .copied()
            .filter(|&c| c <= CE_FAIL_PCT)
            .collect();
        MetricsReport {
            predictor: predictor.into(),
            binarization: bin.label(),
            samples: rows.len(),
            failed: rows.iter().filter(|r| r.ce_pct.is_none()).count(),
            mean_ce_pct: mean(&finite),
            mean_ce_filtered_pct: mean(&kept),
            ce_over_30_pct: pct(&|r| r.over_limit()),
            median_ce_pct: median(kept),
            mean_vf_err_pct: rows.iter().map(|r| r.vf_err_pct).sum::<f64>() / n,
            load_discrepancy_pct: pct(&|r| r.load_discrepancy),
            floating_material_pct: pct(&|r| r.floating),
            mean_load_loss: rows.iter().map(|r| r.load_loss).sum::<f64>() / n,
            predict_seconds: predict_s,
            score_seconds: score_s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub threshold: f64,
    pub optimizer: OptimizerConfig,
    pub dynamics: DynamicsConfig,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            threshold: 0.5,
            optimizer: OptimizerConfig::default(),
            dynamics: DynamicsConfig::default(),
        }
    }
}

pub struct EvalOutput {
    /// Thresholded at [`EvalOptions::threshold`].
    pub report: MetricsReport,
    pub vf_matched: MetricsReport,
    pub per_sample: Vec<SampleMetrics>,
    pub per_sample_vf_matched: Vec<SampleMetrics>,
    /// Soft predictions in sample order.
    pub predictions: Vec<DensityField>,
}

/// Whether solid elements, linked through shared nodes, connect the load
/// element to a fixed node. Without such a path the design only stands on
/// the void stiffness floor.
pub fn has_load_path(spec: &ProblemSpec, design: &DensityField) -> bool {
    let grid = &spec.grid;
    let start = spec.load.element(grid);
    if design.values[start] == 0.0 {
        return false;
    }
    let mut fixed = vec![false; grid.n_nodes()];
    for n in spec.bc.fixed_nodes(grid) {
        fixed[n] = true;
    }
    let (w, h) = (grid.nelx as isize, grid.nely as isize);
    let mut seen = vec![false; grid.n_elements()];
    seen[start] = true;
    let mut stack = vec![start];
    while let Some(e) = stack.pop() {
        let (ex, ey) = grid.element_coords(e);
        if grid.element_nodes(ex, ey).iter().any(|&n| fixed[n]) {
            return true;
        }
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (x, y) = (ex as isize + dx, ey as isize + dy);
                if x < 0 || y < 0 || x >= w || y >= h {
                    continue;
                }
                let n = grid.element_index(x as usize, y as usize);
                if !seen[n] && design.values[n] != 0.0 {
                    seen[n] = true;
                    stack.push(n);
                }
            }
        }
    }
    false
}

fn score(
    i: usize,
    s: &Sample,
    soft: &DensityField,
    bin: &Binarization,
    opts: &EvalOptions,
) -> Result<SampleMetrics> {
    soft.check_grid(&s.spec.grid)?;
    let design = bin.apply(soft, s.spec.vf);
    let (pred_compliance, failure) = if design.values.iter().all(|&v| v == 0.0) {
        (f64::INFINITY, Some(Failure::Void))
    } else if !has_load_path(&s.spec, &design) {
        (f64::INFINITY, Some(Failure::NoLoadPath))
    } else {
        match compliance_of_design(&s.spec, &design, &opts.optimizer, &opts.dynamics) {
            Ok(c) => (c, None),
            Err(Error::Singular(_) | Error::NoConvergence { .. }) => {
                (f64::INFINITY, Some(Failure::Singular))
            }
            Err(e) => return Err(e),
        }
    };
    let ce_pct = failure
        .is_none()
        .then(|| (pred_compliance - s.gt_compliance).abs() / s.gt_compliance * 100.0);
    let solid: Vec<bool> = design.values.iter().map(|&v| v > 0.5).collect();
    let (_, components) = connected_components(&solid, design.nelx, design.nely);
    let e = s.spec.load.element(&s.spec.grid);
    Ok(SampleMetrics {
        index: i,
        seed: s.seed,
        gt_compliance: s.gt_compliance,
        pred_compliance,
        ce_pct,
        failure,
        vf_err_pct: (design.mean() - s.spec.vf).abs() * 100.0,
        load_discrepancy: design.values[e] == 0.0,
        floating: components > 1,
        components,
        load_loss: (1.0 - soft.values[e]).clamp(0.0, 1.0),
    })
}

/// Score `predictor` on a validation set. Sets tagged as a training split
/// are rejected.
pub fn evaluate(
    predictor: &dyn Predictor,
    data: &Dataset,
    opts: &EvalOptions,
) -> Result<EvalOutput> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("validation set is empty".into()));
    }
    if data.manifest.split.as_deref() == Some("train") {
        return Err(Error::Schema(
            "refusing to evaluate on a training split".into(),
        ));
    }
    let refs: Vec<&Sample> = data.samples.iter().collect();
    let t = Instant::now();
    let predictions = predictor.predict(&refs)?;
    let predict_s = t.elapsed().as_secs_f64();
    if predictions.len() != refs.len() {
        return Err(Error::Dimension {
            what: "predictions",
            expected: refs.len(),
            actual: predictions.len(),
        });
    }
    let mut out = Vec::with_capacity(2);
    for bin in [
        Binarization::Threshold(opts.threshold),
        Binarization::VolumeMatched,
    ] {
        let t = Instant::now();
        let rows: Vec<SampleMetrics> = (0..refs.len())
            .into_par_iter()
            .map(|i| score(i, refs[i], &predictions[i], &bin, opts))
            .collect::<Result<_>>()?;
        let report = MetricsReport::aggregate(
            predictor.name(),
            &bin,
            &rows,
            predict_s,
            t.elapsed().as_secs_f64(),
        );
        out.push((report, rows));
    }
    let (vf_matched, per_sample_vf_matched) = out.pop().expect("two binarizations");
    let (report, per_sample) = out.pop().expect("two binarizations");
    Ok(EvalOutput {
        report,
        vf_matched,
        per_sample,
        per_sample_vf_matched,
        predictions,
    })
}

pub fn write_per_sample_csv(path: impl AsRef<Path>, rows: &[SampleMetrics]) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(
        f,
        "index,seed,gt_compliance,pred_compliance,ce_pct,vf_err_pct,load_discrepancy,floating,components,load_loss"
    )
    .map_err(io)?;
    for r in rows {
        let ce = match (r.ce_pct, r.failure) {
            (Some(c), _) => c.to_string(),
            (None, Some(f)) => {
                serde_json::to_value(f).map(|v| v.as_str().unwrap_or("failed").to_string())?
            }
            (None, None) => "failed".to_string(),
        };
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{},{}",
            r.index,
            r.seed,
            r.gt_compliance,
            r.pred_compliance,
            ce,
            r.vf_err_pct,
            r.load_discrepancy as u8,
            r.floating as u8,
            r.components,
            r.load_loss
        )
        .map_err(io)?;
    }
    f.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn volume_matched_hits_target() {
        let d = DensityField {
            nelx: 4,
            nely: 1,
            values: vec![0.1, 0.9, 0.4, 0.6],
        };
        let b = Binarization::VolumeMatched.apply(&d, 0.5);
        assert_eq!(b.values, vec![0.0, 1.0, 0.0, 1.0]);
        let b = Binarization::Threshold(0.5).apply(&d, 0.5);
        assert_eq!(b.values, vec![0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(vec![]), None);
    }
}
