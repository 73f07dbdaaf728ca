//! Problem sampling, ground-truth generation, augmentation and the on-disk
//! dataset container.

mod augment;
mod fft;
mod image;
mod io;
mod sampling;

pub use augment::{augment, transforms_for, Transform};
pub use fft::{fft_load_features, FFT_SAMPLES};
pub use image::{read_pgm, write_density_png, write_pgm, write_triptych};
pub use io::{read_dataset, write_dataset, FORMAT_VERSION, MAGIC};
pub use sampling::{derive_seed, sample_problem, SamplerConfig};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::DensityField;
use crate::dynamic::{optimize_dynamic, DynamicsConfig};
use crate::eval::compliance_of_design;
use crate::fea::{problem_fields_with, FieldImage, Stiffness};
use crate::problem::{ProblemKind, ProblemSpec, N_FFT};
use crate::simp::{binarize_to_volume, optimize_static, OptimizerConfig, BINARIZE_SHIFT};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub sampler: SamplerConfig,
    pub optimizer: OptimizerConfig,
    pub dynamics: DynamicsConfig,
    /// Binarization threshold for the optimized design.
    pub threshold: f64,
    pub fft_samples: usize,
    /// Redraws allowed per sample index before giving up.
    pub max_attempts: u32,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            sampler: SamplerConfig::default(),
            optimizer: OptimizerConfig::default(),
            dynamics: DynamicsConfig::default(),
            threshold: 0.5,
            fft_samples: FFT_SAMPLES,
            max_attempts: 20,
        }
    }
}

/// One ground-truth example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub seed: u64,
    pub spec: ProblemSpec,
    /// Normalized input fields, rounded through `f32`.
    pub fields: FieldImage,
    /// Binary optimized design.
    pub topology: DensityField,
    /// Static or dynamic compliance of `topology`.
    pub gt_compliance: f64,
    pub fft: Option<[f64; N_FFT]>,
    /// Threshold that produced `topology`.
    pub threshold: f64,
    /// Optimizer iterations.
    pub iterations: u32,
}

impl Sample {
    pub fn kind(&self) -> ProblemKind {
        self.spec.kind()
    }

    /// Model condition vector (22 static scalars, plus FFT amplitudes when dynamic).
    pub fn condition(&self) -> Vec<f64> {
        let mut c = self.spec.static_condition().to_vec();
        if let Some(f) = &self.fft {
            c.extend_from_slice(f);
        }
        c
    }
}

fn round_f32(v: &mut [f64]) {
    for x in v {
        *x = *x as f32 as f64;
    }
}

/// Surrogate inputs for `spec`: normalized fields rounded through `f32`, as
/// stored in datasets, and the FFT load features of dynamic problems.
pub fn model_inputs(
    spec: &ProblemSpec,
    cfg: &GeneratorConfig,
) -> Result<(FieldImage, Option<[f64; N_FFT]>)> {
    spec.validate()?;
    let st = Stiffness::shared(&spec.grid, &cfg.optimizer.material)?;
    let mut fields = problem_fields_with(&st, spec, &cfg.optimizer.solver)?;
    round_f32(&mut fields.sed);
    round_f32(&mut fields.vm);
    let fft = match spec.shape {
        Some(s) => Some(fft_load_features(s, cfg.fft_samples)?),
        None => None,
    };
    Ok((fields, fft))
}

/// Fields, optimized topology and compliance for `spec`.
///
/// Runs that hit the iteration cap fail with [`Error::IterationCap`]; designs
/// whose binary volume misses `vf` by more than 2% fail with
/// [`Error::InvalidArgument`].
pub fn generate_sample(spec: &ProblemSpec, seed: u64, cfg: &GeneratorConfig) -> Result<Sample> {
    let (fields, fft) = model_inputs(spec, cfg)?;
    let result = match spec.kind() {
        ProblemKind::Static => optimize_static(spec, &cfg.optimizer)?,
        ProblemKind::Dynamic => optimize_dynamic(spec, &cfg.dynamics, &cfg.optimizer)?,
    };
    if !result.converged {
        return Err(Error::IterationCap(result.iterations));
    }
    let (topology, threshold) = binarize_to_volume(&result.density, spec.vf, cfg.threshold);
    let vf_err = (topology.mean() - spec.vf).abs();
    if vf_err > BINARIZE_SHIFT {
        return Err(Error::InvalidArgument(format!(
            "binary volume {:.4} misses target {:.4}",
            topology.mean(),
            spec.vf
        )));
    }
    let gt_compliance = compliance_of_design(spec, &topology, &cfg.optimizer, &cfg.dynamics)?;
    Ok(Sample {
        seed,
        spec: *spec,
        fields,
        topology,
        gt_compliance,
        fft,
        threshold,
        iterations: result.iterations as u32,
    })
}

fn excluded(e: &Error) -> bool {
    matches!(
        e,
        Error::IterationCap(_) | Error::InvalidArgument(_) | Error::Singular(_)
    )
}

/// Sample index `index` of a dataset rooted at `base_seed`, redrawing the
/// problem on excluded runs.
pub fn generate_indexed(
    kind: ProblemKind,
    base_seed: u64,
    index: u64,
    cfg: &GeneratorConfig,
) -> Result<Sample> {
    let mut last = None;
    for attempt in 0..cfg.max_attempts.max(1) as u64 {
        let seed = derive_seed(base_seed, index, attempt);
        let spec = sample_problem(seed, kind, &cfg.sampler)?;
        match generate_sample(&spec, seed, cfg) {
            Ok(s) => return Ok(s),
            Err(e) if excluded(&e) => {
                log::info!("sample {index} attempt {attempt} excluded: {e}");
                last = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or(Error::IterationCap(0)))
}

/// Container header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub kind: ProblemKind,
    pub grid: crate::fea::Grid,
    pub count: usize,
    #[serde(default)]
    pub base_seed: Option<u64>,
    #[serde(default)]
    pub generator: Option<GeneratorConfig>,
    /// Per-record seeds, in record order.
    pub seeds: Vec<u64>,
    /// Free-form record layout description.
    pub layout: String,
    pub endianness: String,
    pub load_rule: String,
    pub fft_feature: String,
    #[serde(default)]
    pub split: Option<String>,
}

impl DatasetManifest {
    pub fn new(kind: ProblemKind, grid: crate::fea::Grid) -> Self {
        DatasetManifest {
            format_version: FORMAT_VERSION,
            kind,
            grid,
            count: 0,
            base_seed: None,
            generator: None,
            seeds: Vec::new(),
            layout: io::LAYOUT.into(),
            endianness: "little".into(),
            load_rule: "corner elements load the domain corner node; other boundary elements split the load evenly over their two boundary-edge nodes".into(),
            fft_feature: format!("magnitude |X_k|/n, k=0..{}, n={} samples on [0,1)", N_FFT - 1, FFT_SAMPLES),
            split: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(kind: ProblemKind, grid: crate::fea::Grid, samples: Vec<Sample>) -> Result<Self> {
        let mut manifest = DatasetManifest::new(kind, grid);
        for s in &samples {
            if s.kind() != kind || s.spec.grid != grid {
                return Err(Error::Schema(format!(
                    "sample {} ({} on {}x{}) does not match a {kind} {}x{} dataset",
                    s.seed,
                    s.kind(),
                    s.spec.grid.nelx,
                    s.spec.grid.nely,
                    grid.nelx,
                    grid.nely
                )));
            }
        }
        manifest.count = samples.len();
        manifest.seeds = samples.iter().map(|s| s.seed).collect();
        Ok(Dataset { manifest, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn kind(&self) -> ProblemKind {
        self.manifest.kind
    }

    pub fn grid(&self) -> crate::fea::Grid {
        self.manifest.grid
    }

    /// First `len - n_val` samples for training, the rest for validation.
    pub fn split(&self, n_val: usize) -> Result<(Dataset, Dataset)> {
        if n_val > self.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot hold out {n_val} of {} samples",
                self.len()
            )));
        }
        let cut = self.len() - n_val;
        let mut train = Dataset::new(self.kind(), self.grid(), self.samples[..cut].to_vec())?;
        let mut val = Dataset::new(self.kind(), self.grid(), self.samples[cut..].to_vec())?;
        for (d, name) in [(&mut train, "train"), (&mut val, "validation")] {
            d.manifest.base_seed = self.manifest.base_seed;
            d.manifest.generator = self.manifest.generator;
            d.manifest.split = Some(name.into());
        }
        Ok((train, val))
    }
}

/// Generate `n` samples in parallel on the current rayon pool; output order
/// follows the sample index regardless of scheduling.
pub fn generate_dataset(
    kind: ProblemKind,
    n: usize,
    base_seed: u64,
    cfg: &GeneratorConfig,
) -> Result<Dataset> {
    let samples: Vec<Sample> = (0..n as u64)
        .into_par_iter()
        .map(|i| generate_indexed(kind, base_seed, i, cfg))
        .collect::<Result<_>>()?;
    let mut ds = Dataset::new(kind, cfg.sampler.grid, samples)?;
    ds.manifest.base_seed = Some(base_seed);
    ds.manifest.generator = Some(*cfg);
    Ok(ds)
}
