//! Command-line front end: dataset generation, optimization, training,
//! fine-tuning, inference, evaluation and the runtime benchmark.
//!
//! Every run writes a JSON manifest (merged config, seed, build id,
//! timestamps, outputs) next to its primary output, on success and failure.
//! Exit codes: 1 usage, 2 I/O, 3 schema or format, 4 anything else.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use topoformer::dataset::{
    derive_seed, generate_dataset, model_inputs, read_dataset, sample_problem, write_dataset,
    write_density_png, write_pgm, write_triptych, GeneratorConfig,
};
use topoformer::dynamic::optimize_dynamic;
use topoformer::eval::{
    bench_speedup, evaluate, predict_design, write_per_sample_csv, EvalOptions, ModelPredictor,
    OraclePredictor, Predictor,
};
use topoformer::simp::{binarize_to_volume, heaviside_binarize, optimize_static};
use topoformer::train::{
    cond_dim_for, finetune, load_train_config, train, FinetuneGroups, TrainConfig, TrainOutputs,
};
use topoformer::vit::{ViT, ViTConfig};
use topoformer::{DensityField, Error, Grid, ProblemKind, ProblemSpec};

#[derive(Parser)]
#[command(
    name = "topoformer",
    version,
    about = "Topology optimization datasets and a transformer surrogate"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Manifest path; defaults to a `.run.json` next to the primary output.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Log filter (error, warn, info, debug, trace); RUST_LOG takes precedence.
    #[arg(long, global = true, default_value = "info")]
    log: String,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a seeded dataset of optimized topologies.
    Gen(GenArgs),
    /// Split a dataset into training and validation files.
    Split(SplitArgs),
    /// Solve the solid domain of one problem and export its input fields.
    Fields(FieldsArgs),
    /// Run the optimizer on one problem.
    Optimize(OptimizeArgs),
    /// Train a surrogate from scratch.
    Train(TrainArgs),
    /// Transfer a static surrogate to dynamic data.
    Finetune(FinetuneArgs),
    /// Predict the topology of one problem.
    Infer(InferArgs),
    /// Score a surrogate, or the stored ground truth, on a validation set.
    Eval(EvalArgs),
    /// Time the optimizer against the surrogate on sampled problems.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenerationFlags {
    /// Generator config JSON (sampler, optimizer, dynamics); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Square grid side, overriding the config.
    #[arg(long)]
    grid: Option<usize>,
}

impl GenerationFlags {
    fn resolve(&self) -> topoformer::Result<GeneratorConfig> {
        let mut cfg: GeneratorConfig = match &self.config {
            Some(p) => read_json(p)?,
            None => GeneratorConfig::default(),
        };
        if let Some(n) = self.grid {
            cfg.sampler.grid = Grid::square(n)?;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct GenArgs {
    /// Problem kind: static or dynamic.
    #[arg(long)]
    kind: ProblemKind,
    /// Number of samples.
    #[arg(long)]
    n: usize,
    /// Base seed; falls back to TOPOFORMER_SEED, then 0.
    #[arg(long, env = "TOPOFORMER_SEED")]
    seed: Option<u64>,
    /// Dataset file to write.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; defaults to the available cores. Output does not depend on it.
    #[arg(long)]
    jobs: Option<usize>,
    /// Also write each topology as a PGM into this directory.
    #[arg(long)]
    images: Option<PathBuf>,
    #[command(flatten)]
    gen: GenerationFlags,
}

#[derive(Args)]
struct SplitArgs {
    /// Dataset file to split.
    #[arg(long)]
    data: PathBuf,
    /// Number of trailing samples held out for validation.
    #[arg(long)]
    val: usize,
    /// Training file to write.
    #[arg(long)]
    train_out: PathBuf,
    /// Validation file to write.
    #[arg(long)]
    val_out: PathBuf,
}

#[derive(Args)]
struct FieldsArgs {
    /// Problem spec JSON.
    #[arg(long)]
    spec: PathBuf,
    /// Directory for `sed` and `vm` images and `fields.json`.
    #[arg(long)]
    out: PathBuf,
    /// Write PNG instead of PGM.
    #[arg(long)]
    png: bool,
    #[command(flatten)]
    gen: GenerationFlags,
}

#[derive(Args)]
struct OptimizeArgs {
    /// Problem spec JSON; dynamic when it carries a load shape.
    #[arg(long)]
    spec: PathBuf,
    /// Directory for the designs and `result.json`.
    #[arg(long)]
    out: PathBuf,
    /// Write PNG instead of PGM.
    #[arg(long)]
    png: bool,
    #[command(flatten)]
    gen: GenerationFlags,
}

#[derive(Args)]
struct TrainFlags {
    /// Training config JSON; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Optimizer steps.
    #[arg(long)]
    iterations: Option<usize>,
    /// Samples per step.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Peak learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Linear warmup steps before cosine decay.
    #[arg(long)]
    warmup: Option<usize>,
    /// Mask ratio override.
    #[arg(long)]
    mask_ratio: Option<f64>,
    /// Training seed; falls back to TOPOFORMER_SEED, then the config value.
    #[arg(long, env = "TOPOFORMER_SEED")]
    seed: Option<u64>,
    /// Disable the random dihedral augmentation.
    #[arg(long)]
    no_augment: bool,
    /// Steps between intermediate checkpoints; 0 keeps only the final one.
    #[arg(long)]
    checkpoint_every: Option<usize>,
}

impl TrainFlags {
    fn resolve(&self, data: &Path) -> topoformer::Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(p) => load_train_config(p)?,
            None => TrainConfig::default(),
        };
        cfg.dataset = Some(data.to_path_buf());
        if let Some(v) = self.iterations {
            cfg.iterations = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.lr {
            cfg.lr = v;
        }
        if let Some(v) = self.warmup {
            cfg.warmup = v;
        }
        if let Some(v) = self.mask_ratio {
            cfg.mask_ratio = Some(v);
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if self.no_augment {
            cfg.augment = false;
        }
        if let Some(v) = self.checkpoint_every {
            cfg.checkpoint_every = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset file.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for `loss.csv` and checkpoints.
    #[arg(long)]
    out: PathBuf,
    /// Model preset: desk, tiny, small, base, large or huge.
    #[arg(long, default_value = "desk", conflicts_with = "model_config")]
    model: String,
    /// Model config JSON instead of a preset.
    #[arg(long)]
    model_config: Option<PathBuf>,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args)]
struct FinetuneArgs {
    /// Static checkpoint to transfer.
    #[arg(long)]
    base: PathBuf,
    /// Comma-separated groups: class_projection, decoder_projection, decoder_layers.
    #[arg(long)]
    groups: String,
    /// Dynamic dataset file.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for `loss.csv` and checkpoints.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args)]
struct InferArgs {
    /// Checkpoint to predict with.
    #[arg(long)]
    ckpt: PathBuf,
    /// Problem spec JSON.
    #[arg(long)]
    spec: PathBuf,
    /// Soft density image; a JSON summary is written beside it.
    #[arg(long)]
    out_image: PathBuf,
    /// Write PNG instead of PGM.
    #[arg(long)]
    png: bool,
    /// Binarization threshold for the summary.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[command(flatten)]
    gen: GenerationFlags,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint to score.
    #[arg(long, required_unless_present = "oracle", conflicts_with = "oracle")]
    ckpt: Option<PathBuf>,
    /// Score the stored ground truth instead of a model.
    #[arg(long)]
    oracle: bool,
    /// Validation dataset file.
    #[arg(long)]
    data: PathBuf,
    /// Report JSON to write.
    #[arg(long)]
    report: PathBuf,
    /// Per-sample CSV to write.
    #[arg(long)]
    per_sample: Option<PathBuf>,
    /// Write ground truth / prediction / difference images for the first N samples.
    #[arg(long)]
    triptychs: Option<usize>,
    /// Binarization threshold for predictions.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Forward-pass batch size.
    #[arg(long, default_value_t = 32)]
    batch: usize,
    /// Worker threads for scoring; defaults to the available cores.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct BenchArgs {
    /// Static checkpoint; dynamic problems use its widened copy.
    #[arg(long)]
    ckpt: PathBuf,
    /// Number of sampled problems (at least 5).
    #[arg(long, default_value_t = 5)]
    n: usize,
    /// Problem kinds to time.
    #[arg(long, value_delimiter = ',', default_value = "static,dynamic")]
    kinds: Vec<ProblemKind>,
    /// Seed for the sampled problems; falls back to TOPOFORMER_SEED, then 0.
    #[arg(long, env = "TOPOFORMER_SEED")]
    seed: Option<u64>,
    /// Report JSON to write.
    #[arg(long)]
    report: PathBuf,
    #[command(flatten)]
    gen: GenerationFlags,
}

type Outcome = topoformer::Result<Value>;

#[derive(Serialize)]
struct RunManifest<'a> {
    subcommand: &'a str,
    args: Vec<String>,
    config: Value,
    seed: Option<u64>,
    build: String,
    started_unix: f64,
    finished_unix: f64,
    status: &'a str,
    error: Option<String>,
    outputs: Vec<PathBuf>,
    result: Value,
}

/// Collects what a run produced, for the manifest.
#[derive(Default)]
struct Run {
    config: Value,
    seed: Option<u64>,
    outputs: Vec<PathBuf>,
}

impl Run {
    fn output(&mut self, p: impl Into<PathBuf>) {
        self.outputs.push(p.into());
    }
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn build_id() -> String {
    format!(
        "{} ({})",
        env!("CARGO_PKG_VERSION"),
        option_env!("TOPOFORMER_GIT_REV").unwrap_or("unknown revision")
    )
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> topoformer::Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_json(path: &Path, v: &impl Serialize) -> topoformer::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let text = serde_json::to_string_pretty(v)?;
    std::fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create_dir(dir: &Path) -> topoformer::Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => 2,
        e if e.is_schema() => 3,
        _ => 4,
    }
}

fn set_jobs(jobs: Option<usize>) -> topoformer::Result<()> {
    if let Some(n) = jobs {
        if n == 0 {
            return Err(Error::InvalidArgument("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn write_image(path: &Path, density: &DensityField, png: bool) -> topoformer::Result<()> {
    if png {
        write_density_png(path, density)
    } else {
        write_pgm(path, density.nelx, density.nely, &density.values)
    }
}

fn image_ext(png: bool) -> &'static str {
    if png {
        "png"
    } else {
        "pgm"
    }
}

fn field_density(grid: &Grid, values: &[f64]) -> topoformer::Result<DensityField> {
    DensityField::from_values(grid, values.to_vec())
}

fn cmd_gen(a: &GenArgs, run: &mut Run) -> Outcome {
    let cfg = a.gen.resolve()?;
    let seed = a.seed.unwrap_or(0);
    run.config = json!({ "kind": a.kind, "n": a.n, "generator": cfg });
    run.seed = Some(seed);
    set_jobs(a.jobs)?;
    let t = Instant::now();
    let ds = generate_dataset(a.kind, a.n, seed, &cfg)?;
    write_dataset(&a.out, &ds)?;
    run.output(&a.out);
    if let Some(dir) = &a.images {
        create_dir(dir)?;
        for (i, s) in ds.samples.iter().enumerate() {
            let p = dir.join(format!("{i:05}.pgm"));
            write_image(&p, &s.topology, false)?;
        }
        run.output(dir);
    }
    let secs = t.elapsed().as_secs_f64();
    eprintln!(
        "wrote {} {} samples to {} in {secs:.1}s",
        ds.len(),
        a.kind,
        a.out.display()
    );
    Ok(json!({ "samples": ds.len(), "seconds": secs }))
}

fn cmd_split(a: &SplitArgs, run: &mut Run) -> Outcome {
    let data = read_dataset(&a.data)?;
    run.config = json!({ "data": a.data, "val": a.val });
    let (train, val) = data.split(a.val)?;
    write_dataset(&a.train_out, &train)?;
    run.output(&a.train_out);
    write_dataset(&a.val_out, &val)?;
    run.output(&a.val_out);
    Ok(json!({ "train": train.len(), "validation": val.len() }))
}

fn cmd_fields(a: &FieldsArgs, run: &mut Run) -> Outcome {
    let cfg = a.gen.resolve()?;
    let spec: ProblemSpec = read_json(&a.spec)?;
    run.config = json!({ "spec": spec, "generator": cfg });
    let (fields, fft) = model_inputs(&spec, &cfg)?;
    create_dir(&a.out)?;
    let ext = image_ext(a.png);
    for (name, ch) in [("sed", &fields.sed), ("vm", &fields.vm)] {
        let p = a.out.join(format!("{name}.{ext}"));
        // Fields are drawn dark where large.
        write_image(&p, &field_density(&spec.grid, ch)?, a.png)?;
        run.output(p);
    }
    let summary = json!({
        "condition": spec.condition_vector(fft.as_ref().map(|f| f.as_slice()))?,
        "fft": fft,
        "fields": fields,
    });
    let p = a.out.join("fields.json");
    write_json(&p, &summary)?;
    run.output(p);
    Ok(json!({ "fft": fft }))
}

fn cmd_optimize(a: &OptimizeArgs, run: &mut Run) -> Outcome {
    let cfg = a.gen.resolve()?;
    let spec: ProblemSpec = read_json(&a.spec)?;
    run.config = json!({ "spec": spec, "generator": cfg });
    let t = Instant::now();
    let r = match spec.kind() {
        ProblemKind::Static => optimize_static(&spec, &cfg.optimizer)?,
        ProblemKind::Dynamic => optimize_dynamic(&spec, &cfg.dynamics, &cfg.optimizer)?,
    };
    let secs = t.elapsed().as_secs_f64();
    let (binary, threshold) = binarize_to_volume(&r.density, spec.vf, cfg.threshold);
    let compliance =
        topoformer::eval::compliance_of_design(&spec, &binary, &cfg.optimizer, &cfg.dynamics)?;
    create_dir(&a.out)?;
    let ext = image_ext(a.png);
    for (name, d) in [("density", &r.density), ("topology", &binary)] {
        let p = a.out.join(format!("{name}.{ext}"));
        write_image(&p, d, a.png)?;
        run.output(p);
    }
    let result = json!({
        "iterations": r.iterations,
        "converged": r.converged,
        "objective_history": r.history,
        "threshold": threshold,
        "binary_volume": binary.mean(),
        "binary_compliance": compliance,
        "seconds": secs,
    });
    let p = a.out.join("result.json");
    write_json(&p, &result)?;
    run.output(p);
    Ok(
        json!({ "iterations": r.iterations, "converged": r.converged, "binary_compliance": compliance }),
    )
}

fn finish_training(out: &TrainOutputs, run: &mut Run, log_len: usize, secs: f64) -> Outcome {
    run.output(out.log_path());
    run.output(out.checkpoint_path(None));
    eprintln!(
        "trained {log_len} steps in {secs:.0}s; final checkpoint {}",
        out.checkpoint_path(None).display()
    );
    Ok(json!({ "steps": log_len, "seconds": secs, "checkpoint": out.checkpoint_path(None) }))
}

fn cmd_train(a: &TrainArgs, run: &mut Run) -> Outcome {
    let cfg = a.train.resolve(&a.data)?;
    let data = read_dataset(&a.data)?;
    let mut model_cfg = match &a.model_config {
        Some(p) => read_json(p)?,
        None => ViTConfig::preset(&a.model)?,
    };
    model_cfg.cond_dim = cond_dim_for(data.kind());
    model_cfg.grid = data.grid().nelx;
    run.config = json!({ "train": cfg, "model": model_cfg });
    run.seed = Some(cfg.seed);
    let out = TrainOutputs { dir: a.out.clone() };
    let t = Instant::now();
    let r = train(&cfg, ViT::init(&model_cfg, cfg.seed)?, &data, Some(&out))?;
    finish_training(&out, run, r.log.len(), t.elapsed().as_secs_f64())
}

fn cmd_finetune(a: &FinetuneArgs, run: &mut Run) -> Outcome {
    let cfg = a.train.resolve(&a.data)?;
    let groups = FinetuneGroups::parse(&a.groups)?;
    let (base, _) = ViT::load(&a.base)?;
    let data = read_dataset(&a.data)?;
    run.config = json!({
        "train": cfg,
        "base": a.base,
        "groups": groups.iter().map(|g| g.to_string()).collect::<Vec<_>>(),
        "model": base.cfg,
    });
    run.seed = Some(cfg.seed);
    let out = TrainOutputs { dir: a.out.clone() };
    let t = Instant::now();
    let r = finetune(&base, &groups, &data, &cfg, Some(&out))?;
    finish_training(&out, run, r.log.len(), t.elapsed().as_secs_f64())
}

fn cmd_infer(a: &InferArgs, run: &mut Run) -> Outcome {
    let cfg = a.gen.resolve()?;
    let spec: ProblemSpec = read_json(&a.spec)?;
    let (model, _) = ViT::load(&a.ckpt)?;
    run.config =
        json!({ "spec": spec, "generator": cfg, "ckpt": a.ckpt, "threshold": a.threshold });
    let t = Instant::now();
    let soft = predict_design(&model, &spec, &cfg)?;
    let secs = t.elapsed().as_secs_f64();
    let binary = heaviside_binarize(&soft, a.threshold);
    if let Some(dir) = a.out_image.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_image(&a.out_image, &soft, a.png)?;
    run.output(&a.out_image);
    let summary = json!({
        "predicted_vf": soft.mean(),
        "binary_vf": binary.mean(),
        "target_vf": spec.vf,
        "threshold": a.threshold,
        "load_element_density": soft.values[spec.load.element(&spec.grid)],
        "seconds": secs,
    });
    let p = a.out_image.with_extension("json");
    write_json(&p, &summary)?;
    run.output(p);
    Ok(summary)
}

fn cmd_eval(a: &EvalArgs, run: &mut Run) -> Outcome {
    set_jobs(a.jobs)?;
    let data = read_dataset(&a.data)?;
    let opts = EvalOptions {
        threshold: a.threshold,
        ..EvalOptions::default()
    };
    let opts = match data.manifest.generator {
        Some(g) => EvalOptions {
            optimizer: g.optimizer,
            dynamics: g.dynamics,
            ..opts
        },
        None => opts,
    };
    run.config = json!({ "data": a.data, "ckpt": a.ckpt, "oracle": a.oracle, "options": opts, "batch": a.batch });
    let model = match &a.ckpt {
        Some(p) => Some(ViT::load(p)?.0),
        None => None,
    };
    let predictor: Box<dyn Predictor + '_> = match &model {
        Some(m) => Box::new(ModelPredictor {
            model: m,
            batch: a.batch,
        }),
        None => Box::new(OraclePredictor),
    };
    let ev = evaluate(predictor.as_ref(), &data, &opts)?;
    let report = json!({ "threshold": ev.report, "volume_matched": ev.vf_matched });
    write_json(&a.report, &report)?;
    run.output(&a.report);
    if let Some(p) = &a.per_sample {
        write_per_sample_csv(p, &ev.per_sample)?;
        run.output(p);
    }
    if let Some(k) = a.triptychs {
        let dir = with_suffix(&a.report, ".triptychs");
        create_dir(&dir)?;
        for (i, (s, soft)) in data.samples.iter().zip(&ev.predictions).take(k).enumerate() {
            let p = dir.join(format!("{i:05}.pgm"));
            write_triptych(&p, &s.topology, &heaviside_binarize(soft, a.threshold))?;
        }
        run.output(dir);
    }
    let r = &ev.report;
    eprintln!(
        "{} samples: mean CE {} ({} failed), VF error {:.2}%, floating {:.1}%",
        r.samples,
        r.mean_ce_pct.map_or("n/a".into(), |c| format!("{c:.2}%")),
        r.failed,
        r.mean_vf_err_pct,
        r.floating_material_pct
    );
    Ok(report)
}

fn cmd_bench(a: &BenchArgs, run: &mut Run) -> Outcome {
    let cfg = a.gen.resolve()?;
    let seed = a.seed.unwrap_or(0);
    let (model, _) = ViT::load(&a.ckpt)?;
    run.config = json!({ "ckpt": a.ckpt, "n": a.n, "kinds": a.kinds, "generator": cfg });
    run.seed = Some(seed);
    let statics = (0..a.n as u64)
        .map(|i| sample_problem(derive_seed(seed, i, 0), ProblemKind::Static, &cfg.sampler))
        .collect::<topoformer::Result<Vec<_>>>()?;
    let mut reports = Vec::new();
    for &kind in &a.kinds {
        let (m, specs) = match kind {
            ProblemKind::Static => (model.clone(), statics.clone()),
            ProblemKind::Dynamic => {
                let shapes = [topoformer::LoadShape::Sine, topoformer::LoadShape::Impulse];
                let specs = statics
                    .iter()
                    .enumerate()
                    .map(|(i, s)| ProblemSpec {
                        shape: Some(shapes[i % 2]),
                        ..*s
                    })
                    .collect();
                (topoformer::train::widen_for_dynamic(&model)?, specs)
            }
        };
        let r = bench_speedup(&m, &specs, &cfg)?;
        eprintln!(
            "{kind}: optimizer {:.3}s, surrogate {:.4}s, ratio {:.1}",
            r.optimizer_mean_s, r.inference_mean_s, r.ratio
        );
        reports.push(r);
    }
    let report = serde_json::to_value(&reports)?;
    write_json(&a.report, &report)?;
    run.output(&a.report);
    Ok(report)
}

impl Cmd {
    fn name(&self) -> &'static str {
        match self {
            Cmd::Gen(_) => "gen",
            Cmd::Split(_) => "split",
            Cmd::Fields(_) => "fields",
            Cmd::Optimize(_) => "optimize",
            Cmd::Train(_) => "train",
            Cmd::Finetune(_) => "finetune",
            Cmd::Infer(_) => "infer",
            Cmd::Eval(_) => "eval",
            Cmd::Bench(_) => "bench",
        }
    }

    fn default_manifest(&self) -> PathBuf {
        match self {
            Cmd::Gen(a) => with_suffix(&a.out, ".run.json"),
            Cmd::Split(a) => with_suffix(&a.val_out, ".run.json"),
            Cmd::Fields(a) => a.out.join("run.json"),
            Cmd::Optimize(a) => a.out.join("run.json"),
            Cmd::Train(a) => a.out.join("run.json"),
            Cmd::Finetune(a) => a.out.join("run.json"),
            Cmd::Infer(a) => with_suffix(&a.out_image, ".run.json"),
            Cmd::Eval(a) => with_suffix(&a.report, ".run.json"),
            Cmd::Bench(a) => with_suffix(&a.report, ".run.json"),
        }
    }

    fn run(&self, run: &mut Run) -> Outcome {
        match self {
            Cmd::Gen(a) => cmd_gen(a, run),
            Cmd::Split(a) => cmd_split(a, run),
            Cmd::Fields(a) => cmd_fields(a, run),
            Cmd::Optimize(a) => cmd_optimize(a, run),
            Cmd::Train(a) => cmd_train(a, run),
            Cmd::Finetune(a) => cmd_finetune(a, run),
            Cmd::Infer(a) => cmd_infer(a, run),
            Cmd::Eval(a) => cmd_eval(a, run),
            Cmd::Bench(a) => cmd_bench(a, run),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(&cli.log))
        .format_timestamp_secs()
        .init();
    let started = unix_now();
    let mut run = Run::default();
    let result = cli.cmd.run(&mut run);
    let (status, error, value) = match &result {
        Ok(v) => ("ok", None, v.clone()),
        Err(e) => ("error", Some(e.to_string()), Value::Null),
    };
    let manifest = RunManifest {
        subcommand: cli.cmd.name(),
        args: std::env::args().collect(),
        config: run.config,
        seed: run.seed,
        build: build_id(),
        started_unix: started,
        finished_unix: unix_now(),
        status,
        error,
        outputs: run.outputs,
        result: value,
    };
    let path = cli
        .manifest
        .clone()
        .unwrap_or_else(|| cli.cmd.default_manifest());
    if let Err(e) = write_json(&path, &manifest) {
        eprintln!("topoformer: could not write run manifest: {e}");
    }
    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("topoformer {}: {e}", cli.cmd.name());
            ExitCode::from(exit_code(&e))
        }
    }
}
