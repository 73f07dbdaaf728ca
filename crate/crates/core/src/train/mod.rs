//! Supervised training with Adam on the weighted loss, plus transfer of a
//! static model to dynamic conditioning with selectable trainable groups.

mod finetune;

pub use finetune::{finetune, widen_for_dynamic, FinetuneGroup, FinetuneGroups};

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autodiff::{adam_step, AdamConfig, AdamState, Graph, Rng};
use crate::dataset::{transforms_for, Dataset, Sample};
use crate::losses::{total_loss, LossValues, LossWeights, Targets};
use crate::problem::{ProblemKind, DYNAMIC_COND_DIM, STATIC_COND_DIM};
use crate::vit::{Batch, Mode, ViT};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    /// Peak learning rate.
    pub lr: f64,
    pub warmup: usize,
    pub seed: u64,
    /// Overrides the model's mask ratio when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask_ratio: Option<f64>,
    pub weights: LossWeights,
    pub adam: AdamConfig,
    /// Random dihedral transform per drawn sample.
    pub augment: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    /// Steps between checkpoints; 0 keeps only the final one.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 20_000,
            batch_size: 32,
            lr: 1e-4,
            warmup: 500,
            seed: 0,
            mask_ratio: None,
            weights: LossWeights::default(),
            adam: AdamConfig::default(),
            augment: true,
            dataset: None,
            checkpoint_every: 5_000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be >= 1".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate {} must be finite and >= 0",
                self.lr
            )));
        }
        if let Some(r) = self.mask_ratio {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::InvalidArgument(format!(
                    "mask ratio {r} outside [0, 1)"
                )));
            }
        }
        self.weights.validate()
    }

    /// Linear warmup to `lr`, then cosine decay to zero at `iterations`.
    pub fn lr_at(&self, step: usize) -> f64 {
        if step < self.warmup {
            return self.lr * (step + 1) as f64 / self.warmup as f64;
        }
        let span = self.iterations.saturating_sub(self.warmup).max(1) as f64;
        let t = ((step - self.warmup) as f64 / span).min(1.0);
        0.5 * self.lr * (1.0 + (std::f64::consts::PI * t).cos())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub lr: f64,
    pub loss: LossValues,
}

pub struct TrainOutcome {
    pub model: ViT,
    pub log: Vec<StepLog>,
}

/// Where training writes its loss log and checkpoints.
#[derive(Debug, Clone)]
pub struct TrainOutputs {
    pub dir: PathBuf,
}

impl TrainOutputs {
    pub fn log_path(&self) -> PathBuf {
        self.dir.join("loss.csv")
    }

    pub fn checkpoint_path(&self, step: Option<usize>) -> PathBuf {
        match step {
            Some(s) => self.dir.join(format!("step_{s:07}.ckpt")),
            None => self.dir.join("final.ckpt"),
        }
    }
}

/// Model condition width for a dataset kind.
pub fn cond_dim_for(kind: ProblemKind) -> usize {
    match kind {
        ProblemKind::Static => STATIC_COND_DIM,
        ProblemKind::Dynamic => DYNAMIC_COND_DIM,
    }
}

fn check_compatible(model: &ViT, data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let want = cond_dim_for(data.kind());
    if model.cfg.cond_dim != want {
        return Err(Error::Schema(format!(
            "model takes {} condition values but a {} dataset provides {want}",
            model.cfg.cond_dim,
            data.kind()
        )));
    }
    let g = data.grid();
    if g.nelx != model.cfg.grid || g.nely != model.cfg.grid {
        return Err(Error::Schema(format!(
            "model expects {0}x{0} images, dataset is {1}x{2}",
            model.cfg.grid, g.nely, g.nelx
        )));
    }
    Ok(())
}

/// Endless reshuffled pass over sample indices.
struct BatchStream {
    rng: Rng,
    order: Vec<usize>,
    pos: usize,
}

impl BatchStream {
    fn new(n: usize, rng: Rng) -> Self {
        BatchStream {
            rng,
            order: (0..n).collect(),
            pos: n,
        }
    }

    fn next(&mut self, k: usize) -> Vec<usize> {
        (0..k)
            .map(|_| {
                if self.pos == self.order.len() {
                    self.rng.shuffle(&mut self.order);
                    self.pos = 0;
                }
                self.pos += 1;
                self.order[self.pos - 1]
            })
            .collect()
    }
}

fn draw_batch(data: &Dataset, idx: &[usize], augment: bool, rng: &mut Rng) -> Result<Vec<Sample>> {
    let transforms = transforms_for(&data.grid());
    idx.iter()
        .map(|&i| {
            let s = &data.samples[i];
            if !augment {
                return Ok(s.clone());
            }
            let t = transforms[rng.index(transforms.len())];
            Ok(t.sample(s).unwrap_or_else(|_| s.clone()))
        })
        .collect()
}

/// Loss of `model` on `samples` with masking off, averaged over chunks of
/// `batch` samples (weighted by chunk size).
pub fn evaluate_loss(
    model: &ViT,
    samples: &[Sample],
    weights: &LossWeights,
    batch: usize,
) -> Result<LossValues> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples to score".into()));
    }
    let mut acc = LossValues::default();
    for chunk in samples.chunks(batch.max(1)) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let b = Batch::from_samples(&model.cfg, &refs)?;
        let t = Targets::from_samples(&refs)?;
        let mut g = Graph::new();
        let out = model.forward(&mut g, &b, Mode::Inference)?;
        let v =
            total_loss(&mut g, out.pred, &t, weights, &out.masked, model.cfg.patch)?.values(&g)?;
        let w = chunk.len() as f64 / samples.len() as f64;
        acc.pixel += w * v.pixel;
        acc.vf += w * v.vf;
        acc.load += w * v.load;
        acc.fm += w * v.fm;
        acc.total += w * v.total;
    }
    Ok(acc)
}

/// Train every parameter of `model`.
pub fn train(
    cfg: &TrainConfig,
    model: ViT,
    data: &Dataset,
    out: Option<&TrainOutputs>,
) -> Result<TrainOutcome> {
    train_subset(cfg, model, data, out, |_| true)
}

/// Train the parameters whose names satisfy `trainable`; the rest keep their
/// exact values.
pub fn train_subset(
    cfg: &TrainConfig,
    mut model: ViT,
    data: &Dataset,
    out: Option<&TrainOutputs>,
    trainable: impl Fn(&str) -> bool,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_compatible(&model, data)?;
    if let Some(r) = cfg.mask_ratio {
        model.cfg.mask_ratio = r;
    }
    let live: Vec<bool> = model.params.iter().map(|(_, n, _)| trainable(n)).collect();
    if !live.iter().any(|&l| l) {
        return Err(Error::InvalidArgument(
            "no trainable parameters selected".into(),
        ));
    }
    let mut log_file = match out {
        Some(o) => {
            std::fs::create_dir_all(&o.dir).map_err(|e| Error::io(&o.dir, e))?;
            let path = o.log_path();
            let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut f = std::io::BufWriter::new(f);
            writeln!(f, "step,pixel,vf,load,fm,total").map_err(|e| Error::io(&path, e))?;
            Some((f, path))
        }
        None => None,
    };
    let root = Rng::new(cfg.seed);
    let mut stream = BatchStream::new(data.len(), root.fork(1));
    let mut aug_rng = root.fork(2);
    let mut mask_rng = root.fork(3);
    let mut adam = AdamState::new(&model.params);
    let mut log = Vec::with_capacity(cfg.iterations);
    for step in 0..cfg.iterations {
        let samples = draw_batch(
            data,
            &stream.next(cfg.batch_size),
            cfg.augment,
            &mut aug_rng,
        )?;
        let refs: Vec<&Sample> = samples.iter().collect();
        let batch = Batch::from_samples(&model.cfg, &refs)?;
        let targets = Targets::from_samples(&refs)?;
        let mut g = Graph::new();
        let fwd = model.forward(&mut g, &batch, Mode::Train(&mut mask_rng))?;
        let terms = total_loss(
            &mut g,
            fwd.pred,
            &targets,
            &cfg.weights,
            &fwd.masked,
            model.cfg.patch,
        )?;
        let loss = terms.values(&g)?;
        if !loss.total.is_finite() {
            return Err(Error::NonFinite(format!("training loss at step {step}")));
        }
        g.backward(terms.total)?;
        let grads: Vec<Option<&[f64]>> = model
            .params
            .ids()
            .map(|id| if live[id.0] { g.param_grad(id) } else { None })
            .collect();
        let lr = cfg.lr_at(step);
        adam_step(&mut model.params, &grads, &mut adam, lr, &cfg.adam)?;
        drop(g);
        if let Some((f, path)) = log_file.as_mut() {
            writeln!(
                f,
                "{step},{},{},{},{},{}",
                loss.pixel, loss.vf, loss.load, loss.fm, loss.total
            )
            .map_err(|e| Error::io(&*path, e))?;
        }
        if step % 100 == 0 {
            log::info!(
                "step {step} lr {lr:.3e} total {:.5} pixel {:.5}",
                loss.total,
                loss.pixel
            );
        }
        log.push(StepLog { step, lr, loss });
        if let Some(o) = out {
            if cfg.checkpoint_every > 0
                && (step + 1) % cfg.checkpoint_every == 0
                && step + 1 < cfg.iterations
            {
                model.save(o.checkpoint_path(Some(step + 1)), meta(cfg, step + 1))?;
            }
        }
    }
    if let Some((mut f, path)) = log_file {
        f.flush().map_err(|e| Error::io(&path, e))?;
    }
    if let Some(o) = out {
        model.save(o.checkpoint_path(None), meta(cfg, cfg.iterations))?;
    }
    Ok(TrainOutcome { model, log })
}

fn meta(cfg: &TrainConfig, step: usize) -> serde_json::Value {
    serde_json::json!({ "step": step, "train": cfg })
}

/// Median of the first and last tenth of the total-loss curve.
pub fn loss_trend(log: &[StepLog]) -> Option<(f64, f64)> {
    let k = log.len() / 10;
    if k == 0 {
        return None;
    }
    let median = |xs: &[StepLog]| {
        let mut v: Vec<f64> = xs.iter().map(|s| s.loss.total).collect();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    Some((median(&log[..k]), median(&log[log.len() - k..])))
}

pub fn load_train_config(path: impl AsRef<Path>) -> Result<TrainConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
