use std::path::Path;

use super::ViTConfig;
use crate::autodiff::{load_checkpoint, save_checkpoint, Graph, Parameters, Rng, Tensor, Var};
use crate::dataset::{derive_seed, Sample};
use crate::fea::FieldImage;
use crate::{Error, Result};

/// Rows of patch features: row `i` is the patch at column `i % (grid / p)`,
/// row `i / (grid / p)` of the patch grid, flattened channel-major then
/// row-major.
pub fn patchify(fields: &FieldImage, p: usize) -> Result<Tensor> {
    if fields.nelx != fields.nely {
        return Err(Error::shape(
            "patchify",
            &[fields.nely, fields.nelx],
            &[p, p],
        ));
    }
    let chans = [fields.sed.as_slice(), fields.vm.as_slice()];
    let data = patchify_channels(&chans, fields.nelx, p)?;
    let side = fields.nelx / p;
    Tensor::new(&[side * side, 2 * p * p], data)
}

fn patchify_channels(chans: &[&[f64]], grid: usize, p: usize) -> Result<Vec<f64>> {
    if p == 0 || grid % p != 0 {
        return Err(Error::InvalidArgument(format!(
            "grid {grid} not divisible by patch {p}"
        )));
    }
    if let Some(c) = chans.iter().find(|c| c.len() != grid * grid) {
        return Err(Error::Dimension {
            what: "field channel",
            expected: grid * grid,
            actual: c.len(),
        });
    }
    let side = grid / p;
    let mut out = Vec::with_capacity(grid * grid * chans.len());
    for i in 0..side * side {
        let (px, py) = (i % side, i / side);
        for c in chans {
            for r in 0..p {
                let row = (py * p + r) * grid + px * p;
                out.extend_from_slice(&c[row..row + p]);
            }
        }
    }
    Ok(out)
}

/// Inverse of [`patchify`]: per-channel row-major images.
pub fn unpatchify(rows: &Tensor, grid: usize, p: usize) -> Result<Vec<Vec<f64>>> {
    if p == 0 || grid % p != 0 {
        return Err(Error::InvalidArgument(format!(
            "grid {grid} not divisible by patch {p}"
        )));
    }
    let side = grid / p;
    let s = rows.shape();
    if s.len() != 2 || s[0] != side * side || s[1] % (p * p) != 0 {
        return Err(Error::shape("unpatchify", s, &[side * side, p * p]));
    }
    let chans = s[1] / (p * p);
    let mut out = vec![vec![0.0; grid * grid]; chans];
    let d = rows.data();
    for i in 0..side * side {
        let (px, py) = (i % side, i / side);
        for (c, img) in out.iter_mut().enumerate() {
            for r in 0..p {
                let src = i * s[1] + c * p * p + r * p;
                let dst = (py * p + r) * grid + px * p;
                img[dst..dst + p].copy_from_slice(&d[src..src + p]);
            }
        }
    }
    Ok(out)
}

/// Model inputs for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// `[B, N, 2 P^2]`
    pub patches: Tensor,
    /// `[B, cond_dim]`
    pub cond: Tensor,
}

impl Batch {
    pub fn new(cfg: &ViTConfig, fields: &[&FieldImage], conds: &[Vec<f64>]) -> Result<Self> {
        if fields.len() != conds.len() || fields.is_empty() {
            return Err(Error::Dimension {
                what: "batch conditions",
                expected: fields.len(),
                actual: conds.len(),
            });
        }
        let (n, pd) = (cfg.n_tokens(), cfg.patch_dim());
        let mut patches = Vec::with_capacity(fields.len() * n * pd);
        let mut cond = Vec::with_capacity(fields.len() * cfg.cond_dim);
        for (f, c) in fields.iter().zip(conds) {
            if f.nelx != cfg.grid || f.nely != cfg.grid {
                return Err(Error::shape(
                    "batch fields",
                    &[f.nely, f.nelx],
                    &[cfg.grid, cfg.grid],
                ));
            }
            if c.len() != cfg.cond_dim {
                return Err(Error::Dimension {
                    what: "condition vector",
                    expected: cfg.cond_dim,
                    actual: c.len(),
                });
            }
            patches.extend_from_slice(patchify(f, cfg.patch)?.data());
            cond.extend_from_slice(c);
        }
        Ok(Batch {
            patches: Tensor::new(&[fields.len(), n, pd], patches)?,
            cond: Tensor::new(&[fields.len(), cfg.cond_dim], cond)?,
        })
    }

    pub fn from_samples(cfg: &ViTConfig, samples: &[&Sample]) -> Result<Self> {
        let fields: Vec<&FieldImage> = samples.iter().map(|s| &s.fields).collect();
        let conds: Vec<Vec<f64>> = samples.iter().map(|s| s.condition()).collect();
        Batch::new(cfg, &fields, &conds)
    }

    pub fn len(&self) -> usize {
        self.cond.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub enum Mode<'a> {
    Inference,
    /// Training: patch tokens are masked at the configured ratio.
    Train(&'a mut Rng),
}

pub struct ForwardOutput {
    /// `[B, grid, grid]` densities in `(0, 1)`.
    pub pred: Var,
    /// Masked patch indices per batch entry.
    pub masked: Vec<Vec<usize>>,
    /// Attention weights `[B, h, N+1, N+1]`, one per layer.
    pub attention: Vec<Var>,
}

#[derive(Debug, Clone, Copy)]
enum Init {
    Normal,
    Zeros,
    Ones,
}

fn stem_specs(cfg: &ViTConfig) -> Vec<(String, Vec<usize>, Init)> {
    let d = cfg.hidden;
    let pp = cfg.patch * cfg.patch;
    vec![
        (
            "patch_embed.w".into(),
            vec![cfg.patch_dim(), d],
            Init::Normal,
        ),
        ("patch_embed.b".into(), vec![d], Init::Zeros),
        ("cls.w1".into(), vec![cfg.cond_dim, d], Init::Normal),
        ("cls.b1".into(), vec![d], Init::Zeros),
        ("cls.w2".into(), vec![d, d], Init::Normal),
        ("cls.b2".into(), vec![d], Init::Zeros),
        ("pos".into(), vec![cfg.seq_len(), d], Init::Normal),
        ("mask_token".into(), vec![d], Init::Normal),
        ("final_ln.gamma".into(), vec![d], Init::Ones),
        ("final_ln.beta".into(), vec![d], Init::Zeros),
        ("decoder.w".into(), vec![d, pp], Init::Normal),
        ("decoder.b".into(), vec![pp], Init::Zeros),
    ]
}

fn block_specs(cfg: &ViTConfig, i: usize) -> Vec<(String, Vec<usize>, Init)> {
    let d = cfg.hidden;
    let f = d * cfg.mlp_ratio;
    let p = |s: &str| format!("blocks.{i}.{s}");
    vec![
        (p("ln1.gamma"), vec![d], Init::Ones),
        (p("ln1.beta"), vec![d], Init::Zeros),
        (p("attn.wq"), vec![d, d], Init::Normal),
        (p("attn.bq"), vec![d], Init::Zeros),
        (p("attn.wk"), vec![d, d], Init::Normal),
        (p("attn.bk"), vec![d], Init::Zeros),
        (p("attn.wv"), vec![d, d], Init::Normal),
        (p("attn.bv"), vec![d], Init::Zeros),
        (p("attn.wo"), vec![d, d], Init::Normal),
        (p("attn.bo"), vec![d], Init::Zeros),
        (p("ln2.gamma"), vec![d], Init::Ones),
        (p("ln2.beta"), vec![d], Init::Zeros),
        (p("mlp.w1"), vec![d, f], Init::Normal),
        (p("mlp.b1"), vec![f], Init::Zeros),
        (p("mlp.w2"), vec![f, d], Init::Normal),
        (p("mlp.b2"), vec![d], Init::Zeros),
    ]
}

const INIT_STD: f64 = 0.02;

fn name_hash(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

fn init_params(
    specs: Vec<(String, Vec<usize>, Init)>,
    seed: u64,
    into: &mut Parameters,
) -> Result<()> {
    for (name, shape, init) in specs {
        let t = match init {
            Init::Zeros => Tensor::zeros(&shape),
            Init::Ones => Tensor::full(&shape, 1.0),
            Init::Normal => {
                let mut rng = Rng::new(derive_seed(seed, name_hash(&name), 0));
                Tensor::from_fn(&shape, |_| rng.truncated_normal(INIT_STD))
            }
        };
        into.insert(name, t)?;
    }
    Ok(())
}

fn param(g: &mut Graph, params: &Parameters, name: &str) -> Result<Var> {
    g.param_named(params, name)
}

fn linear(
    g: &mut Graph,
    params: &Parameters,
    x: Var,
    prefix: &str,
    w: &str,
    b: &str,
) -> Result<Var> {
    let w = param(g, params, &format!("{prefix}{w}"))?;
    let b = param(g, params, &format!("{prefix}{b}"))?;
    let y = g.matmul(x, w)?;
    g.add(y, b)
}

/// Replace `round(ratio N)` patch tokens (never slot 0, the class token) of
/// `seq: [B, N+1, D]` with `mask_token: [D]`.
pub fn apply_mask(
    g: &mut Graph,
    seq: Var,
    mask_token: Var,
    ratio: f64,
    rng: &mut Rng,
) -> Result<(Var, Vec<Vec<usize>>)> {
    let s = g.shape(seq).to_vec();
    if s.len() != 3 || s[1] < 2 {
        return Err(Error::shape("apply_mask", &s, g.shape(mask_token)));
    }
    let (b, t) = (s[0], s[1]);
    let n = t - 1;
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::InvalidArgument(format!(
            "mask ratio {ratio} outside [0, 1)"
        )));
    }
    let count = (ratio * n as f64).round() as usize;
    if count == 0 {
        return Ok((seq, vec![Vec::new(); b]));
    }
    let mut keep = vec![1.0; b * t];
    let mut masked = Vec::with_capacity(b);
    for bi in 0..b {
        let mut m = rng.choose(n, count);
        m.sort_unstable();
        for &i in &m {
            keep[bi * t + 1 + i] = 0.0;
        }
        masked.push(m);
    }
    let drop: Vec<f64> = keep.iter().map(|k| 1.0 - k).collect();
    let keep = g.constant(Tensor::new(&[b, t, 1], keep)?)?;
    let drop = g.constant(Tensor::new(&[b, t, 1], drop)?)?;
    let kept = g.mul(seq, keep)?;
    let filled = g.mul(drop, mask_token)?;
    Ok((g.add(kept, filled)?, masked))
}

/// Pre-norm transformer block `i` on `x: [B, T, D]`; also returns the
/// attention weights `[B, h, T, T]`.
pub fn attention_block(
    cfg: &ViTConfig,
    params: &Parameters,
    g: &mut Graph,
    x: Var,
    i: usize,
) -> Result<(Var, Var)> {
    let s = g.shape(x).to_vec();
    if s.len() != 3 || s[2] != cfg.hidden {
        return Err(Error::shape("attention_block", &s, &[cfg.hidden]));
    }
    let (b, t, d) = (s[0], s[1], s[2]);
    let (h, dk) = (cfg.heads, cfg.head_dim());
    let pre = format!("blocks.{i}.");
    let ln = |g: &mut Graph, x: Var, which: &str| -> Result<Var> {
        let gamma = param(g, params, &format!("{pre}{which}.gamma"))?;
        let beta = param(g, params, &format!("{pre}{which}.beta"))?;
        g.layer_norm(x, gamma, beta)
    };
    let hn = ln(g, x, "ln1")?;
    let heads = |g: &mut Graph, w: &str, bias: &str| -> Result<Var> {
        let y = linear(g, params, hn, &pre, w, bias)?;
        let y = g.reshape(y, &[b, t, h, dk])?;
        g.permute(y, &[0, 2, 1, 3])
    };
    let q = heads(g, "attn.wq", "attn.bq")?;
    let k = heads(g, "attn.wk", "attn.bk")?;
    let v = heads(g, "attn.wv", "attn.bv")?;
    let kt = g.transpose(k)?;
    let scores = g.matmul(q, kt)?;
    let scores = g.scale(scores, 1.0 / (dk as f64).sqrt())?;
    let attn = g.softmax(scores)?;
    let ctx = g.matmul(attn, v)?;
    let ctx = g.permute(ctx, &[0, 2, 1, 3])?;
    let ctx = g.reshape(ctx, &[b, t, d])?;
    let proj = linear(g, params, ctx, &pre, "attn.wo", "attn.bo")?;
    let x = g.add(x, proj)?;
    let hn = ln(g, x, "ln2")?;
    let m = linear(g, params, hn, &pre, "mlp.w1", "mlp.b1")?;
    let m = g.gelu(m)?;
    let m = linear(g, params, m, &pre, "mlp.w2", "mlp.b2")?;
    Ok((g.add(x, m)?, attn))
}

/// The surrogate: configuration plus named parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ViT {
    pub cfg: ViTConfig,
    pub params: Parameters,
}

impl ViT {
    /// Truncated-normal (std 0.02) projections and embeddings, zero biases,
    /// unit layer-norm scales. Each tensor draws from its own stream keyed by
    /// name, so initialization does not depend on construction order.
    pub fn init(cfg: &ViTConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut params = Parameters::new();
        init_params(stem_specs(cfg), seed, &mut params)?;
        for i in 0..cfg.layers {
            init_params(block_specs(cfg, i), seed, &mut params)?;
        }
        log::info!("initialized ViT with {} parameters", params.num_scalars());
        Ok(ViT { cfg: *cfg, params })
    }

    /// Wrap existing parameters after checking names and shapes.
    pub fn from_params(cfg: &ViTConfig, params: Parameters) -> Result<Self> {
        cfg.validate()?;
        let mut expected = stem_specs(cfg);
        for i in 0..cfg.layers {
            expected.extend(block_specs(cfg, i));
        }
        if expected.len() != params.len() {
            return Err(Error::Schema(format!(
                "model expects {} parameter tensors, got {}",
                expected.len(),
                params.len()
            )));
        }
        for (name, shape, _) in &expected {
            let t = params.by_name(name)?;
            if t.shape() != shape.as_slice() {
                return Err(Error::Schema(format!(
                    "parameter {name}: shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
        }
        Ok(ViT { cfg: *cfg, params })
    }

    pub fn save(&self, path: impl AsRef<Path>, extra: serde_json::Value) -> Result<()> {
        let meta = serde_json::json!({ "vit": self.cfg, "extra": extra });
        save_checkpoint(path, &self.params, &meta)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, serde_json::Value)> {
        let (params, meta) = load_checkpoint(path)?;
        let cfg: ViTConfig = serde_json::from_value(
            meta.get("vit")
                .cloned()
                .ok_or_else(|| Error::Schema("checkpoint has no model config".into()))?,
        )?;
        let extra = meta
            .get("extra")
            .cloned()
            .unwrap_or(serde_json::Value::Null);
        Ok((ViT::from_params(&cfg, params)?, extra))
    }

    /// Patch embeddings `[B, N, D]`.
    pub fn tokens(&self, g: &mut Graph, batch: &Batch) -> Result<Var> {
        let x = g.constant(batch.patches.clone())?;
        linear(g, &self.params, x, "", "patch_embed.w", "patch_embed.b")
    }

    /// Class token `[B, D]` from a condition tensor `[B, C]`: two linear layers
    /// with a GELU between them.
    pub fn class_token(&self, g: &mut Graph, cond: Var) -> Result<Var> {
        let s = g.shape(cond);
        if s.len() != 2 || s[1] != self.cfg.cond_dim {
            return Err(Error::Dimension {
                what: "condition vector",
                expected: self.cfg.cond_dim,
                actual: s.last().copied().unwrap_or(0),
            });
        }
        let h = linear(g, &self.params, cond, "", "cls.w1", "cls.b1")?;
        let h = g.gelu(h)?;
        linear(g, &self.params, h, "", "cls.w2", "cls.b2")
    }

    /// Prepend `cls: [B, D]` to `tokens: [B, N, D]`, add positions and mask.
    pub fn sequence(
        &self,
        g: &mut Graph,
        cls: Var,
        tokens: Var,
        mode: Mode,
    ) -> Result<(Var, Vec<Vec<usize>>)> {
        let b = g.shape(tokens)[0];
        let cls = g.reshape(cls, &[b, 1, self.cfg.hidden])?;
        let seq = g.concat(&[cls, tokens], 1)?;
        let pos = param(g, &self.params, "pos")?;
        let seq = g.add(seq, pos)?;
        match mode {
            Mode::Train(rng) if self.cfg.mask_ratio > 0.0 => {
                let mt = param(g, &self.params, "mask_token")?;
                apply_mask(g, seq, mt, self.cfg.mask_ratio, rng)
            }
            _ => Ok((seq, vec![Vec::new(); b])),
        }
    }

    /// Final norm, class-token drop, per-token decoder and sigmoid.
    pub fn head(&self, g: &mut Graph, seq: Var) -> Result<Var> {
        head(&self.cfg, &self.params, g, seq)
    }

    pub fn forward(&self, g: &mut Graph, batch: &Batch, mode: Mode) -> Result<ForwardOutput> {
        let tokens = self.tokens(g, batch)?;
        let cond = g.constant(batch.cond.clone())?;
        let cls = self.class_token(g, cond)?;
        let (mut x, masked) = self.sequence(g, cls, tokens, mode)?;
        let mut attention = Vec::with_capacity(self.cfg.layers);
        for i in 0..self.cfg.layers {
            let (y, a) = attention_block(&self.cfg, &self.params, g, x, i)?;
            x = y;
            attention.push(a);
        }
        let pred = self.head(g, x)?;
        Ok(ForwardOutput {
            pred,
            masked,
            attention,
        })
    }

    /// Inference-mode predictions `[B, grid, grid]`.
    pub fn predict(&self, batch: &Batch) -> Result<Tensor> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, batch, Mode::Inference)?;
        Ok(g.value(out.pred).clone())
    }
}

fn head(cfg: &ViTConfig, params: &Parameters, g: &mut Graph, seq: Var) -> Result<Var> {
    let b = g.shape(seq)[0];
    let (n, p) = (cfg.n_tokens(), cfg.patch);
    let side = cfg.grid / p;
    let gamma = param(g, params, "final_ln.gamma")?;
    let beta = param(g, params, "final_ln.beta")?;
    let x = g.layer_norm(seq, gamma, beta)?;
    let x = g.slice(x, 1, 1, n)?;
    let y = linear(g, params, x, "", "decoder.w", "decoder.b")?;
    let y = g.reshape(y, &[b, side, side, p, p])?;
    let y = g.permute(y, &[0, 1, 3, 2, 4])?;
    let y = g.reshape(y, &[b, cfg.grid, cfg.grid])?;
    g.sigmoid(y)
}

/// Inference with freshly initialized parameters (same values as
/// [`ViT::init`] with `seed`), created one block at a time and dropped after
/// use, so models too large to hold in memory can still be run end to end.
pub fn probe_forward(cfg: &ViTConfig, seed: u64, batch: &Batch) -> Result<Tensor> {
    cfg.validate()?;
    let mut stem = Parameters::new();
    init_params(stem_specs(cfg), seed, &mut stem)?;
    let shell = ViT {
        cfg: *cfg,
        params: stem,
    };
    let mut g = Graph::new();
    let tokens = shell.tokens(&mut g, batch)?;
    let cond = g.constant(batch.cond.clone())?;
    let cls = shell.class_token(&mut g, cond)?;
    let (seq, _) = shell.sequence(&mut g, cls, tokens, Mode::Inference)?;
    let mut x = g.value(seq).clone();
    drop(g);
    for i in 0..cfg.layers {
        let mut bp = Parameters::new();
        init_params(block_specs(cfg, i), seed, &mut bp)?;
        let mut g = Graph::new();
        let xv = g.constant(x)?;
        let (y, _) = attention_block(cfg, &bp, &mut g, xv, i)?;
        x = g.value(y).clone();
    }
    let mut g = Graph::new();
    let xv = g.constant(x)?;
    let pred = head(cfg, &shell.params, &mut g, xv)?;
    Ok(g.value(pred).clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(n: usize, seed: u64) -> FieldImage {
        let mut r = Rng::new(seed);
        FieldImage {
            nelx: n,
            nely: n,
            sed: (0..n * n).map(|_| r.uniform()).collect(),
            vm: (0..n * n).map(|_| r.uniform()).collect(),
        }
    }

    fn small_cfg() -> ViTConfig {
        ViTConfig {
            hidden: 8,
            layers: 2,
            heads: 2,
            patch: 4,
            grid: 16,
            ..ViTConfig::desk()
        }
    }

    #[test]
    fn patchify_shapes_and_round_trip() {
        let f = field(64, 1);
        assert_eq!(patchify(&f, 8).unwrap().shape(), &[64, 128]);
        let f = field(16, 2);
        let p = patchify(&f, 4).unwrap();
        assert_eq!(p.shape(), &[16, 32]);
        let back = unpatchify(&p, 16, 4).unwrap();
        assert_eq!(back[0], f.sed);
        assert_eq!(back[1], f.vm);
        assert!(patchify(&field(10, 3), 4).is_err());
    }

    #[test]
    fn patch_order() {
        let mut f = field(16, 4);
        f.sed = (0..256).map(|i| i as f64).collect();
        let p = patchify(&f, 4).unwrap();
        // Patch 1 is patch-grid column 1, row 0: pixels x 4..8 of rows 0..4.
        assert_eq!(&p.data()[32..36], &[4.0, 5.0, 6.0, 7.0]);
        assert_eq!(p.data()[36], 20.0);
        // Patch 4 starts patch-grid row 1.
        assert_eq!(p.data()[4 * 32], 64.0);
    }

    #[test]
    fn zero_class_weights_give_zero_token() {
        let cfg = small_cfg();
        let mut m = ViT::init(&cfg, 0).unwrap();
        for name in ["cls.w1", "cls.b1", "cls.w2", "cls.b2"] {
            let id = m.params.id(name).unwrap();
            let shape = m.params.get(id).shape().to_vec();
            m.params.set(id, Tensor::zeros(&shape));
        }
        let mut g = Graph::new();
        let c = g
            .constant(Tensor::from_fn(&[3, cfg.cond_dim], |i| i as f64))
            .unwrap();
        let t = m.class_token(&mut g, c).unwrap();
        assert!(g.value(t).data().iter().all(|&v| v == 0.0));
        let bad = g.constant(Tensor::zeros(&[1, 32])).unwrap();
        assert!(m.class_token(&mut g, bad).is_err());
    }

    #[test]
    fn mask_counts() {
        let mut g = Graph::new();
        let seq = g.constant(Tensor::full(&[2, 17, 3], 1.0)).unwrap();
        let mt = g.constant(Tensor::full(&[3], -5.0)).unwrap();
        let mut rng = Rng::new(1);
        let (same, m) = apply_mask(&mut g, seq, mt, 0.0, &mut rng).unwrap();
        assert_eq!(same, seq);
        assert!(m.iter().all(Vec::is_empty));
        let (out, m) = apply_mask(&mut g, seq, mt, 1.0 - 1.0 / 16.0, &mut rng).unwrap();
        assert!(m.iter().all(|v| v.len() == 15));
        let d = g.value(out).data();
        for b in 0..2 {
            assert_eq!(d[b * 51], 1.0);
            let survivors = (1..17).filter(|t| d[b * 51 + t * 3] == 1.0).count();
            assert_eq!(survivors, 1);
        }
        let again = apply_mask(&mut g, seq, mt, 0.5, &mut Rng::new(8))
            .unwrap()
            .1;
        assert_eq!(
            again,
            apply_mask(&mut g, seq, mt, 0.5, &mut Rng::new(8))
                .unwrap()
                .1
        );
    }

    #[test]
    fn probe_matches_materialized_model() {
        let cfg = small_cfg();
        let m = ViT::init(&cfg, 11).unwrap();
        let conds = vec![vec![0.5; cfg.cond_dim]];
        let f = field(16, 9);
        let b = Batch::new(&cfg, &[&f], &conds).unwrap();
        assert_eq!(m.predict(&b).unwrap(), probe_forward(&cfg, 11, &b).unwrap());
        assert_eq!(m.params.num_scalars(), cfg.param_count());
    }
}
