//! Training objective: pixel MSE plus volume-fraction, load-discrepancy and
//! floating-material penalties, each averaged over the batch.

mod components;

pub use components::{connected_components, floating_fraction, propagate_labels};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{CustomBackward, Graph, Tensor, Var};
use crate::dataset::Sample;
use crate::{Error, Result};

/// Density threshold separating solid from void for connectivity.
pub const FM_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub pixel: f64,
    pub vf: f64,
    pub load: f64,
    pub fm: f64,
    /// Extra MSE over the pixels of masked patches, when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask: Option<f64>,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            pixel: 1.0,
            vf: 0.1,
            load: 0.1,
            fm: 0.1,
            mask: None,
        }
    }
}

impl LossWeights {
    pub fn pixel_only() -> Self {
        LossWeights {
            pixel: 1.0,
            vf: 0.0,
            load: 0.0,
            fm: 0.0,
            mask: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.pixel,
            self.vf,
            self.load,
            self.fm,
            self.mask.unwrap_or(0.0),
        ];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "loss weights must be finite and >= 0: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Per-batch supervision extracted from samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    /// `[B, grid, grid]` ground-truth topologies.
    pub topology: Tensor,
    pub vf: Vec<f64>,
    /// Row-major load element per sample.
    pub load: Vec<usize>,
}

impl Targets {
    pub fn from_samples(samples: &[&Sample]) -> Result<Self> {
        let Some(first) = samples.first() else {
            return Err(Error::InvalidArgument("empty batch".into()));
        };
        let (w, h) = (first.topology.nelx, first.topology.nely);
        let mut data = Vec::with_capacity(samples.len() * w * h);
        for s in samples {
            if (s.topology.nelx, s.topology.nely) != (w, h) {
                return Err(Error::shape(
                    "targets",
                    &[s.topology.nely, s.topology.nelx],
                    &[h, w],
                ));
            }
            data.extend_from_slice(&s.topology.values);
        }
        Ok(Targets {
            topology: Tensor::new(&[samples.len(), h, w], data)?,
            vf: samples.iter().map(|s| s.spec.vf).collect(),
            load: samples
                .iter()
                .map(|s| s.spec.load.element(&s.spec.grid))
                .collect(),
        })
    }
}

fn batch_dims(g: &Graph, pred: Var) -> Result<(usize, usize)> {
    let s = g.shape(pred);
    if s.len() != 3 {
        return Err(Error::shape("loss input", s, &[0, 0, 0]));
    }
    Ok((s[0], s[1] * s[2]))
}

fn check_batch(what: &'static str, b: usize, n: usize) -> Result<()> {
    if b != n {
        return Err(Error::Dimension {
            what,
            expected: b,
            actual: n,
        });
    }
    Ok(())
}

/// Mean squared error over all pixels.
pub fn pixel_loss(g: &mut Graph, pred: Var, target: Var) -> Result<Var> {
    g.mse_loss(pred, target)
}

/// Batch mean of `|f - mean(pred)|`.
pub fn vf_loss(g: &mut Graph, pred: Var, f: &[f64]) -> Result<Var> {
    let (b, n) = batch_dims(g, pred)?;
    check_batch("volume fractions", b, f.len())?;
    let flat = g.reshape(pred, &[b, n])?;
    let sums = g.sum_last(flat)?;
    let means = g.scale(sums, 1.0 / n as f64)?;
    let f = g.constant(Tensor::new(&[b], f.to_vec())?)?;
    let d = g.sub(f, means)?;
    let d = g.abs(d)?;
    g.mean(d)
}

/// Batch mean of `1 - pred[load element]`.
///
/// With a unit load on a single element the sum of per-element force
/// magnitudes weighted by density collapses to the load element's density.
pub fn load_discrepancy_loss(g: &mut Graph, pred: Var, load: &[usize]) -> Result<Var> {
    let (b, n) = batch_dims(g, pred)?;
    check_batch("load elements", b, load.len())?;
    let mut onehot = vec![0.0; b * n];
    for (i, &e) in load.iter().enumerate() {
        if e >= n {
            return Err(Error::InvalidArgument(format!(
                "load element {e} outside {n} pixels"
            )));
        }
        onehot[i * n + e] = 1.0;
    }
    let flat = g.reshape(pred, &[b, n])?;
    let onehot = g.constant(Tensor::new(&[b, n], onehot)?)?;
    let picked = g.mul(flat, onehot)?;
    let at_load = g.sum_last(picked)?;
    let l = g.affine(at_load, -1.0, 1.0)?;
    g.mean(l)
}

/// Gradient rule for the floating-material fraction. Labels are piecewise
/// constant in the density, so the gradient flows through the soft masses.
struct FloatingMaterial {
    /// `d loss_b / d pred_b`, flattened `[B, n]`.
    grad: Vec<f64>,
    n: usize,
}

impl CustomBackward for FloatingMaterial {
    fn name(&self) -> &'static str {
        "floating_material"
    }

    fn backward(
        &self,
        _inputs: &[&Tensor],
        _output: &Tensor,
        grad: &[f64],
    ) -> Vec<Option<Vec<f64>>> {
        let mut out = self.grad.clone();
        for (chunk, g) in out.chunks_mut(self.n).zip(grad) {
            chunk.iter_mut().for_each(|v| *v *= g);
        }
        vec![Some(out)]
    }
}

/// Batch mean of the floating soft-mass fraction. Zero exactly when the
/// thresholded map is a single component containing the load element.
pub fn floating_material_loss(
    g: &mut Graph,
    pred: Var,
    load: &[usize],
    threshold: f64,
) -> Result<Var> {
    let (b, n) = batch_dims(g, pred)?;
    check_batch("load elements", b, load.len())?;
    let (h, w) = (g.shape(pred)[1], g.shape(pred)[2]);
    let data = g.value(pred).data();
    let mut values = Vec::with_capacity(b);
    let mut grad = Vec::with_capacity(b * n);
    for (i, &e) in load.iter().enumerate() {
        if e >= n {
            return Err(Error::InvalidArgument(format!(
                "load element {e} outside {n} pixels"
            )));
        }
        let (v, d) = floating_fraction(&data[i * n..(i + 1) * n], w, h, e, threshold);
        values.push(v);
        grad.extend(d);
    }
    let per = g.custom(
        &[pred],
        Tensor::new(&[b], values)?,
        Arc::new(FloatingMaterial { grad, n }),
    )?;
    g.mean(per)
}

/// MSE restricted to the pixels of masked patches; zero when nothing is masked.
pub fn masked_pixel_loss(
    g: &mut Graph,
    pred: Var,
    target: Var,
    masked: &[Vec<usize>],
    patch: usize,
) -> Result<Var> {
    let (b, _) = batch_dims(g, pred)?;
    check_batch("mask lists", b, masked.len())?;
    let (h, w) = (g.shape(pred)[1], g.shape(pred)[2]);
    if patch == 0 || w % patch != 0 || h % patch != 0 {
        return Err(Error::InvalidArgument(format!(
            "patch {patch} does not tile {h}x{w}"
        )));
    }
    let side = w / patch;
    let mut weight = vec![0.0; b * h * w];
    for (bi, m) in masked.iter().enumerate() {
        for &t in m {
            let (px, py) = (t % side, t / side);
            for r in 0..patch {
                let row = bi * h * w + (py * patch + r) * w + px * patch;
                weight[row..row + patch].fill(1.0);
            }
        }
    }
    let count: f64 = weight.iter().sum();
    let wt = g.constant(Tensor::new(&[b, h, w], weight)?)?;
    let d = g.sub(pred, target)?;
    let d2 = g.mul(d, d)?;
    let d2 = g.mul(d2, wt)?;
    let s = g.sum(d2)?;
    g.scale(s, if count > 0.0 { 1.0 / count } else { 0.0 })
}

/// Individual terms and their weighted sum.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub pixel: Var,
    pub vf: Var,
    pub load: Var,
    pub fm: Var,
    pub mask: Option<Var>,
    pub total: Var,
}

/// Scalar values of [`LossTerms`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossValues {
    pub pixel: f64,
    pub vf: f64,
    pub load: f64,
    pub fm: f64,
    pub total: f64,
}

impl LossTerms {
    pub fn values(&self, g: &Graph) -> Result<LossValues> {
        Ok(LossValues {
            pixel: g.value(self.pixel).item()?,
            vf: g.value(self.vf).item()?,
            load: g.value(self.load).item()?,
            fm: g.value(self.fm).item()?,
            total: g.value(self.total).item()?,
        })
    }
}

/// Weighted objective. Terms with zero weight are reported but left out of
/// the sum, so `(1, 0, 0, 0)` reproduces the pixel loss exactly.
pub fn total_loss(
    g: &mut Graph,
    pred: Var,
    targets: &Targets,
    weights: &LossWeights,
    masked: &[Vec<usize>],
    patch: usize,
) -> Result<LossTerms> {
    weights.validate()?;
    let target = g.constant(targets.topology.clone())?;
    let pixel = pixel_loss(g, pred, target)?;
    let vf = vf_loss(g, pred, &targets.vf)?;
    let load = load_discrepancy_loss(g, pred, &targets.load)?;
    let fm = floating_material_loss(g, pred, &targets.load, FM_THRESHOLD)?;
    let mask = match weights.mask {
        Some(_) => Some(masked_pixel_loss(g, pred, target, masked, patch)?),
        None => None,
    };
    let mut terms = vec![
        (weights.pixel, pixel),
        (weights.vf, vf),
        (weights.load, load),
        (weights.fm, fm),
    ];
    if let (Some(w), Some(m)) = (weights.mask, mask) {
        terms.push((w, m));
    }
    let mut total: Option<Var> = None;
    for (w, v) in terms.into_iter().filter(|(w, _)| *w != 0.0) {
        let t = if w == 1.0 { v } else { g.scale(v, w)? };
        total = Some(match total {
            Some(acc) => g.add(acc, t)?,
            None => t,
        });
    }
    let total = match total {
        Some(t) => t,
        None => g.scale(pixel, 0.0)?,
    };
    Ok(LossTerms {
        pixel,
        vf,
        load,
        fm,
        mask,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(g: &mut Graph, b: usize, h: usize, w: usize, v: f64) -> Var {
        g.leaf(Tensor::full(&[b, h, w], v)).unwrap()
    }

    fn value(g: &Graph, v: Var) -> f64 {
        g.value(v).item().unwrap()
    }

    #[test]
    fn pixel_closed_forms() {
        let mut g = Graph::new();
        let p = pred(&mut g, 2, 4, 4, 0.0);
        let t = g.constant(Tensor::full(&[2, 4, 4], 1.0)).unwrap();
        let l = pixel_loss(&mut g, p, t).unwrap();
        assert_eq!(value(&g, l), 1.0);
        let l = pixel_loss(&mut g, t, t).unwrap();
        assert_eq!(value(&g, l), 0.0);
        let bad = g.constant(Tensor::zeros(&[2, 4, 3])).unwrap();
        assert!(pixel_loss(&mut g, p, bad).is_err());
    }

    #[test]
    fn vf_closed_forms_and_gradient() {
        let mut g = Graph::new();
        let ones = pred(&mut g, 1, 4, 4, 1.0);
        let l = vf_loss(&mut g, ones, &[0.4]).unwrap();
        assert_eq!(value(&g, l), 0.6);
        let zeros = pred(&mut g, 1, 4, 4, 0.0);
        let l0 = vf_loss(&mut g, zeros, &[0.3]).unwrap();
        assert_eq!(value(&g, l0), 0.3);
        let same = pred(&mut g, 1, 4, 4, 0.25);
        let l = vf_loss(&mut g, same, &[0.25]).unwrap();
        assert_eq!(value(&g, l), 0.0);
        g.backward(l0).unwrap();
        // mean(pred) = 0 < f: the gradient pushes density up.
        assert!(g.grad(zeros).unwrap().iter().all(|&d| d == -1.0 / 16.0));
    }

    #[test]
    fn load_closed_forms() {
        let mut g = Graph::new();
        for (v, want) in [(1.0, 0.0), (0.0, 1.0), (0.5, 0.5)] {
            let p = pred(&mut g, 1, 4, 4, 0.25);
            let mut t = g.value(p).clone();
            t.data_mut()[5] = v;
            let p = g.leaf(t).unwrap();
            let l = load_discrepancy_loss(&mut g, p, &[5]).unwrap();
            assert_eq!(value(&g, l), want);
        }
    }

    #[test]
    fn floating_closed_forms() {
        let mut g = Graph::new();
        let mut t = Tensor::zeros(&[1, 4, 4]);
        for y in 0..4 {
            t.data_mut()[y * 4] = 1.0;
            t.data_mut()[y * 4 + 3] = 1.0;
        }
        let p = g.leaf(t).unwrap();
        let l = floating_material_loss(&mut g, p, &[0], FM_THRESHOLD).unwrap();
        assert_eq!(value(&g, l), 0.5);
        let solid = pred(&mut g, 1, 4, 4, 1.0);
        let l = floating_material_loss(&mut g, solid, &[3], FM_THRESHOLD).unwrap();
        assert_eq!(value(&g, l), 0.0);
        let void = pred(&mut g, 1, 4, 4, 0.0);
        let l = floating_material_loss(&mut g, void, &[3], FM_THRESHOLD).unwrap();
        assert_eq!(value(&g, l), 1.0);
    }

    #[test]
    fn pixel_only_weights_reproduce_pixel_loss() {
        let mut g = Graph::new();
        let p = g
            .leaf(Tensor::from_fn(&[2, 4, 4], |i| {
                (i as f64 * 0.37).sin().abs()
            }))
            .unwrap();
        let targets = Targets {
            topology: Tensor::from_fn(&[2, 4, 4], |i| (i % 3 == 0) as u8 as f64),
            vf: vec![0.3, 0.5],
            load: vec![0, 7],
        };
        let t = total_loss(
            &mut g,
            p,
            &targets,
            &LossWeights::pixel_only(),
            &[vec![], vec![]],
            2,
        )
        .unwrap();
        assert_eq!(t.total, t.pixel);
        let t = total_loss(
            &mut g,
            p,
            &targets,
            &LossWeights::default(),
            &[vec![], vec![]],
            2,
        )
        .unwrap();
        let v = t.values(&g).unwrap();
        let want = v.pixel + 0.1 * v.vf + 0.1 * v.load + 0.1 * v.fm;
        assert!((v.total - want).abs() < 1e-15);
    }

    #[test]
    fn masked_loss_covers_masked_patches_only() {
        let mut g = Graph::new();
        let p = pred(&mut g, 1, 4, 4, 0.0);
        let mut t = Tensor::zeros(&[1, 4, 4]);
        // Patch 1 (top right) differs; patch 2 (bottom left) matches.
        for (y, x) in [(0, 2), (0, 3), (1, 2), (1, 3)] {
            t.data_mut()[y * 4 + x] = 1.0;
        }
        let t = g.constant(t).unwrap();
        let hit = masked_pixel_loss(&mut g, p, t, &[vec![1]], 2).unwrap();
        assert_eq!(value(&g, hit), 1.0);
        let miss = masked_pixel_loss(&mut g, p, t, &[vec![2]], 2).unwrap();
        assert_eq!(value(&g, miss), 0.0);
    }
}
