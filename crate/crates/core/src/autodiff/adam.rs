use serde::{Deserialize, Serialize};

use super::{ParamId, Parameters};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments per parameter, plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &Parameters) -> Self {
        AdamState {
            step: 0,
            m: params.iter().map(|(_, _, t)| vec![0.0; t.len()]).collect(),
            v: params.iter().map(|(_, _, t)| vec![0.0; t.len()]).collect(),
        }
    }
}

/// One bias-corrected Adam step. Parameters whose gradient is `None` are left
/// untouched, moments included.
pub fn adam_step(
    params: &mut Parameters,
    grads: &[Option<&[f64]>],
    state: &mut AdamState,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::Dimension {
            what: "adam gradients",
            expected: params.len(),
            actual: grads.len(),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (i, g) in grads.iter().enumerate() {
        let Some(g) = g else { continue };
        let p = params.get_mut(ParamId(i));
        if g.len() != p.len() || state.m[i].len() != p.len() {
            return Err(Error::shape("adam_step", &[p.len()], &[g.len()]));
        }
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        let data = p.data_mut();
        for j in 0..data.len() {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            data[j] -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + cfg.eps);
        }
    }
    Ok(())
}
