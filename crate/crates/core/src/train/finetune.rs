use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{train_subset, TrainConfig, TrainOutcome, TrainOutputs};
use crate::autodiff::Tensor;
use crate::dataset::Dataset;
use crate::problem::{ProblemKind, DYNAMIC_COND_DIM, STATIC_COND_DIM};
use crate::vit::ViT;
use crate::{Error, Result};

/// Blocks counted as decoder layers, from the end of the stack.
pub const DECODER_LAYER_BLOCKS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinetuneGroup {
    /// The condition MLP producing the class token.
    ClassProjection,
    /// The per-token output projection.
    DecoderProjection,
    /// The last transformer blocks and the final norm, plus both projections.
    DecoderLayers,
}

impl FinetuneGroup {
    pub const ALL: [FinetuneGroup; 3] = [
        FinetuneGroup::ClassProjection,
        FinetuneGroup::DecoderProjection,
        FinetuneGroup::DecoderLayers,
    ];

    fn as_str(self) -> &'static str {
        match self {
            FinetuneGroup::ClassProjection => "class_projection",
            FinetuneGroup::DecoderProjection => "decoder_projection",
            FinetuneGroup::DecoderLayers => "decoder_layers",
        }
    }

    fn contains(self, name: &str, layers: usize) -> bool {
        let class = name.starts_with("cls.");
        let decoder = name.starts_with("decoder.");
        match self {
            FinetuneGroup::ClassProjection => class,
            FinetuneGroup::DecoderProjection => decoder,
            FinetuneGroup::DecoderLayers => {
                let late = name
                    .strip_prefix("blocks.")
                    .and_then(|r| r.split('.').next())
                    .and_then(|i| i.parse::<usize>().ok())
                    .is_some_and(|i| i + DECODER_LAYER_BLOCKS >= layers);
                class || decoder || late || name.starts_with("final_ln.")
            }
        }
    }
}

impl fmt::Display for FinetuneGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FinetuneGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FinetuneGroup::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown fine-tune group {s:?}")))
    }
}

/// A nonempty set of fine-tune groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinetuneGroups(BTreeSet<FinetuneGroup>);

impl FinetuneGroups {
    pub fn new(groups: impl IntoIterator<Item = FinetuneGroup>) -> Result<Self> {
        let set: BTreeSet<_> = groups.into_iter().collect();
        if set.is_empty() {
            return Err(Error::InvalidArgument(
                "fine-tuning needs at least one group".into(),
            ));
        }
        Ok(FinetuneGroups(set))
    }

    /// Comma-separated group names.
    pub fn parse(s: &str) -> Result<Self> {
        let groups: Vec<FinetuneGroup> = s
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(str::parse)
            .collect::<Result<_>>()?;
        FinetuneGroups::new(groups)
    }

    pub fn iter(&self) -> impl Iterator<Item = FinetuneGroup> + '_ {
        self.0.iter().copied()
    }

    /// Whether parameter `name` of a model with `layers` blocks is trained.
    pub fn contains(&self, name: &str, layers: usize) -> bool {
        self.0.iter().any(|g| g.contains(name, layers))
    }
}

/// Widen the class projection from static to dynamic conditioning. The new
/// input rows are zero, so a zero FFT block reproduces the static model.
/// Models already taking dynamic conditions are returned unchanged.
pub fn widen_for_dynamic(base: &ViT) -> Result<ViT> {
    match base.cfg.cond_dim {
        DYNAMIC_COND_DIM => return Ok(base.clone()),
        STATIC_COND_DIM => {}
        other => {
            return Err(Error::Schema(format!(
                "cannot widen a model with {other} condition inputs (expected {STATIC_COND_DIM})"
            )))
        }
    }
    let mut m = base.clone();
    let id = m.params.id("cls.w1")?;
    let d = m.cfg.hidden;
    let mut w = m.params.get(id).data().to_vec();
    w.resize(DYNAMIC_COND_DIM * d, 0.0);
    m.params.set(id, Tensor::new(&[DYNAMIC_COND_DIM, d], w)?);
    m.cfg.cond_dim = DYNAMIC_COND_DIM;
    ViT::from_params(&m.cfg, m.params)
}

/// Transfer `base` to dynamic data, training only `groups`.
pub fn finetune(
    base: &ViT,
    groups: &FinetuneGroups,
    data: &Dataset,
    cfg: &TrainConfig,
    out: Option<&TrainOutputs>,
) -> Result<TrainOutcome> {
    if data.kind() != ProblemKind::Dynamic {
        return Err(Error::Schema(format!(
            "fine-tuning expects dynamic data, got {}",
            data.kind()
        )));
    }
    let model = widen_for_dynamic(base)?;
    let layers = model.cfg.layers;
    train_subset(cfg, model, data, out, |name| groups.contains(name, layers))
}
