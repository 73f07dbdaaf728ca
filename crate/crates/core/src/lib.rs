//! Topology optimization ground-truth generation (static and transient SIMP)
//! and a vision-transformer surrogate that predicts optimized density maps
//! from physics field images in one forward pass.

// `!(x > 0.0)` rejects NaN along with the failing range; index loops mirror
// the matrix formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

mod error;

pub mod autodiff;
pub mod dataset;
pub mod density;
pub mod dynamic;
pub mod eval;
pub mod fea;
pub mod losses;
pub mod problem;
pub mod simp;
pub mod train;
pub mod vit;

pub use density::DensityField;
pub use error::{Error, Result};
pub use fea::{FieldImage, Grid, Material};
pub use problem::{BoundarySpec, LoadShape, PointLoad, ProblemKind, ProblemSpec};
