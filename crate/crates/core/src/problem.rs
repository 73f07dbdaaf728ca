//! Problem definitions shared by the optimizers, the dataset and the model:
//! fixture sites, point loads, temporal load shapes and the condition vector.

use serde::{Deserialize, Serialize};

use crate::fea::Grid;
use crate::{Error, Result};

/// Number of canonical fixture sites on the domain boundary.
pub const N_SITES: usize = 16;

/// Static condition vector length: position (2), direction (2), magnitude,
/// 16 fixture bits, volume fraction.
pub const STATIC_COND_DIM: usize = 22;
/// Number of FFT amplitudes appended for dynamic problems.
pub const N_FFT: usize = 10;
pub const DYNAMIC_COND_DIM: usize = STATIC_COND_DIM + N_FFT;

/// Named fixture sites, in bit order.
///
/// Corners `0..4` (TL, TR, BR, BL), edge midpoints `4..8` (top, right,
/// bottom, left) and the eight half-edge node runs `8..16` walking clockwise
/// from the top-left corner. Runs include both of their end nodes.
pub const SITE_NAMES: [&str; N_SITES] = [
    "corner_tl",
    "corner_tr",
    "corner_br",
    "corner_bl",
    "mid_top",
    "mid_right",
    "mid_bottom",
    "mid_left",
    "run_tl_top",
    "run_top_tr",
    "run_tr_right",
    "run_right_br",
    "run_br_bottom",
    "run_bottom_bl",
    "run_bl_left",
    "run_left_tl",
];

/// Node coordinates `(ix, iy)` of fixture site `site`.
pub fn site_nodes(grid: &Grid, site: usize) -> Vec<(usize, usize)> {
    let (w, h) = (grid.nelx, grid.nely);
    let (mx, my) = (w / 2, h / 2);
    match site {
        0 => vec![(0, 0)],
        1 => vec![(w, 0)],
        2 => vec![(w, h)],
        3 => vec![(0, h)],
        4 => vec![(mx, 0)],
        5 => vec![(w, my)],
        6 => vec![(mx, h)],
        7 => vec![(0, my)],
        8 => (0..=mx).map(|x| (x, 0)).collect(),
        9 => (mx..=w).map(|x| (x, 0)).collect(),
        10 => (0..=my).map(|y| (w, y)).collect(),
        11 => (my..=h).map(|y| (w, y)).collect(),
        12 => (mx..=w).map(|x| (x, h)).collect(),
        13 => (0..=mx).map(|x| (x, h)).collect(),
        14 => (my..=h).map(|y| (0, y)).collect(),
        15 => (0..=my).map(|y| (0, y)).collect(),
        _ => Vec::new(),
    }
}

/// A set of fixture sites, each clamping both DOFs of its nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundarySpec {
    pub mask: u16,
}

impl BoundarySpec {
    pub fn from_sites(sites: &[usize]) -> Result<Self> {
        let mut mask = 0u16;
        for &s in sites {
            if s >= N_SITES {
                return Err(Error::InvalidArgument(format!(
                    "fixture site {s} out of range"
                )));
            }
            mask |= 1 << s;
        }
        let bc = BoundarySpec { mask };
        bc.validate()?;
        Ok(bc)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.count();
        if !(1..=4).contains(&n) {
            return Err(Error::InvalidArgument(format!(
                "between 1 and 4 fixture sites required, got {n}"
            )));
        }
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn sites(&self) -> Vec<usize> {
        (0..N_SITES).filter(|s| self.mask & (1 << s) != 0).collect()
    }

    /// Distinct fixed node ids, sorted.
    pub fn fixed_nodes(&self, grid: &Grid) -> Vec<usize> {
        let mut nodes: Vec<usize> = self
            .sites()
            .into_iter()
            .flat_map(|s| site_nodes(grid, s))
            .map(|(ix, iy)| grid.node(ix, iy))
            .collect();
        nodes.sort_unstable();
        nodes.dedup();
        nodes
    }

    pub fn bits(&self) -> [f64; N_SITES] {
        let mut out = [0.0; N_SITES];
        for (s, o) in out.iter_mut().enumerate() {
            if self.mask & (1 << s) != 0 {
                *o = 1.0;
            }
        }
        out
    }
}

/// Point load attached to a boundary element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointLoad {
    pub ex: usize,
    pub ey: usize,
    /// Force components, physical y axis pointing up.
    pub fx: f64,
    pub fy: f64,
    /// Index into the six sampled directions, when the load came from the sampler.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle_index: Option<u8>,
}

impl PointLoad {
    /// Direction `theta = 60 deg * angle_index`.
    pub fn from_angle(ex: usize, ey: usize, angle_index: u8, magnitude: f64) -> Result<Self> {
        if angle_index > 5 {
            return Err(Error::InvalidArgument(format!(
                "angle index must be in 0..6, got {angle_index}"
            )));
        }
        let theta = (60.0 * angle_index as f64).to_radians();
        Ok(PointLoad {
            ex,
            ey,
            fx: magnitude * theta.cos(),
            fy: magnitude * theta.sin(),
            angle_index: Some(angle_index),
        })
    }

    pub fn magnitude(&self) -> f64 {
        self.fx.hypot(self.fy)
    }

    pub fn element(&self, grid: &Grid) -> usize {
        grid.element_index(self.ex, self.ey)
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if self.ex >= grid.nelx || self.ey >= grid.nely {
            return Err(Error::InvalidArgument(format!(
                "load element ({}, {}) outside {}x{} grid",
                self.ex, self.ey, grid.nelx, grid.nely
            )));
        }
        if !grid.is_boundary_element(self.ex, self.ey) {
            return Err(Error::InvalidArgument(format!(
                "load element ({}, {}) is not on the boundary",
                self.ex, self.ey
            )));
        }
        if !(self.fx.is_finite() && self.fy.is_finite()) {
            return Err(Error::NonFinite("load components".into()));
        }
        Ok(())
    }

    /// Nodes that receive the load, with their share of it.
    ///
    /// Corner elements load the domain corner node. Other boundary elements
    /// split the load evenly over the two nodes of their boundary edge.
    pub fn load_nodes(&self, grid: &Grid) -> Vec<(usize, f64)> {
        let (ex, ey) = (self.ex, self.ey);
        let (w, h) = (grid.nelx, grid.nely);
        let on_left = ex == 0;
        let on_right = ex + 1 == w;
        let on_top = ey == 0;
        let on_bottom = ey + 1 == h;
        if (on_left || on_right) && (on_top || on_bottom) {
            let ix = if on_left { 0 } else { w };
            let iy = if on_top { 0 } else { h };
            return vec![(grid.node(ix, iy), 1.0)];
        }
        let pair = if on_top {
            [(ex, 0), (ex + 1, 0)]
        } else if on_bottom {
            [(ex, h), (ex + 1, h)]
        } else if on_left {
            [(0, ey), (0, ey + 1)]
        } else {
            [(w, ey), (w, ey + 1)]
        };
        pair.iter()
            .map(|&(ix, iy)| (grid.node(ix, iy), 0.5))
            .collect()
    }

    /// Nodal forces `(node, fx, fy)`.
    pub fn nodal_forces(&self, grid: &Grid) -> Vec<(usize, f64, f64)> {
        self.load_nodes(grid)
            .into_iter()
            .map(|(n, w)| (n, w * self.fx, w * self.fy))
            .collect()
    }
}

/// Temporal magnitude function `g(t)` on `[0, 1]` s.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadShape {
    /// `sin(2 pi t)`
    Sine,
    /// `(t / 0.25) exp(1 - t / 0.25)`, peaking at one when `t = 0.25`.
    Impulse,
    /// Constant one.
    Step,
    /// `t`
    Ramp,
}

impl LoadShape {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            LoadShape::Sine => (2.0 * std::f64::consts::PI * t).sin(),
            LoadShape::Impulse => (t / 0.25) * (1.0 - t / 0.25).exp(),
            LoadShape::Step => 1.0,
            LoadShape::Ramp => t,
        }
    }

    pub fn code(&self) -> u32 {
        match self {
            LoadShape::Sine => 1,
            LoadShape::Impulse => 2,
            LoadShape::Step => 3,
            LoadShape::Ramp => 4,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            1 => Some(LoadShape::Sine),
            2 => Some(LoadShape::Impulse),
            3 => Some(LoadShape::Step),
            4 => Some(LoadShape::Ramp),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Static,
    Dynamic,
}

impl std::fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProblemKind::Static => "static",
            ProblemKind::Dynamic => "dynamic",
        })
    }
}

impl std::str::FromStr for ProblemKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(ProblemKind::Static),
            "dynamic" => Ok(ProblemKind::Dynamic),
            other => Err(Error::InvalidArgument(format!(
                "unknown problem kind {other:?}"
            ))),
        }
    }
}

/// One topology optimization problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub grid: Grid,
    pub bc: BoundarySpec,
    pub load: PointLoad,
    /// Target volume fraction.
    pub vf: f64,
    /// Temporal shape for dynamic problems; `None` for static ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<LoadShape>,
}

impl ProblemSpec {
    pub fn kind(&self) -> ProblemKind {
        if self.shape.is_some() {
            ProblemKind::Dynamic
        } else {
            ProblemKind::Static
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.bc.validate()?;
        self.load.validate(&self.grid)?;
        if !(self.vf > 0.0 && self.vf < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "volume fraction must lie in (0, 1), got {}",
                self.vf
            )));
        }
        Ok(())
    }

    /// The 22 static condition scalars.
    pub fn static_condition(&self) -> [f64; STATIC_COND_DIM] {
        let g = &self.grid;
        let mut c = [0.0; STATIC_COND_DIM];
        c[0] = (self.load.ex as f64 + 0.5) / g.nelx as f64;
        c[1] = (self.load.ey as f64 + 0.5) / g.nely as f64;
        let mag = self.load.magnitude();
        if mag > 0.0 {
            c[2] = self.load.fx / mag;
            c[3] = self.load.fy / mag;
        }
        c[4] = mag;
        c[5..21].copy_from_slice(&self.bc.bits());
        c[21] = self.vf;
        c
    }

    /// Condition vector: the static scalars, followed by `fft` for dynamic models.
    pub fn condition_vector(&self, fft: Option<&[f64]>) -> Result<Vec<f64>> {
        let mut c = self.static_condition().to_vec();
        if let Some(f) = fft {
            if f.len() != N_FFT {
                return Err(Error::Dimension {
                    what: "fft features",
                    expected: N_FFT,
                    actual: f.len(),
                });
            }
            c.extend_from_slice(f);
        }
        Ok(c)
    }
}
