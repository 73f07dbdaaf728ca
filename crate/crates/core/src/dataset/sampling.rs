use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::fea::{check_constraints, fixed_dofs, Grid};
use crate::problem::{BoundarySpec, LoadShape, PointLoad, ProblemKind, ProblemSpec, N_SITES};
use crate::Result;

/// Ranges the problem sampler draws from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub grid: Grid,
    pub vf_min: f64,
    pub vf_max: f64,
    pub magnitude: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            grid: Grid { nelx: 64, nely: 64 },
            vf_min: 0.3,
            vf_max: 0.5,
            magnitude: 1.0,
        }
    }
}

/// Seed of sample `index`, retry `attempt`, under `base`.
pub fn derive_seed(base: u64, index: u64, attempt: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(mix(base) ^ index) ^ attempt.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Draw one problem.
///
/// The fixture count is drawn first; subsets of that size are redrawn until
/// they pin the structure (no free rigid-body mode) and leave the loaded
/// nodes free.
pub fn sample_problem(seed: u64, kind: ProblemKind, cfg: &SamplerConfig) -> Result<ProblemSpec> {
    let grid = cfg.grid;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let boundary = grid.boundary_elements();
    let (ex, ey) = boundary[rng.random_range(0..boundary.len())];
    let angle = rng.random_range(0..6u8);
    let load = PointLoad::from_angle(ex, ey, angle, cfg.magnitude)?;
    let load_nodes: Vec<usize> = load.load_nodes(&grid).into_iter().map(|(n, _)| n).collect();
    let count = rng.random_range(1..=4usize);
    let bc = loop {
        let mut sites: Vec<usize> = (0..N_SITES).collect();
        let mut chosen = Vec::with_capacity(count);
        for _ in 0..count {
            let k = rng.random_range(0..sites.len());
            chosen.push(sites.swap_remove(k));
        }
        let bc = BoundarySpec::from_sites(&chosen)?;
        let nodes = bc.fixed_nodes(&grid);
        if load_nodes.iter().any(|n| nodes.binary_search(n).is_ok()) {
            continue;
        }
        if check_constraints(&grid, &fixed_dofs(&grid, &bc)).is_ok() {
            break bc;
        }
    };
    let vf = rng.random_range(cfg.vf_min..=cfg.vf_max);
    let shape = match kind {
        ProblemKind::Static => None,
        ProblemKind::Dynamic => Some(if rng.random_bool(0.5) {
            LoadShape::Sine
        } else {
            LoadShape::Impulse
        }),
    };
    Ok(ProblemSpec {
        grid,
        bc,
        load,
        vf,
        shape,
    })
}
