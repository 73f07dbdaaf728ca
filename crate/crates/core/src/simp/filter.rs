use crate::fea::Grid;
use crate::{Error, Result};

/// Floor on the element density in the filter denominator.
pub const FILTER_GAMMA: f64 = 1e-3;

/// Density-weighted sensitivity filter with linear hat weights
/// `H_ej = max(0, r_min - dist(e, j))`.
#[derive(Debug, Clone)]
pub struct SensitivityFilter {
    rmin: f64,
    /// Per element: neighbors `(j, H_ej)` and the weight sum.
    neighbors: Vec<Vec<(u32, f64)>>,
    sums: Vec<f64>,
}

impl SensitivityFilter {
    pub fn new(grid: &Grid, rmin: f64) -> Result<Self> {
        if !(rmin > 0.0 && rmin.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "filter radius must be positive, got {rmin}"
            )));
        }
        let reach = rmin.ceil() as isize - 1;
        let (w, h) = (grid.nelx as isize, grid.nely as isize);
        let mut neighbors = Vec::with_capacity(grid.n_elements());
        let mut sums = Vec::with_capacity(grid.n_elements());
        for ey in 0..h {
            for ex in 0..w {
                let mut row = Vec::new();
                let mut sum = 0.0;
                for jy in (ey - reach).max(0)..=(ey + reach).min(h - 1) {
                    for jx in (ex - reach).max(0)..=(ex + reach).min(w - 1) {
                        let d = (((ex - jx).pow(2) + (ey - jy).pow(2)) as f64).sqrt();
                        let wgt = rmin - d;
                        if wgt > 0.0 {
                            row.push(((jy * w + jx) as u32, wgt));
                            sum += wgt;
                        }
                    }
                }
                neighbors.push(row);
                sums.push(sum);
            }
        }
        Ok(SensitivityFilter {
            rmin,
            neighbors,
            sums,
        })
    }

    pub fn rmin(&self) -> f64 {
        self.rmin
    }

    /// `dc_e <- sum_j H_ej rho_j dc_j / (max(gamma, rho_e) sum_j H_ej)`.
    pub fn apply(&self, density: &[f64], sens: &[f64]) -> Result<Vec<f64>> {
        let n = self.sums.len();
        if density.len() != n || sens.len() != n {
            return Err(Error::Dimension {
                what: "filter input",
                expected: n,
                actual: density.len().min(sens.len()),
            });
        }
        Ok((0..n)
            .map(|e| {
                let acc: f64 = self.neighbors[e]
                    .iter()
                    .map(|&(j, h)| h * density[j as usize] * sens[j as usize])
                    .sum();
                acc / (density[e].max(FILTER_GAMMA) * self.sums[e])
            })
            .collect())
    }
}

/// One-shot convenience wrapper around [`SensitivityFilter`].
pub fn filter_sensitivities(
    grid: &Grid,
    density: &[f64],
    sens: &[f64],
    rmin: f64,
) -> Result<Vec<f64>> {
    SensitivityFilter::new(grid, rmin)?.apply(density, sens)
}
