use serde::{Deserialize, Serialize};

use crate::fea::Grid;
use crate::{Error, Result};

/// Per-element density image, row-major with `ey = 0` the top row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityField {
    pub nelx: usize,
    pub nely: usize,
    pub values: Vec<f64>,
}

impl DensityField {
    pub fn uniform(grid: &Grid, value: f64) -> Self {
        DensityField {
            nelx: grid.nelx,
            nely: grid.nely,
            values: vec![value; grid.n_elements()],
        }
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_elements() {
            return Err(Error::Dimension {
                what: "density field",
                expected: grid.n_elements(),
                actual: values.len(),
            });
        }
        Ok(DensityField {
            nelx: grid.nelx,
            nely: grid.nely,
            values,
        })
    }

    pub fn grid(&self) -> Grid {
        Grid {
            nelx: self.nelx,
            nely: self.nely,
        }
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        if self.nelx != grid.nelx || self.nely != grid.nely {
            return Err(Error::shape(
                "density field",
                &[self.nely, self.nelx],
                &[grid.nely, grid.nelx],
            ));
        }
        Ok(())
    }

    pub fn check_range(&self) -> Result<()> {
        if let Some(v) = self.values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "density {v} outside [0, 1]"
            )));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    #[inline]
    pub fn at(&self, ex: usize, ey: usize) -> f64 {
        self.values[ey * self.nelx + ex]
    }

    pub fn is_binary(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0 || v == 1.0)
    }
}
