use crate::density::DensityField;
use crate::fea::{FieldImage, Grid};
use crate::problem::{site_nodes, BoundarySpec, PointLoad, ProblemSpec, N_SITES};
use crate::{Error, Result};

use super::Sample;

/// Elements of the dihedral group acting on the design domain. Matrices act on
/// physical coordinates (x right, y up) measured from the domain center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Transform {
    Identity,
    /// Counter-clockwise quarter turn.
    Rot90,
    Rot180,
    Rot270,
    /// `x -> -x`.
    MirrorX,
    /// `y -> -y`.
    MirrorY,
    /// Reflection across `y = x`.
    Diagonal,
    /// Reflection across `y = -x`.
    AntiDiagonal,
}

impl Transform {
    pub const ALL: [Transform; 8] = [
        Transform::Identity,
        Transform::Rot90,
        Transform::Rot180,
        Transform::Rot270,
        Transform::MirrorX,
        Transform::MirrorY,
        Transform::Diagonal,
        Transform::AntiDiagonal,
    ];

    pub fn matrix(self) -> [[i64; 2]; 2] {
        match self {
            Transform::Identity => [[1, 0], [0, 1]],
            Transform::Rot90 => [[0, -1], [1, 0]],
            Transform::Rot180 => [[-1, 0], [0, -1]],
            Transform::Rot270 => [[0, 1], [-1, 0]],
            Transform::MirrorX => [[-1, 0], [0, 1]],
            Transform::MirrorY => [[1, 0], [0, -1]],
            Transform::Diagonal => [[0, 1], [1, 0]],
            Transform::AntiDiagonal => [[0, -1], [-1, 0]],
        }
    }

    /// Whether the transform swaps the grid axes.
    pub fn swaps_axes(self) -> bool {
        self.matrix()[0][0] == 0
    }

    /// Image of a sampled direction index under the transform, when it stays
    /// on the 60 degree lattice.
    fn map_angle(self, idx: u8) -> Option<u8> {
        let i = idx as i32;
        let j = match self {
            Transform::Identity => i,
            Transform::Rot180 => i + 3,
            Transform::MirrorX => 3 - i,
            Transform::MirrorY => -i,
            _ => return None,
        };
        Some(j.rem_euclid(6) as u8)
    }

    fn apply(self, x: i64, y: i64) -> (i64, i64) {
        let m = self.matrix();
        (m[0][0] * x + m[0][1] * y, m[1][0] * x + m[1][1] * y)
    }

    fn check_grid(self, grid: &Grid) -> Result<()> {
        if self.swaps_axes() && grid.nelx != grid.nely {
            return Err(Error::InvalidArgument(format!(
                "{self:?} needs a square grid, got {}x{}",
                grid.nelx, grid.nely
            )));
        }
        Ok(())
    }

    /// Image of element `(ex, ey)`.
    pub fn element(self, grid: &Grid, ex: usize, ey: usize) -> (usize, usize) {
        let (w, h) = (grid.nelx as i64, grid.nely as i64);
        let (x, y) = self.apply(2 * ex as i64 + 1 - w, h - 2 * ey as i64 - 1);
        (((x + w - 1) / 2) as usize, ((h - 1 - y) / 2) as usize)
    }

    /// Image of node `(ix, iy)`.
    pub fn node(self, grid: &Grid, ix: usize, iy: usize) -> (usize, usize) {
        let (w, h) = (grid.nelx as i64, grid.nely as i64);
        let (x, y) = self.apply(2 * ix as i64 - w, h - 2 * iy as i64);
        (((x + w) / 2) as usize, ((h - y) / 2) as usize)
    }

    /// Permute a per-element image.
    pub fn image(self, grid: &Grid, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; values.len()];
        for ey in 0..grid.nely {
            for ex in 0..grid.nelx {
                let (tx, ty) = self.element(grid, ex, ey);
                out[ty * grid.nelx + tx] = values[ey * grid.nelx + ex];
            }
        }
        out
    }

    pub fn density(self, d: &DensityField) -> Result<DensityField> {
        let g = d.grid();
        self.check_grid(&g)?;
        DensityField::from_values(&g, self.image(&g, &d.values))
    }

    pub fn fields(self, f: &FieldImage) -> Result<FieldImage> {
        let g = f.grid();
        self.check_grid(&g)?;
        Ok(FieldImage {
            nelx: g.nelx,
            nely: g.nely,
            sed: self.image(&g, &f.sed),
            vm: self.image(&g, &f.vm),
        })
    }

    /// Fixture sites mapped site by site. Fails when some site's image is not
    /// itself a site, which happens on odd grids where midpoints are off-center.
    pub fn boundary(self, grid: &Grid, bc: &BoundarySpec) -> Result<BoundarySpec> {
        let canon = |nodes: Vec<(usize, usize)>| {
            let mut v = nodes;
            v.sort_unstable();
            v
        };
        let table: Vec<Vec<(usize, usize)>> =
            (0..N_SITES).map(|s| canon(site_nodes(grid, s))).collect();
        let mut mask = 0u16;
        for s in bc.sites() {
            let image = canon(
                site_nodes(grid, s)
                    .into_iter()
                    .map(|(ix, iy)| self.node(grid, ix, iy))
                    .collect(),
            );
            let t = table.iter().position(|n| *n == image).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "{self:?} does not map fixture site {s} onto a site"
                ))
            })?;
            mask |= 1 << t;
        }
        Ok(BoundarySpec { mask })
    }

    pub fn load(self, grid: &Grid, load: &PointLoad) -> PointLoad {
        let (ex, ey) = self.element(grid, load.ex, load.ey);
        let m = self.matrix();
        let (a, b, c, d) = (
            m[0][0] as f64,
            m[0][1] as f64,
            m[1][0] as f64,
            m[1][1] as f64,
        );
        // Entries are 0 or +-1, so every product below is exact.
        let fx = if b == 0.0 { a * load.fx } else { b * load.fy };
        let fy = if c == 0.0 { d * load.fy } else { c * load.fx };
        PointLoad {
            ex,
            ey,
            fx,
            fy,
            angle_index: load.angle_index.and_then(|i| self.map_angle(i)),
        }
    }

    pub fn spec(self, spec: &ProblemSpec) -> Result<ProblemSpec> {
        self.check_grid(&spec.grid)?;
        Ok(ProblemSpec {
            grid: spec.grid,
            bc: self.boundary(&spec.grid, &spec.bc)?,
            load: self.load(&spec.grid, &spec.load),
            vf: spec.vf,
            shape: spec.shape,
        })
    }

    pub fn sample(self, s: &Sample) -> Result<Sample> {
        Ok(Sample {
            seed: s.seed,
            spec: self.spec(&s.spec)?,
            fields: self.fields(&s.fields)?,
            topology: self.density(&s.topology)?,
            gt_compliance: s.gt_compliance,
            fft: s.fft,
            threshold: s.threshold,
            iterations: s.iterations,
        })
    }
}

/// The transforms applicable to `grid`: all eight on square grids, the four
/// axis-preserving ones otherwise.
pub fn transforms_for(grid: &Grid) -> Vec<Transform> {
    Transform::ALL
        .into_iter()
        .filter(|t| grid.nelx == grid.nely || !t.swaps_axes())
        .collect()
}

/// All admissible dihedral images of `sample`, identity first. Transforms that
/// cannot map the fixture sites are skipped.
pub fn augment(sample: &Sample) -> Vec<Sample> {
    transforms_for(&sample.spec.grid)
        .into_iter()
        .filter_map(|t| t.sample(sample).ok())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize) -> ProblemSpec {
        let grid = Grid::new(n, n).unwrap();
        ProblemSpec {
            grid,
            bc: BoundarySpec::from_sites(&[0, 14]).unwrap(),
            load: PointLoad::from_angle(n - 1, 2, 2, 1.0).unwrap(),
            vf: 0.4,
            shape: None,
        }
    }

    #[test]
    fn element_and_node_maps_are_consistent() {
        let g = Grid::new(6, 6).unwrap();
        for t in Transform::ALL {
            for ey in 0..6 {
                for ex in 0..6 {
                    let (tx, ty) = t.element(&g, ex, ey);
                    let mut mapped: Vec<_> = g
                        .element_nodes(ex, ey)
                        .iter()
                        .map(|&n| {
                            let (ix, iy) = g.node_coords(n);
                            g.node(t.node(&g, ix, iy).0, t.node(&g, ix, iy).1)
                        })
                        .collect();
                    let mut target = g.element_nodes(tx, ty).to_vec();
                    mapped.sort_unstable();
                    target.sort_unstable();
                    assert_eq!(mapped, target, "{t:?} at ({ex}, {ey})");
                }
            }
        }
    }

    #[test]
    fn mirror_negates_fx() {
        let s = spec(8);
        let m = Transform::MirrorX.spec(&s).unwrap();
        assert_eq!(m.load.fx, -s.load.fx);
        assert_eq!(m.load.fy, s.load.fy);
        assert_eq!(m.load.ex, 0);
        assert_eq!(m.load.angle_index, Some(1));
        assert_eq!(m.bc.sites(), vec![1, 11]);
    }

    #[test]
    fn quarter_turn_leaves_angle_lattice() {
        let s = spec(8);
        let r = Transform::Rot90.spec(&s).unwrap();
        assert_eq!(r.load.angle_index, None);
        assert!((r.load.magnitude() - 1.0).abs() < 1e-15);
        r.validate().unwrap();
    }

    #[test]
    fn rectangular_grid_gets_four_transforms() {
        assert_eq!(transforms_for(&Grid::new(8, 4).unwrap()).len(), 4);
        assert_eq!(transforms_for(&Grid::new(8, 8).unwrap()).len(), 8);
    }

    #[test]
    fn odd_grid_midpoints_do_not_map() {
        let grid = Grid::new(5, 5).unwrap();
        let bc = BoundarySpec::from_sites(&[4]).unwrap();
        assert!(Transform::MirrorX.boundary(&grid, &bc).is_err());
        assert!(Transform::Identity.boundary(&grid, &bc).is_ok());
    }
}
