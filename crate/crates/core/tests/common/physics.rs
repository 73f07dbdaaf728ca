//! Shared physics checks. Each returns the measured error so the dedicated
//! suites can assert and the acceptance target can report.

use topoformer::autodiff::Rng;
use topoformer::dynamic::{
    dynamic_sensitivities, newmark_integrate, DynamicProblem, DynamicsConfig, InitialState,
    LoadHistory, NewmarkParams, Response, TimeGrid,
};
use topoformer::fea::{
    element_fields, fixed_dofs, load_vector, solve_system, LinearSolver, SparsePattern, SparseSym,
    Stiffness,
};
use topoformer::problem::{BoundarySpec, LoadShape, PointLoad, ProblemSpec};
use topoformer::simp::{sensitivities, OptimizerConfig};
use topoformer::{DensityField, Grid, Material};

/// Gaussian elimination with partial pivoting.
pub fn dense_lu_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in (c + 1)..n {
            let m = a[r][c] / a[c][c];
            if m != 0.0 {
                let (top, bottom) = a.split_at_mut(r);
                for (x, y) in bottom[0][c..].iter_mut().zip(&top[c][c..]) {
                    *x -= m * y;
                }
                b[r] -= m * b[c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = ((r + 1)..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Uniaxial tension of a solid block: rollers on the left edge, one pinned
/// corner, unit traction on the right edge. Returns the worst relative error
/// of the von Mises stress, the strain energy density and `u_x` against the
/// uniform-stress solution.
pub fn patch_test_error(nelx: usize, nely: usize, solver: &LinearSolver) -> f64 {
    let g = Grid::new(nelx, nely).unwrap();
    let mat = Material::default();
    let st = Stiffness::new(&g, &mat).unwrap();
    let k = st.assemble(&DensityField::uniform(&g, 1.0), 3.0).unwrap();
    let mut fixed = vec![false; g.n_dofs()];
    for iy in 0..=nely {
        fixed[2 * g.node(0, iy)] = true;
    }
    fixed[2 * g.node(0, nely) + 1] = true;
    let t = 1.0;
    let forces: Vec<(usize, f64, f64)> = (0..=nely)
        .map(|iy| {
            let share = if iy == 0 || iy == nely { 0.5 } else { 1.0 };
            (g.node(nelx, iy), share * t, 0.0)
        })
        .collect();
    let f = load_vector(&g, &forces).unwrap();
    let sol = solve_system(&g, &k, &fixed, &f, solver).unwrap();
    let fields = element_fields(&g, &mat, &sol.u).unwrap();
    let sed = t * t / (2.0 * mat.e0);
    let mut worst = 0.0f64;
    for e in 0..g.n_elements() {
        worst = worst.max((fields.vm[e] - t).abs() / t);
        worst = worst.max((fields.sed[e] - sed).abs() / sed);
    }
    let ux_end = t * nelx as f64 / mat.e0;
    for ix in 0..=nelx {
        for iy in 0..=nely {
            let exact = t * ix as f64 / mat.e0;
            worst = worst.max((sol.u[2 * g.node(ix, iy)] - exact).abs() / ux_end);
        }
    }
    worst
}

fn random_density(g: &Grid, rng: &mut Rng, lo: f64, hi: f64) -> DensityField {
    let v = (0..g.n_elements()).map(|_| rng.range(lo, hi)).collect();
    DensityField::from_values(g, v).unwrap()
}

/// Left-clamped cantilever with a random density and a random right-edge
/// load, solved sparsely and by dense LU on the free DOFs. Returns the max
/// displacement difference relative to the largest oracle displacement.
pub fn lu_oracle_error(nelx: usize, nely: usize, seed: u64, solver: &LinearSolver) -> f64 {
    let g = Grid::new(nelx, nely).unwrap();
    let mut rng = Rng::new(seed);
    let st = Stiffness::new(&g, &Material::default()).unwrap();
    let k = st
        .assemble(&random_density(&g, &mut rng, 0.1, 1.0), 3.0)
        .unwrap();
    let mut fixed = vec![false; g.n_dofs()];
    for iy in 0..=nely {
        let n = g.node(0, iy);
        fixed[2 * n] = true;
        fixed[2 * n + 1] = true;
    }
    let node = g.node(nelx, rng.index(nely + 1));
    let f = load_vector(&g, &[(node, rng.range(-1.0, 1.0), rng.range(-1.0, 1.0))]).unwrap();
    let sol = solve_system(&g, &k, &fixed, &f, solver).unwrap();
    let free: Vec<usize> = (0..g.n_dofs()).filter(|&d| !fixed[d]).collect();
    let dense = k.to_dense();
    let a = free
        .iter()
        .map(|&i| free.iter().map(|&j| dense[i][j]).collect())
        .collect();
    let x = dense_lu_solve(a, free.iter().map(|&i| f[i]).collect());
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    x.iter()
        .zip(&free)
        .map(|(xi, &d)| (xi - sol.u[d]).abs() / scale)
        .fold(0.0, f64::max)
}

/// Left-clamped 16x8 cantilever, downward load on the right edge midpoint.
pub fn cantilever_16x8(vf: f64) -> ProblemSpec {
    let grid = Grid::new(16, 8).unwrap();
    ProblemSpec {
        grid,
        bc: BoundarySpec::from_sites(&[14, 15]).unwrap(),
        load: PointLoad {
            ex: 15,
            ey: 4,
            fx: 0.0,
            fy: -1.0,
            angle_index: None,
        },
        vf,
        shape: None,
    }
}

fn small_problem(rng: &mut Rng, shape: Option<LoadShape>) -> ProblemSpec {
    let grid = Grid::new(4, 4).unwrap();
    let ex = 3;
    let ey = rng.index(4);
    ProblemSpec {
        grid,
        bc: BoundarySpec::from_sites(&[14, 15]).unwrap(),
        load: PointLoad::from_angle(ex, ey, rng.index(6) as u8, 1.0).unwrap(),
        vf: 0.5,
        shape,
    }
}

/// Relative error `|a - b| / max(|b|, floor)` maxed over components, with the
/// floor a fraction of the largest reference entry.
fn rel_vec_error(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(1e-3 * scale))
        .fold(0.0, f64::max)
}

/// Static compliance sensitivities against central differences on a random
/// 4x4 design.
pub fn static_fd_error(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let p = small_problem(&mut rng, None);
    let g = p.grid;
    let cfg = OptimizerConfig::default();
    let st = Stiffness::new(&g, &cfg.material).unwrap();
    let fixed = fixed_dofs(&g, &p.bc);
    let f = load_vector(&g, &p.load.nodal_forces(&g)).unwrap();
    let x = random_density(&g, &mut rng, 0.3, 0.9);
    let compliance = |d: &DensityField| {
        let k = st.assemble(d, cfg.penalty).unwrap();
        st.solve(&k, &fixed, &f, &cfg.solver).unwrap()
    };
    let sol = compliance(&x);
    let dc = sensitivities(&st, &x, &sol.u, cfg.penalty).unwrap();
    let h = 1e-6;
    let fd: Vec<f64> = (0..g.n_elements())
        .map(|e| {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp.values[e] += h;
            xm.values[e] -= h;
            (compliance(&xp).compliance - compliance(&xm).compliance) / (2.0 * h)
        })
        .collect();
    rel_vec_error(&dc, &fd)
}

/// Dynamic-compliance sensitivities against central differences of `C_dyn`
/// on a random 4x4 design with a 20-step time grid.
pub fn dynamic_fd_error(seed: u64, shape: LoadShape) -> f64 {
    let mut rng = Rng::new(seed);
    let p = small_problem(&mut rng, Some(shape));
    let g = p.grid;
    let dyn_cfg = DynamicsConfig {
        time: TimeGrid::new(1.0, 20).unwrap(),
        ..DynamicsConfig::default()
    };
    let opt = OptimizerConfig::default();
    let dp = DynamicProblem::new(&p, &dyn_cfg, &opt).unwrap();
    let x = random_density(&g, &mut rng, 0.3, 0.9);
    let r = dp.simulate(&x, opt.penalty).unwrap();
    let dc =
        dynamic_sensitivities(dp.stiffness(), &r.u, &x, dyn_cfg.time.dt(), opt.penalty).unwrap();
    let h = 1e-6;
    let fd: Vec<f64> = (0..g.n_elements())
        .map(|e| {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp.values[e] += h;
            xm.values[e] -= h;
            let c = |d: &DensityField| dp.compliance(d, opt.penalty).unwrap();
            (c(&xp) - c(&xm)) / (2.0 * h)
        })
        .collect();
    rel_vec_error(&dc, &fd)
}

fn scalar(v: f64) -> SparseSym {
    let p = SparsePattern::from_entries(1, &[]).unwrap();
    SparseSym::from_triplets(p, &[(0, 0, v)]).unwrap()
}

/// Single-DOF Newmark run of `m a + c v + k u = g(t)`.
pub fn sdof(
    m: f64,
    k: f64,
    c: f64,
    time: TimeGrid,
    samples: Vec<f64>,
    init: Option<InitialState>,
) -> Response {
    newmark_integrate(
        &scalar(m),
        &scalar(c),
        &scalar(k),
        &[false],
        &LoadHistory {
            vector: vec![1.0],
            samples,
        },
        &time,
        &NewmarkParams::default(),
        init.as_ref(),
        &LinearSolver::Cholesky,
        None,
    )
    .unwrap()
}

/// Largest relative deviation of `m v^2 / 2 + k u^2 / 2` from its initial
/// value during undamped free vibration.
pub fn sdof_energy_drift(steps: usize, dt: f64) -> f64 {
    let (m, k) = (1.0, (2.0 * std::f64::consts::PI).powi(2));
    let time = TimeGrid::new(steps as f64 * dt, steps).unwrap();
    let init = InitialState {
        u0: vec![1.0],
        v0: vec![0.5],
    };
    let r = sdof(m, k, 0.0, time, vec![0.0; steps + 1], Some(init));
    let energy = |i: usize| 0.5 * m * r.v[i][0].powi(2) + 0.5 * k * r.u[i][0].powi(2);
    let e0 = energy(0);
    (0..=steps)
        .map(|i| (energy(i) - e0).abs() / e0)
        .fold(0.0, f64::max)
}

/// Relative error of the measured free-vibration period of a 1 Hz oscillator.
pub fn sdof_period_error(dt: f64, periods: usize) -> f64 {
    let steps = (periods as f64 / dt).round() as usize;
    let time = TimeGrid::new(steps as f64 * dt, steps).unwrap();
    let k = (2.0 * std::f64::consts::PI).powi(2);
    let init = InitialState {
        u0: vec![1.0],
        v0: vec![0.0],
    };
    let r = sdof(1.0, k, 0.0, time, vec![0.0; steps + 1], Some(init));
    let mut crossings = Vec::new();
    for i in 1..r.u.len() {
        let (a, b) = (r.u[i - 1][0], r.u[i][0]);
        if a > 0.0 && b <= 0.0 {
            crossings.push(time.time(i - 1) + dt * a / (a - b));
        }
    }
    let period = (crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64;
    (period - 1.0).abs()
}
