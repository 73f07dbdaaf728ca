use serde::{Deserialize, Serialize};

use crate::fea::{pcg, solve_constrained, LinearSolver, SparseSym, SymbolicFactor};
use crate::{Error, Result};

/// Uniform time grid `t_i = i * dt`, `i = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_end: f64,
    pub n_steps: usize,
}

impl Default for TimeGrid {
    fn default() -> Self {
        TimeGrid {
            t_end: 1.0,
            n_steps: 200,
        }
    }
}

impl TimeGrid {
    pub fn new(t_end: f64, n_steps: usize) -> Result<Self> {
        let tg = TimeGrid { t_end, n_steps };
        tg.validate()?;
        Ok(tg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 || !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "time grid needs n_steps >= 1 and t_end > 0, got {} steps over {}",
                self.n_steps, self.t_end
            )));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.n_steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|i| self.time(i)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewmarkParams {
    pub beta: f64,
    pub gamma: f64,
}

impl Default for NewmarkParams {
    /// Average acceleration.
    fn default() -> Self {
        NewmarkParams {
            beta: 0.25,
            gamma: 0.5,
        }
    }
}

/// Load history `f(t_i) = samples[i] * vector`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadHistory {
    pub vector: Vec<f64>,
    pub samples: Vec<f64>,
}

impl LoadHistory {
    pub fn at(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        let g = self.samples[i];
        self.vector.iter().map(move |v| g * v)
    }
}

/// Initial displacement and velocity; zero when absent.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InitialState {
    pub u0: Vec<f64>,
    pub v0: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Response {
    /// Displacements at `t_0..=t_N`.
    pub u: Vec<Vec<f64>>,
    /// Velocities at `t_0..=t_N`.
    pub v: Vec<Vec<f64>>,
}

/// Newmark integration of `M a + C v + K u = f(t)` on the DOFs not in `fixed`.
///
/// `M`, `C` and `K` must share one sparsity pattern; `symbolic` is its
/// analysis when the Cholesky solver is used.
#[allow(clippy::too_many_arguments)]
pub fn newmark_integrate(
    m: &SparseSym,
    c: &SparseSym,
    k: &SparseSym,
    fixed: &[bool],
    load: &LoadHistory,
    time: &TimeGrid,
    params: &NewmarkParams,
    init: Option<&InitialState>,
    solver: &LinearSolver,
    symbolic: Option<&SymbolicFactor>,
) -> Result<Response> {
    time.validate()?;
    let n = k.dim();
    if m.dim() != n || c.dim() != n || fixed.len() != n || load.vector.len() != n {
        return Err(Error::Dimension {
            what: "dynamic system",
            expected: n,
            actual: load.vector.len(),
        });
    }
    if load.samples.len() != time.n_steps + 1 {
        return Err(Error::Dimension {
            what: "load samples",
            expected: time.n_steps + 1,
            actual: load.samples.len(),
        });
    }
    let (beta, gamma) = (params.beta, params.gamma);
    if !(beta > 0.0 && gamma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "invalid Newmark parameters ({beta}, {gamma})"
        )));
    }
    let dt = time.dt();
    let a0 = 1.0 / (beta * dt * dt);
    let a1 = gamma / (beta * dt);
    let a2 = 1.0 / (beta * dt);
    let a3 = 1.0 / (2.0 * beta) - 1.0;
    let a4 = gamma / beta - 1.0;
    let a5 = dt / 2.0 * (gamma / beta - 2.0);
    let a6 = dt * (1.0 - gamma);
    let a7 = gamma * dt;

    let free = |v: &mut [f64]| {
        for (x, &f) in v.iter_mut().zip(fixed) {
            if f {
                *x = 0.0;
            }
        }
    };
    let (mut u, mut v) = match init {
        Some(s) => {
            if s.u0.len() != n || s.v0.len() != n {
                return Err(Error::Dimension {
                    what: "initial state",
                    expected: n,
                    actual: s.u0.len(),
                });
            }
            (s.u0.clone(), s.v0.clone())
        }
        None => (vec![0.0; n], vec![0.0; n]),
    };
    free(&mut u);
    free(&mut v);
    let mut a = initial_acceleration(m, c, k, fixed, load, &u, &v)?;

    let mut keff = SparseSym::combination(&[(1.0, k), (a0, m), (a1, c)])?;
    keff.constrain(fixed);
    let factor = match solver {
        LinearSolver::Cholesky => {
            let owned;
            let sym = match symbolic {
                Some(s) => s,
                None => {
                    owned = SymbolicFactor::new(keff.pattern())?;
                    &owned
                }
            };
            Some(sym.factor(&keff)?)
        }
        LinearSolver::Pcg { .. } => None,
    };

    let mut us = Vec::with_capacity(time.n_steps + 1);
    let mut vs = Vec::with_capacity(time.n_steps + 1);
    us.push(u.clone());
    vs.push(v.clone());
    let mut mv = vec![0.0; n];
    let mut cv = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    for i in 1..=time.n_steps {
        for j in 0..n {
            tmp[j] = a0 * u[j] + a2 * v[j] + a3 * a[j];
        }
        m.matvec_into(&tmp, &mut mv);
        for j in 0..n {
            tmp[j] = a1 * u[j] + a4 * v[j] + a5 * a[j];
        }
        c.matvec_into(&tmp, &mut cv);
        let mut rhs: Vec<f64> = load
            .at(i)
            .zip(mv.iter().zip(&cv))
            .map(|(f, (p, q))| f + p + q)
            .collect();
        free(&mut rhs);
        let u_new = match (&factor, solver) {
            (Some(f), _) => f.solve(&rhs),
            (
                None,
                LinearSolver::Pcg {
                    rel_tol,
                    max_iter_factor,
                },
            ) => {
                let mut x = u.clone();
                pcg(&keff, &rhs, &mut x, *rel_tol, max_iter_factor.max(&1) * n)?;
                x
            }
            (None, LinearSolver::Cholesky) => unreachable!(),
        };
        if u_new.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("displacement at step {i}")));
        }
        for j in 0..n {
            let a_new = a0 * (u_new[j] - u[j]) - a2 * v[j] - a3 * a[j];
            v[j] += a6 * a[j] + a7 * a_new;
            a[j] = a_new;
        }
        free(&mut v);
        free(&mut a);
        u = u_new;
        us.push(u.clone());
        vs.push(v.clone());
    }
    Ok(Response { u: us, v: vs })
}

/// `M a_0 = f_0 - C v_0 - K u_0` on the free DOFs that carry mass.
fn initial_acceleration(
    m: &SparseSym,
    c: &SparseSym,
    k: &SparseSym,
    fixed: &[bool],
    load: &LoadHistory,
    u: &[f64],
    v: &[f64],
) -> Result<Vec<f64>> {
    let n = m.dim();
    let at_rest = u.iter().chain(v).all(|&x| x == 0.0);
    if at_rest && load.samples[0] == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let cv = c.matvec(v);
    let ku = k.matvec(u);
    let mut r: Vec<f64> = load
        .at(0)
        .zip(cv.iter().zip(&ku))
        .map(|(f, (p, q))| f - p - q)
        .collect();
    let diag = m.diagonal();
    let inert: Vec<bool> = (0..n).map(|j| fixed[j] || !(diag[j] > 0.0)).collect();
    for (x, &z) in r.iter_mut().zip(&inert) {
        if z {
            *x = 0.0;
        }
    }
    let mut mc = m.clone();
    mc.constrain(&inert);
    let symbolic = std::sync::OnceLock::new();
    solve_constrained(&mc, &r, &LinearSolver::Cholesky, || {
        let s = SymbolicFactor::new(mc.pattern())?;
        Ok(symbolic.get_or_init(|| s))
    })
}
