//! Monotone finite-difference solver for the spider HJB system.
//!
//! On each ray and local-time level the discrete equation
//! `lambda u_j + max_beta (-sigma D2 u_j + b D1 u_j + h) = 0` is solved by Howard
//! policy iteration, `D1` being upwinded by the sign of `b`. The vertex value is
//! then advanced from `l` to `l - dl` by explicit Euler on the junction condition
//! ([`march_local_time`]).

mod comparison;
mod march;
mod statics;

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::network::{Grid, NetworkFunction};
use crate::problem::ProblemData;
use crate::tridiag;

pub use comparison::{
    epsilon_scaling_transform, epsilon_vertex_l_derivative, penalty_check, shift_supersolution,
    verify_comparison, ComparisonOptions, ComparisonReport, PenaltyReport, ShiftReport,
    TrialOutcome,
};
pub use march::{march_local_time, SolveReport};
pub use statics::{solve_l_independent, Slice, StaticOptions, StaticSolution};

/// First-derivative discretization on the rays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Upwinding {
    /// Upwind by the sign of the drift; the scheme is monotone.
    #[default]
    Monotone,
    /// Centered differences; not monotone for strong drift. For fault injection only.
    Central,
}

/// Discretization of the one-sided vertex derivative `u_x(0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FluxOrder {
    /// `(u_1 - u_0) / dx`; keeps the vertex coupling monotone.
    #[default]
    First,
    /// `(-3 u_0 + 4 u_1 - u_2) / (2 dx)`; more accurate, not monotone.
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Residual tolerance of policy iteration, also used for data compatibility checks.
    pub tol: f64,
    pub max_iters: usize,
    pub upwinding: Upwinding,
    pub flux: FluxOrder,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 200,
            upwinding: Upwinding::Monotone,
            flux: FluxOrder::First,
        }
    }
}

impl SolverOptions {
    fn check(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iters == 0 {
            return Err(Error::InvalidProblem(
                "tol must be positive and max_iters at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Coefficients of one ray at one level, for every interior node and control.
#[derive(Debug, Clone)]
pub(crate) struct RayCoefficients {
    controls: usize,
    sigma: Vec<f64>,
    drift: Vec<f64>,
    cost: Vec<f64>,
}

impl RayCoefficients {
    pub(crate) fn sample(data: &ProblemData, ray: usize, x: &[f64], l: f64) -> Result<Self> {
        let ctl = &data.ray(ray).controls;
        let m = ctl.len();
        let n = x.len().saturating_sub(2);
        let mut c = Self {
            controls: m,
            sigma: vec![0.0; n * m],
            drift: vec![0.0; n * m],
            cost: vec![0.0; n * m],
        };
        for j in 0..n {
            for (k, beta) in ctl.iter().enumerate() {
                let (s, b, h) = data.ray_coefficients(ray, x[j + 1], l, beta[0]);
                if !(s.is_finite() && b.is_finite() && h.is_finite()) {
                    return Err(Error::NonFinite(alloc::format!(
                        "ray {} coefficients at x={}, l={l}",
                        ray + 1,
                        x[j + 1]
                    )));
                }
                c.sigma[j * m + k] = s;
                c.drift[j * m + k] = b;
                c.cost[j * m + k] = h;
            }
        }
        Ok(c)
    }

    /// Off-diagonal and diagonal entries `(lower, diag, upper)` at interior node `j` (1-based)
    /// for control `k`.
    #[inline]
    fn stencil(&self, j: usize, k: usize, lambda: f64, dx: f64, up: Upwinding) -> (f64, f64, f64) {
        let idx = (j - 1) * self.controls + k;
        let s = self.sigma[idx] / (dx * dx);
        let b = self.drift[idx];
        match up {
            Upwinding::Monotone => {
                if b > 0.0 {
                    (-s - b / dx, lambda + 2.0 * s + b / dx, -s)
                } else {
                    (-s, lambda + 2.0 * s - b / dx, -s + b / dx)
                }
            }
            Upwinding::Central => (-s - 0.5 * b / dx, lambda + 2.0 * s, -s + 0.5 * b / dx),
        }
    }

    #[inline]
    fn cost(&self, j: usize, k: usize) -> f64 {
        self.cost[(j - 1) * self.controls + k]
    }

    /// Number of `(node, control)` pairs whose stencil is not monotone.
    fn monotonicity_violations(&self, lambda: f64, dx: f64, up: Upwinding) -> usize {
        let n = self.sigma.len() / self.controls.max(1);
        let mut bad = 0;
        for j in 1..=n {
            for k in 0..self.controls {
                let (lo, d, hi) = self.stencil(j, k, lambda, dx, up);
                if !(d > 0.0 && lo <= 0.0 && hi <= 0.0) {
                    bad += 1;
                }
            }
        }
        bad
    }
}

/// Scratch space for policy iteration on one ray.
#[derive(Debug, Clone, Default)]
pub(crate) struct RaySolver {
    sub: Vec<f64>,
    diag: Vec<f64>,
    sup: Vec<f64>,
    rhs: Vec<f64>,
    scratch: Vec<f64>,
    candidate: Vec<usize>,
    previous: Vec<f64>,
    pub(crate) history: Vec<f64>,
    /// Largest componentwise increase between successive iterates after the first.
    pub(crate) max_increase: f64,
}

/// Outcome of one policy-iteration solve.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PiStats {
    pub iterations: usize,
    pub residual: f64,
}

impl RaySolver {
    /// Evaluates the discrete Hamiltonian at every interior node, writes the greedy
    /// policy into `candidate` (keeping `current` unless strictly beaten) and returns
    /// the max-norm residual.
    fn improve(
        &mut self,
        coef: &RayCoefficients,
        u: &[f64],
        lambda: f64,
        dx: f64,
        up: Upwinding,
        current: Option<&[usize]>,
    ) -> f64 {
        let n = u.len() - 2;
        self.candidate.resize(n, 0);
        let mut res: f64 = 0.0;
        for j in 1..=n {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            let mut scale: f64 = 0.0;
            let mut vals_cur = f64::NEG_INFINITY;
            for k in 0..coef.controls {
                let (lo, d, hi) = coef.stencil(j, k, lambda, dx, up);
                let h = coef.cost(j, k);
                // operator without the lambda u term
                let v = lo * u[j - 1] + (d - lambda) * u[j] + hi * u[j + 1] + h;
                scale = scale.max(
                    lo.abs() * u[j - 1].abs()
                        + (d - lambda).abs() * u[j].abs()
                        + hi.abs() * u[j + 1].abs()
                        + h.abs(),
                );
                if v > best {
                    best = v;
                    arg = k;
                }
                if let Some(c) = current {
                    if c[j - 1] == k {
                        vals_cur = v;
                    }
                }
            }
            if let Some(c) = current {
                if vals_cur >= best - 64.0 * f64::EPSILON * scale {
                    arg = c[j - 1];
                }
            }
            self.candidate[j - 1] = arg;
            res = res.max((lambda * u[j] + best).abs());
        }
        res
    }

    fn solve_frozen(
        &mut self,
        coef: &RayCoefficients,
        policy: &[usize],
        u: &mut [f64],
        lambda: f64,
        dx: f64,
        up: Upwinding,
    ) -> Result<()> {
        let n = u.len() - 2;
        self.sub.resize(n, 0.0);
        self.diag.resize(n, 0.0);
        self.sup.resize(n, 0.0);
        self.rhs.resize(n, 0.0);
        self.scratch.resize(n, 0.0);
        for j in 1..=n {
            let k = policy[j - 1];
            let (lo, d, hi) = coef.stencil(j, k, lambda, dx, up);
            let mut r = -coef.cost(j, k);
            if j == 1 {
                r -= lo * u[0];
            }
            if j == n {
                r -= hi * u[n + 1];
            }
            self.sub[j - 1] = lo;
            self.diag[j - 1] = d;
            self.sup[j - 1] = hi;
            self.rhs[j - 1] = r;
        }
        tridiag::solve(
            &self.sub,
            &self.diag,
            &self.sup,
            &mut self.rhs,
            &mut self.scratch,
        )?;
        u[1..=n].copy_from_slice(&self.rhs);
        Ok(())
    }

    /// Policy iteration. `u` carries the boundary values and an initial guess and
    /// receives the solution; `policy` is a warm start (resized if needed).
    pub(crate) fn solve(
        &mut self,
        coef: &RayCoefficients,
        u: &mut [f64],
        policy: &mut Vec<usize>,
        lambda: f64,
        dx: f64,
        opts: &SolverOptions,
    ) -> Result<PiStats> {
        self.history.clear();
        self.max_increase = 0.0;
        let n = u.len() - 2;
        if n == 0 {
            return Ok(PiStats {
                iterations: 1,
                residual: 0.0,
            });
        }
        let up = opts.upwinding;
        if policy.len() != n {
            self.improve(coef, u, lambda, dx, up, None);
            policy.clear();
            policy.extend_from_slice(&self.candidate);
        }
        for it in 1..=opts.max_iters {
            self.solve_frozen(coef, policy, u, lambda, dx, up)?;
            if it > 1 {
                for (a, b) in u[1..=n].iter().zip(&self.previous) {
                    self.max_increase = self.max_increase.max(a - b);
                }
            }
            self.previous.clear();
            self.previous.extend_from_slice(&u[1..=n]);
            let res = self.improve(coef, u, lambda, dx, up, Some(policy));
            self.history.push(res);
            if !res.is_finite() {
                return Err(Error::NonFinite("policy iteration residual".into()));
            }
            if self.candidate == *policy {
                if res <= opts.tol {
                    return Ok(PiStats {
                        iterations: it,
                        residual: res,
                    });
                }
                return Err(Error::NotConverged {
                    iterations: it,
                    residual: res,
                });
            }
            policy.copy_from_slice(&self.candidate);
        }
        let residual = self.history.last().copied().unwrap_or(f64::NAN);
        Err(Error::NotConverged {
            iterations: opts.max_iters,
            residual,
        })
    }
}

#[inline]
pub(crate) fn vertex_flux(u: &[f64], dx: f64, order: FluxOrder) -> f64 {
    match order {
        FluxOrder::Second if u.len() > 2 => (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * dx),
        _ => (u[1] - u[0]) / dx,
    }
}

/// Solution of a single ray boundary-value problem.
#[derive(Debug, Clone, PartialEq)]
pub struct RaySolution {
    /// Values at the x-nodes, vertex first.
    pub u: Vec<f64>,
    /// One-sided vertex derivative.
    pub flux: f64,
    pub iterations: usize,
    pub residual: f64,
    /// Residual after each policy-iteration step.
    pub residual_history: Vec<f64>,
    /// Largest increase of any node value between successive policy iterates
    /// (iterates decrease monotonically, so this stays at roundoff level).
    pub max_iterate_increase: f64,
}

/// Solves the ray equation of ray `ray` at local time `l` with Dirichlet values at both ends.
pub fn solve_ray_bvp(
    data: &ProblemData,
    ray: usize,
    l: f64,
    vertex_value: f64,
    right_value: f64,
    grid: &Grid,
    opts: &SolverOptions,
) -> Result<RaySolution> {
    opts.check()?;
    if ray >= data.rays().len() {
        return Err(Error::Dimension(alloc::format!(
            "ray index {ray} out of range"
        )));
    }
    let coef = RayCoefficients::sample(data, ray, grid.x(), l)?;
    let nx = grid.nx();
    let mut u: Vec<f64> = (0..=nx)
        .map(|j| vertex_value + (right_value - vertex_value) * j as f64 / nx as f64)
        .collect();
    u[nx] = right_value;
    let mut policy = Vec::new();
    let mut solver = RaySolver::default();
    let stats = solver.solve(&coef, &mut u, &mut policy, data.lambda(), grid.dx(), opts)?;
    let flux = vertex_flux(&u, grid.dx(), opts.flux);
    Ok(RaySolution {
        u,
        flux,
        iterations: stats.iterations,
        residual: stats.residual,
        residual_history: solver.history,
        max_iterate_increase: solver.max_increase,
    })
}

/// Number of non-monotone stencils over every ray, level, interior node and control.
pub fn monotonicity_violations(
    data: &ProblemData,
    grid: &Grid,
    upwinding: Upwinding,
) -> Result<usize> {
    let mut bad = 0;
    for i in 0..data.rays().len() {
        for &l in grid.l() {
            let c = RayCoefficients::sample(data, i, grid.x(), l)?;
            bad += c.monotonicity_violations(data.lambda(), grid.dx(), upwinding);
        }
    }
    Ok(bad)
}

/// Signed discrete Hamiltonian `lambda u + max_beta (...)` over interior nodes of the
/// solved levels `0..nl` (the terminal level is data, not solved).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualStats {
    pub min: f64,
    pub max: f64,
    pub max_abs: f64,
}

pub fn interior_residual(
    data: &ProblemData,
    f: &NetworkFunction,
    upwinding: Upwinding,
) -> Result<ResidualStats> {
    let g = f.grid();
    let mut st = ResidualStats {
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
        max_abs: 0.0,
    };
    if g.nx() < 2 {
        return Ok(ResidualStats {
            min: 0.0,
            max: 0.0,
            max_abs: 0.0,
        });
    }
    let lambda = data.lambda();
    for i in 0..g.rays() {
        for k in 0..g.nl() {
            let c = RayCoefficients::sample(data, i, g.x(), g.l()[k])?;
            let u = f.ray_level(i, k);
            for j in 1..g.nx() {
                let mut best = f64::NEG_INFINITY;
                for m in 0..c.controls {
                    let (lo, d, hi) = c.stencil(j, m, lambda, g.dx(), upwinding);
                    best = best
                        .max(lo * u[j - 1] + (d - lambda) * u[j] + hi * u[j + 1] + c.cost(j, m));
                }
                let r = lambda * u[j] + best;
                st.min = st.min.min(r);
                st.max = st.max.max(r);
                st.max_abs = st.max_abs.max(r.abs());
            }
        }
    }
    Ok(st)
}
