//! Solver for the parametric ODE `r psi - psi'' + B |psi'| + c = 0` on `(0, eps)`.
//!
//! Where `psi'` keeps a sign `s`, `g = psi + c / r` solves the linear equation
//! `g'' - s B g' - r g = 0`, so the solution is a chain of exponential pieces. A piece
//! ends where `g'` vanishes, and that happens at most once on a trajectory. The slope
//! `psi'(0)` is found by safeguarded Newton shooting; a finite-difference collocation
//! solver serves as fallback and as an independent cross-check.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{smallness_value, sup_bound_m, TestFunctionSpec};
use crate::error::{Error, Result};
use crate::math::{exp, simpson, sqrt};
use crate::tridiag;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    /// Fine-grid intervals on `[0, eps]`; must be even (Simpson quadrature).
    pub nx_fine: usize,
    /// Number of local-time samples in `[ell - kappa, ell + kappa]`.
    pub nl_samples: usize,
    /// Largest acceptable pointwise ODE residual.
    pub residual_tol: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            nx_fine: 2048,
            nl_samples: 5,
            residual_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Piece {
    x0: f64,
    m1: f64,
    m2: f64,
    a: f64,
    c: f64,
}

impl Piece {
    fn new(x0: f64, sign: f64, b: f64, r: f64, g0: f64, dg0: f64) -> Self {
        let disc = sqrt(b * b + 4.0 * r);
        let m1 = 0.5 * (sign * b + disc);
        let m2 = 0.5 * (sign * b - disc);
        let a = (dg0 - m2 * g0) / (m1 - m2);
        let c = (m1 * g0 - dg0) / (m1 - m2);
        Self { x0, m1, m2, a, c }
    }

    #[inline]
    fn eval(&self, x: f64) -> (f64, f64, f64) {
        let t = x - self.x0;
        let e1 = self.a * exp(self.m1 * t);
        let e2 = self.c * exp(self.m2 * t);
        (
            e1 + e2,
            self.m1 * e1 + self.m2 * e2,
            self.m1 * self.m1 * e1 + self.m2 * self.m2 * e2,
        )
    }

    /// First `t > 0` where `g'` vanishes, if any.
    fn switch(&self) -> Option<f64> {
        let p = self.a * self.m1;
        let q = self.c * self.m2;
        if p == 0.0 || q == 0.0 {
            return None;
        }
        let ratio = -q / p;
        if !(ratio > 1.0) {
            return None;
        }
        Some(crate::math::ln(ratio) / (self.m1 - self.m2))
    }
}

/// Piecewise closed-form trajectory from `(psi(0), psi'(0))`.
#[derive(Debug, Clone, PartialEq)]
struct Trajectory {
    offset: f64,
    pieces: Vec<Piece>,
}

impl Trajectory {
    fn new(r: f64, b: f64, c: f64, psi0: f64, q: f64, eps: f64) -> Self {
        let offset = c / r;
        let mut pieces = Vec::with_capacity(2);
        let (mut x0, mut g0, mut dg0) = (0.0, psi0 + offset, q);
        for _ in 0..4 {
            let sign = if dg0 > 0.0 {
                1.0
            } else if dg0 < 0.0 {
                -1.0
            } else if g0 >= 0.0 {
                1.0
            } else {
                -1.0
            };
            let p = Piece::new(x0, sign, b, r, g0, dg0);
            pieces.push(p);
            match p.switch() {
                Some(t) if x0 + t < eps => {
                    let (g, _, _) = p.eval(x0 + t);
                    x0 += t;
                    g0 = g;
                    dg0 = 0.0;
                }
                _ => break,
            }
        }
        Self { offset, pieces }
    }

    /// `(psi, psi', psi'')` at `x`.
    fn eval(&self, x: f64) -> (f64, f64, f64) {
        let p = self
            .pieces
            .iter()
            .rev()
            .find(|p| p.x0 <= x)
            .unwrap_or(&self.pieces[0]);
        let (g, dg, d2g) = p.eval(x);
        (g - self.offset, dg, d2g)
    }

    /// `int_0^eps (eps - z) f(psi, psi') dz`, by Gauss-Legendre on each smooth piece.
    fn weighted_integral(&self, eps: f64, f: impl Fn(f64, f64) -> f64) -> f64 {
        const NODES: [f64; 5] = [
            0.0,
            -0.538_469_310_105_683,
            0.538_469_310_105_683,
            -0.906_179_845_938_664,
            0.906_179_845_938_664,
        ];
        const WEIGHTS: [f64; 5] = [
            0.568_888_888_888_889,
            0.478_628_670_499_366,
            0.478_628_670_499_366,
            0.236_926_885_056_189,
            0.236_926_885_056_189,
        ];
        const PANELS: usize = 32;
        let mut total = 0.0;
        for (k, p) in self.pieces.iter().enumerate() {
            let a = p.x0;
            let b = self.pieces.get(k + 1).map_or(eps, |n| n.x0).min(eps);
            let h = (b - a) / PANELS as f64;
            for m in 0..PANELS {
                let mid = a + (m as f64 + 0.5) * h;
                for (t, w) in NODES.iter().zip(&WEIGHTS) {
                    let z = mid + 0.5 * h * t;
                    let (g, dg, _) = p.eval(z);
                    total += 0.5 * h * w * (eps - z) * f(g - self.offset, dg);
                }
            }
        }
        total
    }
}

/// Samples of one ray of the test function.
#[derive(Debug, Clone, PartialEq)]
pub struct RayProfile {
    /// `psi[k][j]` at `l[k]`, `x[j]`.
    pub psi: Vec<Vec<f64>>,
    pub dpsi: Vec<Vec<f64>>,
    pub d2psi: Vec<Vec<f64>>,
    closed_form: Vec<Option<Trajectory>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub spec: TestFunctionSpec,
    pub x: Vec<f64>,
    pub l: Vec<f64>,
    pub rays: Vec<RayProfile>,
    /// Largest `|r psi - psi'' + B |psi'| + H + eta|` over all samples.
    pub max_residual: f64,
}

impl TestFunction {
    /// `w + S (l - ell)`.
    pub fn vertex_value(&self, l: f64) -> f64 {
        self.spec.w + self.spec.slope * (l - self.spec.ell)
    }

    pub fn max_abs(&self) -> f64 {
        self.rays
            .iter()
            .flat_map(|r| r.psi.iter().flatten())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_derivative(&self) -> f64 {
        self.rays
            .iter()
            .flat_map(|r| r.dpsi.iter().flatten())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    fn h(&self) -> f64 {
        self.spec.eps / (self.x.len() - 1) as f64
    }

    /// `int_0^eps int_0^u f(z) dz du = int_0^eps (eps - z) f(z) dz` by Simpson.
    pub fn double_integral_of(&self, f: &[f64]) -> f64 {
        let eps = self.spec.eps;
        let w: Vec<f64> = f.iter().zip(&self.x).map(|(v, x)| (eps - x) * v).collect();
        simpson(&w, self.h())
    }

    /// `(2 / eps^2) int_0^eps int_0^u psi_i(z, l_k) dz du`.
    pub fn divided_double_integral(&self, ray: usize, level: usize) -> f64 {
        2.0 / (self.spec.eps * self.spec.eps) * self.double_integral_of(&self.rays[ray].psi[level])
    }

    /// `max_{i, k} |(2/eps^2) int int psi_i - w|`.
    pub fn vanishing_deviation(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..self.rays.len() {
            for k in 0..self.l.len() {
                d = d.max((self.divided_double_integral(i, k) - self.spec.w).abs());
            }
        }
        d
    }

    /// Largest defect of `gamma + z_i - w = eps psi'(0) + int int (r psi + B|psi'| + H + eta)`.
    pub fn flux_identity_defect(&self) -> f64 {
        let s = &self.spec;
        let mut worst: f64 = 0.0;
        for (i, ray) in self.rays.iter().enumerate() {
            for k in 0..self.l.len() {
                let f: Vec<f64> = ray.psi[k]
                    .iter()
                    .zip(&ray.dpsi[k])
                    .map(|(p, dp)| s.r * p + s.b * dp.abs() + s.h + s.eta)
                    .collect();
                let integral = match &ray.closed_form[k] {
                    Some(t) => {
                        t.weighted_integral(s.eps, |p, dp| s.r * p + s.b * dp.abs() + s.h + s.eta)
                    }
                    None => self.double_integral_of(&f),
                };
                let rhs = s.eps * ray.dpsi[k][0] + integral;
                worst = worst.max((s.gamma + s.z[i] - s.w - rhs).abs());
            }
        }
        worst
    }
}

fn l_samples(spec: &TestFunctionSpec, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![spec.ell];
    }
    let mut l: Vec<f64> = (0..n)
        .map(|k| spec.ell - spec.kappa + 2.0 * spec.kappa * k as f64 / (n - 1) as f64)
        .collect();
    l[n - 1] = spec.ell + spec.kappa;
    l
}

fn check(spec: &TestFunctionSpec, opts: &OdeOptions) -> Result<()> {
    spec.validate()?;
    let d1 = smallness_value(spec.b, spec.eps);
    if !(d1 > 0.0) {
        return Err(Error::SmallnessViolated(d1));
    }
    if opts.nx_fine < 2 || !opts.nx_fine.is_multiple_of(2) {
        return Err(Error::InvalidSpec(format!(
            "nx_fine must be even and at least 2, got {}",
            opts.nx_fine
        )));
    }
    if opts.nl_samples == 0 {
        return Err(Error::InvalidSpec("nl_samples must be at least 1".into()));
    }
    Ok(())
}

fn shoot(spec: &TestFunctionSpec, psi0: f64, target: f64) -> Result<Trajectory> {
    let (r, b, c, eps) = (spec.r, spec.b, spec.h + spec.eta, spec.eps);
    let end = |q: f64| Trajectory::new(r, b, c, psi0, q, eps).eval(eps).0 - target;
    let q0 = (target - psi0) / eps;
    let mut step = 1.0 + q0.abs() + (c.abs() + r * (psi0.abs() + target.abs())) * eps;
    let (mut lo, mut hi) = (q0 - step, q0 + step);
    let (mut flo, mut fhi) = (end(lo), end(hi));
    let mut tries = 0;
    while !(flo <= 0.0 && fhi >= 0.0) {
        tries += 1;
        if tries > 200 || !(flo.is_finite() && fhi.is_finite()) {
            return Err(Error::Shooting("failed to bracket psi'(0)".into()));
        }
        step *= 2.0;
        if flo > 0.0 {
            lo -= step;
            flo = end(lo);
        }
        if fhi < 0.0 {
            hi += step;
            fhi = end(hi);
        }
    }
    let scale = 1.0 + target.abs() + psi0.abs();
    let mut q = if fhi - flo > 0.0 {
        lo - flo * (hi - lo) / (fhi - flo)
    } else {
        0.5 * (lo + hi)
    };
    for _ in 0..200 {
        let f = end(q);
        if f.abs() <= 1e-15 * scale {
            break;
        }
        if f < 0.0 {
            lo = q;
        } else {
            hi = q;
        }
        if hi - lo <= 4.0 * f64::EPSILON * (1.0 + q.abs()) {
            break;
        }
        let dq = 1e-7 * (1.0 + q.abs());
        let df = (end(q + dq) - end(q - dq)) / (2.0 * dq);
        let newton = q - f / df;
        // damped Newton inside the bracket, bisection otherwise
        q = if df > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Ok(Trajectory::new(r, b, c, psi0, q, eps))
}

fn residual(spec: &TestFunctionSpec, p: f64, dp: f64, d2p: f64) -> f64 {
    (spec.r * p - d2p + spec.b * dp.abs() + spec.h + spec.eta).abs()
}

/// Solves every ray at every local-time sample by piecewise closed forms and shooting,
/// falling back to collocation when shooting cannot bracket.
pub fn solve_param_ode(spec: &TestFunctionSpec, opts: &OdeOptions) -> Result<TestFunction> {
    check(spec, opts)?;
    let n = opts.nx_fine;
    let x = crate::math::linspace(0.0, spec.eps, n);
    let l = l_samples(spec, opts.nl_samples);
    let mut rays = Vec::with_capacity(spec.rays());
    let mut max_res: f64 = 0.0;
    for &z in &spec.z {
        let mut prof = RayProfile {
            psi: Vec::new(),
            dpsi: Vec::new(),
            d2psi: Vec::new(),
            closed_form: Vec::new(),
        };
        for &lk in &l {
            let shift = spec.slope * (lk - spec.ell);
            let psi0 = spec.w + shift;
            let target = z + shift + spec.gamma;
            let traj = match shoot(spec, psi0, target) {
                Ok(t) => t,
                Err(Error::Shooting(_)) => {
                    let (p, dp, d2p, res) = collocate(spec, psi0, target, n)?;
                    max_res = max_res.max(res);
                    prof.psi.push(p);
                    prof.dpsi.push(dp);
                    prof.d2psi.push(d2p);
                    prof.closed_form.push(None);
                    continue;
                }
                Err(e) => return Err(e),
            };
            let mut p = Vec::with_capacity(n + 1);
            let mut dp = Vec::with_capacity(n + 1);
            let mut d2p = Vec::with_capacity(n + 1);
            for &xj in &x {
                let (a, b, c) = traj.eval(xj);
                max_res = max_res.max(residual(spec, a, b, c));
                p.push(a);
                dp.push(b);
                d2p.push(c);
            }
            p[0] = psi0;
            prof.psi.push(p);
            prof.dpsi.push(dp);
            prof.d2psi.push(d2p);
            prof.closed_form.push(Some(traj));
        }
        rays.push(prof);
    }
    finish(spec, opts, x, l, rays, max_res)
}

fn finish(
    spec: &TestFunctionSpec,
    opts: &OdeOptions,
    x: Vec<f64>,
    l: Vec<f64>,
    rays: Vec<RayProfile>,
    max_res: f64,
) -> Result<TestFunction> {
    if !max_res.is_finite() || max_res > opts.residual_tol {
        return Err(Error::OdeResidual(max_res));
    }
    let tf = TestFunction {
        spec: spec.clone(),
        x,
        l,
        rays,
        max_residual: max_res,
    };
    let m = sup_bound_m(spec);
    let bound = tf.max_abs();
    if bound > m * (1.0 + 1e-12) + 1e-14 {
        return Err(Error::InvalidSpec(format!(
            "solution exceeds the a-priori bound: {bound} > {m}"
        )));
    }
    Ok(tf)
}

/// `(psi, psi', psi'', residual)`.
type Collocated = (Vec<f64>, Vec<f64>, Vec<f64>, f64);

/// Semismooth Newton on the centered finite-difference discretization. Derivatives
/// are finite differences, and the reported residual is that of the discrete equations.
fn collocate(spec: &TestFunctionSpec, psi0: f64, target: f64, n: usize) -> Result<Collocated> {
    let h = spec.eps / n as f64;
    let (r, b, c) = (spec.r, spec.b, spec.h + spec.eta);
    let mut u: Vec<f64> = (0..=n)
        .map(|j| psi0 + (target - psi0) * j as f64 / n as f64)
        .collect();
    u[n] = target;
    let m = n - 1;
    let (mut sub, mut diag, mut sup, mut rhs, mut scratch) = (
        vec![0.0; m],
        vec![0.0; m],
        vec![0.0; m],
        vec![0.0; m],
        vec![0.0; m],
    );
    let eq = |u: &[f64], j: usize| {
        let d1 = (u[j + 1] - u[j - 1]) / (2.0 * h);
        let d2 = (u[j + 1] - 2.0 * u[j] + u[j - 1]) / (h * h);
        r * u[j] - d2 + b * d1.abs() + c
    };
    // the discrete equations cannot be met below roundoff in the second difference
    let roundoff = 1e-11 + 64.0 * f64::EPSILON * (1.0 + psi0.abs() + target.abs()) / (h * h);
    let mut res = f64::INFINITY;
    for _ in 0..100 {
        res = 0.0;
        for j in 1..n {
            let f = eq(&u, j);
            res = res.max(f.abs());
            let d1 = (u[j + 1] - u[j - 1]) / (2.0 * h);
            let s = if d1 >= 0.0 { 1.0 } else { -1.0 };
            sub[j - 1] = -1.0 / (h * h) - b * s / (2.0 * h);
            diag[j - 1] = r + 2.0 / (h * h);
            sup[j - 1] = -1.0 / (h * h) + b * s / (2.0 * h);
            rhs[j - 1] = -f;
        }
        if res <= roundoff {
            break;
        }
        tridiag::solve(&sub, &diag, &sup, &mut rhs, &mut scratch)?;
        for j in 1..n {
            u[j] += rhs[j - 1];
        }
    }
    if !(res <= 100.0 * roundoff) {
        return Err(Error::Shooting(format!(
            "collocation did not converge (residual {res:e})"
        )));
    }
    let mut dp = vec![0.0; n + 1];
    let mut d2p = vec![0.0; n + 1];
    for j in 1..n {
        dp[j] = (u[j + 1] - u[j - 1]) / (2.0 * h);
        d2p[j] = (u[j + 1] - 2.0 * u[j] + u[j - 1]) / (h * h);
    }
    dp[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h);
    dp[n] = (3.0 * u[n] - 4.0 * u[n - 1] + u[n - 2]) / (2.0 * h);
    d2p[0] = d2p[1];
    d2p[n] = d2p[n - 1];
    Ok((u, dp, d2p, res))
}

/// Finite-difference solution on the same grids, for cross-checking the shooting solver.
/// The residual tolerance applies to the discrete equations.
pub fn solve_param_ode_fd(spec: &TestFunctionSpec, opts: &OdeOptions) -> Result<TestFunction> {
    check(spec, opts)?;
    let n = opts.nx_fine;
    let x = crate::math::linspace(0.0, spec.eps, n);
    let l = l_samples(spec, opts.nl_samples);
    let mut rays = Vec::new();
    let mut max_res: f64 = 0.0;
    for &z in &spec.z {
        let mut prof = RayProfile {
            psi: Vec::new(),
            dpsi: Vec::new(),
            d2psi: Vec::new(),
            closed_form: Vec::new(),
        };
        for &lk in &l {
            let shift = spec.slope * (lk - spec.ell);
            let (p, dp, d2p, res) = collocate(spec, spec.w + shift, z + shift + spec.gamma, n)?;
            max_res = max_res.max(res);
            prof.psi.push(p);
            prof.dpsi.push(dp);
            prof.d2psi.push(d2p);
            prof.closed_form.push(None);
        }
        rays.push(prof);
    }
    let h = spec.eps / n as f64;
    let roundoff = 1e-9 + 1e4 * f64::EPSILON * (1.0 + sup_bound_m(spec)) / (h * h);
    finish(
        spec,
        &OdeOptions {
            residual_tol: opts.residual_tol.max(roundoff),
            ..*opts
        },
        x,
        l,
        rays,
        max_res,
    )
}
