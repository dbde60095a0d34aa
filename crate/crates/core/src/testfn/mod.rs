//! Vertex test functions.
//!
//! The parametric problem is `r psi - psi'' + B |psi'| + H + eta = 0` on `(0, eps)` for
//! every ray, with `psi(0, l) = w + S (l - ell)` and `psi_i(eps, l) = z_i + S (l - ell) + gamma`,
//! for `l` in `[ell - kappa, ell + kappa]`. This module holds the parameters,
//! the smallness conditions, the a-priori bounds and the absorbing slope `S(beta)`;
//! [`ode`] solves the problem, [`study`] runs vanishing-limit schedules and
//! [`linear`] covers the linear Neumann problem and its double-integral test functions.

pub mod linear;
pub mod ode;
pub mod study;

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::exp;

pub use linear::{
    divided_double_integral, linear_oracle, linear_test_functions, LinearOracle, Side,
    TestFunctionCheck,
};
pub use ode::{solve_param_ode, solve_param_ode_fd, OdeOptions, RayProfile, TestFunction};
pub use study::{vanishing_limit_study, ScheduleRow, StudyRow};

#[derive(Debug, Clone, PartialEq)]
pub struct TestFunctionSpec {
    pub r: f64,
    /// Gradient coefficient `B`.
    pub b: f64,
    /// Constant source `H`.
    pub h: f64,
    pub eps: f64,
    pub kappa: f64,
    pub eta: f64,
    pub gamma: f64,
    /// Slope `S` of the vertex line in `l`.
    pub slope: f64,
    /// Vertex value `w` at `l = ell`.
    pub w: f64,
    /// Right-end values, one per ray.
    pub z: Vec<f64>,
    pub beta: f64,
    /// Centre `ell` of the local-time window.
    pub ell: f64,
}

impl TestFunctionSpec {
    pub fn rays(&self) -> usize {
        self.z.len()
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.r, self.b, self.h, self.eps, self.kappa, self.eta, self.gamma, self.slope, self.w,
            self.beta, self.ell,
        ];
        if finite.iter().chain(&self.z).any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("all parameters must be finite".into()));
        }
        if !(self.r > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "r must be positive, got {}",
                self.r
            )));
        }
        if !(self.eps > 0.0 && self.kappa > 0.0) {
            return Err(Error::InvalidSpec("eps and kappa must be positive".into()));
        }
        if self.slope < 0.0 || self.beta < 0.0 {
            return Err(Error::InvalidSpec("S and beta must be nonnegative".into()));
        }
        if self.z.is_empty() {
            return Err(Error::InvalidSpec("need at least one ray".into()));
        }
        Ok(())
    }

    /// `max_i |z_i|`.
    pub fn z_max(&self) -> f64 {
        self.z.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// The same spec with `S = S(beta)`.
    pub fn with_absorbing_slope(&self) -> Result<Self> {
        let mut s = self.clone();
        s.slope = compute_s_beta(self)?;
        Ok(s)
    }
}

/// `1 - |B| eps exp(|B| eps)`.
pub fn smallness_value(b: f64, eps: f64) -> f64 {
    let a = b.abs() * eps;
    1.0 - a * exp(a)
}

pub fn smallness_ok(b: f64, eps: f64) -> bool {
    smallness_value(b, eps) > 0.0
}

/// `1 - eps beta r kappa (e^{|B| eps} - 1) - eps^2 beta r kappa |B| e^{2 |B| eps} / (1 - |B| eps e^{|B| eps})`.
pub fn kappa_value(beta: f64, eps: f64, kappa: f64, r: f64, b: f64) -> Result<f64> {
    let d1 = smallness_value(b, eps);
    if !(d1 > 0.0) {
        return Err(Error::SmallnessViolated(d1));
    }
    let e = exp(b.abs() * eps);
    Ok(1.0
        - eps * beta * r * kappa * (e - 1.0)
        - eps * eps * beta * (r * kappa * b.abs() * e * e) / d1)
}

pub fn kappa_ok(beta: f64, eps: f64, kappa: f64, r: f64, b: f64) -> Result<bool> {
    Ok(kappa_value(beta, eps, kappa, r, b)? > 0.0)
}

/// `M = w + z + kappa S + |gamma| + (|H| + |eta|) / r` with `w = |w|`, `z = max |z_i|`.
pub fn sup_bound_m(spec: &TestFunctionSpec) -> f64 {
    spec.w.abs()
        + spec.z_max()
        + spec.kappa * spec.slope
        + spec.gamma.abs()
        + (spec.h.abs() + spec.eta.abs()) / spec.r
}

/// `C_1 = r (w + z + kappa S + |gamma|) + 2 (|H| + |eta|)`.
pub fn constant_c1(spec: &TestFunctionSpec) -> f64 {
    spec.r * (spec.w.abs() + spec.z_max() + spec.kappa * spec.slope + spec.gamma.abs())
        + 2.0 * (spec.h.abs() + spec.eta.abs())
}

/// `C_2 = r (w + z + |gamma|) + 2 (|H| + |eta|)`.
pub fn constant_c2(spec: &TestFunctionSpec) -> f64 {
    spec.r * (spec.w.abs() + spec.z_max() + spec.gamma.abs())
        + 2.0 * (spec.h.abs() + spec.eta.abs())
}

/// `(e^{|B| eps} - 1) / |B|`, equal to `eps` when `B = 0`.
fn growth_factor(b: f64, eps: f64) -> f64 {
    if b == 0.0 {
        eps
    } else {
        (exp(b.abs() * eps) - 1.0) / b.abs()
    }
}

/// Bound on `|psi_i'(x)|` over the whole interval given the vertex slope `|psi_i'(0)|`.
pub fn gradient_bound(spec: &TestFunctionSpec, vertex_slope: f64) -> f64 {
    let e = exp(spec.b.abs() * spec.eps);
    let m = sup_bound_m(spec);
    vertex_slope.abs() * e
        + (spec.r * m + spec.h.abs() + spec.eta.abs()) * growth_factor(spec.b, spec.eps)
}

/// Bound on `|psi_i'(0)|` for ray `i`.
pub fn vertex_gradient_bound(spec: &TestFunctionSpec, ray: usize) -> f64 {
    let a = spec.b.abs() * spec.eps;
    let e = exp(a);
    let d1 = 1.0 - a * e;
    ((spec.gamma + spec.z[ray] - spec.w).abs() / spec.eps + constant_c1(spec) * spec.eps * e) / d1
}

/// The absorbing slope
/// `S(beta) = [eps beta |B| e/D1 (G + C_2 eps e) + eps beta (C_2 (e - 1) + |H| + |eta|)] / D2`
/// with `e = exp(|B| eps)`, `D1` the smallness value, `D2` the kappa value and
/// `G = max_i |gamma + z_i - w| / eps`.
pub fn compute_s_beta(spec: &TestFunctionSpec) -> Result<f64> {
    let d2 = kappa_value(spec.beta, spec.eps, spec.kappa, spec.r, spec.b)?;
    if !(d2 > 0.0) {
        return Err(Error::KappaViolated(d2));
    }
    let (eps, beta, b) = (spec.eps, spec.beta, spec.b.abs());
    let e = exp(b * eps);
    let d1 = smallness_value(b, eps);
    let g = spec
        .z
        .iter()
        .map(|z| (spec.gamma + z - spec.w).abs())
        .fold(0.0, f64::max)
        / eps;
    let c2 = constant_c2(spec);
    let first = eps * beta * b * (e / d1) * (g + c2 * eps * e);
    let second = eps * beta * (c2 * (e - 1.0) + spec.h.abs() + spec.eta.abs());
    Ok((first + second) / d2)
}

/// `S >= eps beta (|B| max |psi'| + |H| + |eta|)` on the solved field, with a relative
/// roundoff allowance of `1e-12`.
pub fn absorption_check(tf: &TestFunction, spec: &TestFunctionSpec) -> bool {
    let rhs = spec.eps
        * spec.beta
        * (spec.b.abs() * tf.max_abs_derivative() + spec.h.abs() + spec.eta.abs());
    tf.spec.slope >= rhs * (1.0 - 1e-12)
}

/// Outcome of every a-priori bound and identity on a solved test function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    pub m_bound: f64,
    pub max_abs: f64,
    /// `|psi| <= M` everywhere.
    pub m_bound_ok: bool,
    /// `|psi'(x)|` within the interior gradient bound everywhere.
    pub gradient_ok: bool,
    /// `|psi'(0)|` within the vertex gradient bound on every ray and level.
    pub vertex_gradient_ok: bool,
    pub flux_defect: f64,
    /// Flux identity within `flux_tol`.
    pub flux_ok: bool,
    pub absorption_ok: bool,
}

impl Certificate {
    pub fn all_ok(&self) -> bool {
        self.m_bound_ok
            && self.gradient_ok
            && self.vertex_gradient_ok
            && self.flux_ok
            && self.absorption_ok
    }
}

/// Checks a solved test function against its bounds; the relative slack `1e-12`
/// absorbs roundoff only.
pub fn certify(tf: &TestFunction, flux_tol: f64) -> Certificate {
    let spec = &tf.spec;
    let slack = 1.0 + 1e-12;
    let m_bound = sup_bound_m(spec);
    let max_abs = tf.max_abs();
    let mut gradient_ok = true;
    let mut vertex_gradient_ok = true;
    for (i, ray) in tf.rays.iter().enumerate() {
        for d in &ray.dpsi {
            let q0 = d[0].abs();
            vertex_gradient_ok &= q0 <= vertex_gradient_bound(spec, i) * slack;
            let g = gradient_bound(spec, q0) * slack;
            gradient_ok &= d.iter().all(|v| v.abs() <= g);
        }
    }
    let flux_defect = tf.flux_identity_defect();
    Certificate {
        m_bound,
        max_abs,
        m_bound_ok: max_abs <= m_bound * slack,
        gradient_ok,
        vertex_gradient_ok,
        flux_defect,
        flux_ok: flux_defect <= flux_tol,
        absorption_ok: absorption_check(tf, spec),
    }
}

#[cfg(test)]
pub(crate) fn base_spec() -> TestFunctionSpec {
    TestFunctionSpec {
        r: 1.0,
        b: 1.0,
        h: 1.0,
        eps: 0.1,
        kappa: 0.01,
        eta: 0.0,
        gamma: 0.0,
        slope: 0.0,
        w: 0.0,
        z: alloc::vec![0.0, 0.0],
        beta: 1.0,
        ell: 1.0,
    }
}
