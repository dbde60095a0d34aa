//! Problem data: coefficients, control sets and the pointwise Hamiltonians.
//!
//! The ray operator is `lambda u + max_beta (-sigma u_xx + b u_x + h)`, with `sigma`
//! multiplying the second derivative as is (no factor 1/2). The vertex operator is
//! `u_l + min_theta (sum_i S_i u_x,i(0) + h0)`.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::expr::{CoefficientExpr, Variable, Vars};
use crate::network::Network;

/// A finite, non-empty set of control points of a fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSet {
    dim: usize,
    points: Vec<f64>,
}

impl ControlSet {
    pub fn points(dim: usize, pts: &[Vec<f64>]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidControlSet(
                "dimension must be at least 1".into(),
            ));
        }
        if pts.is_empty() {
            return Err(Error::InvalidControlSet("control set is empty".into()));
        }
        let mut points = Vec::with_capacity(dim * pts.len());
        for (k, p) in pts.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::InvalidControlSet(format!(
                    "point {k} has dimension {}, expected {dim}",
                    p.len()
                )));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidControlSet(format!("point {k} is not finite")));
            }
            points.extend_from_slice(p);
        }
        Ok(Self { dim, points })
    }

    pub fn scalars(pts: &[f64]) -> Result<Self> {
        let v: Vec<Vec<f64>> = pts.iter().map(|&p| vec![p]).collect();
        Self::points(1, &v)
    }

    pub fn singleton(p: f64) -> Self {
        Self {
            dim: 1,
            points: vec![p],
        }
    }

    /// `count` equally spaced points of `[a, b]` (the midpoint when `count == 1`).
    pub fn interval(a: f64, b: f64, count: usize) -> Result<Self> {
        Self::uniform_box(&[a], &[b], count)
    }

    /// Tensor grid with `count` equally spaced points per axis of the box `[lo, hi]`.
    pub fn uniform_box(lo: &[f64], hi: &[f64], count: usize) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidControlSet(
                "box bounds must have equal, positive dimension".into(),
            ));
        }
        if count == 0 {
            return Err(Error::InvalidControlSet("count must be at least 1".into()));
        }
        if lo
            .iter()
            .zip(hi)
            .any(|(a, b)| !(a.is_finite() && b.is_finite() && a <= b))
        {
            return Err(Error::InvalidControlSet(
                "box bounds must be finite with lo <= hi".into(),
            ));
        }
        let dim = lo.len();
        let axis = |d: usize, k: usize| {
            if count == 1 {
                0.5 * (lo[d] + hi[d])
            } else if k == count - 1 {
                hi[d]
            } else {
                lo[d] + (hi[d] - lo[d]) * k as f64 / (count - 1) as f64
            }
        };
        let total = count
            .checked_pow(dim as u32)
            .ok_or_else(|| Error::InvalidControlSet("too many points".into()))?;
        let mut points = Vec::with_capacity(total * dim);
        for n in 0..total {
            let mut rem = n;
            let mut p = vec![0.0; dim];
            for d in (0..dim).rev() {
                p[d] = axis(d, rem % count);
                rem /= count;
            }
            points.extend_from_slice(&p);
        }
        Ok(Self { dim, points })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    /// Always false: empty control sets cannot be constructed.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }
}

/// Coefficients and boundary data of one ray.
#[derive(Debug, Clone, PartialEq)]
pub struct RayData {
    /// Diffusion coefficient in `(x, l, beta)`.
    pub sigma: CoefficientExpr,
    /// Drift in `(x, l, beta)`.
    pub drift: CoefficientExpr,
    /// Running cost in `(x, l, beta)`.
    pub cost: CoefficientExpr,
    /// Spinning weight in `(l, theta)`.
    pub spin: CoefficientExpr,
    /// Lateral datum `u_i(R, l)` in `(l)`.
    pub lateral: CoefficientExpr,
    /// Terminal datum `u_i(x, K)` in `(x)`.
    pub terminal: CoefficientExpr,
    pub controls: ControlSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VertexData {
    /// Vertex cost in `(l, theta)`.
    pub cost: CoefficientExpr,
    pub controls: ControlSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemData {
    network: Network,
    lambda: f64,
    rays: Vec<RayData>,
    vertex: VertexData,
}

fn check_vars(
    name: &str,
    e: &CoefficientExpr,
    allowed: &[Variable],
    theta_dim: usize,
) -> Result<()> {
    for v in e.variables() {
        let ok = match v {
            Variable::Theta(k) => allowed.contains(&Variable::Theta(0)) && k < theta_dim,
            v => allowed.contains(&v),
        };
        if !ok {
            return Err(Error::ForbiddenVariable {
                name: name.to_string(),
                variable: v.to_string(),
            });
        }
    }
    Ok(())
}

impl ProblemData {
    pub fn new(
        network: Network,
        lambda: f64,
        rays: Vec<RayData>,
        vertex: VertexData,
    ) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidProblem(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        if rays.len() != network.rays() {
            return Err(Error::InvalidProblem(format!(
                "network has {} rays but {} ray data sets were given",
                network.rays(),
                rays.len()
            )));
        }
        use Variable::*;
        let td = vertex.controls.dim();
        for (i, r) in rays.iter().enumerate() {
            let n = i + 1;
            check_vars(&format!("sigma[{n}]"), &r.sigma, &[X, L, Beta], 0)?;
            check_vars(&format!("drift[{n}]"), &r.drift, &[X, L, Beta], 0)?;
            check_vars(&format!("cost[{n}]"), &r.cost, &[X, L, Beta], 0)?;
            check_vars(&format!("spin[{n}]"), &r.spin, &[L, Theta(0)], td)?;
            check_vars(&format!("lateral[{n}]"), &r.lateral, &[L], 0)?;
            check_vars(&format!("terminal[{n}]"), &r.terminal, &[X], 0)?;
            if r.controls.dim() != 1 {
                return Err(Error::InvalidControlSet(format!(
                    "ray {n} controls must be scalar"
                )));
            }
        }
        check_vars("vertex cost", &vertex.cost, &[L, Theta(0)], td)?;
        Ok(Self {
            network,
            lambda,
            rays,
            vertex,
        })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn rays(&self) -> &[RayData] {
        &self.rays
    }

    pub fn ray(&self, i: usize) -> &RayData {
        &self.rays[i]
    }

    pub fn vertex(&self) -> &VertexData {
        &self.vertex
    }

    /// Rebuilds the problem with modified parts; validation is re-run.
    pub fn rebuild(
        &self,
        network: Network,
        rays: Vec<RayData>,
        vertex: VertexData,
    ) -> Result<Self> {
        Self::new(network, self.lambda, rays, vertex)
    }

    /// True when no coefficient or datum depends on the local time.
    pub fn is_l_independent(&self) -> bool {
        let l = Variable::L;
        self.rays.iter().all(|r| {
            !(r.sigma.uses(l)
                || r.drift.uses(l)
                || r.cost.uses(l)
                || r.spin.uses(l)
                || r.lateral.uses(l))
        }) && !self.vertex.cost.uses(l)
    }

    /// `(sigma, b, h)` of ray `i` at one point and control.
    #[inline]
    pub fn ray_coefficients(&self, i: usize, x: f64, l: f64, beta: f64) -> (f64, f64, f64) {
        let r = &self.rays[i];
        let v = Vars {
            x,
            l,
            beta,
            theta: &[],
        };
        (r.sigma.eval(&v), r.drift.eval(&v), r.cost.eval(&v))
    }

    #[inline]
    pub fn spin(&self, i: usize, l: f64, theta: &[f64]) -> f64 {
        self.rays[i].spin.eval(&Vars {
            x: 0.0,
            l,
            beta: 0.0,
            theta,
        })
    }

    #[inline]
    pub fn vertex_cost(&self, l: f64, theta: &[f64]) -> f64 {
        self.vertex.cost.eval(&Vars {
            x: 0.0,
            l,
            beta: 0.0,
            theta,
        })
    }

    pub fn lateral(&self, i: usize, l: f64) -> f64 {
        self.rays[i].lateral.eval(&Vars {
            l,
            ..Default::default()
        })
    }

    pub fn terminal(&self, i: usize, x: f64) -> f64 {
        self.rays[i].terminal.eval(&Vars {
            x,
            ..Default::default()
        })
    }

    /// `lambda u + max_beta (-sigma s + b p + h)` with `s` the second derivative, and the
    /// index of the first maximizing control.
    pub fn hamiltonian_argmax(
        &self,
        i: usize,
        x: f64,
        l: f64,
        u: f64,
        p: f64,
        s: f64,
    ) -> (f64, usize) {
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0;
        for (k, beta) in self.rays[i].controls.iter().enumerate() {
            let (sg, b, h) = self.ray_coefficients(i, x, l, beta[0]);
            let v = -sg * s + b * p + h;
            if v > best {
                best = v;
                arg = k;
            }
        }
        (self.lambda * u + best, arg)
    }

    pub fn hamiltonian_eval(&self, i: usize, x: f64, l: f64, u: f64, p: f64, s: f64) -> f64 {
        self.hamiltonian_argmax(i, x, l, u, p, s).0
    }

    /// `max_beta (b p + h) / sigma`.
    pub fn speed_eval(&self, i: usize, x: f64, l: f64, p: f64) -> Result<f64> {
        let mut best = f64::NEG_INFINITY;
        for beta in self.rays[i].controls.iter() {
            let (sg, b, h) = self.ray_coefficients(i, x, l, beta[0]);
            if !(sg > 0.0) {
                return Err(Error::InvalidProblem(format!(
                    "sigma[{}] = {sg} is not positive at x={x}, l={l}, beta={}",
                    i + 1,
                    beta[0]
                )));
            }
            best = best.max((b * p + h) / sg);
        }
        Ok(best)
    }

    /// `min_theta (sum_i S_i(l, theta) p_i + h0(l, theta))` and the first minimizer.
    pub fn kirchhoff_flux(&self, l: f64, p: &[f64]) -> Result<(f64, usize)> {
        if p.len() != self.rays.len() {
            return Err(Error::Dimension(format!(
                "flux vector has {} entries, expected {}",
                p.len(),
                self.rays.len()
            )));
        }
        Ok(self.kirchhoff_flux_unchecked(l, p))
    }

    pub(crate) fn kirchhoff_flux_unchecked(&self, l: f64, p: &[f64]) -> (f64, usize) {
        let mut best = f64::INFINITY;
        let mut arg = 0;
        for (k, theta) in self.vertex.controls.iter().enumerate() {
            let mut v = self.vertex_cost(l, theta);
            for (i, &pi) in p.iter().enumerate() {
                v += self.spin(i, l, theta) * pi;
            }
            if v < best {
                best = v;
                arg = k;
            }
        }
        (best, arg)
    }

    /// `max_theta sum_i S_i(l, theta)`, the vertex transport speed bound.
    pub fn max_spin_sum(&self, l: f64) -> f64 {
        self.vertex
            .controls
            .iter()
            .map(|theta| {
                (0..self.rays.len())
                    .map(|i| self.spin(i, l, theta).abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// `min_theta sum_i S_i(l, theta) speed_i(x, l, p)` with the same scalar `p` on every ray.
    pub fn kirchhoff_speed_eval(&self, x: f64, l: f64, p: f64) -> Result<f64> {
        let speeds: Vec<f64> = (0..self.rays.len())
            .map(|i| self.speed_eval(i, x, l, p))
            .collect::<Result<_>>()?;
        let mut best = f64::INFINITY;
        for theta in self.vertex.controls.iter() {
            let v: f64 = speeds
                .iter()
                .enumerate()
                .map(|(i, s)| self.spin(i, l, theta) * s)
                .sum();
            best = best.min(v);
        }
        Ok(best)
    }
}
