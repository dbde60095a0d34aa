//! Sampling-based check of the structural assumptions on the data.
//!
//! Every bound is estimated on a tensor grid of `(x, l)` samples times all control
//! points; Lipschitz constants are maximal difference quotients between adjacent
//! samples. The result is an estimate, not a certificate.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::linspace;
use crate::problem::ProblemData;

/// Sampled size and regularity of one coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientStats {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub sup_abs: f64,
    pub lip_x: f64,
    pub lip_l: f64,
}

impl CoefficientStats {
    /// `sup |c| + Lip_x + Lip_l`.
    pub fn bound(&self) -> f64 {
        self.sup_abs + self.lip_x + self.lip_l
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub zeta_lower: f64,
    /// `sup |S| + Lip_l` over rays and vertex controls.
    pub zeta_upper: f64,
    pub sigma_lower: f64,
    /// `sup |sigma| + Lip_x + Lip_l` over rays and controls.
    pub sigma_upper: f64,
    pub b_bound: f64,
    /// Largest of the ray-cost and vertex-cost bounds.
    pub h_bound: f64,
    pub coefficients: Vec<CoefficientStats>,
    /// Spin weights bounded below.
    pub pass_s: bool,
    /// Uniform ellipticity.
    pub pass_e: bool,
    /// Boundedness and Lipschitz regularity of drift, diffusion, cost, spin and vertex cost.
    pub pass_r: [bool; 5],
    pub sample_count: usize,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.pass_s && self.pass_e && self.pass_r.iter().all(|&p| p)
    }
}

struct Acc {
    stats: CoefficientStats,
}

impl Acc {
    fn new(name: String) -> Self {
        Self {
            stats: CoefficientStats {
                name,
                min: f64::INFINITY,
                max: f64::NEG_INFINITY,
                sup_abs: 0.0,
                lip_x: 0.0,
                lip_l: 0.0,
            },
        }
    }

    /// `grid[a][b]` sampled at `xs[a]`, `ls[b]`.
    fn absorb(&mut self, grid: &[Vec<f64>], dx: f64, dl: f64) -> Result<()> {
        let s = &mut self.stats;
        for (a, row) in grid.iter().enumerate() {
            for (b, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("{} at sample ({a}, {b})", s.name)));
                }
                s.min = s.min.min(v);
                s.max = s.max.max(v);
                s.sup_abs = s.sup_abs.max(v.abs());
                if a + 1 < grid.len() && dx > 0.0 {
                    s.lip_x = s.lip_x.max((grid[a + 1][b] - v).abs() / dx);
                }
                if b + 1 < row.len() && dl > 0.0 {
                    s.lip_l = s.lip_l.max((row[b + 1] - v).abs() / dl);
                }
            }
        }
        Ok(())
    }
}

pub fn validate_assumptions(
    data: &ProblemData,
    samples_per_axis: usize,
    tol: f64,
) -> Result<AssumptionReport> {
    if samples_per_axis < 2 {
        return Err(Error::InvalidProblem(format!(
            "samples_per_axis must be at least 2, got {samples_per_axis}"
        )));
    }
    let n = samples_per_axis - 1;
    let xs = linspace(0.0, data.network().length(), n);
    let ls = linspace(0.0, data.network().horizon(), n);
    let dx = xs[1] - xs[0];
    let dl = ls[1] - ls[0];
    let mut count = 0usize;
    let mut coefficients = Vec::new();
    let (mut sig, mut drift, mut cost) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..data.rays().len() {
        let mut acc = [
            Acc::new(format!("sigma[{}]", i + 1)),
            Acc::new(format!("drift[{}]", i + 1)),
            Acc::new(format!("cost[{}]", i + 1)),
        ];
        for beta in data.ray(i).controls.iter() {
            let mut g = [Vec::new(), Vec::new(), Vec::new()];
            for &x in &xs {
                let mut rows = [
                    Vec::with_capacity(ls.len()),
                    Vec::with_capacity(ls.len()),
                    Vec::with_capacity(ls.len()),
                ];
                for &l in &ls {
                    let (s, b, h) = data.ray_coefficients(i, x, l, beta[0]);
                    rows[0].push(s);
                    rows[1].push(b);
                    rows[2].push(h);
                    count += 1;
                }
                for (gk, r) in g.iter_mut().zip(rows) {
                    gk.push(r);
                }
            }
            for (a, gk) in acc.iter_mut().zip(&g) {
                a.absorb(gk, dx, dl)?;
            }
        }
        let [a, b, c] = acc;
        sig.push(a.stats);
        drift.push(b.stats);
        cost.push(c.stats);
    }
    let mut spin = Vec::new();
    for i in 0..data.rays().len() {
        let mut acc = Acc::new(format!("spin[{}]", i + 1));
        for theta in data.vertex().controls.iter() {
            let row: Vec<f64> = ls.iter().map(|&l| data.spin(i, l, theta)).collect();
            count += row.len();
            acc.absorb(&[row], 0.0, dl)?;
        }
        spin.push(acc.stats);
    }
    let mut h0 = Acc::new("vertex cost".into());
    for theta in data.vertex().controls.iter() {
        let row: Vec<f64> = ls.iter().map(|&l| data.vertex_cost(l, theta)).collect();
        count += row.len();
        h0.absorb(&[row], 0.0, dl)?;
    }
    let h0 = h0.stats;

    let fold = |v: &[CoefficientStats],
                f: fn(&CoefficientStats) -> f64,
                init: f64,
                op: fn(f64, f64) -> f64| { v.iter().map(f).fold(init, op) };
    let zeta_lower = fold(&spin, |s| s.min, f64::INFINITY, f64::min);
    let zeta_upper = fold(&spin, |s| s.sup_abs + s.lip_l, 0.0, f64::max);
    let sigma_lower = fold(&sig, |s| s.min, f64::INFINITY, f64::min);
    let sigma_upper = fold(&sig, CoefficientStats::bound, 0.0, f64::max);
    let b_bound = fold(&drift, CoefficientStats::bound, 0.0, f64::max);
    let h_ray = fold(&cost, CoefficientStats::bound, 0.0, f64::max);
    let h_vertex = h0.sup_abs + h0.lip_l;
    let pass_r = [
        b_bound.is_finite(),
        sigma_upper.is_finite(),
        h_ray.is_finite(),
        zeta_upper.is_finite(),
        h_vertex.is_finite(),
    ];
    coefficients.extend(sig);
    coefficients.extend(drift);
    coefficients.extend(cost);
    coefficients.extend(spin);
    coefficients.push(h0);
    Ok(AssumptionReport {
        zeta_lower,
        zeta_upper,
        sigma_lower,
        sigma_upper,
        b_bound,
        h_bound: h_ray.max(h_vertex),
        coefficients,
        pass_s: zeta_lower > tol,
        pass_e: sigma_lower > tol,
        pass_r,
        sample_count: count,
    })
}
