//! Discrete comparison harness and the function transforms it relies on.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{interior_residual, march_local_time, SolverOptions};
use crate::error::{Error, Result};
use crate::expr::{CoefficientExpr, Variable};
use crate::math::exp;
use crate::network::{compare_pointwise, Grid, NetworkFunction, NodeIndex, OrderingReport};
use crate::problem::ProblemData;

/// A shifted function together with the sign information of its discrete residual.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftReport {
    pub shifted: NetworkFunction,
    /// Smallest interior residual of the shifted function; at least `lambda c - tol`
    /// when the input solves the scheme.
    pub min_residual: f64,
}

/// `u + c` with `c >= 0`.
pub fn shift_supersolution(
    data: &ProblemData,
    u: &NetworkFunction,
    c: f64,
    opts: &SolverOptions,
) -> Result<ShiftReport> {
    if !(c >= 0.0) {
        return Err(Error::InvalidProblem(alloc::format!(
            "shift must be nonnegative, got {c}"
        )));
    }
    let shifted = u.add_scalar(c);
    let min_residual = interior_residual(data, &shifted, opts.upwinding)?.min;
    Ok(ShiftReport {
        shifted,
        min_residual,
    })
}

/// `u +- eps exp(-eps l)` at every node (`sign` is `1.0` or `-1.0`).
pub fn epsilon_scaling_transform(
    u: &NetworkFunction,
    eps: f64,
    sign: f64,
) -> Result<NetworkFunction> {
    if !(eps > 0.0) {
        return Err(Error::InvalidProblem(alloc::format!(
            "eps must be positive, got {eps}"
        )));
    }
    let s = if sign < 0.0 { -1.0 } else { 1.0 };
    Ok(u.map(|_, _, l, v| v + s * eps * exp(-eps * l)))
}

/// `d/dl [eps exp(-eps l)] = -eps^2 exp(-eps l)`, the l-derivative added at the vertex.
pub fn epsilon_vertex_l_derivative(eps: f64, l: f64) -> f64 {
    -eps * eps * exp(-eps * l)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonOptions {
    pub trials: usize,
    pub seed: u64,
    /// Uniform offset applied to the boundary data.
    pub delta: f64,
    /// Tolerance of the ordering checks.
    pub tol: f64,
}

impl Default for ComparisonOptions {
    fn default() -> Self {
        Self {
            trials: 10,
            seed: 0,
            delta: 0.1,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub trial: usize,
    /// Extra slope added along x and l to the boundary offsets.
    pub slope: f64,
    /// Amount by which the ray cost is lowered (super) or raised (sub).
    pub cost_shift: f64,
    /// Amount by which the vertex cost is raised (super) or lowered (sub).
    pub vertex_cost_shift: f64,
    pub super_vs_base: OrderingReport,
    pub base_vs_sub: OrderingReport,
    /// Smallest residual of `u + delta`, compared against `lambda delta - tol`.
    pub shifted_min_residual: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub trials: Vec<TrialOutcome>,
    pub failures: usize,
    /// Smallest ordering margin seen over all trials and where it occurred.
    pub worst_margin: f64,
    pub worst_location: NodeIndex,
}

impl ComparisonReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

fn perturbed(
    data: &ProblemData,
    sign: f64,
    delta: f64,
    slope: f64,
    cost: f64,
    vcost: f64,
) -> Result<ProblemData> {
    let r = data.network().length();
    let k = data.network().horizon();
    let c = CoefficientExpr::constant;
    let x = CoefficientExpr::var(Variable::X);
    let l = CoefficientExpr::var(Variable::L);
    let along_x = c(sign * delta).plus(&x.times(&c(sign * slope / r)));
    let along_l = c(sign * delta).plus(&l.times(&c(sign * slope / k)));
    let rays = data
        .rays()
        .iter()
        .map(|ray| {
            let mut ray = ray.clone();
            ray.terminal = ray.terminal.plus(&along_x);
            ray.lateral = ray.lateral.plus(&along_l);
            ray.cost = ray.cost.offset(-sign * cost);
            ray
        })
        .collect();
    let mut vertex = data.vertex().clone();
    vertex.cost = vertex.cost.offset(sign * vcost);
    data.rebuild(data.network().clone(), rays, vertex)
}

/// Randomized check that ordered data give ordered discrete solutions.
///
/// Each trial draws a slope and cost offsets, builds a super problem (boundary data
/// raised by `delta` plus the slope, ray cost lowered, vertex cost raised) and the
/// mirrored sub problem, and checks `super >= base >= sub` at every node. It also
/// checks that `base + delta` has interior residual at least `lambda delta - tol`.
pub fn verify_comparison(
    data: &ProblemData,
    grid: &Grid,
    copts: &ComparisonOptions,
    opts: &SolverOptions,
) -> Result<ComparisonReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(copts.seed);
    let base = march_local_time(data, grid, opts)?.solution;
    let mut trials = Vec::with_capacity(copts.trials);
    let mut failures = 0;
    let mut worst_margin = f64::INFINITY;
    let mut worst_location = NodeIndex::default();
    for trial in 0..copts.trials {
        let slope = copts.delta * rng.random::<f64>();
        let cost_shift = copts.delta * rng.random::<f64>();
        let vertex_cost_shift = copts.delta * rng.random::<f64>();
        let up = perturbed(data, 1.0, copts.delta, slope, cost_shift, vertex_cost_shift)?;
        let down = perturbed(
            data,
            -1.0,
            copts.delta,
            slope,
            cost_shift,
            vertex_cost_shift,
        )?;
        let su = march_local_time(&up, grid, opts)?.solution;
        let sb = march_local_time(&down, grid, opts)?.solution;
        let super_vs_base = compare_pointwise(&su, &base)?;
        let base_vs_sub = compare_pointwise(&base, &sb)?;
        let shift = shift_supersolution(data, &base, copts.delta, opts)?;
        let shift_ok = shift.min_residual >= data.lambda() * copts.delta - opts.tol.max(copts.tol);
        let violated =
            !(super_vs_base.holds(copts.tol) && base_vs_sub.holds(copts.tol) && shift_ok);
        for r in [&super_vs_base, &base_vs_sub] {
            if r.min_diff < worst_margin {
                worst_margin = r.min_diff;
                worst_location = r.argmin;
            }
        }
        if violated {
            failures += 1;
        }
        trials.push(TrialOutcome {
            trial,
            slope,
            cost_shift,
            vertex_cost_shift,
            super_vs_base,
            base_vs_sub,
            shifted_min_residual: shift.min_residual,
            violated,
        });
    }
    Ok(ComparisonReport {
        trials,
        failures,
        worst_margin,
        worst_location,
    })
}

/// Supremum of `v - u - alpha l^2` and where it is attained, for comparisons on a
/// truncated local-time window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyReport {
    pub sup: f64,
    pub location: NodeIndex,
    pub l_star: f64,
    pub truncation: f64,
}

impl PenaltyReport {
    /// The maximizer sits well inside the window (below half of the truncation).
    pub fn attained_inside(&self) -> bool {
        self.l_star <= 0.5 * self.truncation
    }
}

pub fn penalty_check(
    u: &NetworkFunction,
    v: &NetworkFunction,
    alpha: f64,
) -> Result<PenaltyReport> {
    if u.grid() != v.grid() {
        return Err(Error::GridMismatch);
    }
    let g = u.grid();
    let mut rep = PenaltyReport {
        sup: f64::NEG_INFINITY,
        location: NodeIndex::default(),
        l_star: 0.0,
        truncation: g.horizon(),
    };
    for i in 0..g.rays() {
        for (k, &l) in g.l().iter().enumerate() {
            let (a, b) = (u.ray_level(i, k), v.ray_level(i, k));
            for j in 0..=g.nx() {
                let d = b[j] - a[j] - alpha * l * l;
                if d > rep.sup {
                    rep.sup = d;
                    rep.location = NodeIndex {
                        ray: i,
                        level: k,
                        node: j,
                    };
                    rep.l_star = l;
                }
            }
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_grid, LocalTimeBound, Network};
    use crate::problem::fixtures::{e, ray};
    use crate::problem::{ControlSet, VertexData};
    use crate::solver::Upwinding;
    use alloc::vec;

    fn controlled(nx: usize, nl: usize) -> (ProblemData, Grid) {
        let r1 = ray(
            "0.5 + 0.3*beta^2",
            "beta",
            "x - beta",
            "0.4 + 0.2*theta",
            "sin(l)",
            "x*sin(1)",
            ControlSet::interval(-1.0, 1.0, 5).unwrap(),
        );
        let r2 = ray(
            "0.8",
            "-beta*x",
            "beta^2 - 1",
            "0.6 - 0.2*theta",
            "l*l",
            "x*x",
            ControlSet::interval(-1.0, 1.0, 5).unwrap(),
        );
        let net = Network::finite(2, 1.0, 1.0).unwrap();
        let d = ProblemData::new(
            net,
            1.0,
            vec![r1, r2],
            VertexData {
                cost: e("theta - 0.5"),
                controls: ControlSet::interval(0.0, 1.0, 3).unwrap(),
            },
        )
        .unwrap();
        let g = build_grid(d.network(), nx, nl).unwrap();
        (d, g)
    }

    #[test]
    fn comparison_holds_for_monotone_scheme() {
        let (d, g) = controlled(30, 20);
        let rep = verify_comparison(
            &d,
            &g,
            &ComparisonOptions {
                trials: 3,
                seed: 7,
                ..Default::default()
            },
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(rep.passed(), "{rep:?}");
        assert!(rep.worst_margin > 0.0);
    }

    #[test]
    fn zero_delta_gives_identical_solutions() {
        let (d, g) = controlled(20, 10);
        let copts = ComparisonOptions {
            trials: 1,
            seed: 1,
            delta: 0.0,
            tol: 1e-9,
        };
        let rep = verify_comparison(&d, &g, &copts, &SolverOptions::default()).unwrap();
        assert!(rep.passed());
        assert!(rep.worst_margin.abs() < 1e-9);
    }

    #[test]
    fn central_differences_break_ordering() {
        let rays = (0..2)
            .map(|_| {
                ray(
                    "0.01",
                    "5",
                    "0",
                    "0.5",
                    "0",
                    "0",
                    ControlSet::singleton(0.0),
                )
            })
            .collect();
        let net = Network::finite(2, 1.0, 1.0).unwrap();
        let d = ProblemData::new(
            net,
            1.0,
            rays,
            VertexData {
                cost: e("0"),
                controls: ControlSet::singleton(0.0),
            },
        )
        .unwrap();
        let g = build_grid(d.network(), 20, 10).unwrap();
        let opts = SolverOptions {
            upwinding: Upwinding::Central,
            ..Default::default()
        };
        let rep = verify_comparison(
            &d,
            &g,
            &ComparisonOptions {
                trials: 2,
                seed: 3,
                ..Default::default()
            },
            &opts,
        )
        .unwrap();
        assert!(rep.failures > 0);
        let ok = verify_comparison(
            &d,
            &g,
            &ComparisonOptions {
                trials: 2,
                seed: 3,
                ..Default::default()
            },
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(ok.passed());
    }

    #[test]
    fn shift_identity_and_residual() {
        let (d, g) = controlled(20, 8);
        let u = march_local_time(&d, &g, &SolverOptions::default())
            .unwrap()
            .solution;
        let s0 = shift_supersolution(&d, &u, 0.0, &SolverOptions::default()).unwrap();
        assert_eq!(s0.shifted, u);
        let s1 = shift_supersolution(&d, &u, 1.0, &SolverOptions::default()).unwrap();
        assert!(s1.min_residual >= 1.0 - 1e-8);
        let r = compare_pointwise(&s1.shifted, &u).unwrap();
        assert!((r.min_diff - 1.0).abs() < 1e-12);
        assert!(shift_supersolution(&d, &u, -1.0, &SolverOptions::default()).is_err());
    }

    #[test]
    fn epsilon_transform_values() {
        let (_, g) = controlled(4, 4);
        let u = NetworkFunction::constant(&g, 0.0);
        let t = epsilon_scaling_transform(&u, 0.1, 1.0).unwrap();
        assert!((t.vertex(0) - 0.1).abs() < 1e-15);
        let m = epsilon_scaling_transform(&u, 0.1, -1.0).unwrap();
        assert!(compare_pointwise(&t, &m).unwrap().min_diff > 0.0);
        assert!((epsilon_vertex_l_derivative(0.5, 1.0) + 0.151633).abs() < 1e-6);
        for eps in [0.1, 0.01, 0.001] {
            let t = epsilon_scaling_transform(&u, eps, 1.0).unwrap();
            assert!(t.sup_distance(&u).unwrap() <= eps + 1e-18);
        }
        assert!(epsilon_scaling_transform(&u, 0.0, 1.0).is_err());
    }

    #[test]
    fn penalty_supremum_on_truncated_window() {
        let rays = (0..2)
            .map(|_| ray("1", "0", "-1", "0.5", "1", "1", ControlSet::singleton(0.0)))
            .collect();
        let net = Network::new(2, 1.0, LocalTimeBound::Unbounded { truncation: 8.0 }).unwrap();
        let d = ProblemData::new(
            net,
            1.0,
            rays,
            VertexData {
                cost: e("0"),
                controls: ControlSet::singleton(0.0),
            },
        )
        .unwrap();
        let g = build_grid(d.network(), 20, 40).unwrap();
        let u = march_local_time(&d, &g, &SolverOptions::default())
            .unwrap()
            .solution;
        let v = u
            .add_scalar(-0.0)
            .map(|_, x, l, w| w + 0.2 * x * (1.0 - x) * exp(-l));
        let rep = penalty_check(&u, &v, 0.1).unwrap();
        assert!(rep.attained_inside(), "{rep:?}");
        assert!(rep.sup >= 0.0);
    }
}
