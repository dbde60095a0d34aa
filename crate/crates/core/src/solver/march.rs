//! Backward march in local time.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{vertex_flux, FluxOrder, RayCoefficients, RaySolver, SolverOptions};
use crate::error::{Error, Result};
use crate::math::ceil;
use crate::network::{Grid, NetworkFunction};
use crate::problem::ProblemData;

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub solution: NetworkFunction,
    /// Policy-iteration steps spent producing each level `0..nl`, summed over rays and substeps.
    pub iterations: Vec<usize>,
    /// Junction sub-steps used to go from level `k + 1` to level `k`.
    pub substeps: Vec<usize>,
    pub max_interior_residual: f64,
    /// `|(v(l_{k+1}) - v(l_k)) / dl + F(l_k, p(l_k))|` for `k = 0..nl`.
    pub kirchhoff_residuals: Vec<f64>,
    pub max_kirchhoff_residual: f64,
    pub dl: f64,
    /// Filled in by callers that can read a clock.
    pub wall_clock_secs: Option<f64>,
}

/// Solves the full system on `grid`, starting from the terminal data at `l = K` and
/// marching the vertex value down to `l = 0`.
pub fn march_local_time(
    data: &ProblemData,
    grid: &Grid,
    opts: &SolverOptions,
) -> Result<SolveReport> {
    let terminal: Vec<Vec<f64>> = (0..data.rays().len())
        .map(|i| grid.x().iter().map(|&x| data.terminal(i, x)).collect())
        .collect();
    march_with_terminal(data, grid, &terminal, opts)
}

struct RayState {
    coef: RayCoefficients,
    l_dependent: bool,
    policy: Vec<usize>,
    u: Vec<f64>,
}

pub(crate) fn march_with_terminal(
    data: &ProblemData,
    grid: &Grid,
    terminal: &[Vec<f64>],
    opts: &SolverOptions,
) -> Result<SolveReport> {
    opts.check()?;
    let nrays = data.rays().len();
    if grid.rays() != nrays || terminal.len() != nrays {
        return Err(Error::Dimension(format!(
            "grid has {} rays, problem has {nrays}",
            grid.rays()
        )));
    }
    let (nx, nl) = (grid.nx(), grid.nl());
    if terminal.iter().any(|t| t.len() != nx + 1) {
        return Err(Error::Dimension(
            "terminal data do not match the x-grid".into(),
        ));
    }
    if opts.flux == FluxOrder::Second && nx < 2 {
        return Err(Error::InvalidGrid("second-order flux needs nx >= 2".into()));
    }
    let kmax = grid.horizon();
    let v_k = terminal[0][0];
    for (i, t) in terminal.iter().enumerate() {
        if !t.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("terminal[{}]", i + 1)));
        }
        if (t[0] - v_k).abs() > opts.tol {
            return Err(Error::VertexIncompatible {
                ray: i + 1,
                first: v_k,
                other: t[0],
            });
        }
        let chi = data.lateral(i, kmax);
        if (chi - t[nx]).abs() > opts.tol {
            return Err(Error::CornerIncompatible {
                ray: i + 1,
                lateral: chi,
                terminal: t[nx],
            });
        }
    }

    let dx = grid.dx();
    let dl = grid.dl();
    let lambda = data.lambda();
    let stride = nx + 1;
    let mut values = vec![0.0; nrays * (nl + 1) * stride];
    let mut vertex = vec![0.0; nl + 1];
    let at = |i: usize, k: usize| (i * (nl + 1) + k) * stride;

    use crate::expr::Variable;
    let mut states: Vec<RayState> = Vec::with_capacity(nrays);
    for (i, t) in terminal.iter().enumerate() {
        let r = data.ray(i);
        let l_dependent =
            r.sigma.uses(Variable::L) || r.drift.uses(Variable::L) || r.cost.uses(Variable::L);
        let mut u = t.clone();
        u[0] = v_k;
        values[at(i, nl)..at(i, nl) + stride].copy_from_slice(&u);
        states.push(RayState {
            coef: RayCoefficients::sample(data, i, grid.x(), kmax)?,
            l_dependent,
            policy: Vec::new(),
            u,
        });
    }
    vertex[nl] = v_k;
    let mut p: Vec<f64> = states
        .iter()
        .map(|s| vertex_flux(&s.u, dx, opts.flux))
        .collect();
    let mut fluxes = vec![0.0; nl + 1];
    fluxes[nl] = data.kirchhoff_flux_unchecked(grid.l()[nl], &p).0;

    let c_flux = match opts.flux {
        FluxOrder::First => 1.0,
        FluxOrder::Second => 1.5,
    };
    let mut solver = RaySolver::default();
    let mut iterations = vec![0usize; nl];
    let mut substeps = vec![0usize; nl];
    let mut v = v_k;
    for k in (1..=nl).rev() {
        let l_hi = grid.l()[k];
        let l_lo = grid.l()[k - 1];
        let speed = data.max_spin_sum(l_hi).max(data.max_spin_sum(l_lo));
        let ratio = dl * c_flux * speed / dx;
        let m = if ratio > 1.0 {
            ceil(ratio * (1.0 - 1e-12)) as usize
        } else {
            1
        };
        let h = dl / m as f64;
        let mut l_cur = l_hi;
        let mut its = 0;
        for s in 1..=m {
            let (f, _) = data.kirchhoff_flux_unchecked(l_cur, &p);
            v += h * f;
            let l_next = if s == m { l_lo } else { l_hi - h * s as f64 };
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("vertex value at l={l_next}")));
            }
            for (i, st) in states.iter_mut().enumerate() {
                if st.l_dependent {
                    st.coef = RayCoefficients::sample(data, i, grid.x(), l_next)?;
                }
                st.u[0] = v;
                st.u[nx] = data.lateral(i, l_next);
                let stats = solver.solve(&st.coef, &mut st.u, &mut st.policy, lambda, dx, opts)?;
                its += stats.iterations;
                p[i] = vertex_flux(&st.u, dx, opts.flux);
            }
            l_cur = l_next;
        }
        for (i, st) in states.iter().enumerate() {
            values[at(i, k - 1)..at(i, k - 1) + stride].copy_from_slice(&st.u);
        }
        vertex[k - 1] = v;
        fluxes[k - 1] = data.kirchhoff_flux_unchecked(l_lo, &p).0;
        iterations[k - 1] = its;
        substeps[k - 1] = m;
    }

    let kirchhoff_residuals: Vec<f64> = (0..nl)
        .map(|k| ((vertex[k + 1] - vertex[k]) / dl + fluxes[k]).abs())
        .collect();
    let max_kirchhoff_residual = kirchhoff_residuals.iter().copied().fold(0.0, f64::max);
    let solution = NetworkFunction::from_parts(grid, values, vertex)?;
    let max_interior_residual = super::interior_residual(data, &solution, opts.upwinding)?.max_abs;
    Ok(SolveReport {
        solution,
        iterations,
        substeps,
        max_interior_residual,
        kirchhoff_residuals,
        max_kirchhoff_residual,
        dl,
        wall_clock_secs: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::CoefficientExpr;
    use crate::network::{build_grid, Network};
    use crate::problem::fixtures::{e, ray};
    use crate::problem::{ControlSet, RayData, VertexData};

    fn problem(rays: Vec<RayData>, lambda: f64, k: f64, h0: &str) -> ProblemData {
        let net = Network::finite(rays.len(), 1.0, k).unwrap();
        ProblemData::new(
            net,
            lambda,
            rays,
            VertexData {
                cost: e(h0),
                controls: ControlSet::singleton(0.0),
            },
        )
        .unwrap()
    }

    #[test]
    fn constant_problem_is_exact() {
        let c = 1.5;
        let h = format!("{}", -2.0 * c);
        let rays = (0..3)
            .map(|_| {
                ray(
                    "1",
                    "0.3",
                    &h,
                    "1/3",
                    "1.5",
                    "1.5",
                    ControlSet::singleton(0.0),
                )
            })
            .collect();
        let d = problem(rays, 2.0, 1.0, "0");
        let g = build_grid(d.network(), 40, 30).unwrap();
        let rep = march_local_time(&d, &g, &SolverOptions::default()).unwrap();
        assert!(rep.solution.values().iter().all(|&v| (v - c).abs() < 1e-12));
        assert!(rep.max_interior_residual <= 1e-10);
        assert!(rep.max_kirchhoff_residual <= 1e-10);
        assert!(rep.iterations.iter().all(|&n| n >= 1));
        assert_eq!(rep.solution.continuity_residual(), 0.0);
    }

    #[test]
    fn pure_vertex_cost_integrates_linearly() {
        // zero spin: the vertex sees only h0 = 1, so v(l) = c + (K - l)
        let rays = (0..2)
            .map(|_| ray("1", "0", "-1", "0", "1", "1", ControlSet::singleton(0.0)))
            .collect();
        let d = problem(rays, 1.0, 2.0, "1");
        let g = build_grid(d.network(), 10, 16).unwrap();
        let rep = march_local_time(&d, &g, &SolverOptions::default()).unwrap();
        for (k, &l) in g.l().iter().enumerate() {
            assert!((rep.solution.vertex(k) - (1.0 + 2.0 - l)).abs() < 1e-12);
        }
        assert!(rep.max_kirchhoff_residual < 1e-12);
    }

    #[test]
    fn incompatible_data_rejected() {
        let rays = vec![
            ray("1", "0", "0", "0.5", "0", "0", ControlSet::singleton(0.0)),
            ray("1", "0", "0", "0.5", "1", "1", ControlSet::singleton(0.0)),
        ];
        let d = problem(rays, 1.0, 1.0, "0");
        let g = build_grid(d.network(), 10, 4).unwrap();
        assert!(matches!(
            march_local_time(&d, &g, &SolverOptions::default()),
            Err(Error::VertexIncompatible { ray: 2, .. })
        ));
        let rays = vec![
            ray("1", "0", "0", "0.5", "1", "0", ControlSet::singleton(0.0)),
            ray("1", "0", "0", "0.5", "0", "0", ControlSet::singleton(0.0)),
        ];
        let d = problem(rays, 1.0, 1.0, "0");
        assert!(matches!(
            march_local_time(&d, &g, &SolverOptions::default()),
            Err(Error::CornerIncompatible { ray: 1, .. })
        ));
    }

    #[test]
    fn substeps_respect_transport_bound() {
        let rays = (0..2)
            .map(|_| ray("1", "0", "0", "0.5", "l", "x", ControlSet::singleton(0.0)))
            .collect();
        let d = problem(rays, 1.0, 1.0, "0");
        let g = build_grid(d.network(), 50, 5).unwrap();
        let rep = march_local_time(&d, &g, &SolverOptions::default()).unwrap();
        // dl = 0.2, dx = 0.02, sum S = 1 -> 10 substeps
        assert!(rep.substeps.iter().all(|&m| m == 10));
    }

    #[test]
    fn runs_are_bit_identical() {
        let rays = (0..2)
            .map(|i| {
                let mut r = ray(
                    "0.5 + 0.2*beta^2",
                    "beta",
                    "x - beta + l",
                    "0.5",
                    "l",
                    "x",
                    ControlSet::interval(-1.0, 1.0, 5).unwrap(),
                );
                if i == 1 {
                    r.drift = CoefficientExpr::parse("-beta*x").unwrap();
                }
                r
            })
            .collect();
        let d = problem(rays, 1.0, 1.0, "0.2");
        let g = build_grid(d.network(), 30, 20).unwrap();
        let a = march_local_time(&d, &g, &SolverOptions::default()).unwrap();
        let b = march_local_time(&d, &g, &SolverOptions::default()).unwrap();
        assert_eq!(a.solution, b.solution);
        assert!(a.max_interior_residual <= 1e-8);
    }

    #[test]
    fn kirchhoff_residual_is_first_order() {
        // terminal data solve the ray equation at l = K, so there is no initial layer
        let terminal = "1 + 0.5*cosh(x)/cosh(1)";
        let rays = (0..2)
            .map(|_| {
                ray(
                    "1",
                    "0",
                    "-1",
                    "0.5",
                    "1 + 0.5*l",
                    terminal,
                    ControlSet::singleton(0.0),
                )
            })
            .collect();
        let d = problem(rays, 1.0, 1.0, "sin(2*l)");
        let mut res = Vec::new();
        for nl in [20, 40, 80] {
            let g = build_grid(d.network(), 20, nl).unwrap();
            res.push(
                march_local_time(&d, &g, &SolverOptions::default())
                    .unwrap()
                    .max_kirchhoff_residual,
            );
        }
        let r1 = res[0] / res[1];
        let r2 = res[1] / res[2];
        assert!(r1 > 1.6 && r1 < 2.5 && r2 > 1.6 && r2 < 2.5, "{res:?}");
    }
}
