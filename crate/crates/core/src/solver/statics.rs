//! Static (local-time free) problems solved through the local-time system.
//!
//! For data without `l`-dependence the static junction problem is embedded in the
//! local-time system on windows `[0, K_eps]` with `K_eps` proportional to `1 / eps`:
//! the terminal datum is the previous slice raised by `eps exp(-eps K_eps)` (tapered
//! to zero at `x = R` to keep the corner compatible), and the march relaxes the vertex
//! value towards the static junction balance. The `l = 0` slices form a Cauchy
//! sequence along the schedule.

use alloc::format;
use alloc::vec::Vec;

use super::march::march_with_terminal;
use super::SolverOptions;
use crate::error::{Error, Result};
use crate::math::{exp, round};
use crate::network::{build_grid, NetworkFunction};
use crate::problem::ProblemData;

#[derive(Debug, Clone, PartialEq)]
pub struct StaticOptions {
    pub nx: usize,
    /// Number of l-intervals on the first (shortest) window.
    pub nl: usize,
    /// Strictly decreasing positive schedule.
    pub eps: Vec<f64>,
    /// Bound on the l-variation of the final slice.
    pub l_tol: f64,
    pub solver: SolverOptions,
}

/// A function on the network without local-time dependence.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    pub x: Vec<f64>,
    /// `rays[i][j]` at `x[j]`, vertex first.
    pub rays: Vec<Vec<f64>>,
}

impl Slice {
    pub fn vertex(&self) -> f64 {
        self.rays[0][0]
    }

    pub fn sup_distance(&self, other: &Slice) -> f64 {
        self.rays
            .iter()
            .zip(&other.rays)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).abs()))
            .fold(0.0, f64::max)
    }

    fn of_level(f: &NetworkFunction, level: usize) -> Slice {
        let g = f.grid();
        Slice {
            x: g.x().to_vec(),
            rays: (0..g.rays())
                .map(|i| f.ray_level(i, level).to_vec())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaticSolution {
    pub eps: Vec<f64>,
    /// Local-time window used for each schedule entry.
    pub windows: Vec<f64>,
    /// The `l = 0` slice for each schedule entry.
    pub slices: Vec<Slice>,
    /// `sup |slice_{n+1} - slice_n|`.
    pub gaps: Vec<f64>,
    /// `max_{l <= K_eps / 4} sup_x |u(x, l) - u(x, 0)|` for each schedule entry.
    pub l_variation: Vec<f64>,
    /// Aitken-accelerated limit of the slices (the last slice when acceleration is unsafe).
    pub extrapolated: Slice,
}

fn l_variation(f: &NetworkFunction) -> f64 {
    let g = f.grid();
    let limit = 0.25 * g.horizon();
    let mut var: f64 = 0.0;
    for (k, &l) in g.l().iter().enumerate() {
        if l > limit {
            break;
        }
        for i in 0..g.rays() {
            for (a, b) in f.ray_level(i, k).iter().zip(f.ray_level(i, 0)) {
                var = var.max((a - b).abs());
            }
        }
    }
    var
}

fn aitken(s: &[Slice]) -> Slice {
    let n = s.len();
    let last = s[n - 1].clone();
    if n < 3 {
        return last;
    }
    let (a, b, c) = (&s[n - 3], &s[n - 2], &last);
    let mut out = last.clone();
    for i in 0..c.rays.len() {
        for j in 0..c.rays[i].len() {
            let d1 = b.rays[i][j] - a.rays[i][j];
            let d2 = c.rays[i][j] - b.rays[i][j];
            let den = d2 - d1;
            let scale = c.rays[i][j].abs().max(1.0);
            if den.abs() > 1e3 * f64::EPSILON * scale {
                let corr = d2 * d2 / den;
                out.rays[i][j] = if corr.abs() <= d2.abs() {
                    c.rays[i][j] - corr
                } else {
                    c.rays[i][j]
                };
            }
        }
    }
    out
}

/// Solves a problem whose data do not depend on `l` by the local-time embedding.
pub fn solve_l_independent(data: &ProblemData, opts: &StaticOptions) -> Result<StaticSolution> {
    if !data.is_l_independent() {
        return Err(Error::NotLIndependent);
    }
    if opts.eps.is_empty() || opts.eps.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidSchedule("eps values must be positive".into()));
    }
    if opts.eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidSchedule(
            "eps schedule must be strictly decreasing".into(),
        ));
    }
    let net = data.network();
    let k0 = net.horizon();
    let r = net.length();
    let nrays = data.rays().len();
    let mut prev: Vec<Vec<f64>> = Vec::new();
    let mut sol = StaticSolution {
        eps: opts.eps.clone(),
        windows: Vec::new(),
        slices: Vec::new(),
        gaps: Vec::new(),
        l_variation: Vec::new(),
        extrapolated: Slice {
            x: Vec::new(),
            rays: Vec::new(),
        },
    };
    for &eps in &opts.eps {
        let window = k0 * opts.eps[0] / eps;
        let nl = (round(opts.nl as f64 * window / k0) as usize).max(1);
        let grid = build_grid(&net.with_horizon(window)?, opts.nx, nl)?;
        if prev.is_empty() {
            prev = (0..nrays)
                .map(|i| grid.x().iter().map(|&x| data.terminal(i, x)).collect())
                .collect();
        }
        let bump = eps * exp(-eps * window);
        let terminal: Vec<Vec<f64>> = prev
            .iter()
            .map(|t| {
                t.iter()
                    .zip(grid.x())
                    .map(|(v, &x)| v + bump * (1.0 - x / r))
                    .collect()
            })
            .collect();
        let rep = march_with_terminal(data, &grid, &terminal, &opts.solver)?;
        let slice = Slice::of_level(&rep.solution, 0);
        if let Some(last) = sol.slices.last() {
            sol.gaps.push(slice.sup_distance(last));
        }
        sol.l_variation.push(l_variation(&rep.solution));
        sol.windows.push(window);
        prev = slice.rays.clone();
        sol.slices.push(slice);
    }
    let var = *sol.l_variation.last().unwrap_or(&0.0);
    if var > opts.l_tol {
        return Err(Error::LVariation {
            variation: var,
            tolerance: opts.l_tol,
        });
    }
    sol.extrapolated = aitken(&sol.slices);
    if sol
        .extrapolated
        .rays
        .iter()
        .flatten()
        .any(|v| !v.is_finite())
    {
        return Err(Error::NonFinite(format!(
            "static slice for eps={}",
            opts.eps[opts.eps.len() - 1]
        )));
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::cosh;
    use crate::network::Network;
    use crate::problem::fixtures::{e, ray};
    use crate::problem::{ControlSet, VertexData};
    use alloc::vec;

    fn opts(nx: usize, nl: usize, eps: Vec<f64>) -> StaticOptions {
        StaticOptions {
            nx,
            nl,
            eps,
            l_tol: 1e-6,
            solver: SolverOptions::default(),
        }
    }

    #[test]
    fn constant_problem_stays_constant() {
        let rays = (0..3)
            .map(|_| ray("1", "0", "-2", "1/3", "2", "2", ControlSet::singleton(0.0)))
            .collect();
        let d = ProblemData::new(
            Network::finite(3, 1.0, 10.0).unwrap(),
            1.0,
            rays,
            VertexData {
                cost: e("0"),
                controls: ControlSet::singleton(0.0),
            },
        )
        .unwrap();
        let s = solve_l_independent(&d, &opts(20, 50, vec![0.2, 0.1])).unwrap();
        // the eps bump decays along the window: only its relaxed remainder survives
        assert!(s
            .extrapolated
            .rays
            .iter()
            .flatten()
            .all(|&v| (v - 2.0).abs() < 1e-9));
        assert!(s.l_variation[1] < 1e-9);
    }

    #[test]
    fn neumann_junction_matches_cosh() {
        // two symmetric rays with equal weights and no vertex cost impose u'(0) = 0
        let rays = (0..2)
            .map(|_| ray("1", "0", "0", "0.5", "1", "1", ControlSet::singleton(0.0)))
            .collect();
        let d = ProblemData::new(
            Network::finite(2, 1.0, 10.0).unwrap(),
            1.0,
            rays,
            VertexData {
                cost: e("0"),
                controls: ControlSet::singleton(0.0),
            },
        )
        .unwrap();
        let nx = 100;
        let s = solve_l_independent(&d, &opts(nx, 100, vec![0.2, 0.1, 0.05])).unwrap();
        let dx = 1.0 / nx as f64;
        for (j, &x) in s.extrapolated.x.iter().enumerate() {
            let exact = cosh(x) / cosh(1.0);
            assert!((s.extrapolated.rays[0][j] - exact).abs() < dx, "x={x}");
        }
        assert!(s.gaps.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn rejects_l_dependent_data_and_bad_schedule() {
        let rays = (0..2)
            .map(|_| ray("1", "l", "0", "0.5", "1", "1", ControlSet::singleton(0.0)))
            .collect();
        let d = ProblemData::new(
            Network::finite(2, 1.0, 1.0).unwrap(),
            1.0,
            rays,
            VertexData {
                cost: e("0"),
                controls: ControlSet::singleton(0.0),
            },
        )
        .unwrap();
        assert_eq!(
            solve_l_independent(&d, &opts(10, 10, vec![0.1])),
            Err(Error::NotLIndependent)
        );
        let rays = (0..2)
            .map(|_| ray("1", "0", "0", "0.5", "1", "1", ControlSet::singleton(0.0)))
            .collect();
        let d = ProblemData::new(
            Network::finite(2, 1.0, 1.0).unwrap(),
            1.0,
            rays,
            VertexData {
                cost: e("0"),
                controls: ControlSet::singleton(0.0),
            },
        )
        .unwrap();
        assert!(matches!(
            solve_l_independent(&d, &opts(10, 10, vec![0.1, 0.2])),
            Err(Error::InvalidSchedule(_))
        ));
    }

    #[test]
    fn short_window_reports_l_variation() {
        let rays = (0..2)
            .map(|_| ray("1", "0", "0", "0.5", "1", "1", ControlSet::singleton(0.0)))
            .collect();
        let d = ProblemData::new(
            Network::finite(2, 1.0, 0.5).unwrap(),
            1.0,
            rays,
            VertexData {
                cost: e("0"),
                controls: ControlSet::singleton(0.0),
            },
        )
        .unwrap();
        assert!(matches!(
            solve_l_independent(&d, &opts(20, 10, vec![0.2])),
            Err(Error::LVariation { .. })
        ));
    }
}
