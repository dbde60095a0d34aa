//! Discounted cost of a path and its Monte Carlo mean.

use alloc::format;
use alloc::vec::Vec;

use super::{run_path, EstimatorReport, Exit, Observer, SimConfig, SpiderModel, State};
use crate::error::{Error, Result};
use crate::math::{exp, expm1, ln};

/// Costs and payoffs of a fixed-control problem.
pub trait ValueModel: SpiderModel {
    fn lambda(&self) -> f64;
    fn running_cost(&self, ray: usize, x: f64, l: f64) -> f64;
    /// Cost per unit of local time.
    fn vertex_cost(&self, l: f64) -> f64;
    /// Payoff on reaching `x = R` (only used with a radius).
    fn lateral(&self, ray: usize, l: f64) -> f64;
    /// Payoff on reaching the local-time cap (only used with a cap).
    fn terminal(&self, ray: usize, x: f64) -> f64;
}

/// Horizon `T` with `exp(-lambda T) < 1e-6`.
pub fn truncation_horizon(lambda: f64) -> f64 {
    ln(1e6) / lambda * (1.0 + 1e-9) + 1e-12
}

struct Accumulator<'a, M: ?Sized> {
    model: &'a M,
    lambda: f64,
    step_weight: f64,
    total: f64,
    error: Option<Error>,
}

impl<M: ValueModel + ?Sized> Observer for Accumulator<'_, M> {
    fn step(&mut self, prev: &State, _next: &State, dl: f64) {
        let disc = exp(-self.lambda * prev.t);
        let h = self.model.running_cost(prev.ray, prev.x, prev.l);
        let mut inc = disc * self.step_weight * h;
        if dl > 0.0 {
            inc += disc * self.model.vertex_cost(prev.l) * dl;
        }
        if !inc.is_finite() && self.error.is_none() {
            self.error = Some(Error::NonFinite(format!(
                "cost at t = {}, x = {}",
                prev.t, prev.x
            )));
        }
        self.total += inc;
    }
}

/// Discounted cost of path `index`: running cost by left Riemann sums with exact
/// per-step discount weights, vertex cost along the local-time increments, and the
/// discounted payoff at the exit.
pub fn path_value<M: ValueModel + ?Sized>(model: &M, cfg: &SimConfig, index: u64) -> Result<f64> {
    let lambda = model.lambda();
    if !(lambda > 0.0) {
        return Err(Error::InvalidSimulation(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let mut acc = Accumulator {
        model,
        lambda,
        step_weight: -expm1(-lambda * cfg.dt) / lambda,
        total: 0.0,
        error: None,
    };
    let (end, exit) = run_path(model, cfg, index, &mut acc)?;
    if let Some(e) = acc.error {
        return Err(e);
    }
    let payoff = match exit {
        Exit::Horizon => 0.0,
        Exit::Lateral => model.lateral(end.ray, end.l),
        Exit::Terminal => model.terminal(end.ray, end.x),
    };
    let v = acc.total + exp(-lambda * end.t) * payoff;
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("value of path {index}")));
    }
    Ok(v)
}

/// Serial Monte Carlo estimate over paths `0..paths`.
pub fn estimate_value<M: ValueModel + ?Sized>(
    model: &M,
    cfg: &SimConfig,
    paths: u64,
) -> Result<EstimatorReport> {
    let v: Vec<f64> = (0..paths)
        .map(|i| path_value(model, cfg, i))
        .collect::<Result<_>>()?;
    EstimatorReport::from_samples(
        &v,
        alloc::vec![
            (alloc::string::String::from("lambda"), model.lambda()),
            (alloc::string::String::from("dt"), cfg.dt)
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::super::ConstantSpider;
    use super::*;

    struct Costs {
        base: ConstantSpider,
        h: f64,
        h0: f64,
    }

    impl SpiderModel for Costs {
        fn rays(&self) -> usize {
            self.base.rays()
        }
        fn drift(&self, r: usize, x: f64, l: f64) -> f64 {
            self.base.drift(r, x, l)
        }
        fn volatility(&self, r: usize, x: f64, l: f64) -> f64 {
            self.base.volatility(r, x, l)
        }
        fn spin(&self, l: f64, out: &mut [f64]) {
            self.base.spin(l, out)
        }
    }

    impl ValueModel for Costs {
        fn lambda(&self) -> f64 {
            2.0
        }
        fn running_cost(&self, _: usize, x: f64, _: f64) -> f64 {
            self.h * (1.0 + x.min(1.0))
        }
        fn vertex_cost(&self, _: f64) -> f64 {
            self.h0
        }
        fn lateral(&self, _: usize, _: f64) -> f64 {
            0.0
        }
        fn terminal(&self, _: usize, _: f64) -> f64 {
            0.0
        }
    }

    fn cfg() -> SimConfig {
        SimConfig {
            dt: 1e-2,
            horizon: truncation_horizon(2.0),
            seed: 1,
            ..Default::default()
        }
    }

    #[test]
    fn constant_cost_gives_c_over_lambda() {
        let m = ConstantSpider::brownian(2).unwrap();
        struct C(ConstantSpider);
        impl SpiderModel for C {
            fn rays(&self) -> usize {
                2
            }
            fn drift(&self, r: usize, x: f64, l: f64) -> f64 {
                self.0.drift(r, x, l)
            }
            fn volatility(&self, r: usize, x: f64, l: f64) -> f64 {
                self.0.volatility(r, x, l)
            }
            fn spin(&self, l: f64, out: &mut [f64]) {
                self.0.spin(l, out)
            }
        }
        impl ValueModel for C {
            fn lambda(&self) -> f64 {
                2.0
            }
            fn running_cost(&self, _: usize, _: f64, _: f64) -> f64 {
                3.0
            }
            fn vertex_cost(&self, _: f64) -> f64 {
                0.0
            }
            fn lateral(&self, _: usize, _: f64) -> f64 {
                0.0
            }
            fn terminal(&self, _: usize, _: f64) -> f64 {
                0.0
            }
        }
        let r = estimate_value(&C(m), &cfg(), 20).unwrap();
        // deterministic up to the truncated tail exp(-lambda T) < 1e-6
        assert!(
            (r.estimate - 1.5).abs() < 1.5e-6 * 1.0 + 1e-12,
            "{}",
            r.estimate
        );
    }

    #[test]
    fn zero_costs_give_zero() {
        let m = Costs {
            base: ConstantSpider::brownian(2).unwrap(),
            h: 0.0,
            h0: 0.0,
        };
        assert_eq!(estimate_value(&m, &cfg(), 5).unwrap().estimate, 0.0);
    }

    #[test]
    fn value_is_linear_in_costs() {
        let a = Costs {
            base: ConstantSpider::brownian(2).unwrap(),
            h: 0.7,
            h0: 0.3,
        };
        let b = Costs {
            base: ConstantSpider::brownian(2).unwrap(),
            h: 1.4,
            h0: 0.6,
        };
        let ra = estimate_value(&a, &cfg(), 50).unwrap();
        let rb = estimate_value(&b, &cfg(), 50).unwrap();
        assert!((rb.estimate - 2.0 * ra.estimate).abs() <= 1e-13 * ra.estimate.abs());
    }

    #[test]
    fn horizon_meets_truncation_bound() {
        for l in [0.1, 1.0, 7.0] {
            assert!(exp(-l * truncation_horizon(l)) < 1e-6);
        }
    }
}
