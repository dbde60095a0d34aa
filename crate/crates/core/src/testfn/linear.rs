//! Closed-form linear oracle and the double-integral test functions built on sampled data.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{cosh, sinh, sqrt};

/// `u(x) = z cosh(k x) / cosh(k R)` with `k = sqrt(lambda / sigma)`: the solution of
/// `lambda u - sigma u'' = 0` on `(0, R)` with `u'(0) = 0` and `u(R) = z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearOracle {
    pub k: f64,
    pub z: f64,
    pub r: f64,
}

impl LinearOracle {
    pub fn eval(&self, x: f64) -> f64 {
        self.z * cosh(self.k * x) / cosh(self.k * self.r)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.z * self.k * sinh(self.k * x) / cosh(self.k * self.r)
    }

    /// Values at `n + 1` uniform nodes of `[0, len]`.
    pub fn samples(&self, len: f64, n: usize) -> Vec<f64> {
        crate::math::linspace(0.0, len, n)
            .into_iter()
            .map(|x| self.eval(x))
            .collect()
    }
}

pub fn linear_oracle(lambda: f64, sigma: f64, r: f64, z: f64) -> Result<LinearOracle> {
    if !(lambda > 0.0 && sigma > 0.0 && r > 0.0) || !z.is_finite() {
        return Err(Error::InvalidSpec(format!(
            "oracle needs lambda, sigma, R > 0 (got {lambda}, {sigma}, {r})"
        )));
    }
    Ok(LinearOracle {
        k: sqrt(lambda / sigma),
        z,
        r,
    })
}

/// Which inequality a test function certifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `phi'' = eta + lambda f / sigma`, `phi(eps) = f(eps) - f(0) - gamma`.
    Super,
    /// `phi'' = -eta + lambda g / sigma`, `phi(eps) = g(eps) - g(0) + gamma`.
    Sub,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestFunctionCheck {
    /// `phi` at the sample nodes, with `phi(0) = 0`.
    pub phi: Vec<f64>,
    pub slope_at_zero: f64,
    /// `int_0^eps int_0^u phi''(z) dz du`.
    pub double_integral: f64,
    /// Required endpoint value of `phi`.
    pub target: f64,
    /// Super side: `double_integral >= target`; sub side: `double_integral <= target`.
    pub holds: bool,
}

fn check_samples(values: &[f64], sigma: &[f64], eps: f64) -> Result<()> {
    if values.len() < 2 || values.len() != sigma.len() {
        return Err(Error::Dimension(format!(
            "{} samples against {} sigma samples (need at least 2)",
            values.len(),
            sigma.len()
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidSpec(format!(
            "eps must be positive, got {eps}"
        )));
    }
    if let Some(s) = sigma.iter().find(|s| !(**s > 0.0)) {
        return Err(Error::InvalidSpec(format!(
            "sigma sample must be positive, got {s}"
        )));
    }
    if values.iter().chain(sigma).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sample arrays".into()));
    }
    Ok(())
}

/// Running first and second integrals of the piecewise-linear interpolant of `q`.
fn integrate_twice(q: &[f64], h: f64) -> Vec<f64> {
    let mut q1 = 0.0;
    let mut q2 = 0.0;
    let mut out = Vec::with_capacity(q.len());
    out.push(0.0);
    for w in q.windows(2) {
        q2 += h * q1 + h * h * (2.0 * w[0] + w[1]) / 6.0;
        q1 += h * (w[0] + w[1]) / 2.0;
        out.push(q2);
    }
    out
}

/// Builds the test function for uniformly spaced samples of `f` (or `g`) and `sigma` on `[0, eps]`.
pub fn linear_test_functions(
    values: &[f64],
    sigma: &[f64],
    lambda: f64,
    eps: f64,
    eta: f64,
    gamma: f64,
    side: Side,
) -> Result<TestFunctionCheck> {
    check_samples(values, sigma, eps)?;
    let n = values.len() - 1;
    let h = eps / n as f64;
    let (sign, target) = match side {
        Side::Super => (1.0, values[n] - values[0] - gamma),
        Side::Sub => (-1.0, values[n] - values[0] + gamma),
    };
    let q: Vec<f64> = values
        .iter()
        .zip(sigma)
        .map(|(v, s)| sign * eta + lambda * v / s)
        .collect();
    let q2 = integrate_twice(&q, h);
    let double_integral = q2[n];
    let slope = (target - double_integral) / eps;
    let phi = q2
        .iter()
        .enumerate()
        .map(|(j, v)| slope * (j as f64 * h) + v)
        .collect();
    let holds = match side {
        Side::Super => double_integral >= target,
        Side::Sub => double_integral <= target,
    };
    Ok(TestFunctionCheck {
        phi,
        slope_at_zero: slope,
        double_integral,
        target,
        holds,
    })
}

/// `(2 / eps^2) int_0^eps int_0^u lambda (g - f) / sigma dz du`; tends to
/// `lambda (g(0) - f(0)) / sigma(0)` as `eps -> 0`.
pub fn divided_double_integral(
    f: &[f64],
    g: &[f64],
    sigma: &[f64],
    lambda: f64,
    eps: f64,
) -> Result<f64> {
    check_samples(f, sigma, eps)?;
    check_samples(g, sigma, eps)?;
    let n = f.len() - 1;
    let q: Vec<f64> = f
        .iter()
        .zip(g)
        .zip(sigma)
        .map(|((f, g), s)| lambda * (g - f) / s)
        .collect();
    Ok(2.0 / (eps * eps) * integrate_twice(&q, eps / n as f64)[n])
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn oracle_values() {
        let o = linear_oracle(1.0, 1.0, 1.0, 1.0).unwrap();
        assert!((o.eval(0.0) - 0.6480543).abs() < 1e-7);
        assert!((o.eval(0.5) - 0.7307629).abs() < 1e-7);
        assert_eq!(o.eval(1.0), 1.0);
        assert_eq!(o.derivative(0.0), 0.0);
        let zero = linear_oracle(1.0, 1.0, 1.0, 0.0).unwrap();
        assert_eq!(zero.eval(0.3), 0.0);
        assert!(linear_oracle(0.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn oracle_is_super_and_sub() {
        let o = linear_oracle(1.0, 1.0, 1.0, 1.0).unwrap();
        let f = o.samples(0.05, 400);
        let sigma = vec![1.0; f.len()];
        let sup = linear_test_functions(&f, &sigma, 1.0, 0.05, 1e-3, 1e-3, Side::Super).unwrap();
        let sub = linear_test_functions(&f, &sigma, 1.0, 0.05, 1e-3, 1e-3, Side::Sub).unwrap();
        assert!(sup.holds && sub.holds);
        assert_eq!(sup.phi[0], 0.0);
        assert!((sup.phi[400] - sup.target).abs() < 1e-15);
    }

    #[test]
    fn zero_data_hold_with_equality() {
        let f = vec![0.0; 11];
        let sigma = vec![1.0; 11];
        let c = linear_test_functions(&f, &sigma, 1.0, 0.1, 0.0, 0.0, Side::Super).unwrap();
        assert_eq!(c.double_integral, c.target);
        assert!(c.holds);
        assert_eq!(c.slope_at_zero, 0.0);
    }

    #[test]
    fn constant_slope_identity() {
        // phi'(0) eps = target - int int lambda f / sigma
        let f = vec![2.0; 21];
        let sigma = vec![0.5; 21];
        let c = linear_test_functions(&f, &sigma, 1.5, 0.2, 0.0, 0.0, Side::Super).unwrap();
        let ii = 1.5 * 2.0 / 0.5 * 0.2 * 0.2 / 2.0;
        assert!((c.slope_at_zero * 0.2 + ii).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_sigma() {
        assert!(
            linear_test_functions(&[1.0, 1.0], &[1.0, 0.0], 1.0, 0.1, 0.0, 0.0, Side::Sub).is_err()
        );
        assert!(linear_test_functions(&[1.0, 1.0], &[1.0], 1.0, 0.1, 0.0, 0.0, Side::Sub).is_err());
    }

    #[test]
    fn divided_integral_limit() {
        let f = |x: f64| 1.0 + x;
        let g = |x: f64| 3.0 - x * x;
        let mut prev = f64::INFINITY;
        for eps in [0.1, 0.05, 0.025] {
            let x = crate::math::linspace(0.0, eps, 64);
            let fs: Vec<f64> = x.iter().map(|&x| f(x)).collect();
            let gs: Vec<f64> = x.iter().map(|&x| g(x)).collect();
            let s: Vec<f64> = x.iter().map(|&x| 1.0 + x).collect();
            let d = (divided_double_integral(&fs, &gs, &s, 2.0, eps).unwrap() - 4.0).abs();
            assert!(d < prev && d < 10.0 * eps);
            prev = d;
        }
    }

    proptest! {
        #[test]
        fn exact_on_quadratics(a in -2.0f64..2.0, b in -2.0f64..2.0, eps in 0.01f64..1.0) {
            // q linear => the double integral is exact
            let n = 16;
            let x = crate::math::linspace(0.0, eps, n);
            let f: Vec<f64> = x.iter().map(|&x| a + b * x).collect();
            let sigma = vec![1.0; n + 1];
            let c = linear_test_functions(&f, &sigma, 1.0, eps, 0.0, 0.0, Side::Super).unwrap();
            let exact = a * eps * eps / 2.0 + b * eps * eps * eps / 6.0;
            prop_assert!((c.double_integral - exact).abs() < 1e-12);
        }
    }
}
