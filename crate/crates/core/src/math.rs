//! Thin float helpers over `libm` so the crate stays `no_std`.

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn expm1(x: f64) -> f64 {
    libm::expm1(x)
}

#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn cosh(x: f64) -> f64 {
    libm::cosh(x)
}

#[inline]
pub fn sinh(x: f64) -> f64 {
    libm::sinh(x)
}

#[inline]
pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

/// `(e^{a} - 1) / a`, continuous at `a = 0`.
#[inline]
pub fn exprel(a: f64) -> f64 {
    if a.abs() < 1e-8 {
        1.0 + 0.5 * a
    } else {
        expm1(a) / a
    }
}

/// `x` evenly spaced points from `a` to `b` inclusive, the last set exactly to `b`.
pub fn linspace(a: f64, b: f64, n: usize) -> alloc::vec::Vec<f64> {
    let mut v = alloc::vec::Vec::with_capacity(n + 1);
    for k in 0..=n {
        v.push(a + (b - a) * (k as f64) / (n as f64));
    }
    if let Some(last) = v.last_mut() {
        *last = b;
    }
    v
}

/// Composite Simpson rule on uniformly spaced samples; falls back to the trapezoid
/// rule on the last interval when the interval count is odd.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len().saturating_sub(1);
    if n == 0 {
        return 0.0;
    }
    let even = n - n % 2;
    let mut s = 0.0;
    if even > 0 {
        s = values[0] + values[even];
        for (k, v) in values.iter().enumerate().take(even).skip(1) {
            s += if k % 2 == 1 { 4.0 * v } else { 2.0 * v };
        }
        s *= h / 3.0;
    }
    if even < n {
        s += 0.5 * h * (values[n - 1] + values[n]);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_is_exact_on_cubics() {
        let n = 10;
        let h = 1.0 / n as f64;
        let v: alloc::vec::Vec<f64> = (0..=n)
            .map(|k| {
                let x = k as f64 * h;
                x * x * x - 2.0 * x + 1.0
            })
            .collect();
        assert!((simpson(&v, h) - 0.25).abs() < 1e-14);
    }

    #[test]
    fn linspace_hits_endpoint() {
        let v = linspace(0.0, 0.3, 7);
        assert_eq!(v.len(), 8);
        assert_eq!(v[7], 0.3);
    }

    #[test]
    fn exprel_near_zero() {
        assert!((exprel(1e-10) - 1.0).abs() < 1e-9);
        assert!((exprel(1.0) - (core::f64::consts::E - 1.0)).abs() < 1e-14);
    }
}
