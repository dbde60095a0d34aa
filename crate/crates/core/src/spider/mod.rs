//! Euler-Maruyama simulation of the spider diffusion with reflection at the vertex.
//!
//! On ray `i` the position follows `dx = b_i dt + s_i dW + dl`, where `s_i` is the
//! volatility and `l` the local time at the vertex. Whenever a step reflects, the ray
//! is redrawn from the spinning weights `S(l)`. A diffusion coefficient `a` in a
//! generator `a d^2/dx^2` corresponds to the volatility `sqrt(2 a)`.
//!
//! Every path owns a ChaCha8 stream selected by `(seed, path index)`, so an ensemble
//! gives the same numbers whatever order or thread its paths run on.

pub mod stats;
pub mod value;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::math::{exp, ln, sqrt};
use crate::problem::ProblemData;

pub use stats::{
    downcrossing_local_time, downcrossing_report, local_time_report, non_stickiness_check,
    occupation_constant, occupation_identity_check, EstimatorReport, PathStats, StatsConfig,
};
pub use value::{estimate_value, path_value, ValueModel};

/// Largest tolerated deviation of the spinning weights from a probability vector.
pub const SPIN_TOLERANCE: f64 = 1e-12;

pub trait SpiderModel {
    fn rays(&self) -> usize;
    fn drift(&self, ray: usize, x: f64, l: f64) -> f64;
    fn volatility(&self, ray: usize, x: f64, l: f64) -> f64;
    /// Writes `S_i(l)` into `out[i]`.
    fn spin(&self, l: f64, out: &mut [f64]);
}

fn check_spin(w: &[f64]) -> Result<()> {
    let sum: f64 = w.iter().sum();
    if !((sum - 1.0).abs() <= SPIN_TOLERANCE) || w.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::SpinNotNormalized(sum));
    }
    Ok(())
}

/// Coefficients constant on each ray.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantSpider {
    drift: Vec<f64>,
    volatility: Vec<f64>,
    spin: Vec<f64>,
}

impl ConstantSpider {
    pub fn new(drift: Vec<f64>, volatility: Vec<f64>, spin: Vec<f64>) -> Result<Self> {
        if drift.is_empty() || drift.len() != volatility.len() || drift.len() != spin.len() {
            return Err(Error::InvalidSimulation(
                "drift, volatility and spin need one entry per ray".into(),
            ));
        }
        if let Some(s) = volatility.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::InvalidSimulation(format!(
                "volatility must be positive, got {s}"
            )));
        }
        if drift.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("drift".into()));
        }
        check_spin(&spin)?;
        Ok(Self {
            drift,
            volatility,
            spin,
        })
    }

    /// Reflected Brownian motion on `rays` equally weighted rays.
    pub fn brownian(rays: usize) -> Result<Self> {
        Self::new(
            vec![0.0; rays],
            vec![1.0; rays],
            vec![1.0 / rays as f64; rays],
        )
    }
}

impl SpiderModel for ConstantSpider {
    fn rays(&self) -> usize {
        self.drift.len()
    }
    fn drift(&self, ray: usize, _x: f64, _l: f64) -> f64 {
        self.drift[ray]
    }
    fn volatility(&self, ray: usize, _x: f64, _l: f64) -> f64 {
        self.volatility[ray]
    }
    fn spin(&self, _l: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.spin);
    }
}

/// Problem data under fixed controls, mapped so that the simulated value solves the
/// fixed-control HJB system: diffusion `a_i = sigma_i`, drift `-b_i`, running cost
/// `-h_i`, cost `h_0` per unit of local time, and payoffs `chi_i(l)` at `x = R`,
/// `T_i(x)` at `l = K`.
#[derive(Debug, Clone)]
pub struct ProblemSpider<'a> {
    data: &'a ProblemData,
    beta: Vec<f64>,
    theta: Vec<f64>,
}

impl<'a> ProblemSpider<'a> {
    pub fn new(data: &'a ProblemData, beta: Vec<f64>, theta: Vec<f64>) -> Result<Self> {
        if beta.len() != data.rays().len() || theta.len() != data.vertex().controls.dim() {
            return Err(Error::InvalidSimulation(
                "one ray control per ray and a full vertex control are required".into(),
            ));
        }
        Ok(Self { data, beta, theta })
    }

    /// Uses the first point of every control set.
    pub fn first_controls(data: &'a ProblemData) -> Self {
        let beta = data.rays().iter().map(|r| r.controls.point(0)[0]).collect();
        let theta = data.vertex().controls.point(0).to_vec();
        Self { data, beta, theta }
    }

    pub fn data(&self) -> &ProblemData {
        self.data
    }
}

impl SpiderModel for ProblemSpider<'_> {
    fn rays(&self) -> usize {
        self.data.rays().len()
    }
    fn drift(&self, ray: usize, x: f64, l: f64) -> f64 {
        -self.data.ray_coefficients(ray, x, l, self.beta[ray]).1
    }
    fn volatility(&self, ray: usize, x: f64, l: f64) -> f64 {
        sqrt(2.0 * self.data.ray_coefficients(ray, x, l, self.beta[ray]).0)
    }
    fn spin(&self, l: f64, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.data.spin(i, l, &self.theta);
        }
    }
}

impl ValueModel for ProblemSpider<'_> {
    fn lambda(&self) -> f64 {
        self.data.lambda()
    }
    fn running_cost(&self, ray: usize, x: f64, l: f64) -> f64 {
        -self.data.ray_coefficients(ray, x, l, self.beta[ray]).2
    }
    fn vertex_cost(&self, l: f64) -> f64 {
        self.data.vertex_cost(l, &self.theta)
    }
    fn lateral(&self, ray: usize, l: f64) -> f64 {
        self.data.lateral(ray, l)
    }
    fn terminal(&self, ray: usize, x: f64) -> f64 {
        self.data.terminal(ray, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reflection {
    /// `x -> -x*`, local time grows by `2 |x*|`.
    #[default]
    Mirror,
    /// `x -> 0`, local time grows by `|x*|`.
    Projection,
    /// Exact reflection of the Brownian bridge over the step: local time grows by the
    /// depth of the sampled bridge minimum below zero.
    Lepingle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub reflection: Reflection,
    pub seed: u64,
    /// Initial state.
    pub x0: f64,
    pub ray0: usize,
    pub l0: f64,
    /// Stop when the path reaches `x = radius` (bridge-corrected).
    pub radius: Option<f64>,
    /// Stop when the local time reaches this value.
    pub local_time_cap: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            horizon: 1.0,
            reflection: Reflection::Mirror,
            seed: 0,
            x0: 0.0,
            ray0: 0,
            l0: 0.0,
            radius: None,
            local_time_cap: None,
        }
    }
}

impl SimConfig {
    pub fn steps(&self) -> usize {
        libm::ceil(self.horizon / self.dt - 1e-9) as usize
    }

    pub fn check(&self, rays: usize) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidSimulation(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidSimulation(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if !(self.x0.is_finite() && self.x0 >= 0.0 && self.l0.is_finite() && self.l0 >= 0.0)
            || self.ray0 >= rays
        {
            return Err(Error::InvalidSimulation(
                "initial state outside the network".into(),
            ));
        }
        if let Some(r) = self.radius {
            if !(r > self.x0) {
                return Err(Error::InvalidSimulation(format!(
                    "radius {r} must exceed the initial position"
                )));
            }
        }
        if let Some(k) = self.local_time_cap {
            if !(k > self.l0) {
                return Err(Error::InvalidSimulation(format!(
                    "local-time cap {k} must exceed the initial local time"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    pub t: f64,
    pub x: f64,
    pub ray: usize,
    pub l: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    /// Reached the horizon.
    Horizon,
    /// Reached `x = radius`.
    Lateral,
    /// Reached the local-time cap.
    Terminal,
}

/// Receives every step of a path.
pub trait Observer {
    /// `dl` is the local-time increment of the step; `reflected` is true iff `dl > 0`.
    fn step(&mut self, prev: &State, next: &State, dl: f64);
}

impl Observer for () {
    fn step(&mut self, _: &State, _: &State, _: f64) {}
}

/// Random source of path `index` of the ensemble seeded with `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn draw_ray(w: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in w.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // roundoff guard: last ray with positive weight
    w.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

/// Runs path `index`, feeding each step to `obs`; returns the final state and how it ended.
pub fn run_path<M: SpiderModel + ?Sized, O: Observer>(
    model: &M,
    cfg: &SimConfig,
    index: u64,
    obs: &mut O,
) -> Result<(State, Exit)> {
    let rays = model.rays();
    cfg.check(rays)?;
    let mut rng = path_rng(cfg.seed, index);
    let mut weights = vec![0.0; rays];
    let sqdt = sqrt(cfg.dt);
    let mut s = State {
        t: 0.0,
        x: cfg.x0,
        ray: cfg.ray0,
        l: cfg.l0,
    };
    let steps = cfg.steps();
    for n in 0..steps {
        let b = model.drift(s.ray, s.x, s.l);
        let vol = model.volatility(s.ray, s.x, s.l);
        if !(vol > 0.0) || !b.is_finite() || !vol.is_finite() {
            return Err(Error::InvalidSimulation(format!(
                "bad coefficients at x = {}, l = {}: drift {b}, volatility {vol}",
                s.x, s.l
            )));
        }
        let xi: f64 = rng.sample(StandardNormal);
        let y = s.x + b * cfg.dt + vol * sqdt * xi;
        let (mut x, mut dl) = match cfg.reflection {
            Reflection::Mirror if y < 0.0 => (-y, -2.0 * y),
            Reflection::Projection if y < 0.0 => (0.0, -y),
            Reflection::Lepingle => {
                let u = 1.0 - rng.random::<f64>();
                let m = 0.5
                    * (s.x + y - sqrt((y - s.x) * (y - s.x) - 2.0 * vol * vol * cfg.dt * ln(u)));
                if m < 0.0 {
                    (y - m, -m)
                } else {
                    (y, 0.0)
                }
            }
            _ => (y, 0.0),
        };
        let mut ray = s.ray;
        if dl > 0.0 {
            model.spin(s.l, &mut weights);
            check_spin(&weights)?;
            ray = draw_ray(&weights, rng.random::<f64>());
        }
        let mut exit = None;
        if let Some(k) = cfg.local_time_cap {
            if s.l + dl >= k {
                // the cap is reached while the path sits at the vertex
                dl = k - s.l;
                x = 0.0;
                exit = Some(Exit::Terminal);
            }
        }
        if let Some(r) = cfg.radius {
            if exit.is_none() {
                let crossed = x >= r || {
                    // the bridge from x_n to x_{n+1} may have touched r between the nodes
                    let p = exp(-2.0 * (r - s.x) * (r - x) / (vol * vol * cfg.dt));
                    rng.random::<f64>() < p
                };
                if crossed {
                    x = r;
                    exit = Some(Exit::Lateral);
                }
            }
        }
        let next = State {
            t: (n + 1) as f64 * cfg.dt,
            x,
            ray,
            l: s.l + dl,
        };
        obs.step(&s, &next, dl);
        s = next;
        if let Some(e) = exit {
            return Ok((s, e));
        }
    }
    Ok((s, Exit::Horizon))
}

/// A recorded path; entry `n` is the state at `t_n = n dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpiderPath {
    pub dt: f64,
    pub seed: u64,
    pub index: u64,
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub ray: Vec<usize>,
    pub l: Vec<f64>,
    pub exit: Exit,
}

impl SpiderPath {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn state(&self, n: usize) -> State {
        State {
            t: self.t[n],
            x: self.x[n],
            ray: self.ray[n],
            l: self.l[n],
        }
    }

    /// Replays the recorded steps into an observer.
    pub fn replay<O: Observer>(&self, obs: &mut O) {
        for n in 1..self.len() {
            obs.step(
                &self.state(n - 1),
                &self.state(n),
                self.l[n] - self.l[n - 1],
            );
        }
    }
}

struct Recorder(SpiderPath);

impl Observer for Recorder {
    fn step(&mut self, _prev: &State, next: &State, _dl: f64) {
        let p = &mut self.0;
        p.t.push(next.t);
        p.x.push(next.x);
        p.ray.push(next.ray);
        p.l.push(next.l);
    }
}

pub fn simulate_path<M: SpiderModel + ?Sized>(
    model: &M,
    cfg: &SimConfig,
    index: u64,
) -> Result<SpiderPath> {
    let mut rec = Recorder(SpiderPath {
        dt: cfg.dt,
        seed: cfg.seed,
        index,
        t: vec![0.0],
        x: vec![cfg.x0],
        ray: vec![cfg.ray0],
        l: vec![cfg.l0],
        exit: Exit::Horizon,
    });
    let (_, exit) = run_path(model, cfg, index, &mut rec)?;
    rec.0.exit = exit;
    Ok(rec.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Network;
    use crate::problem::fixtures::{e, ray};
    use crate::problem::{ControlSet, VertexData};
    use proptest::prelude::*;

    fn cfg(dt: f64, seed: u64) -> SimConfig {
        SimConfig {
            dt,
            horizon: 1.0,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn local_time_only_grows_on_reflection() {
        let m = ConstantSpider::new(
            vec![0.3, -0.5, 0.0],
            vec![1.0, 0.5, 2.0],
            vec![0.2, 0.3, 0.5],
        )
        .unwrap();
        for r in [
            Reflection::Mirror,
            Reflection::Projection,
            Reflection::Lepingle,
        ] {
            let p = simulate_path(
                &m,
                &SimConfig {
                    reflection: r,
                    ..cfg(1e-3, 4)
                },
                0,
            )
            .unwrap();
            assert_eq!(p.len(), 1001);
            assert_eq!(p.l[0], 0.0);
            for n in 1..p.len() {
                assert!(p.x[n] >= 0.0);
                assert!(p.l[n] >= p.l[n - 1]);
                if p.l[n] > p.l[n - 1] && r != Reflection::Lepingle {
                    // the unconstrained proposal went below zero
                    assert!(p.x[n] - p.x[n - 1] <= p.l[n] - p.l[n - 1] + 1e-12);
                }
                if p.ray[n] != p.ray[n - 1] {
                    assert!(p.l[n] > p.l[n - 1]);
                }
            }
            assert!(*p.l.last().unwrap() > 0.0);
        }
    }

    #[test]
    fn bit_reproducible() {
        let m = ConstantSpider::brownian(2).unwrap();
        let a = simulate_path(&m, &cfg(1e-3, 9), 17).unwrap();
        let b = simulate_path(&m, &cfg(1e-3, 9), 17).unwrap();
        assert_eq!(a, b);
        let c = simulate_path(&m, &cfg(1e-3, 9), 18).unwrap();
        assert_ne!(a.x, c.x);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ConstantSpider::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![0.5, 0.6]).is_err());
        assert!(ConstantSpider::new(vec![0.0], vec![0.0], vec![1.0]).is_err());
        let m = ConstantSpider::brownian(1).unwrap();
        assert!(simulate_path(&m, &cfg(0.0, 1), 0).is_err());
        assert!(simulate_path(&m, &cfg(-1e-3, 1), 0).is_err());
    }

    #[test]
    fn unnormalized_problem_spin_is_an_error() {
        let rays = alloc::vec![
            ray("1", "0", "0", "0.5", "0", "0", ControlSet::singleton(0.0)),
            ray("1", "0", "0", "0.6", "0", "0", ControlSet::singleton(0.0)),
        ];
        let data = ProblemData::new(
            Network::finite(2, 1.0, 1.0).unwrap(),
            1.0,
            rays,
            VertexData {
                cost: e("0"),
                controls: ControlSet::singleton(0.0),
            },
        )
        .unwrap();
        let m = ProblemSpider::first_controls(&data);
        assert!(matches!(
            simulate_path(&m, &cfg(1e-2, 1), 0),
            Err(Error::SpinNotNormalized(_))
        ));
    }

    #[test]
    fn spin_frequencies_match_weights() {
        // chi-square on ray choices at reflections, with l-dependent weights bucketed in l
        let rays = alloc::vec![
            ray(
                "0.5",
                "0",
                "0",
                "0.2 + 0.3*min(l, 1)",
                "0",
                "0",
                ControlSet::singleton(0.0)
            ),
            ray(
                "0.5",
                "0",
                "0",
                "0.8 - 0.3*min(l, 1)",
                "0",
                "0",
                ControlSet::singleton(0.0)
            ),
        ];
        let data = ProblemData::new(
            Network::finite(2, 1.0, 1.0).unwrap(),
            1.0,
            rays,
            VertexData {
                cost: e("0"),
                controls: ControlSet::singleton(0.0),
            },
        )
        .unwrap();
        let m = ProblemSpider::first_controls(&data);
        let c = SimConfig {
            dt: 1e-3,
            horizon: 2.0,
            seed: 3,
            ..Default::default()
        };
        // buckets l < 0.2 (spin ~ (0.2..0.26)) and l >= 1 (spin exactly (0.5, 0.5))
        let (mut lo, mut hi) = ([0.0f64; 2], [0.0f64; 2]);
        let (mut lo_p, mut hi_p) = (0.0, 0.0);
        for i in 0..300 {
            let p = simulate_path(&m, &c, i).unwrap();
            for n in 1..p.len() {
                if p.l[n] > p.l[n - 1] {
                    let l = p.l[n - 1];
                    if l < 0.2 {
                        lo[p.ray[n]] += 1.0;
                        lo_p += data.spin(0, l, &[0.0]);
                    } else if l >= 1.0 {
                        hi[p.ray[n]] += 1.0;
                        hi_p += 0.5;
                    }
                }
            }
        }
        for (counts, p0) in [(lo, lo_p), (hi, hi_p)] {
            let n = counts[0] + counts[1];
            assert!(n > 1000.0, "too few reflections: {n}");
            let expected = [p0, n - p0];
            let chi2: f64 = counts
                .iter()
                .zip(&expected)
                .map(|(o, e)| (o - e) * (o - e) / e)
                .sum();
            // 99.9% quantile of chi-square with one degree of freedom
            assert!(chi2 < 10.83, "chi2 = {chi2}");
        }
    }

    #[test]
    fn drift_out_path_leaves_vertex() {
        let m = ConstantSpider::new(vec![5.0, 5.0], vec![0.01, 0.01], vec![0.5, 0.5]).unwrap();
        let p = simulate_path(
            &m,
            &SimConfig {
                x0: 0.1,
                ..cfg(1e-3, 2)
            },
            0,
        )
        .unwrap();
        assert_eq!(*p.l.last().unwrap(), 0.0);
        assert!((p.x.last().unwrap() - 5.1).abs() < 0.05);
    }

    #[test]
    fn exits_are_detected() {
        let m = ConstantSpider::brownian(2).unwrap();
        let c = SimConfig {
            radius: Some(0.5),
            local_time_cap: Some(0.3),
            horizon: 50.0,
            ..cfg(1e-3, 5)
        };
        let (mut lateral, mut terminal) = (0, 0);
        for i in 0..200 {
            let p = simulate_path(&m, &c, i).unwrap();
            match p.exit {
                Exit::Lateral => {
                    assert_eq!(*p.x.last().unwrap(), 0.5);
                    lateral += 1;
                }
                Exit::Terminal => {
                    assert!((p.l.last().unwrap() - 0.3).abs() < 1e-15);
                    terminal += 1;
                }
                Exit::Horizon => panic!("path survived 50 time units"),
            }
        }
        assert!(lateral > 0 && terminal > 0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn draw_ray_respects_support(w in proptest::collection::vec(0.0f64..1.0, 1..6), u in 0.0f64..1.0) {
            let s: f64 = w.iter().sum();
            prop_assume!(s > 0.0);
            let w: Vec<f64> = w.iter().map(|v| v / s).collect();
            let i = draw_ray(&w, u);
            prop_assert!(w[i] > 0.0);
        }

        #[test]
        fn invariants_hold_for_random_models(seed in 0u64..1000, b in -2.0f64..2.0, s in 0.1f64..2.0) {
            let m = ConstantSpider::new(vec![b, -b], vec![s, 1.0], vec![0.5, 0.5]).unwrap();
            let p = simulate_path(&m, &SimConfig { dt: 1e-2, horizon: 2.0, seed, ..Default::default() }, seed).unwrap();
            prop_assert!(p.x.iter().all(|x| *x >= 0.0));
            prop_assert!(p.l.windows(2).all(|w| w[1] >= w[0]));
        }
    }
}
