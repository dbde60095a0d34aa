//! Streaming path statistics and ensemble estimators.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{Observer, SpiderModel, SpiderPath, State};
use crate::error::{Error, Result};
use crate::math::sqrt;

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorReport {
    pub estimate: f64,
    pub std_error: f64,
    pub paths: usize,
    /// Named parameters of the estimator (`eps`, `t`, ...).
    pub params: Vec<(String, f64)>,
}

impl EstimatorReport {
    /// Sample mean and standard error, accumulated in index order.
    pub fn from_samples(samples: &[f64], params: Vec<(String, f64)>) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::InvalidSimulation(format!(
                "an estimator needs at least 2 paths, got {n}"
            )));
        }
        let (mut mean, mut m2) = (0.0, 0.0);
        for (k, &v) in samples.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("sample {k}")));
            }
            let d = v - mean;
            mean += d / (k + 1) as f64;
            m2 += d * (v - mean);
        }
        let var = m2 / (n - 1) as f64;
        Ok(Self {
            estimate: mean,
            std_error: sqrt(var / n as f64),
            paths: n,
            params,
        })
    }

    /// `|estimate - value| / std_error`; infinite if the error is zero and the values differ.
    pub fn z_score(&self, value: f64) -> f64 {
        let d = (self.estimate - value).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error
        }
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }
}

fn param(name: &str, v: f64) -> (String, f64) {
    (String::from(name), v)
}

/// Levels at which the streaming statistics are collected.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StatsConfig {
    /// Excursion heights for the down-crossing count.
    pub crossing_eps: Vec<f64>,
    /// Band widths for the occupation functional `int 1{x <= eps}`.
    pub band_eps: Vec<f64>,
    /// Thresholds for the time spent below `delta`.
    pub delta: Vec<f64>,
}

impl StatsConfig {
    pub fn check(&self) -> Result<()> {
        if self
            .crossing_eps
            .iter()
            .chain(&self.band_eps)
            .chain(&self.delta)
            .any(|v| !(*v > 0.0))
        {
            return Err(Error::InvalidSimulation(
                "statistics levels must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Crossings {
    eps: f64,
    armed: bool,
    count: u64,
}

impl Crossings {
    fn new(eps: f64, x0: f64) -> Self {
        Self {
            eps,
            armed: x0 <= 0.0,
            count: 0,
        }
    }

    fn step(&mut self, next: &State, dl: f64) {
        if dl > 0.0 || next.x <= 0.0 {
            self.armed = true;
        }
        if self.armed && next.x >= self.eps {
            self.count += 1;
            self.armed = false;
        }
    }
}

/// Per-path summary, built by observing each step.
#[derive(Debug, Clone, PartialEq)]
pub struct PathStats {
    /// Elapsed time.
    pub t: f64,
    /// Final local time.
    pub l: f64,
    /// Completed excursions from 0 reaching each `crossing_eps`.
    pub crossings: Vec<u64>,
    /// Time spent in `[0, eps]` for each `band_eps`.
    pub band_time: Vec<f64>,
    /// Time spent in `[0, delta)` for each `delta`.
    pub delta_time: Vec<f64>,
    /// Time spent on each ray.
    pub ray_time: Vec<f64>,
    /// Number of reflection steps.
    pub reflections: u64,
    crossing_state: Vec<Crossings>,
    cfg: StatsConfig,
}

impl PathStats {
    pub fn new(cfg: &StatsConfig, rays: usize, x0: f64, l0: f64) -> Self {
        Self {
            t: 0.0,
            l: l0,
            crossings: vec![0; cfg.crossing_eps.len()],
            band_time: vec![0.0; cfg.band_eps.len()],
            delta_time: vec![0.0; cfg.delta.len()],
            ray_time: vec![0.0; rays],
            reflections: 0,
            crossing_state: cfg
                .crossing_eps
                .iter()
                .map(|&e| Crossings::new(e, x0))
                .collect(),
            cfg: cfg.clone(),
        }
    }

    pub fn from_path(path: &SpiderPath, cfg: &StatsConfig, rays: usize) -> Self {
        let mut s = Self::new(cfg, rays, path.x[0], path.l[0]);
        path.replay(&mut s);
        s
    }

    /// `eps N^eps` for crossing level `k`.
    pub fn downcrossing_estimate(&self, k: usize) -> f64 {
        self.cfg.crossing_eps[k] * self.crossings[k] as f64
    }

    /// `(1 / 2 eps) int_0^t 1{0 <= x <= eps} ds` for band `k`.
    pub fn occupation(&self, k: usize) -> f64 {
        self.band_time[k] / (2.0 * self.cfg.band_eps[k])
    }

    pub fn config(&self) -> &StatsConfig {
        &self.cfg
    }
}

impl Observer for PathStats {
    fn step(&mut self, prev: &State, next: &State, dl: f64) {
        let dt = next.t - prev.t;
        for (k, &e) in self.cfg.band_eps.iter().enumerate() {
            if prev.x <= e {
                self.band_time[k] += dt;
            }
        }
        for (k, &d) in self.cfg.delta.iter().enumerate() {
            if prev.x < d {
                self.delta_time[k] += dt;
            }
        }
        self.ray_time[prev.ray] += dt;
        for c in &mut self.crossing_state {
            c.step(next, dl);
        }
        for (k, c) in self.crossing_state.iter().enumerate() {
            self.crossings[k] = c.count;
        }
        if dl > 0.0 {
            self.reflections += 1;
        }
        self.t = next.t;
        self.l = next.l;
    }
}

/// `eps` times the number of completed excursions from 0 that reach `eps`.
pub fn downcrossing_local_time(path: &SpiderPath, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidSimulation(format!(
            "eps must be positive, got {eps}"
        )));
    }
    let mut c = Crossings::new(eps, path.x[0]);
    for n in 1..path.len() {
        c.step(&path.state(n), path.l[n] - path.l[n - 1]);
    }
    Ok(eps * c.count as f64)
}

/// `sum_i alpha_i / s_i(0)^2` with `alpha = S(0)` and `s_i` the volatility at the vertex.
pub fn occupation_constant<M: SpiderModel + ?Sized>(model: &M) -> Result<f64> {
    let mut w = vec![0.0; model.rays()];
    model.spin(0.0, &mut w);
    let mut c = 0.0;
    for (i, a) in w.iter().enumerate() {
        let s = model.volatility(i, 0.0, 0.0);
        if !(s > 0.0) {
            return Err(Error::InvalidSimulation(format!(
                "volatility at the vertex must be positive on ray {}",
                i + 1
            )));
        }
        c += a / (s * s);
    }
    Ok(c)
}

fn ensure(stats: &[PathStats], len: impl Fn(&StatsConfig) -> usize, k: usize) -> Result<()> {
    match stats.first() {
        Some(s) if k < len(&s.cfg) => Ok(()),
        Some(_) => Err(Error::InvalidSimulation(format!(
            "statistics level {k} was not collected"
        ))),
        None => Err(Error::InvalidSimulation("empty ensemble".into())),
    }
}

/// Mean final local time.
pub fn local_time_report(stats: &[PathStats]) -> Result<EstimatorReport> {
    let v: Vec<f64> = stats.iter().map(|s| s.l).collect();
    let t = stats.first().map_or(0.0, |s| s.t);
    EstimatorReport::from_samples(&v, vec![param("t", t)])
}

/// Mean of `|eps N^eps - l(t)|` at crossing level `k`.
pub fn downcrossing_report(stats: &[PathStats], k: usize) -> Result<EstimatorReport> {
    ensure(stats, |c| c.crossing_eps.len(), k)?;
    let v: Vec<f64> = stats
        .iter()
        .map(|s| (s.downcrossing_estimate(k) - s.l).abs())
        .collect();
    EstimatorReport::from_samples(
        &v,
        vec![
            param("eps", stats[0].cfg.crossing_eps[k]),
            param("t", stats[0].t),
        ],
    )
}

/// Mean of `|(1/2eps) int 1{0 <= x <= eps} - c l(t)|` at band `k`, with `c` from [`occupation_constant`].
pub fn occupation_identity_check(
    stats: &[PathStats],
    k: usize,
    constant: f64,
) -> Result<EstimatorReport> {
    ensure(stats, |c| c.band_eps.len(), k)?;
    let v: Vec<f64> = stats
        .iter()
        .map(|s| (s.occupation(k) - constant * s.l).abs())
        .collect();
    EstimatorReport::from_samples(
        &v,
        vec![
            param("eps", stats[0].cfg.band_eps[k]),
            param("t", stats[0].t),
            param("constant", constant),
        ],
    )
}

/// Mean fraction of time spent below `delta` (threshold `k`).
pub fn non_stickiness_check(stats: &[PathStats], k: usize) -> Result<EstimatorReport> {
    ensure(stats, |c| c.delta.len(), k)?;
    let v: Vec<f64> = stats.iter().map(|s| s.delta_time[k] / s.t).collect();
    EstimatorReport::from_samples(
        &v,
        vec![
            param("delta", stats[0].cfg.delta[k]),
            param("t", stats[0].t),
        ],
    )
}

/// Mean fraction of time spent on `ray`.
pub fn ray_occupation_report(stats: &[PathStats], ray: usize) -> Result<EstimatorReport> {
    if stats.first().is_some_and(|s| ray >= s.ray_time.len()) {
        return Err(Error::InvalidSimulation(format!("no ray {}", ray + 1)));
    }
    let v: Vec<f64> = stats.iter().map(|s| s.ray_time[ray] / s.t).collect();
    EstimatorReport::from_samples(&v, vec![param("ray", (ray + 1) as f64)])
}

#[cfg(test)]
mod tests {
    use super::super::{run_path, simulate_path, ConstantSpider, SimConfig};
    use super::*;

    fn ensemble(m: &ConstantSpider, cfg: &SimConfig, sc: &StatsConfig, n: u64) -> Vec<PathStats> {
        (0..n)
            .map(|i| {
                let mut s = PathStats::new(sc, m.rays(), cfg.x0, cfg.l0);
                run_path(m, cfg, i, &mut s).unwrap();
                s
            })
            .collect()
    }

    #[test]
    fn report_statistics() {
        let r = EstimatorReport::from_samples(&[1.0, 2.0, 3.0, 4.0], vec![]).unwrap();
        assert!((r.estimate - 2.5).abs() < 1e-15);
        assert!((r.std_error - sqrt(5.0 / 3.0 / 4.0)).abs() < 1e-15);
        assert!(EstimatorReport::from_samples(&[1.0], vec![]).is_err());
        assert!(EstimatorReport::from_samples(&[1.0, f64::NAN], vec![]).is_err());
    }

    #[test]
    fn occupation_constants() {
        assert_eq!(
            occupation_constant(&ConstantSpider::brownian(3).unwrap()).unwrap(),
            1.0
        );
        let m = ConstantSpider::new(vec![0.0, 0.0], vec![2.0, 1.0], vec![0.5, 0.5]).unwrap();
        assert!((occupation_constant(&m).unwrap() - 0.625).abs() < 1e-15);
    }

    #[test]
    fn stats_match_recorded_path() {
        let m = ConstantSpider::brownian(2).unwrap();
        let cfg = SimConfig {
            dt: 1e-3,
            horizon: 1.0,
            seed: 11,
            ..Default::default()
        };
        let sc = StatsConfig {
            crossing_eps: vec![0.1],
            band_eps: vec![0.1],
            delta: vec![0.1],
        };
        let p = simulate_path(&m, &cfg, 3).unwrap();
        let a = PathStats::from_path(&p, &sc, 2);
        let mut b = PathStats::new(&sc, 2, 0.0, 0.0);
        run_path(&m, &cfg, 3, &mut b).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            a.downcrossing_estimate(0),
            downcrossing_local_time(&p, 0.1).unwrap()
        );
        assert!((a.ray_time.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cases() {
        // never leaves the band below eps: no completed excursion
        let p = SpiderPath {
            dt: 0.1,
            seed: 0,
            index: 0,
            t: vec![0.0, 0.1, 0.2],
            x: vec![0.0, 0.01, 0.0],
            ray: vec![0; 3],
            l: vec![0.0, 0.0, 0.01],
            exit: super::super::Exit::Horizon,
        };
        assert_eq!(downcrossing_local_time(&p, 0.05).unwrap(), 0.0);
        assert!(downcrossing_local_time(&p, 0.0).is_err());
        let m = ConstantSpider::brownian(1).unwrap();
        let cfg = SimConfig {
            dt: 1e-2,
            horizon: 1.0,
            seed: 1,
            ..Default::default()
        };
        let st = ensemble(
            &m,
            &cfg,
            &StatsConfig {
                delta: vec![1e6],
                ..Default::default()
            },
            10,
        );
        assert_eq!(non_stickiness_check(&st, 0).unwrap().estimate, 1.0);
        assert!(non_stickiness_check(&st, 1).is_err());
    }

    #[test]
    fn symmetric_rays_share_time() {
        let m = ConstantSpider::brownian(2).unwrap();
        let cfg = SimConfig {
            dt: 1e-3,
            horizon: 1.0,
            seed: 5,
            ..Default::default()
        };
        let st = ensemble(&m, &cfg, &StatsConfig::default(), 2000);
        let r = ray_occupation_report(&st, 0).unwrap();
        assert!(r.z_score(0.5) < 3.0, "{r:?}");
    }

    #[test]
    fn identities_improve_with_level() {
        let m = ConstantSpider::brownian(2).unwrap();
        let cfg = SimConfig {
            dt: 1e-4,
            horizon: 1.0,
            seed: 8,
            ..Default::default()
        };
        let levels = vec![0.2, 0.1, 0.05];
        let sc = StatsConfig {
            crossing_eps: levels.clone(),
            band_eps: levels.clone(),
            delta: levels,
        };
        let st = ensemble(&m, &cfg, &sc, 1000);
        let c = occupation_constant(&m).unwrap();
        for k in 1..3 {
            assert!(
                downcrossing_report(&st, k).unwrap().estimate
                    < downcrossing_report(&st, k - 1).unwrap().estimate
            );
            assert!(
                occupation_identity_check(&st, k, c).unwrap().estimate
                    < occupation_identity_check(&st, k - 1, c).unwrap().estimate
            );
            assert!(
                non_stickiness_check(&st, k).unwrap().estimate
                    < non_stickiness_check(&st, k - 1).unwrap().estimate
            );
        }
    }
}
