//! Run configuration: an optional TOML file overridden by command-line flags.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use walsh_core::solver::{FluxOrder, SolverOptions, Upwinding};

use crate::error::{FileError, FileResult};
use crate::testfn_file::ReflectionName;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Validate,
    Solve,
    SolveStatic,
    VerifyComparison,
    TestfnSolve,
    TestfnStudy,
    Oracle,
    Simulate,
    IdentityChecks,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Solve => "solve",
            Command::SolveStatic => "solve-static",
            Command::VerifyComparison => "verify-comparison",
            Command::TestfnSolve => "testfn solve",
            Command::TestfnStudy => "testfn study",
            Command::Oracle => "oracle",
            Command::Simulate => "simulate",
            Command::IdentityChecks => "simulate identity-checks",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum UpwindingName {
    #[default]
    Monotone,
    Central,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FluxName {
    #[default]
    First,
    Second,
}

/// Every configurable key; all optional. Used for config files and for flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub problem: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spec: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nx: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nl: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upwinding: Option<UpwindingName>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flux: Option<FluxName>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paths: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reflection: Option<ReflectionName>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ray: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub at: Option<Vec<f64>>,
}

macro_rules! overlay {
    ($hi:expr, $lo:expr, $($f:ident),*) => {
        Settings { $($f: $hi.$f.or($lo.$f),)* }
    };
}

impl Settings {
    /// Values of `self`, falling back to `base`.
    pub fn over(self, base: Settings) -> Settings {
        overlay!(
            self, base, problem, spec, schedule, out, report, nx, nl, tol, max_iters, upwinding,
            flux, eps, l_tol, trials, seed, delta, samples, dt, horizon, paths, reflection, x0,
            ray, l0, lambda, sigma, length, z, at
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleParams {
    pub lambda: f64,
    pub sigma: f64,
    pub length: f64,
    pub z: f64,
    pub at: Vec<f64>,
}

/// Validated configuration with defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub problem: Option<PathBuf>,
    pub spec: Option<PathBuf>,
    pub schedule: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub nx: usize,
    pub nl: usize,
    pub tol: f64,
    pub max_iters: usize,
    pub upwinding: UpwindingName,
    pub flux: FluxName,
    pub eps: Vec<f64>,
    pub l_tol: f64,
    pub trials: usize,
    pub seed: u64,
    pub delta: f64,
    pub samples: usize,
    pub dt: f64,
    /// `None`: chosen from the discount rate.
    pub horizon: Option<f64>,
    pub paths: u64,
    pub reflection: ReflectionName,
    pub x0: f64,
    /// 1-based.
    pub ray: usize,
    pub l0: f64,
    pub oracle: Option<OracleParams>,
}

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_NX: usize = 200;
pub const DEFAULT_NL: usize = 200;

fn range<T: PartialOrd + std::fmt::Display + Copy>(
    field: &str,
    v: T,
    ok: bool,
    what: &str,
) -> FileResult<T> {
    if ok {
        Ok(v)
    } else {
        Err(FileError::field(
            field,
            format!("{v} is out of range: {what}"),
        ))
    }
}

fn required<T>(field: &str, v: Option<T>, cmd: Command) -> FileResult<T> {
    v.ok_or_else(|| FileError::field(field, format!("required by `{}`", cmd.name())))
}

/// Merges `flags` over the optional config-file text and validates the result.
pub fn parse_config(
    command: Command,
    file: Option<&str>,
    flags: Settings,
) -> FileResult<RunConfig> {
    let base: Settings = match file {
        Some(text) => toml::from_str(text)?,
        None => Settings::default(),
    };
    let s = flags.over(base);
    use Command::*;
    let (mut problem, mut spec, mut schedule) = (s.problem, s.spec, s.schedule);
    match command {
        Validate | Solve | SolveStatic | VerifyComparison | Simulate => {
            problem = Some(required("problem", problem, command)?)
        }
        TestfnSolve => spec = Some(required("spec", spec, command)?),
        TestfnStudy | IdentityChecks => schedule = Some(required("schedule", schedule, command)?),
        Oracle => {}
    }
    let oracle = if command == Oracle {
        let lambda = required("lambda", s.lambda, command)?;
        let sigma = required("sigma", s.sigma, command)?;
        let length = required("length", s.length, command)?;
        let z = required("z", s.z, command)?;
        let at = required("at", s.at, command)?;
        range("lambda", lambda, lambda > 0.0, "must be positive")?;
        range("sigma", sigma, sigma > 0.0, "must be positive")?;
        range("length", length, length > 0.0, "must be positive")?;
        for &x in &at {
            range(
                "at",
                x,
                (0.0..=length).contains(&x),
                "points must lie in [0, R]",
            )?;
        }
        Some(OracleParams {
            lambda,
            sigma,
            length,
            z,
            at,
        })
    } else {
        None
    };
    let nx = s.nx.unwrap_or(DEFAULT_NX);
    let nl = s.nl.unwrap_or(DEFAULT_NL);
    let tol = s.tol.unwrap_or(DEFAULT_TOL);
    let max_iters = s.max_iters.unwrap_or(200);
    let eps = s.eps.unwrap_or_else(|| vec![0.2, 0.1, 0.05]);
    let l_tol = s.l_tol.unwrap_or(1e-6);
    let trials = s.trials.unwrap_or(20);
    let delta = s.delta.unwrap_or(0.1);
    let samples = s.samples.unwrap_or(21);
    let dt = s.dt.unwrap_or(1e-3);
    let paths = s.paths.unwrap_or(10_000);
    let x0 = s.x0.unwrap_or(0.5);
    let ray = s.ray.unwrap_or(1);
    let l0 = s.l0.unwrap_or(0.0);
    range("nx", nx, nx >= 2, "must be at least 2")?;
    range("nl", nl, nl >= 1, "must be at least 1")?;
    range("tol", tol, tol > 0.0 && tol.is_finite(), "must be positive")?;
    range("max_iters", max_iters, max_iters >= 1, "must be at least 1")?;
    if eps.is_empty() {
        return Err(FileError::field("eps", "must not be empty"));
    }
    for &e in &eps {
        range(
            "eps",
            e,
            e > 0.0 && e.is_finite(),
            "values must be positive",
        )?;
    }
    range("l_tol", l_tol, l_tol > 0.0, "must be positive")?;
    range("trials", trials, trials >= 1, "must be at least 1")?;
    range(
        "delta",
        delta,
        delta >= 0.0 && delta.is_finite(),
        "must be nonnegative",
    )?;
    range("samples", samples, samples >= 2, "must be at least 2")?;
    range("dt", dt, dt > 0.0 && dt.is_finite(), "must be positive")?;
    if let Some(h) = s.horizon {
        range("horizon", h, h > 0.0 && h.is_finite(), "must be positive")?;
    }
    range("paths", paths, paths >= 2, "must be at least 2")?;
    range("x0", x0, x0 >= 0.0 && x0.is_finite(), "must be nonnegative")?;
    range("ray", ray, ray >= 1, "rays are numbered from 1")?;
    range("l0", l0, l0 >= 0.0 && l0.is_finite(), "must be nonnegative")?;
    Ok(RunConfig {
        command,
        problem,
        spec,
        schedule,
        out: s.out,
        report: s.report,
        nx,
        nl,
        tol,
        max_iters,
        upwinding: s.upwinding.unwrap_or_default(),
        flux: s.flux.unwrap_or_default(),
        eps,
        l_tol,
        trials,
        seed: s.seed.unwrap_or(0),
        delta,
        samples,
        dt,
        horizon: s.horizon,
        paths,
        reflection: s.reflection.unwrap_or_default(),
        x0,
        ray,
        l0,
        oracle,
    })
}

impl RunConfig {
    /// All effective settings, suitable for writing back as a config file.
    pub fn to_settings(&self) -> Settings {
        let o = self.oracle.as_ref();
        Settings {
            problem: self.problem.clone(),
            spec: self.spec.clone(),
            schedule: self.schedule.clone(),
            out: self.out.clone(),
            report: self.report.clone(),
            nx: Some(self.nx),
            nl: Some(self.nl),
            tol: Some(self.tol),
            max_iters: Some(self.max_iters),
            upwinding: Some(self.upwinding),
            flux: Some(self.flux),
            eps: Some(self.eps.clone()),
            l_tol: Some(self.l_tol),
            trials: Some(self.trials),
            seed: Some(self.seed),
            delta: Some(self.delta),
            samples: Some(self.samples),
            dt: Some(self.dt),
            horizon: self.horizon,
            paths: Some(self.paths),
            reflection: Some(self.reflection),
            x0: Some(self.x0),
            ray: Some(self.ray),
            l0: Some(self.l0),
            lambda: o.map(|o| o.lambda),
            sigma: o.map(|o| o.sigma),
            length: o.map(|o| o.length),
            z: o.map(|o| o.z),
            at: o.map(|o| o.at.clone()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_settings()).expect("settings serialize")
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            max_iters: self.max_iters,
            upwinding: match self.upwinding {
                UpwindingName::Monotone => Upwinding::Monotone,
                UpwindingName::Central => Upwinding::Central,
            },
            flux: match self.flux {
                FluxName::First => FluxOrder::First,
                FluxName::Second => FluxOrder::Second,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_problem() -> Settings {
        Settings {
            problem: Some("p.toml".into()),
            ..Default::default()
        }
    }

    #[test]
    fn defaults_are_filled() {
        let c = parse_config(Command::Solve, None, with_problem()).unwrap();
        assert_eq!((c.tol, c.nx, c.nl), (1e-8, 200, 200));
    }

    #[test]
    fn range_errors_name_the_field() {
        let e = parse_config(
            Command::Solve,
            None,
            Settings {
                nx: Some(0),
                ..with_problem()
            },
        )
        .unwrap_err();
        assert!(e.to_string().starts_with("`nx`"), "{e}");
        let e = parse_config(Command::Solve, None, Settings::default()).unwrap_err();
        assert!(e.to_string().contains("`problem`"), "{e}");
    }

    #[test]
    fn flags_override_file() {
        let c = parse_config(
            Command::Solve,
            Some("problem = \"a.toml\"\ntol = 1e-6\nnx = 50"),
            Settings {
                tol: Some(1e-10),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!((c.tol, c.nx), (1e-10, 50));
    }

    #[test]
    fn unknown_keys_fail() {
        assert!(parse_config(
            Command::Solve,
            Some("problem = \"a\"\nmesh = 3"),
            Settings::default()
        )
        .is_err());
    }

    #[test]
    fn write_parse_is_idempotent() {
        let flags = Settings {
            lambda: Some(1.0),
            sigma: Some(2.0),
            length: Some(1.0),
            z: Some(1.0),
            at: Some(vec![0.0, 0.5]),
            ..Default::default()
        };
        for (cmd, s) in [(Command::Solve, with_problem()), (Command::Oracle, flags)] {
            let a = parse_config(cmd, None, s).unwrap();
            let b = parse_config(cmd, Some(&a.to_toml()), Settings::default()).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.to_toml(), b.to_toml());
        }
    }

    #[test]
    fn oracle_points_checked() {
        let flags = Settings {
            lambda: Some(1.0),
            sigma: Some(1.0),
            length: Some(1.0),
            z: Some(1.0),
            at: Some(vec![2.0]),
            ..Default::default()
        };
        assert!(parse_config(Command::Oracle, None, flags).is_err());
    }
}
