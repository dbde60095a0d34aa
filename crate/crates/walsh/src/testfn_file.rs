//! TOML files for test-function specs, vanishing-limit schedules and simulator
//! identity checks. See `docs/problem-format.md`.

use serde::Deserialize;
use walsh_core::spider::Reflection;
use walsh_core::testfn::{OdeOptions, ScheduleRow, TestFunctionSpec};

use crate::error::{FileError, FileResult};

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Slope {
    Value(f64),
    Mode(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecTable {
    r: f64,
    #[serde(rename = "B")]
    b: f64,
    #[serde(rename = "H")]
    h: f64,
    eps: Option<f64>,
    kappa: Option<f64>,
    #[serde(default)]
    eta: f64,
    #[serde(default)]
    gamma: f64,
    slope: Option<Slope>,
    w: f64,
    z: Option<Vec<f64>>,
    rays: Option<usize>,
    #[serde(default = "one")]
    beta: f64,
    #[serde(default)]
    ell: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptionsTable {
    nx_fine: Option<usize>,
    nl_samples: Option<usize>,
    residual_tol: Option<f64>,
}

impl OptionsTable {
    fn build(&self) -> OdeOptions {
        let d = OdeOptions::default();
        OdeOptions {
            nx_fine: self.nx_fine.unwrap_or(d.nx_fine),
            nl_samples: self.nl_samples.unwrap_or(d.nl_samples),
            residual_tol: self.residual_tol.unwrap_or(d.residual_tol),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    spec: SpecTable,
    #[serde(default)]
    options: OptionsTable,
}

impl SpecTable {
    fn z(&self) -> FileResult<Vec<f64>> {
        match (&self.z, self.rays) {
            (Some(z), None) => Ok(z.clone()),
            (Some(z), Some(n)) if z.len() == n => Ok(z.clone()),
            (Some(z), Some(n)) => Err(FileError::field(
                "spec.z",
                format!("{} values for {n} rays", z.len()),
            )),
            (None, Some(n)) => Ok(vec![f64::NAN; n]),
            (None, None) => Err(FileError::field("spec.z", "give `z` or `rays`")),
        }
    }

    fn absorbing(&self) -> FileResult<bool> {
        match &self.slope {
            None => Ok(true),
            Some(Slope::Mode(m)) if m == "absorbing" => Ok(true),
            Some(Slope::Mode(m)) => Err(FileError::field(
                "spec.slope",
                format!("expected a number or \"absorbing\", got \"{m}\""),
            )),
            Some(Slope::Value(_)) => Ok(false),
        }
    }

    fn to_spec(&self, eps: f64, kappa: f64, z: Vec<f64>) -> TestFunctionSpec {
        TestFunctionSpec {
            r: self.r,
            b: self.b,
            h: self.h,
            eps,
            kappa,
            eta: self.eta,
            gamma: self.gamma,
            slope: match self.slope {
                Some(Slope::Value(s)) => s,
                _ => 0.0,
            },
            w: self.w,
            z,
            beta: self.beta,
            ell: self.ell,
        }
    }
}

/// A parsed spec file; with `absorbing` the slope is replaced by `S(beta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecInput {
    pub spec: TestFunctionSpec,
    pub absorbing: bool,
    pub options: OdeOptions,
}

pub fn parse_spec(text: &str) -> FileResult<SpecInput> {
    let f: SpecFile = toml::from_str(text)?;
    let s = &f.spec;
    let eps = s
        .eps
        .ok_or_else(|| FileError::field("spec.eps", "missing"))?;
    let kappa = s
        .kappa
        .ok_or_else(|| FileError::field("spec.kappa", "missing"))?;
    let z = s.z()?;
    if z.iter().any(|v| v.is_nan()) {
        return Err(FileError::field("spec.z", "missing"));
    }
    let spec = s.to_spec(eps, kappa, z);
    spec.validate()?;
    Ok(SpecInput {
        spec,
        absorbing: s.absorbing()?,
        options: f.options.build(),
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RowTable {
    eps: f64,
    kappa: f64,
    #[serde(default)]
    eta: f64,
    #[serde(default)]
    gamma: f64,
    z: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleFile {
    base: SpecTable,
    #[serde(default)]
    options: OptionsTable,
    row: Vec<RowTable>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleInput {
    /// Base spec; `eps`, `kappa`, `eta`, `gamma` and `z` come from the rows.
    pub base: TestFunctionSpec,
    pub rows: Vec<ScheduleRow>,
    pub options: OdeOptions,
}

pub fn parse_schedule(text: &str) -> FileResult<ScheduleInput> {
    let f: ScheduleFile = toml::from_str(text)?;
    for (name, set) in [
        ("eps", f.base.eps.is_some()),
        ("kappa", f.base.kappa.is_some()),
    ] {
        if set {
            return Err(FileError::field(
                format!("base.{name}"),
                "set per row, not in the base",
            ));
        }
    }
    if f.base.slope.is_some() {
        return Err(FileError::field(
            "base.slope",
            "the study always uses the absorbing slope",
        ));
    }
    let z = f.base.z()?;
    let base = f.base.to_spec(
        1.0,
        1.0,
        z.iter()
            .map(|v| if v.is_nan() { 0.0 } else { *v })
            .collect(),
    );
    let rows = f
        .row
        .into_iter()
        .map(|r| ScheduleRow {
            eps: r.eps,
            kappa: r.kappa,
            eta: r.eta,
            gamma: r.gamma,
            z: r.z,
        })
        .collect();
    Ok(ScheduleInput {
        base,
        rows,
        options: f.options.build(),
    })
}

/// Reflected spider with constant coefficients, for the simulator identity checks.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentitySchedule {
    pub drift: Vec<f64>,
    pub volatility: Vec<f64>,
    pub spin: Vec<f64>,
    pub paths: u64,
    pub dt: f64,
    #[serde(default = "one")]
    pub horizon: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub reflection: ReflectionName,
    /// Levels for the down-crossing and occupation checks.
    pub eps: Vec<f64>,
    /// Thresholds for the non-stickiness check.
    pub delta: Vec<f64>,
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, serde::Serialize, clap::ValueEnum,
)]
#[serde(rename_all = "lowercase")]
pub enum ReflectionName {
    #[default]
    Mirror,
    Projection,
    Lepingle,
}

impl From<ReflectionName> for Reflection {
    fn from(r: ReflectionName) -> Self {
        match r {
            ReflectionName::Mirror => Reflection::Mirror,
            ReflectionName::Projection => Reflection::Projection,
            ReflectionName::Lepingle => Reflection::Lepingle,
        }
    }
}

pub fn parse_identity_schedule(text: &str) -> FileResult<IdentitySchedule> {
    let s: IdentitySchedule = toml::from_str(text)?;
    if s.paths < 2 {
        return Err(FileError::field("paths", "at least 2 paths are needed"));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPEC: &str = r#"
[spec]
r = 1.0
B = 1.0
H = 1.0
eps = 0.1
kappa = 0.01
w = 0.0
z = [0.0, 0.0]
[options]
nx_fine = 512
"#;

    #[test]
    fn spec_defaults() {
        let s = parse_spec(SPEC).unwrap();
        assert!(s.absorbing);
        assert_eq!(s.spec.beta, 1.0);
        assert_eq!(s.options.nx_fine, 512);
        assert_eq!(s.options.nl_samples, OdeOptions::default().nl_samples);
        let fixed = parse_spec(&SPEC.replace("w = 0.0", "w = 0.0\nslope = 0.5")).unwrap();
        assert!(!fixed.absorbing && fixed.spec.slope == 0.5);
        assert!(parse_spec(&SPEC.replace("w = 0.0", "w = 0.0\nslope = \"steep\"")).is_err());
        assert!(parse_spec(&SPEC.replace("kappa = 0.01", "")).is_err());
        assert!(parse_spec(&SPEC.replace("w = 0.0", "w = 0.0\nomega = 1")).is_err());
    }

    #[test]
    fn schedule_rows() {
        let s = parse_schedule(
            r#"
[base]
r = 1.0
B = 1.0
H = 1.0
w = 1.0
rays = 2
[[row]]
eps = 0.1
kappa = 0.01
[[row]]
eps = 0.05
kappa = 0.0025
z = [1.0, 1.1]
"#,
        )
        .unwrap();
        assert_eq!(s.rows.len(), 2);
        assert_eq!(s.base.z.len(), 2);
        assert!(s.rows[0].z.is_none());
    }

    #[test]
    fn identity_schedule() {
        let s = parse_identity_schedule("drift=[0.0]\nvolatility=[1.0]\nspin=[1.0]\npaths=10\ndt=1e-3\neps=[0.1]\ndelta=[0.1]\nreflection=\"lepingle\"").unwrap();
        assert_eq!(Reflection::from(s.reflection), Reflection::Lepingle);
        assert!(parse_identity_schedule(
            "drift=[0.0]\nvolatility=[1.0]\nspin=[1.0]\npaths=1\ndt=1e-3\neps=[]\ndelta=[]"
        )
        .is_err());
    }
}
