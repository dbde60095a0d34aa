//! TOML problem files; the format is described in `docs/problem-format.md`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;
use walsh_core::expr::CoefficientExpr;
use walsh_core::network::{LocalTimeBound, Network};
use walsh_core::problem::{ControlSet, ProblemData, RayData, VertexData};

use crate::error::{read, FileError, FileResult};

/// Key that supplies a value to every ray without its own entry.
pub const ALL_RAYS: &str = "all";

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ExprValue {
    Number(f64),
    Text(String),
}

impl ExprValue {
    fn parse(&self, field: &str) -> FileResult<CoefficientExpr> {
        match self {
            ExprValue::Number(v) => Ok(CoefficientExpr::constant(*v)),
            ExprValue::Text(s) => CoefficientExpr::parse(s)
                .map_err(|e| FileError::field(field, format!("{e} in \"{s}\""))),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkSection {
    rays: usize,
    length: f64,
    local_time_bound: Option<f64>,
    local_time_truncation: Option<f64>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RaySection {
    sigma: Option<ExprValue>,
    drift: Option<ExprValue>,
    cost: Option<ExprValue>,
    spin: Option<ExprValue>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct VertexSection {
    cost: Option<ExprValue>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoefficientsSection {
    lambda: f64,
    #[serde(default)]
    ray: BTreeMap<String, RaySection>,
    #[serde(default)]
    vertex: VertexSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Points {
    Scalars(Vec<f64>),
    Vectors(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControlSpec {
    points: Option<Points>,
    interval: Option<[f64; 2]>,
    lo: Option<Vec<f64>>,
    hi: Option<Vec<f64>>,
    count: Option<usize>,
}

impl ControlSpec {
    fn build(&self, field: &str) -> FileResult<ControlSet> {
        let err = |m: &str| FileError::field(field, m);
        let set =
            match (&self.points, &self.interval, &self.lo, &self.hi) {
                (Some(Points::Scalars(p)), None, None, None) => ControlSet::scalars(p),
                (Some(Points::Vectors(p)), None, None, None) => {
                    ControlSet::points(p.first().map_or(0, Vec::len), p)
                }
                (None, Some([a, b]), None, None) => ControlSet::interval(
                    *a,
                    *b,
                    self.count.ok_or_else(|| err("`interval` needs `count`"))?,
                ),
                (None, None, Some(lo), Some(hi)) => ControlSet::uniform_box(
                    lo,
                    hi,
                    self.count.ok_or_else(|| err("`lo`/`hi` need `count`"))?,
                ),
                _ => return Err(err(
                    "give exactly one of `points`, `interval` + `count`, or `lo` + `hi` + `count`",
                )),
            };
        if self.points.is_some() && self.count.is_some() {
            return Err(err("`count` is only valid with `interval` or `lo`/`hi`"));
        }
        set.map_err(|e| FileError::field(field, e.to_string()))
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControlsSection {
    #[serde(default)]
    ray: BTreeMap<String, ControlSpec>,
    vertex: Option<ControlSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundarySection {
    #[serde(default)]
    lateral: BTreeMap<String, ExprValue>,
    #[serde(default)]
    terminal: BTreeMap<String, ExprValue>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    network: NetworkSection,
    coefficients: CoefficientsSection,
    #[serde(default)]
    controls: ControlsSection,
    boundary: BoundarySection,
}

fn check_keys<V>(map: &BTreeMap<String, V>, rays: usize, section: &str) -> FileResult<()> {
    for k in map.keys() {
        let ok = k == ALL_RAYS || k.parse::<usize>().is_ok_and(|i| (1..=rays).contains(&i));
        if !ok {
            return Err(FileError::field(
                format!("{section}.{k}"),
                format!("ray keys must be 1..={rays} or \"{ALL_RAYS}\""),
            ));
        }
    }
    Ok(())
}

/// Entry for ray `i` (1-based), falling back to the `all` entry.
fn lookup<V>(map: &BTreeMap<String, V>, i: usize) -> Option<(&V, String)> {
    let key = i.to_string();
    map.get(&key)
        .map(|v| (v, key))
        .or_else(|| map.get(ALL_RAYS).map(|v| (v, ALL_RAYS.to_string())))
}

fn ray_field(
    rays: &BTreeMap<String, RaySection>,
    i: usize,
    name: &str,
    pick: impl Fn(&RaySection) -> &Option<ExprValue>,
    default: Option<f64>,
) -> FileResult<CoefficientExpr> {
    let own = rays
        .get(&i.to_string())
        .and_then(|r| pick(r).as_ref().map(|v| (v, i.to_string())));
    let all = || {
        rays.get(ALL_RAYS)
            .and_then(|r| pick(r).as_ref().map(|v| (v, ALL_RAYS.to_string())))
    };
    match own.or_else(all) {
        Some((v, key)) => v.parse(&format!("coefficients.ray.{key}.{name}")),
        None => match default {
            Some(d) => Ok(CoefficientExpr::constant(d)),
            None => Err(FileError::field(
                format!("coefficients.ray.{i}.{name}"),
                "missing (no ray or \"all\" entry)",
            )),
        },
    }
}

/// Parses and validates a problem file.
pub fn parse_problem(text: &str) -> FileResult<ProblemData> {
    let f: ProblemFile = toml::from_str(text)?;
    let n = &f.network;
    let bound = match (n.local_time_bound, n.local_time_truncation) {
        (Some(k), None) => LocalTimeBound::Finite(k),
        (None, Some(t)) => LocalTimeBound::Unbounded { truncation: t },
        _ => {
            return Err(FileError::field(
                "network",
                "give exactly one of `local_time_bound` or `local_time_truncation`",
            ))
        }
    };
    let network = Network::new(n.rays, n.length, bound)?;
    let rays = n.rays;
    check_keys(&f.coefficients.ray, rays, "coefficients.ray")?;
    check_keys(&f.controls.ray, rays, "controls.ray")?;
    check_keys(&f.boundary.lateral, rays, "boundary.lateral")?;
    check_keys(&f.boundary.terminal, rays, "boundary.terminal")?;
    let c = &f.coefficients.ray;
    let mut out = Vec::with_capacity(rays);
    for i in 1..=rays {
        let boundary =
            |map: &BTreeMap<String, ExprValue>, name: &str| -> FileResult<CoefficientExpr> {
                let (v, key) = lookup(map, i).ok_or_else(|| {
                    FileError::field(
                        format!("boundary.{name}.{i}"),
                        "missing (no ray or \"all\" entry)",
                    )
                })?;
                v.parse(&format!("boundary.{name}.{key}"))
            };
        let controls = match lookup(&f.controls.ray, i) {
            Some((spec, key)) => spec.build(&format!("controls.ray.{key}"))?,
            None => ControlSet::singleton(0.0),
        };
        out.push(RayData {
            sigma: ray_field(c, i, "sigma", |r| &r.sigma, None)?,
            drift: ray_field(c, i, "drift", |r| &r.drift, Some(0.0))?,
            cost: ray_field(c, i, "cost", |r| &r.cost, Some(0.0))?,
            spin: ray_field(c, i, "spin", |r| &r.spin, Some(1.0 / rays as f64))?,
            lateral: boundary(&f.boundary.lateral, "lateral")?,
            terminal: boundary(&f.boundary.terminal, "terminal")?,
            controls,
        });
    }
    let vertex = VertexData {
        cost: match &f.coefficients.vertex.cost {
            Some(v) => v.parse("coefficients.vertex.cost")?,
            None => CoefficientExpr::constant(0.0),
        },
        controls: match &f.controls.vertex {
            Some(spec) => spec.build("controls.vertex")?,
            None => ControlSet::singleton(0.0),
        },
    };
    Ok(ProblemData::new(
        network,
        f.coefficients.lambda,
        out,
        vertex,
    )?)
}

pub fn load_problem(path: &Path) -> FileResult<ProblemData> {
    parse_problem(&read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
[network]
rays = 3
length = 1.0
local_time_bound = 2.0

[coefficients]
lambda = 1.5

[coefficients.ray.all]
sigma = "1 + 0.1*x"
drift = "beta"
cost = 0.5

[coefficients.ray.2]
cost = "sin(x) + l"

[coefficients.vertex]
cost = "abs(theta1)"

[controls]
ray.all = { interval = [-1.0, 1.0], count = 5 }
ray.3 = { points = [0.0] }
vertex = { points = [[0.2], [0.4]] }

[boundary]
lateral.all = "1 + l"
terminal.all = "3 + 0*x"
"#;

    #[test]
    fn parses_defaults_and_overrides() {
        let p = parse_problem(BASIC).unwrap();
        assert_eq!(p.rays().len(), 3);
        assert_eq!(p.lambda(), 1.5);
        assert_eq!(p.ray(0).controls.len(), 5);
        assert_eq!(p.ray(2).controls.len(), 1);
        let (s, b, h) = p.ray_coefficients(1, 0.5, 0.25, 0.7);
        assert!((s - 1.05).abs() < 1e-15 && (b - 0.7).abs() < 1e-15);
        assert!((h - (0.5f64.sin() + 0.25)).abs() < 1e-15);
        assert_eq!(p.ray_coefficients(0, 0.5, 0.25, 0.7).2, 0.5);
        assert!((p.spin(2, 0.0, &[0.2]) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(p.vertex().controls.len(), 2);
        assert_eq!(p.vertex_cost(0.0, &[-0.4]), 0.4);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = BASIC.replace("lambda = 1.5", "lambda = 1.5\nmu = 2");
        assert!(parse_problem(&bad).unwrap_err().to_string().contains("mu"));
        let bad = BASIC.replace("[coefficients.ray.2]", "[coefficients.ray.4]");
        assert!(parse_problem(&bad)
            .unwrap_err()
            .to_string()
            .contains("coefficients.ray.4"));
    }

    #[test]
    fn missing_boundary_names_the_field() {
        let bad = BASIC.replace("terminal.all = \"3 + 0*x\"", "terminal.1 = \"3\"");
        let e = parse_problem(&bad).unwrap_err().to_string();
        assert!(e.contains("boundary.terminal.2"), "{e}");
    }

    #[test]
    fn expression_errors_carry_the_field() {
        let bad = BASIC.replace("\"1 + 0.1*x\"", "\"1 +* x\"");
        let e = parse_problem(&bad).unwrap_err().to_string();
        assert!(
            e.contains("coefficients.ray.all.sigma") && e.contains("offset"),
            "{e}"
        );
    }

    #[test]
    fn forbidden_variables_are_rejected() {
        let bad = BASIC.replace("lateral.all = \"1 + l\"", "lateral.all = \"1 + x\"");
        assert!(parse_problem(&bad).is_err());
    }

    #[test]
    fn bound_is_exclusive() {
        let bad = BASIC.replace(
            "local_time_bound = 2.0",
            "local_time_bound = 2.0\nlocal_time_truncation = 3.0",
        );
        assert!(parse_problem(&bad).is_err());
        let unb = BASIC.replace("local_time_bound = 2.0", "local_time_truncation = 3.0");
        assert!(parse_problem(&unb).unwrap().network().is_unbounded());
    }
}
