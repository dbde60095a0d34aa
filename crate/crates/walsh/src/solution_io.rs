//! Network-function persistence: CSV (`ray,x,l,u`) and JSON, both lossless.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use walsh_core::network::{build_grid, Network, NetworkFunction};

use crate::error::{read, write, FileError, FileResult};

pub const CSV_HEADER: &str = "ray,x,l,u";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// `.json` selects JSON, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        }
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Rows sorted by ray (1-based), then l, then x.
pub fn to_csv(f: &NetworkFunction) -> String {
    let g = f.grid();
    let mut s = String::with_capacity(64 * g.rays() * (g.nx() + 1) * (g.nl() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for i in 0..g.rays() {
        for (k, &l) in g.l().iter().enumerate() {
            for (j, &x) in g.x().iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{},{},{},{}",
                    i + 1,
                    fmt_f64(x),
                    fmt_f64(l),
                    fmt_f64(f.get(i, k, j))
                );
            }
        }
    }
    s
}

fn rebuild(rays: usize, x: &[f64], l: &[f64], values: Vec<f64>) -> FileResult<NetworkFunction> {
    let (nx, nl) = (x.len().saturating_sub(1), l.len().saturating_sub(1));
    let grid = build_grid(
        &Network::finite(rays, *x.last().unwrap_or(&0.0), *l.last().unwrap_or(&0.0))?,
        nx,
        nl,
    )?;
    if grid.x() != x || grid.l() != l {
        return Err(FileError::field(
            "grid",
            "nodes are not the uniform grid over [0, R] x [0, K]",
        ));
    }
    let vertex: Vec<f64> = (0..=nl).map(|k| values[k * (nx + 1)]).collect();
    for i in 1..rays {
        for (k, v) in vertex.iter().enumerate() {
            if values[(i * (nl + 1) + k) * (nx + 1)] != *v {
                return Err(FileError::field(
                    "values",
                    format!(
                        "ray {} disagrees with ray 1 at the vertex, level {k}",
                        i + 1
                    ),
                ));
            }
        }
    }
    Ok(NetworkFunction::from_parts(&grid, values, vertex)?)
}

pub fn from_csv(text: &str) -> FileResult<NetworkFunction> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => {
            return Err(FileError::Csv {
                line: 1,
                message: format!("header must be `{CSV_HEADER}`"),
            })
        }
    }
    let mut rows: Vec<(usize, f64, f64, f64)> = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: &str| FileError::Csv {
            line: n + 1,
            message: m.to_string(),
        };
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(bad("expected 4 columns"));
        }
        let ray: usize = parts[0].parse().map_err(|_| bad("bad ray index"))?;
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
        if ray == 0 {
            return Err(bad("rays are numbered from 1"));
        }
        rows.push((ray, num(parts[1])?, num(parts[2])?, num(parts[3])?));
    }
    let rays = rows.iter().map(|r| r.0).max().ok_or(FileError::Csv {
        line: 2,
        message: "no data rows".into(),
    })?;
    let mut x: Vec<f64> = Vec::new();
    let mut l: Vec<f64> = Vec::new();
    for r in rows.iter().take_while(|r| r.0 == 1) {
        if x.last().is_none_or(|v| *v < r.1) && !x.contains(&r.1) {
            x.push(r.1);
        }
        if l.last() != Some(&r.2) {
            l.push(r.2);
        }
    }
    let (nx, nl) = (x.len(), l.len());
    if rows.len() != rays * nx * nl {
        return Err(FileError::Csv {
            line: 0,
            message: format!(
                "expected {} rows for a full tensor grid, found {}",
                rays * nx * nl,
                rows.len()
            ),
        });
    }
    let mut values = Vec::with_capacity(rows.len());
    for (n, r) in rows.iter().enumerate() {
        let (i, k, j) = (n / (nx * nl), (n / nx) % nl, n % nx);
        if r.0 != i + 1 || r.1 != x[j] || r.2 != l[k] {
            return Err(FileError::Csv {
                line: n + 2,
                message: "rows must be sorted by (ray, l, x) on a tensor grid".into(),
            });
        }
        values.push(r.3);
    }
    rebuild(rays, &x, &l, values)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonNetwork {
    rays: usize,
    length: f64,
    local_time_bound: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonGrid {
    nx: usize,
    nl: usize,
    dx: f64,
    dl: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonSolution {
    network: JsonNetwork,
    grid: JsonGrid,
    /// `values[ray][level][node]`.
    values: Vec<Vec<Vec<f64>>>,
}

pub fn to_json(f: &NetworkFunction) -> String {
    let g = f.grid();
    let doc = JsonSolution {
        network: JsonNetwork {
            rays: g.rays(),
            length: g.length(),
            local_time_bound: g.horizon(),
        },
        grid: JsonGrid {
            nx: g.nx(),
            nl: g.nl(),
            dx: g.dx(),
            dl: g.dl(),
        },
        values: (0..g.rays())
            .map(|i| (0..=g.nl()).map(|k| f.ray_level(i, k).to_vec()).collect())
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("plain data serializes")
}

pub fn from_json(text: &str) -> FileResult<NetworkFunction> {
    let doc: JsonSolution = serde_json::from_str(text)?;
    let n = Network::finite(
        doc.network.rays,
        doc.network.length,
        doc.network.local_time_bound,
    )?;
    let grid = build_grid(&n, doc.grid.nx, doc.grid.nl)?;
    if doc.values.len() != grid.rays()
        || doc
            .values
            .iter()
            .any(|r| r.len() != grid.nl() + 1 || r.iter().any(|lv| lv.len() != grid.nx() + 1))
    {
        return Err(FileError::field("values", "shape does not match the grid"));
    }
    let flat: Vec<f64> = doc.values.into_iter().flatten().flatten().collect();
    rebuild(grid.rays(), grid.x(), grid.l(), flat)
}

pub fn write_solution(f: &NetworkFunction, path: &Path, format: Format) -> FileResult<()> {
    let text = match format {
        Format::Csv => to_csv(f),
        Format::Json => to_json(f),
    };
    write(path, &text)
}

pub fn load_solution(path: &Path) -> FileResult<NetworkFunction> {
    let text = read(path)?;
    match Format::from_path(path) {
        Format::Csv => from_csv(&text),
        Format::Json => from_json(&text),
    }
}

/// Samples of a test function: `ray,x,l,psi,dpsi,d2psi`, rays 1-based.
pub fn test_function_csv(tf: &walsh_core::testfn::TestFunction) -> String {
    let mut s = String::from("ray,x,l,psi,dpsi,d2psi\n");
    for (i, ray) in tf.rays.iter().enumerate() {
        for (k, &l) in tf.l.iter().enumerate() {
            for (j, &x) in tf.x.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    i + 1,
                    fmt_f64(x),
                    fmt_f64(l),
                    fmt_f64(ray.psi[k][j]),
                    fmt_f64(ray.dpsi[k][j]),
                    fmt_f64(ray.d2psi[k][j])
                );
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use walsh_core::network::compare_pointwise;

    fn sample() -> NetworkFunction {
        let g = build_grid(&Network::finite(3, 1.3, 0.7).unwrap(), 7, 5).unwrap();
        NetworkFunction::from_fn(
            &g,
            |i, x, l| (0.1 + i as f64) * x.sin() + l.exp() / 3.0,
            |l| l.exp() / 3.0,
        )
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let f = sample();
        let text = to_csv(&f);
        assert!(text.starts_with("ray,x,l,u\n"));
        let g = from_csv(&text).unwrap();
        let r = compare_pointwise(&g, &f).unwrap();
        assert_eq!((r.min_diff, r.max_diff), (0.0, 0.0));
        assert_eq!(g, f);
        assert_eq!(to_csv(&g), text);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let f = sample();
        let g = from_json(&to_json(&f)).unwrap();
        assert_eq!(g, f);
    }

    #[test]
    fn corrupt_csv_is_rejected() {
        let text = to_csv(&sample());
        assert!(from_csv(&text.replacen("ray,x,l,u", "ray,x,u,l", 1)).is_err());
        let mut lines: Vec<&str> = text.lines().collect();
        lines.swap(2, 3);
        assert!(from_csv(&lines.join("\n")).is_err());
        lines.swap(2, 3);
        lines.pop();
        assert!(from_csv(&lines.join("\n")).is_err());
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(Format::from_path(Path::new("a/b.JSON")), Format::Json);
        assert_eq!(Format::from_path(Path::new("a/b.csv")), Format::Csv);
    }
}
