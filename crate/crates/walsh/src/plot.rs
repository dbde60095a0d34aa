//! Two-column tables for external plotting.

use walsh_core::network::NetworkFunction;

use crate::error::{FileError, FileResult};
use crate::solution_io::fmt_f64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlotSlice {
    /// `x -> u_ray(x, l)`; `ray` is 0-based.
    FixedL { ray: usize, l: f64 },
    /// `l -> u_ray(x, l)`.
    FixedX { ray: usize, x: f64 },
    /// `l -> u(0, l)`.
    Vertex,
}

/// Linear interpolation weights of `t` on the uniform nodes `nodes`.
fn locate(nodes: &[f64], t: f64, name: &str) -> FileResult<(usize, f64)> {
    let (a, b) = (nodes[0], nodes[nodes.len() - 1]);
    if !(t >= a && t <= b) {
        return Err(FileError::field(name, format!("{t} outside [{a}, {b}]")));
    }
    let n = nodes.len() - 1;
    let h = (b - a) / n as f64;
    let k = (((t - a) / h).floor() as usize).min(n - 1);
    Ok((k, ((t - nodes[k]) / h).clamp(0.0, 1.0)))
}

fn check_ray(f: &NetworkFunction, ray: usize) -> FileResult<()> {
    if ray >= f.grid().rays() {
        return Err(FileError::field(
            "ray",
            format!("ray {} outside 1..={}", ray + 1, f.grid().rays()),
        ));
    }
    Ok(())
}

/// Returns `(header, rows)`; off-node slices interpolate linearly between neighbouring nodes.
pub fn plot_rows(
    f: &NetworkFunction,
    slice: PlotSlice,
) -> FileResult<(&'static str, Vec<(f64, f64)>)> {
    let g = f.grid();
    match slice {
        PlotSlice::FixedL { ray, l } => {
            check_ray(f, ray)?;
            let (k, w) = locate(g.l(), l, "l")?;
            let (a, b) = (f.ray_level(ray, k), f.ray_level(ray, k + 1));
            Ok((
                "x,u",
                g.x()
                    .iter()
                    .enumerate()
                    .map(|(j, &x)| {
                        (
                            x,
                            if w == 0.0 {
                                a[j]
                            } else {
                                (1.0 - w) * a[j] + w * b[j]
                            },
                        )
                    })
                    .collect(),
            ))
        }
        PlotSlice::FixedX { ray, x } => {
            check_ray(f, ray)?;
            let (j, w) = locate(g.x(), x, "x")?;
            Ok((
                "l,u",
                g.l()
                    .iter()
                    .enumerate()
                    .map(|(k, &l)| {
                        let r = f.ray_level(ray, k);
                        (
                            l,
                            if w == 0.0 {
                                r[j]
                            } else {
                                (1.0 - w) * r[j] + w * r[j + 1]
                            },
                        )
                    })
                    .collect(),
            ))
        }
        PlotSlice::Vertex => Ok((
            "l,u",
            g.l()
                .iter()
                .zip(f.vertex_values())
                .map(|(&l, &v)| (l, v))
                .collect(),
        )),
    }
}

pub fn export_plot_data(f: &NetworkFunction, slice: PlotSlice) -> FileResult<String> {
    let (header, rows) = plot_rows(f, slice)?;
    let mut s = String::from(header);
    s.push('\n');
    for (a, b) in rows {
        s.push_str(&fmt_f64(a));
        s.push(',');
        s.push_str(&fmt_f64(b));
        s.push('\n');
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use walsh_core::network::{build_grid, Network};

    fn f() -> NetworkFunction {
        let g = build_grid(&Network::finite(2, 1.0, 2.0).unwrap(), 10, 8).unwrap();
        NetworkFunction::from_fn(&g, |i, x, l| i as f64 + x + l, |l| l)
    }

    #[test]
    fn slice_sizes() {
        let f = f();
        assert_eq!(plot_rows(&f, PlotSlice::Vertex).unwrap().1.len(), 9);
        assert_eq!(
            plot_rows(&f, PlotSlice::FixedL { ray: 1, l: 0.5 })
                .unwrap()
                .1
                .len(),
            11
        );
        assert_eq!(
            plot_rows(&f, PlotSlice::FixedX { ray: 0, x: 0.3 })
                .unwrap()
                .1
                .len(),
            9
        );
        assert!(export_plot_data(&f, PlotSlice::Vertex)
            .unwrap()
            .starts_with("l,u\n"));
    }

    #[test]
    fn interpolation_is_exact_on_affine_data() {
        let (_, rows) = plot_rows(&f(), PlotSlice::FixedL { ray: 0, l: 0.6 }).unwrap();
        for (x, u) in rows {
            assert!((u - (x + 0.6)).abs() < 1e-14);
        }
    }

    #[test]
    fn out_of_range() {
        let f = f();
        assert!(plot_rows(&f, PlotSlice::FixedL { ray: 0, l: 2.5 }).is_err());
        assert!(plot_rows(&f, PlotSlice::FixedX { ray: 0, x: -0.1 }).is_err());
        assert!(plot_rows(&f, PlotSlice::FixedL { ray: 2, l: 0.0 }).is_err());
    }
}
