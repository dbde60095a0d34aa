//! Star networks, tensor grids and functions defined on them.
//!
//! A function on the network is stored ray by ray as `values[ray][level][node]`
//! with node 0 the vertex. The vertex values are also kept separately so that
//! continuity at the vertex can be checked rather than assumed.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::linspace;

/// Upper end of the local-time domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LocalTimeBound {
    Finite(f64),
    /// `K = +inf`, solved on `[0, truncation]`.
    Unbounded {
        truncation: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    rays: usize,
    length: f64,
    bound: LocalTimeBound,
}

impl Network {
    pub fn new(rays: usize, length: f64, bound: LocalTimeBound) -> Result<Self> {
        if rays < 2 {
            return Err(Error::InvalidNetwork(format!(
                "need at least 2 rays, got {rays}"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidNetwork(format!(
                "ray length must be positive, got {length}"
            )));
        }
        let k = match bound {
            LocalTimeBound::Finite(k) => k,
            LocalTimeBound::Unbounded { truncation } => truncation,
        };
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::InvalidNetwork(format!(
                "local-time bound must be positive, got {k}"
            )));
        }
        Ok(Self {
            rays,
            length,
            bound,
        })
    }

    pub fn finite(rays: usize, length: f64, k: f64) -> Result<Self> {
        Self::new(rays, length, LocalTimeBound::Finite(k))
    }

    pub fn rays(&self) -> usize {
        self.rays
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn bound(&self) -> LocalTimeBound {
        self.bound
    }

    /// The computational local-time horizon (the truncation when `K` is infinite).
    pub fn horizon(&self) -> f64 {
        match self.bound {
            LocalTimeBound::Finite(k) => k,
            LocalTimeBound::Unbounded { truncation } => truncation,
        }
    }

    pub fn is_unbounded(&self) -> bool {
        matches!(self.bound, LocalTimeBound::Unbounded { .. })
    }

    /// Same network with a different computational horizon.
    pub fn with_horizon(&self, k: f64) -> Result<Self> {
        let bound = match self.bound {
            LocalTimeBound::Finite(_) => LocalTimeBound::Finite(k),
            LocalTimeBound::Unbounded { .. } => LocalTimeBound::Unbounded { truncation: k },
        };
        Self::new(self.rays, self.length, bound)
    }
}

/// Uniform tensor grid shared by all rays.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    rays: usize,
    x: Vec<f64>,
    l: Vec<f64>,
    dx: f64,
    dl: f64,
}

pub fn build_grid(network: &Network, nx: usize, nl: usize) -> Result<Grid> {
    if nx == 0 || nl == 0 {
        return Err(Error::InvalidGrid(format!(
            "nx and nl must be positive, got nx={nx}, nl={nl}"
        )));
    }
    let r = network.length();
    let k = network.horizon();
    Ok(Grid {
        rays: network.rays(),
        x: linspace(0.0, r, nx),
        l: linspace(0.0, k, nl),
        dx: r / nx as f64,
        dl: k / nl as f64,
    })
}

impl Grid {
    pub fn rays(&self) -> usize {
        self.rays
    }
    /// Number of x-intervals.
    pub fn nx(&self) -> usize {
        self.x.len() - 1
    }
    /// Number of l-intervals.
    pub fn nl(&self) -> usize {
        self.l.len() - 1
    }
    pub fn x(&self) -> &[f64] {
        &self.x
    }
    pub fn l(&self) -> &[f64] {
        &self.l
    }
    pub fn dx(&self) -> f64 {
        self.dx
    }
    pub fn dl(&self) -> f64 {
        self.dl
    }
    pub fn length(&self) -> f64 {
        self.x[self.x.len() - 1]
    }
    pub fn horizon(&self) -> f64 {
        self.l[self.l.len() - 1]
    }
}

/// Location of a grid node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NodeIndex {
    pub ray: usize,
    pub level: usize,
    pub node: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkFunction {
    grid: Grid,
    values: Vec<f64>,
    vertex: Vec<f64>,
}

impl NetworkFunction {
    /// Samples `f(ray, x, l)` at off-vertex nodes and `vertex(l)` at the vertex
    /// (mirrored into node 0 of every ray).
    pub fn from_fn(
        grid: &Grid,
        mut f: impl FnMut(usize, f64, f64) -> f64,
        mut vertex: impl FnMut(f64) -> f64,
    ) -> Self {
        let (nx, nl) = (grid.nx(), grid.nl());
        let mut values = Vec::with_capacity(grid.rays * (nl + 1) * (nx + 1));
        let vert: Vec<f64> = grid.l.iter().map(|&l| vertex(l)).collect();
        for i in 0..grid.rays {
            for (k, &l) in grid.l.iter().enumerate() {
                values.push(vert[k]);
                for &x in &grid.x[1..] {
                    values.push(f(i, x, l));
                }
            }
        }
        Self {
            grid: grid.clone(),
            values,
            vertex: vert,
        }
    }

    /// Raw constructor: `ray_values` laid out as `[ray][level][node]`, node 0 included.
    /// Node 0 is not forced to agree with `vertex`.
    pub fn from_parts(grid: &Grid, ray_values: Vec<f64>, vertex: Vec<f64>) -> Result<Self> {
        let expect = grid.rays * (grid.nl() + 1) * (grid.nx() + 1);
        if ray_values.len() != expect || vertex.len() != grid.nl() + 1 {
            return Err(Error::Dimension(format!(
                "expected {expect} ray values and {} vertex values, got {} and {}",
                grid.nl() + 1,
                ray_values.len(),
                vertex.len()
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            values: ray_values,
            vertex,
        })
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self::from_fn(grid, |_, _, _| c, |_| c)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    fn offset(&self, ray: usize, level: usize) -> usize {
        (ray * (self.grid.nl() + 1) + level) * (self.grid.nx() + 1)
    }

    #[inline]
    pub fn get(&self, ray: usize, level: usize, node: usize) -> f64 {
        self.values[self.offset(ray, level) + node]
    }

    #[inline]
    pub fn set(&mut self, ray: usize, level: usize, node: usize, v: f64) {
        let o = self.offset(ray, level);
        self.values[o + node] = v;
    }

    /// Values along ray `ray` at local-time level `level`, vertex first.
    pub fn ray_level(&self, ray: usize, level: usize) -> &[f64] {
        let o = self.offset(ray, level);
        &self.values[o..o + self.grid.nx() + 1]
    }

    pub fn ray_level_mut(&mut self, ray: usize, level: usize) -> &mut [f64] {
        let o = self.offset(ray, level);
        let n = self.grid.nx() + 1;
        &mut self.values[o..o + n]
    }

    pub fn vertex(&self, level: usize) -> f64 {
        self.vertex[level]
    }

    pub fn vertex_values(&self) -> &[f64] {
        &self.vertex
    }

    /// Sets the vertex value at `level` and mirrors it into node 0 of every ray.
    pub fn set_vertex(&mut self, level: usize, v: f64) {
        self.vertex[level] = v;
        for i in 0..self.grid.rays {
            self.set(i, level, 0, v);
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `max_{i,k} |u_i(0, l_k) - v(l_k)|`.
    pub fn continuity_residual(&self) -> f64 {
        let mut r: f64 = 0.0;
        for i in 0..self.grid.rays {
            for k in 0..=self.grid.nl() {
                r = r.max((self.get(i, k, 0) - self.vertex[k]).abs());
            }
        }
        r
    }

    /// Pointwise map applied to every stored value, vertex included.
    pub fn map(&self, mut f: impl FnMut(usize, f64, f64, f64) -> f64) -> Self {
        let mut out = self.clone();
        let (nx, nl) = (self.grid.nx(), self.grid.nl());
        for k in 0..=nl {
            let l = self.grid.l[k];
            out.vertex[k] = f(usize::MAX, 0.0, l, self.vertex[k]);
        }
        for i in 0..self.grid.rays {
            for k in 0..=nl {
                let l = self.grid.l[k];
                for j in 0..=nx {
                    let v = self.get(i, k, j);
                    let nv = if j == 0 {
                        out.vertex[k]
                    } else {
                        f(i, self.grid.x[j], l, v)
                    };
                    out.set(i, k, j, nv);
                }
            }
        }
        out
    }

    /// The function shifted by a constant.
    pub fn add_scalar(&self, c: f64) -> Self {
        self.map(|_, _, _, v| v + c)
    }

    /// Largest value of `|self - other|` over all nodes.
    pub fn sup_distance(&self, other: &Self) -> Result<f64> {
        let r = compare_pointwise(self, other)?;
        Ok(r.min_diff.abs().max(r.max_diff.abs()))
    }
}

/// Result of comparing two network functions node by node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderingReport {
    /// `min (u - v)` over all nodes.
    pub min_diff: f64,
    pub max_diff: f64,
    /// Where `min_diff` is attained.
    pub argmin: NodeIndex,
}

impl OrderingReport {
    /// `u >= v - tol` everywhere.
    pub fn holds(&self, tol: f64) -> bool {
        self.min_diff >= -tol
    }
}

/// Compares `u` against `v`; the grids must be identical.
pub fn compare_pointwise(u: &NetworkFunction, v: &NetworkFunction) -> Result<OrderingReport> {
    if u.grid != v.grid {
        return Err(Error::GridMismatch);
    }
    let mut rep = OrderingReport {
        min_diff: f64::INFINITY,
        max_diff: f64::NEG_INFINITY,
        argmin: NodeIndex::default(),
    };
    let g = &u.grid;
    for i in 0..g.rays {
        for k in 0..=g.nl() {
            let (a, b) = (u.ray_level(i, k), v.ray_level(i, k));
            for j in 0..=g.nx() {
                let d = a[j] - b[j];
                if d < rep.min_diff {
                    rep.min_diff = d;
                    rep.argmin = NodeIndex {
                        ray: i,
                        level: k,
                        node: j,
                    };
                }
                rep.max_diff = rep.max_diff.max(d);
            }
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn grid_nodes() {
        let n = Network::finite(2, 1.0, 1.0).unwrap();
        let g = build_grid(&n, 4, 2).unwrap();
        assert_eq!(g.x(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(g.l(), &[0.0, 0.5, 1.0]);
        assert_eq!(g.dx(), 0.25);
    }

    #[test]
    fn zero_intervals_rejected() {
        let n = Network::finite(2, 1.0, 1.0).unwrap();
        assert!(matches!(build_grid(&n, 0, 2), Err(Error::InvalidGrid(_))));
        assert!(matches!(build_grid(&n, 3, 0), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn network_validation() {
        assert!(Network::finite(1, 1.0, 1.0).is_err());
        assert!(Network::finite(2, 0.0, 1.0).is_err());
        assert!(Network::finite(2, 1.0, -1.0).is_err());
        let u = Network::new(3, 2.0, LocalTimeBound::Unbounded { truncation: 5.0 }).unwrap();
        assert!(u.is_unbounded());
        assert_eq!(u.horizon(), 5.0);
    }

    #[test]
    fn continuity_from_fn_is_exact() {
        let n = Network::finite(3, 1.0, 1.0).unwrap();
        let g = build_grid(&n, 5, 4).unwrap();
        let f = NetworkFunction::from_fn(&g, |i, x, l| i as f64 + x * l, |l| l * l);
        assert_eq!(f.continuity_residual(), 0.0);
    }

    #[test]
    fn continuity_reports_largest_perturbation() {
        let n = Network::finite(3, 1.0, 1.0).unwrap();
        let g = build_grid(&n, 2, 1).unwrap();
        let mut f = NetworkFunction::constant(&g, 1.0);
        f.set(0, 0, 0, 1.2);
        f.set(2, 1, 0, 1.7);
        assert!((f.continuity_residual() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn from_parts_checks_size() {
        let n = Network::finite(2, 1.0, 1.0).unwrap();
        let g = build_grid(&n, 2, 1).unwrap();
        assert!(NetworkFunction::from_parts(&g, vec![0.0; 11], vec![0.0; 2]).is_err());
        assert!(NetworkFunction::from_parts(&g, vec![0.0; 12], vec![0.0; 2]).is_ok());
    }

    #[test]
    fn compare_reports_location() {
        let n = Network::finite(2, 1.0, 1.0).unwrap();
        let g = build_grid(&n, 4, 4).unwrap();
        let u = NetworkFunction::constant(&g, 1.0);
        let mut v = NetworkFunction::constant(&g, 0.5);
        v.set(1, 2, 3, 1.5);
        let r = compare_pointwise(&u, &v).unwrap();
        assert_eq!(
            r.argmin,
            NodeIndex {
                ray: 1,
                level: 2,
                node: 3
            }
        );
        assert!((r.min_diff + 0.5).abs() < 1e-15);
        assert!(!r.holds(1e-9));
        let other = build_grid(&n, 4, 3).unwrap();
        let w = NetworkFunction::constant(&other, 0.0);
        assert_eq!(compare_pointwise(&u, &w), Err(Error::GridMismatch));
    }

    proptest! {
        #[test]
        fn grid_endpoints_are_exact(r in 0.01f64..100.0, k in 0.01f64..100.0, nx in 1usize..300, nl in 1usize..300) {
            let n = Network::finite(2, r, k).unwrap();
            let g = build_grid(&n, nx, nl).unwrap();
            prop_assert_eq!(g.x()[0], 0.0);
            prop_assert_eq!(g.x()[nx], r);
            prop_assert_eq!(g.l()[nl], k);
            prop_assert!(g.x().windows(2).all(|w| w[1] > w[0]));
        }

        #[test]
        fn shift_preserves_continuity(c in -10.0f64..10.0) {
            let n = Network::finite(3, 1.0, 2.0).unwrap();
            let g = build_grid(&n, 6, 3).unwrap();
            let f = NetworkFunction::from_fn(&g, |i, x, l| (i as f64) * x - l, |l| -l);
            let s = f.add_scalar(c);
            prop_assert_eq!(s.continuity_residual(), 0.0);
            let r = compare_pointwise(&s, &f).unwrap();
            prop_assert!((r.min_diff - c).abs() < 1e-12 && (r.max_diff - c).abs() < 1e-12);
        }
    }
}
