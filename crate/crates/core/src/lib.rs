//! Numerical core for Walsh spider HJB systems on star networks.
//!
//! A star network has `I >= 2` rays of common length `R` glued at a vertex; every
//! function lives on `[0, R] x [0, K]`, the second variable being the local time
//! accumulated at the vertex. The crate provides:
//!
//! * [`network`]: grids and network functions,
//! * [`expr`] and [`problem`]: coefficient expressions, control sets and problem data,
//! * [`solver`]: a monotone upwind finite-difference solver marching backward in local time,
//! * [`testfn`]: the parametric ODE test functions used at the vertex,
//! * [`spider`]: an Euler-Maruyama simulator for the spider diffusion.
//!
//! The crate is `no_std` and needs only `alloc`.
#![no_std]
// `!(a > b)` is used on purpose so that NaN fails every range check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod assumptions;
pub mod error;
pub mod expr;
pub mod math;
pub mod network;
pub mod problem;
pub mod solver;
pub mod spider;
pub mod testfn;
pub mod tridiag;

pub use error::{Error, Result};
