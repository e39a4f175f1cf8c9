//! Numerical laboratory for subordinate killed Brownian motion.
//!
//! The process under study is built in two stages: a subordinate Brownian
//! motion `Z` (Brownian motion time-changed by a subordinator with Laplace
//! exponent `phi`) is killed on exiting a bounded smooth open set `D`, and the
//! killed process is then time-changed by a second, independent subordinator
//! with Laplace exponent `psi`. The resulting process has explicit two-sided
//! comparisons for its Green function, jumping kernel, killing density and
//! exit times, all expressed through the scale function `Phi(r) = 1/phi(r^-2)`.
//!
//! The crate provides
//! * exact evaluation of the admissible Laplace exponents and their derived
//!   densities ([`bernstein`]),
//! * closed-form comparison kernels ([`estimates`]),
//! * adaptive quadrature that assembles the subordination integrals and
//!   scores the comparison lemmas over parameter sweeps ([`quadrature`]),
//! * exact disk/annulus geometry ([`domain`]),
//! * path-level Monte Carlo with deterministic parallel streams
//!   ([`montecarlo`]),
//! * experiment configuration, dispatch and report emission ([`config`],
//!   [`lab`], [`report`]).

pub mod bernstein;
pub mod config;
pub mod domain;
pub mod error;
pub mod estimates;
pub mod lab;
pub mod montecarlo;
pub mod quadrature;
pub mod report;

pub use error::{Error, Result};
