//! Finite location-scale mixture approximation of probability densities.
//!
//! A mixture with kernel `g` is a convex combination of shifted and scaled
//! copies `σ⁻ⁿ g((x − μ)/σ)` of a single density. This crate constructs such
//! mixtures that approximate a target density in sup-norm, sup-norm on a
//! compact box, `L_p`, or `L₁`, and verifies the constructions numerically
//! on a fixed midpoint tensor grid (the only integration scheme used, so
//! every result is deterministic and reproducible).
//!
//! Module map:
//!
//! - [`mixture`] — densities, mixtures, evaluation, dilation, validation.
//! - [`analysis`] — quadrature grids, `L_p`/sup norms, KL divergence,
//!   pointwise convolution with dilated kernels, modulus of continuity.
//! - [`constructive`] — ball truncation, compact cutoff, partitions of a
//!   scaled compact set, and the Riemann-sum mixture pipelines (uniform,
//!   compact-uniform, `L₁`).
//! - [`greedy`] — `L_p` fitting by greedy convex combinations over a
//!   dictionary of dilates, with the `C_p·K·m^{-(1-1/α)}` rate check.
//! - [`classes`] — the built-in density catalog, class membership probes
//!   (vanishing tails, polynomial domination, Wiener-type cell sums), and
//!   a bump-train counterexample density with exact peak/mass arithmetic.

#![forbid(unsafe_code)]

pub mod analysis;
pub mod classes;
pub mod constructive;
pub mod error;
pub mod greedy;
pub mod mixture;
pub mod numeric;

pub use error::{Error, Result};
