//! Fractional-order element-free Galerkin (f-EFG) solver for nonlocal
//! Kirchhoff plates.
//!
//! Module map:
//! - [`quadrature`]: Gauss–Legendre and Gauss–Jacobi rules.
//! - [`geometry`]: node clouds, background meshes, truncated horizons.
//! - [`mls`]: moving least squares shape functions and derivatives.
//! - [`fracdiff`]: Riesz–Caputo derivative rows of MLS approximants.
//! - [`plate`]: constitutive matrices, strain-displacement blocks, assembly
//!   and collocation boundary conditions.
//! - [`solver`]: linear solve, incremental Newton–Raphson, FLOP model.
//! - [`case`] and [`report`]: run configuration, normalization and
//!   reference-table comparison used by the command-line tool.

// `!(x > 0.0)` deliberately rejects NaN as well as non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod case;
pub mod error;
pub mod fracdiff;
pub mod geometry;
pub mod mls;
pub mod plate;
pub mod quadrature;
pub mod report;
pub mod solver;

pub use error::{Error, Result};
pub use fracdiff::{FracBMatrices, FracParams};
pub use geometry::{Axis, BackgroundMesh, BasisOrder, Domain, Horizon, NodeCloud, Point};
pub use mls::{Deriv, DerivDepth, ShapeEval};
pub use plate::{Material, PlateCase, SystemMatrices};
pub use case::{Mode, RunConfig};
pub use report::{Quantity, ReferenceSet, ReportRow};
pub use solver::{SolveResult, SolverSettings};
