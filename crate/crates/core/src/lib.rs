//! Viability kernels, guaranteed viability kernels and consensus analysis
//! for controlled systems whose dynamics are disputed by several
//! stakeholders.
//!
//! The crate is organised bottom-up:
//!
//! - [`dynamics`]: lake phosphorus models (sigmoid, logistic-exponential
//!   and blended recycling) and their explicit Euler steps.
//! - [`embedding`]: tychastic systems that embed every member's dynamics.
//! - [`grid`]: uniform state grids, cell sets and the raster file format.
//! - [`solver`]: discrete viability / guaranteed viability fixed points and
//!   regulation maps.
//! - [`oracle2d`]: analytic kernel boundaries for point-parameter lake models.
//! - [`consensus`]: member kernels, consensus verdicts and counterexamples.
//! - [`trajectory`]: rollouts under constant, scheduled or regulated controls.
//! - [`scenario`]: scenario files, packaged scenarios and run reports.
//! - [`artifact`]: solve outputs and trajectory probes shared by the
//!   command line and the service.

// `!(x > 0.0)` rejects NaN as well; the negated comparisons are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifact;
pub mod consensus;
pub mod dynamics;
pub mod embedding;
pub mod error;
pub mod grid;
pub mod oracle2d;
pub mod par;
pub mod scenario;
pub mod solver;
pub mod trajectory;

pub use error::{Error, Result};
