//! Navigation workbench for cluttered 2D worlds.
//!
//! The pipeline: [`worldgen`] builds occupancy-grid worlds, [`demo`] records
//! noise-injected demonstrations of the [`expert`] in the [`sim`]ulator,
//! [`trainer`] fits a transformer [`model`] by behavior cloning, [`safety`]
//! vets commands against LiDAR points, and [`bench`] scores closed-loop
//! trials.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod worldgen;
pub mod sim;
pub mod planning;
pub mod expert;
pub mod safety;
pub mod rollout;
pub mod demo;
pub mod model;
pub mod trainer;
pub mod bench;

pub use error::{Error, Result};
pub use expert::{Action, Observation, Policy};
pub use geometry::{Point2, Pose};
