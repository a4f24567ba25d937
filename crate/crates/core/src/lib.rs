//! Dense human scene flow: data model, camera and body kinematics, geometric
//! helpers, physics-inspired priors, metrics, a synthetic ground-truth
//! generator and a gradient-descent refiner.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
pub mod camera;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod kinematics;
pub mod metrics;
pub mod optimizer;
pub mod priors;
pub mod rng;
pub mod synthbench;

pub use error::{Error, Result};
