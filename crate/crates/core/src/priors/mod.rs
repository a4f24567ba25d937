//! Constraint priors, each returning a non-negative value and analytic
//! gradients for the variables it reads.
//!
//! Gradient slots hold one entry per frame the constraint touches, in the
//! order of its inputs: a single-frame constraint has one entry, `c_skel` has
//! `[pose, pose_next]`, `c_eff` one per window frame, `c_cam` one per camera.

mod cam;
mod com;
mod config;
mod dist;
mod eff;
pub mod gradcheck;
mod objective;
mod silh;
mod skel;

pub use cam::c_cam;
pub use com::{c_com, c_com_frozen, com_selection, ComSelection};
pub use config::{parse_prior_config, Constraint, PriorWeights, Tolerances};
pub use dist::c_dist;
pub use eff::{c_eff, c_eff_with_reference, eff_reference};
pub use gradcheck::{finite_difference_check, rel_err_bound, GradCheckReport};
pub use objective::{draw_window, total_objective, ClipVariables, ObjectiveReport, TeacherSet};
pub use silh::c_silh;
pub use skel::{c_skel, c_skel_frozen, skel_selection};

use crate::camera::Vec3;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConstraintResult {
    pub value: f64,
    pub grad_depth: Option<Vec<Vec<f64>>>,
    pub grad_flow: Option<Vec<Vec<Vec3>>>,
    pub grad_pose: Option<Vec<Vec<Vec3>>>,
    pub grad_intrinsics: Option<Vec<[f64; 4]>>,
}

impl ConstraintResult {
    pub fn all_finite(&self) -> bool {
        let f = |x: &f64| x.is_finite();
        let v = |x: &Vec3| x.iter().all(f);
        self.value.is_finite()
            && self.grad_depth.iter().flatten().flatten().all(f)
            && self.grad_flow.iter().flatten().flatten().all(v)
            && self.grad_pose.iter().flatten().flatten().all(v)
            && self.grad_intrinsics.iter().flatten().flatten().all(f)
    }
}

#[inline]
fn hinge(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// `x / ‖x‖`, or zero at the origin.
#[inline]
fn unit_or_zero(x: &Vec3) -> Vec3 {
    let n = x.norm();
    if n > 0.0 {
        x / n
    } else {
        Vec3::zeros()
    }
}
