use super::{hinge, ConstraintResult, Tolerances};
use crate::camera::Vec3;
use crate::error::{Error, Result};
use crate::fields::DepthField;
use crate::kinematics::Pose;

/// Margin hinge toward teacher depth (mean over every pixel) and teacher
/// joints (mean over joints). Subgradient 0 at both kinks.
pub fn c_dist(
    depth: &DepthField,
    pose: &Pose,
    teacher_depth: &DepthField,
    teacher_pose: &Pose,
    tol: &Tolerances,
) -> Result<ConstraintResult> {
    if teacher_depth.grid != depth.grid {
        return Err(Error::Validation(
            "teacher depth grid differs from the prediction".into(),
        ));
    }
    if teacher_pose.joints.len() != pose.joints.len() {
        return Err(Error::Validation(
            "teacher pose joint count differs from the prediction".into(),
        ));
    }
    let inv_o = 1.0 / depth.grid.len() as f64;
    let mut vd = 0.0;
    let gd = depth
        .values
        .iter()
        .zip(&teacher_depth.values)
        .map(|(d, t)| {
            let e = d - t;
            let h = e.abs() - tol.rho_depth;
            vd += hinge(h);
            if h > 0.0 {
                e.signum() * inv_o
            } else {
                0.0
            }
        })
        .collect();
    let inv_j = 1.0 / pose.joints.len() as f64;
    let mut vp = 0.0;
    let gp = pose
        .joints
        .iter()
        .zip(&teacher_pose.joints)
        .map(|(p, t)| {
            let e = p - t;
            let n = e.norm();
            let h = n - tol.rho_pose;
            vp += hinge(h);
            if h > 0.0 {
                e * (inv_j / n)
            } else {
                Vec3::zeros()
            }
        })
        .collect();
    Ok(ConstraintResult {
        value: vd * inv_o + vp * inv_j,
        grad_depth: Some(vec![gd]),
        grad_pose: Some(vec![gp]),
        ..Default::default()
    })
}
