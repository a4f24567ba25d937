use super::{hinge, ConstraintResult, Tolerances};
use crate::camera::Vec3;
use crate::error::{Error, Result};
use crate::kinematics::{inverse_kinematics, reference_from_angles, Pose, Skeleton};

/// Minimum-jerk reference for every frame of a window, built from its
/// endpoint poses.
pub fn eff_reference(poses: &[Pose], s: &Skeleton) -> Result<Vec<Pose>> {
    let n = poses.len();
    if n < 3 {
        return Err(Error::Domain(format!(
            "c_eff window needs at least 3 frames, got {n}"
        )));
    }
    let q0 = inverse_kinematics(&poses[0], s)?;
    let qt = inverse_kinematics(&poses[n - 1], s)?;
    (0..n)
        .map(|i| reference_from_angles(&q0, &qt, 0, n - 1, i, s))
        .collect()
}

fn frob(a: &Pose, b: &Pose) -> f64 {
    a.joints
        .iter()
        .zip(&b.joints)
        .map(|(x, y)| (x - y).norm_squared())
        .sum::<f64>()
        .sqrt()
}

/// Window term against a fixed reference; also returns per-frame hinge
/// activity. Endpoint gradients are zero.
pub fn c_eff_with_reference(
    poses: &[Pose],
    reference: &[Pose],
    tol: &Tolerances,
) -> (ConstraintResult, Vec<bool>) {
    let n = poses.len();
    let inv = 1.0 / n as f64;
    let mut value = 0.0;
    let mut grads = Vec::with_capacity(n);
    let mut active = Vec::with_capacity(n);
    for (i, (p, r)) in poses.iter().zip(reference).enumerate() {
        let d = frob(p, r);
        let h = d - tol.rho_eff;
        value += hinge(h);
        let on = h > 0.0;
        active.push(on);
        let interior = i > 0 && i + 1 < n;
        grads.push(if on && interior && d > 0.0 {
            p.joints
                .iter()
                .zip(&r.joints)
                .map(|(x, y)| (x - y) * (inv / d))
                .collect()
        } else {
            vec![Vec3::zeros(); p.joints.len()]
        });
    }
    (
        ConstraintResult {
            value: value * inv,
            grad_pose: Some(grads),
            ..Default::default()
        },
        active,
    )
}

/// Deviation of a pose window from the minimum-jerk arc between its
/// endpoints, Frobenius norm over all joints, hinged at `rho_eff`.
pub fn c_eff(poses: &[Pose], s: &Skeleton, tol: &Tolerances) -> Result<ConstraintResult> {
    let reference = eff_reference(poses, s)?;
    Ok(c_eff_with_reference(poses, &reference, tol).0)
}
