use super::{unit_or_zero, ConstraintResult, Tolerances};
use crate::camera::{CameraParams, Vec3};
use crate::error::{Error, Result};
use crate::fields::{DepthField, FlowField, MaskField};
use crate::kinematics::{nearest_bone, BoneHit, Pose, Skeleton};

/// Frozen nearest-bone assignment of one foreground pixel.
pub type SkelSelection = Vec<(usize, BoneHit)>;

fn surface_point(depth: &DepthField, camera: &CameraParams, i: usize) -> Result<Vec3> {
    let (u, v) = depth.grid.coords(i);
    camera.unproject(u as f64, v as f64, depth.values[i])
}

/// Nearest bone of every foreground pixel's unprojected point.
pub fn skel_selection(
    depth: &DepthField,
    pose: &Pose,
    mask: &MaskField,
    camera: &CameraParams,
    s: &Skeleton,
) -> Result<SkelSelection> {
    if mask.foreground_count() == 0 {
        return Err(Error::Domain(
            "c_skel needs at least one foreground pixel".into(),
        ));
    }
    mask.foreground_indices()
        .map(|i| Ok((i, nearest_bone(&surface_point(depth, camera, i)?, pose, s))))
        .collect()
}

pub(crate) struct PixelTerm {
    pub hinge: f64,
    r_hat: Vec3,
    n_hat: Vec3,
}

/// Hinge `‖F − m‖ − (ρ_min + α·d)` for one pixel with a frozen bone and
/// interpolation parameter.
pub(crate) fn pixel_term(
    x: &Vec3,
    f: &Vec3,
    hit: &BoneHit,
    pose: &Pose,
    next: &Pose,
    s: &Skeleton,
    tol: &Tolerances,
) -> PixelTerm {
    let b = s.bones()[hit.bone];
    let a = hit.alpha;
    let (p1, p2) = (pose.joints[b.parent], pose.joints[b.child]);
    let seg = p1 * (1.0 - a) + p2 * a;
    let m = (next.joints[b.parent] - p1) * (1.0 - a) + (next.joints[b.child] - p2) * a;
    let r = f - m;
    let off = x - seg;
    PixelTerm {
        hinge: r.norm() - (tol.rho_min + tol.alpha * off.norm()),
        r_hat: unit_or_zero(&r),
        n_hat: unit_or_zero(&off),
    }
}

/// Skeletal coupling with a given bone assignment. Also returns the hinge
/// activity of every selected pixel.
#[allow(clippy::too_many_arguments)]
pub fn c_skel_frozen(
    flow: &FlowField,
    depth: &DepthField,
    pose: &Pose,
    pose_next: &Pose,
    camera: &CameraParams,
    s: &Skeleton,
    tol: &Tolerances,
    sel: &SkelSelection,
) -> Result<(ConstraintResult, Vec<bool>)> {
    if sel.is_empty() {
        return Err(Error::Domain(
            "c_skel needs at least one foreground pixel".into(),
        ));
    }
    let g = depth.grid;
    let inv_n = 1.0 / sel.len() as f64;
    let j = pose.joints.len();
    let mut value = 0.0;
    let mut gd = vec![0.0; g.len()];
    let mut gf = vec![Vec3::zeros(); g.len()];
    let mut gp = vec![Vec3::zeros(); j];
    let mut gn = vec![Vec3::zeros(); j];
    let mut active = Vec::with_capacity(sel.len());
    for (i, hit) in sel {
        let i = *i;
        let x = surface_point(depth, camera, i)?;
        let t = pixel_term(&x, &flow.values[i], hit, pose, pose_next, s, tol);
        active.push(t.hinge > 0.0);
        if t.hinge <= 0.0 {
            continue;
        }
        value += t.hinge;
        let b = s.bones()[hit.bone];
        let a = hit.alpha;
        let (u, v) = g.coords(i);
        gf[i] = t.r_hat * inv_n;
        gd[i] = -tol.alpha * t.n_hat.dot(&camera.world_ray(u as f64, v as f64)) * inv_n;
        for (jj, wj) in [(b.parent, 1.0 - a), (b.child, a)] {
            gp[jj] += (t.r_hat * wj + t.n_hat * (tol.alpha * wj)) * inv_n;
            gn[jj] -= t.r_hat * (wj * inv_n);
        }
    }
    Ok((
        ConstraintResult {
            value: value * inv_n,
            grad_depth: Some(vec![gd]),
            grad_flow: Some(vec![gf]),
            grad_pose: Some(vec![gp, gn]),
            grad_intrinsics: None,
        },
        active,
    ))
}

/// Flow must follow the interpolated motion of the nearest bone, up to a
/// margin that widens with distance from the bone. Bone choice and the
/// interpolation parameter are held constant.
#[allow(clippy::too_many_arguments)]
pub fn c_skel(
    flow: &FlowField,
    depth: &DepthField,
    pose: &Pose,
    pose_next: &Pose,
    mask: &MaskField,
    camera: &CameraParams,
    s: &Skeleton,
    tol: &Tolerances,
) -> Result<ConstraintResult> {
    let sel = skel_selection(depth, pose, mask, camera, s)?;
    Ok(c_skel_frozen(flow, depth, pose, pose_next, camera, s, tol, &sel)?.0)
}
