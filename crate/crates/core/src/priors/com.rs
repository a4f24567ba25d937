use super::{ConstraintResult, Tolerances};
use crate::camera::{CameraParams, Vec3};
use crate::error::Result;
use crate::fields::{DepthField, MaskField};
use crate::geometry::{
    convex_hull, polygon_signed_distance_grad, ransac_ground_plane, Plane, Point2, Polygon2D,
};
use crate::kinematics::{center_of_mass, MassProfile, Pose, Skeleton};

/// Discrete choices held constant while differentiating the support term.
#[derive(Clone, Debug, PartialEq)]
pub struct ComSelection {
    pub plane: Plane,
    /// End-effectors whose contact weight reaches 0.5.
    pub contacts: Vec<usize>,
    /// `None` when airborne.
    pub polygon: Option<Polygon2D>,
}

/// Contact weight `exp(−h²/σ²)` of a joint at height `h` above the plane.
pub fn contact_weight(h: f64, sigma: f64) -> f64 {
    (-(h * h) / (sigma * sigma)).exp()
}

/// Support polygon from a fixed plane. Each contacting end-effector adds its
/// own ground projection and that of its parent joint, so a foot spans a
/// segment from ankle to toe.
pub fn support_from_plane(
    pose: &Pose,
    plane: Plane,
    s: &Skeleton,
    tol: &Tolerances,
) -> Result<ComSelection> {
    let contacts: Vec<usize> = s
        .end_effectors()
        .iter()
        .copied()
        .filter(|&j| contact_weight(plane.height(&pose.joints[j]), tol.sigma_contact) >= 0.5)
        .collect();
    let mut pts: Vec<Point2> = Vec::new();
    for &j in &contacts {
        pts.push(plane.to_2d(&pose.joints[j]));
        if let Some(p) = s.parent(j) {
            pts.push(plane.to_2d(&pose.joints[p]));
        }
    }
    let polygon = if pts.is_empty() {
        None
    } else {
        Some(convex_hull(&pts)?)
    };
    Ok(ComSelection {
        plane,
        contacts,
        polygon,
    })
}

pub fn com_selection(
    pose: &Pose,
    depth: &DepthField,
    mask: &MaskField,
    camera: &CameraParams,
    s: &Skeleton,
    tol: &Tolerances,
    seed: u64,
) -> Result<ComSelection> {
    let plane = ransac_ground_plane(depth, mask, camera, seed)?;
    support_from_plane(pose, plane, s, tol)
}

/// Support term for a frozen selection. The second value is a branch
/// signature: `None` if the hinge is inactive, otherwise the ground-plane
/// offset direction of the mass center (used to detect kinks).
pub fn c_com_frozen(
    pose: &Pose,
    m: &MassProfile,
    sel: &ComSelection,
) -> (ConstraintResult, Option<Point2>) {
    let j = pose.joints.len();
    let zero = ConstraintResult {
        value: 0.0,
        grad_pose: Some(vec![vec![Vec3::zeros(); j]]),
        ..Default::default()
    };
    let Some(poly) = &sel.polygon else {
        return (zero, None);
    };
    let mu = center_of_mass(pose, m);
    let (d, g2) = polygon_signed_distance_grad(&sel.plane.to_2d(&mu), poly);
    if d <= 0.0 {
        return (zero, None);
    }
    let (e1, e2) = sel.plane.basis();
    let gmu = e1 * g2.x + e2 * g2.y;
    let grad = m.weights.iter().map(|w| gmu * *w).collect();
    (
        ConstraintResult {
            value: d,
            grad_pose: Some(vec![grad]),
            ..Default::default()
        },
        Some(g2),
    )
}

/// Distance by which the ground projection of the mass center leaves the
/// support polygon; zero when inside or airborne. Plane, contact set and hull
/// are held constant.
#[allow(clippy::too_many_arguments)]
pub fn c_com(
    pose: &Pose,
    depth: &DepthField,
    mask: &MaskField,
    camera: &CameraParams,
    m: &MassProfile,
    s: &Skeleton,
    tol: &Tolerances,
    seed: u64,
) -> Result<ConstraintResult> {
    let sel = com_selection(pose, depth, mask, camera, s, tol, seed)?;
    Ok(c_com_frozen(pose, m, &sel).0)
}
