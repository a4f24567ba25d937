//! 24-joint skeleton, forward/inverse kinematics, minimum-jerk references,
//! nearest-bone queries and center of mass.
//!
//! Joint angles are stored per bone as a local axis-angle vector. The global
//! rotation of a bone is its parent bone's global rotation composed with its
//! own local rotation; bones leaving the root start from the identity. A
//! child joint sits at `parent + length · G_bone · rest_dir`.
//!
//! Inverse kinematics walks from the root to the leaves and picks, for each
//! bone, the minimal rotation taking the rest direction onto the observed one
//! (zero roll about the bone axis). When the observed direction is exactly
//! opposite to the rest direction the rotation is `π` about the fallback axis
//! of [`fallback_axis`].

use std::sync::OnceLock;

use crate::camera::{Mat3, Vec3};
use crate::error::{Error, Result};

pub const JOINT_COUNT: usize = 24;
pub const BONE_COUNT: usize = 23;
pub const MIN_BONE_LENGTH: f64 = 0.01;
pub const MAX_BONE_LENGTH: f64 = 1.0;

const SKELETON_CONFIG: &str = include_str!("../config/skeleton_smpl24.txt");
const MASS_CONFIG: &str = include_str!("../config/mass_deleva.txt");

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bone {
    pub parent: usize,
    pub child: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Skeleton {
    names: Vec<String>,
    parents: Vec<Option<usize>>,
    bones: Vec<Bone>,
    /// Bone ending at each joint; `None` for the root.
    bone_into: Vec<Option<usize>>,
    rest_dirs: Vec<Vec3>,
    rest_lengths: Vec<f64>,
    root_rest: Vec3,
    end_effectors: Vec<usize>,
    /// Bones ordered so that every bone follows the bone ending at its parent.
    order: Vec<usize>,
}

impl Skeleton {
    /// Parse the line-oriented `name parent_index dx dy dz` format. `#` starts
    /// a comment; the root has parent `-1`.
    pub fn from_config(text: &str) -> Result<Self> {
        let mut names = Vec::new();
        let mut parents = Vec::new();
        let mut offsets = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let tok: Vec<&str> = line.split_whitespace().collect();
            if tok.len() != 5 {
                return Err(Error::Config(format!(
                    "skeleton line {}: expected 5 fields",
                    ln + 1
                )));
            }
            let parent: i64 = tok[1].parse().map_err(|_| {
                Error::Config(format!("skeleton line {}: bad parent index", ln + 1))
            })?;
            let mut off = [0.0; 3];
            for k in 0..3 {
                off[k] = tok[2 + k]
                    .parse()
                    .map_err(|_| Error::Config(format!("skeleton line {}: bad offset", ln + 1)))?;
            }
            names.push(tok[0].to_string());
            parents.push(if parent < 0 {
                None
            } else {
                Some(parent as usize)
            });
            offsets.push(Vec3::from(off));
        }
        Self::from_parts(names, parents, offsets)
    }

    fn from_parts(
        names: Vec<String>,
        parents: Vec<Option<usize>>,
        offsets: Vec<Vec3>,
    ) -> Result<Self> {
        let n = names.len();
        if n != JOINT_COUNT {
            return Err(Error::Config(format!(
                "skeleton has {n} joints, expected {JOINT_COUNT}"
            )));
        }
        let roots: Vec<usize> = (0..n).filter(|&j| parents[j].is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::Config(format!(
                "skeleton must have exactly one root, found {}",
                roots.len()
            )));
        }
        if let Some(j) = (0..n).find(|&j| matches!(parents[j], Some(p) if p >= n || p == j)) {
            return Err(Error::Config(format!(
                "joint {} has an invalid parent",
                names[j]
            )));
        }
        // Every joint must reach the root without revisiting a joint.
        for start in 0..n {
            let (mut j, mut steps) = (start, 0);
            while let Some(p) = parents[j] {
                j = p;
                steps += 1;
                if steps > n {
                    return Err(Error::Config("skeleton parent graph has a cycle".into()));
                }
            }
        }
        let root = roots[0];
        let mut bones = Vec::new();
        let mut bone_into = vec![None; n];
        let mut rest_dirs = Vec::new();
        let mut rest_lengths = Vec::new();
        for j in 0..n {
            if let Some(p) = parents[j] {
                let len = offsets[j].norm();
                if !(len > MIN_BONE_LENGTH && len < MAX_BONE_LENGTH) {
                    return Err(Error::Config(format!(
                        "bone into {} has rest length {len}",
                        names[j]
                    )));
                }
                bone_into[j] = Some(bones.len());
                bones.push(Bone {
                    parent: p,
                    child: j,
                });
                rest_dirs.push(offsets[j] / len);
                rest_lengths.push(len);
            }
        }
        let mut depth = vec![0usize; n];
        for j in 0..n {
            let mut k = j;
            while let Some(p) = parents[k] {
                depth[j] += 1;
                k = p;
            }
        }
        let mut order: Vec<usize> = (0..bones.len()).collect();
        order.sort_by_key(|&b| (depth[bones[b].child], b));
        let has_child: Vec<bool> = (0..n).map(|j| parents.contains(&Some(j))).collect();
        let end_effectors: Vec<usize> = (0..n).filter(|&j| !has_child[j]).collect();

        Ok(Skeleton {
            names,
            parents,
            bones,
            bone_into,
            rest_dirs,
            rest_lengths,
            root_rest: offsets[root],
            end_effectors,
            order,
        })
    }

    /// The shipped 24-joint skeleton.
    pub fn smpl24() -> &'static Skeleton {
        static SK: OnceLock<Skeleton> = OnceLock::new();
        SK.get_or_init(|| {
            Skeleton::from_config(SKELETON_CONFIG).expect("bundled skeleton config is valid")
        })
    }

    pub fn joint_count(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn joint(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.parents[joint]
    }

    pub fn root(&self) -> usize {
        self.parents.iter().position(|p| p.is_none()).unwrap()
    }

    pub fn bones(&self) -> &[Bone] {
        &self.bones
    }

    pub fn bone_into(&self, joint: usize) -> Option<usize> {
        self.bone_into[joint]
    }

    /// Bone whose local rotation acts at `joint`, i.e. the bone leaving it,
    /// when `joint` has exactly one child.
    pub fn bone_from(&self, joint: usize) -> Option<usize> {
        let mut it = self
            .bones
            .iter()
            .enumerate()
            .filter(|(_, b)| b.parent == joint);
        match (it.next(), it.next()) {
            (Some((k, _)), None) => Some(k),
            _ => None,
        }
    }

    /// Bone ending at the parent joint of `bone`, if the parent is not the root.
    pub fn parent_bone(&self, bone: usize) -> Option<usize> {
        self.bone_into[self.bones[bone].parent]
    }

    pub fn rest_dirs(&self) -> &[Vec3] {
        &self.rest_dirs
    }

    pub fn rest_lengths(&self) -> &[f64] {
        &self.rest_lengths
    }

    pub fn root_rest(&self) -> Vec3 {
        self.root_rest
    }

    pub fn end_effectors(&self) -> &[usize] {
        &self.end_effectors
    }

    /// Bones in parent-before-child order.
    pub fn bone_order(&self) -> &[usize] {
        &self.order
    }

    pub fn rest_angles(&self) -> JointAngles {
        JointAngles {
            root: self.root_rest,
            angles: vec![Vec3::zeros(); self.bones.len()],
            lengths: self.rest_lengths.clone(),
        }
    }

    pub fn rest_pose(&self) -> Pose {
        forward_kinematics(&self.rest_angles(), self)
    }
}

/// World-space joint positions in meters.
#[derive(Clone, Debug, PartialEq)]
pub struct Pose {
    pub joints: Vec<Vec3>,
}

impl Pose {
    pub fn new(joints: Vec<Vec3>) -> Self {
        Pose { joints }
    }

    pub fn translated(&self, v: &Vec3) -> Pose {
        Pose {
            joints: self.joints.iter().map(|p| p + v).collect(),
        }
    }

    pub fn bone_length(&self, b: &Bone) -> f64 {
        (self.joints[b.child] - self.joints[b.parent]).norm()
    }

    /// Check finiteness and the bone-length bounds.
    pub fn validate(&self, s: &Skeleton) -> Result<()> {
        if self.joints.len() != s.joint_count() {
            return Err(Error::Validation(format!(
                "pose has {} joints",
                self.joints.len()
            )));
        }
        if !self.joints.iter().all(|p| p.iter().all(|x| x.is_finite())) {
            return Err(Error::Validation("pose has non-finite joints".into()));
        }
        for (k, b) in s.bones().iter().enumerate() {
            let l = self.bone_length(b);
            if !(l > MIN_BONE_LENGTH && l < MAX_BONE_LENGTH) {
                return Err(Error::Validation(format!("bone {k} has length {l}")));
            }
        }
        Ok(())
    }
}

/// Root position, per-bone local axis-angle (radians) and per-bone length.
#[derive(Clone, Debug, PartialEq)]
pub struct JointAngles {
    pub root: Vec3,
    pub angles: Vec<Vec3>,
    pub lengths: Vec<f64>,
}

/// Per-joint displacement between two consecutive poses.
#[derive(Clone, Debug, PartialEq)]
pub struct JointMotion {
    pub deltas: Vec<Vec3>,
}

/// Rodrigues formula; returns exactly the identity for a zero vector.
pub fn axis_angle_to_matrix(v: &Vec3) -> Mat3 {
    let theta = v.norm();
    if theta == 0.0 {
        return Mat3::identity();
    }
    let k = v / theta;
    let kx = Mat3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
    Mat3::identity() + kx * theta.sin() + kx * kx * (1.0 - theta.cos())
}

/// Rotation angle of a rotation matrix, in `[0, π]`.
pub fn rotation_angle(m: &Mat3) -> f64 {
    let c = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let axis = Vec3::new(
        m[(2, 1)] - m[(1, 2)],
        m[(0, 2)] - m[(2, 0)],
        m[(1, 0)] - m[(0, 1)],
    );
    (axis.norm() * 0.5).atan2(c)
}

/// Unit vector orthogonal to `dir`: the canonical axis least aligned with
/// `dir` (lowest index on ties), crossed with `dir` and normalized.
pub fn fallback_axis(dir: &Vec3) -> Vec3 {
    let mut k = 0;
    for i in 1..3 {
        if dir[i].abs() < dir[k].abs() {
            k = i;
        }
    }
    let mut e = Vec3::zeros();
    e[k] = 1.0;
    e.cross(dir).normalize()
}

/// Axis-angle of the minimal rotation taking unit `from` onto unit `to`.
pub fn minimal_rotation(from: &Vec3, to: &Vec3) -> Vec3 {
    let c = from.cross(to);
    let s = c.norm();
    let cos = from.dot(to);
    if s < 1e-12 {
        if cos > 0.0 {
            return Vec3::zeros();
        }
        return fallback_axis(from) * std::f64::consts::PI;
    }
    c / s * s.atan2(cos)
}

/// Pose plus the global rotation of every bone.
pub fn forward_kinematics_frames(q: &JointAngles, s: &Skeleton) -> (Pose, Vec<Mat3>) {
    let mut joints = vec![Vec3::zeros(); s.joint_count()];
    let mut global = vec![Mat3::identity(); s.bones().len()];
    joints[s.root()] = q.root;
    for &b in s.bone_order() {
        let bone = s.bones()[b];
        let parent_rot = s
            .parent_bone(b)
            .map(|pb| global[pb])
            .unwrap_or_else(Mat3::identity);
        global[b] = parent_rot * axis_angle_to_matrix(&q.angles[b]);
        joints[bone.child] = joints[bone.parent] + global[b] * s.rest_dirs()[b] * q.lengths[b];
    }
    (Pose { joints }, global)
}

pub fn forward_kinematics(q: &JointAngles, s: &Skeleton) -> Pose {
    forward_kinematics_frames(q, s).0
}

pub fn inverse_kinematics(p: &Pose, s: &Skeleton) -> Result<JointAngles> {
    if p.joints.len() != s.joint_count() {
        return Err(Error::Validation(format!(
            "pose has {} joints",
            p.joints.len()
        )));
    }
    let nb = s.bones().len();
    let mut angles = vec![Vec3::zeros(); nb];
    let mut lengths = vec![0.0; nb];
    let mut global = vec![Mat3::identity(); nb];
    for &b in s.bone_order() {
        let bone = s.bones()[b];
        let d = p.joints[bone.child] - p.joints[bone.parent];
        let len = d.norm();
        if !(len > 1e-12) || !len.is_finite() {
            return Err(Error::Validation(format!(
                "bone {} -> {} has zero length",
                s.names()[bone.parent],
                s.names()[bone.child]
            )));
        }
        let parent_rot = s
            .parent_bone(b)
            .map(|pb| global[pb])
            .unwrap_or_else(Mat3::identity);
        let local_target = parent_rot.transpose() * (d / len);
        angles[b] = minimal_rotation(&s.rest_dirs()[b], &local_target);
        global[b] = parent_rot * axis_angle_to_matrix(&angles[b]);
        lengths[b] = len;
    }
    Ok(JointAngles {
        root: p.joints[s.root()],
        angles,
        lengths,
    })
}

/// Quintic minimum-jerk blend `10τ³ − 15τ⁴ + 6τ⁵`.
pub fn min_jerk_phi(tau: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Domain(format!(
            "min-jerk phase {tau} outside [0, 1]"
        )));
    }
    Ok(tau * tau * tau * (10.0 + tau * (-15.0 + 6.0 * tau)))
}

/// First and second derivatives of [`min_jerk_phi`]:
/// `30τ²(1 − τ)²` and `60τ(1 − τ)(1 − 2τ)`.
pub fn min_jerk_phi_derivatives(tau: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Domain(format!(
            "min-jerk phase {tau} outside [0, 1]"
        )));
    }
    let r = 1.0 - tau;
    Ok((30.0 * tau * tau * r * r, 60.0 * tau * r * (1.0 - 2.0 * tau)))
}

/// Interpolate joint angles at phase `tau`: root and angles follow the quintic,
/// lengths are linear in `tau`.
pub fn blend_angles(q0: &JointAngles, q1: &JointAngles, tau: f64) -> Result<JointAngles> {
    let phi = min_jerk_phi(tau)?;
    Ok(JointAngles {
        root: q0.root + (q1.root - q0.root) * phi,
        angles: q0
            .angles
            .iter()
            .zip(&q1.angles)
            .map(|(a, b)| a + (b - a) * phi)
            .collect(),
        lengths: q0
            .lengths
            .iter()
            .zip(&q1.lengths)
            .map(|(a, b)| a + (b - a) * tau)
            .collect(),
    })
}

/// Minimum-jerk reference pose at frame `i` between endpoint poses at `i0`
/// and `it`.
pub fn min_jerk_reference(
    p0: &Pose,
    pt: &Pose,
    i0: usize,
    it: usize,
    i: usize,
    s: &Skeleton,
) -> Result<Pose> {
    let q0 = inverse_kinematics(p0, s)?;
    let qt = inverse_kinematics(pt, s)?;
    reference_from_angles(&q0, &qt, i0, it, i, s)
}

pub(crate) fn reference_from_angles(
    q0: &JointAngles,
    qt: &JointAngles,
    i0: usize,
    it: usize,
    i: usize,
    s: &Skeleton,
) -> Result<Pose> {
    if i0 == it {
        return Err(Error::Domain("window endpoints coincide".into()));
    }
    let tau = (i as f64 - i0 as f64) / (it as f64 - i0 as f64);
    Ok(forward_kinematics(&blend_angles(q0, qt, tau)?, s))
}

/// Closest point on segment `[a, b]` to `x`: `(alpha, distance)`.
#[inline]
pub fn point_segment(x: &Vec3, a: &Vec3, b: &Vec3) -> (f64, f64) {
    let ab = b - a;
    let l2 = ab.norm_squared();
    let t = if l2 > 0.0 {
        ((x - a).dot(&ab) / l2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (t, (x - (a + ab * t)).norm())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoneHit {
    pub bone: usize,
    pub alpha: f64,
    pub distance: f64,
}

/// Nearest bone segment to `x`; ties go to the lowest bone index.
pub fn nearest_bone(x: &Vec3, p: &Pose, s: &Skeleton) -> BoneHit {
    let mut best = BoneHit {
        bone: 0,
        alpha: 0.0,
        distance: f64::INFINITY,
    };
    for (k, b) in s.bones().iter().enumerate() {
        let (alpha, distance) = point_segment(x, &p.joints[b.parent], &p.joints[b.child]);
        if distance < best.distance {
            best = BoneHit {
                bone: k,
                alpha,
                distance,
            };
        }
    }
    best
}

pub fn joint_motion(p: &Pose, next: &Pose) -> JointMotion {
    JointMotion {
        deltas: p
            .joints
            .iter()
            .zip(&next.joints)
            .map(|(a, b)| b - a)
            .collect(),
    }
}

/// Per-joint mass weights summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct MassProfile {
    pub weights: Vec<f64>,
}

impl MassProfile {
    /// Normalize non-negative weights to unit sum.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Config(
                "mass weights must be finite and non-negative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Config("mass weights sum to zero".into()));
        }
        Ok(MassProfile {
            weights: weights.iter().map(|w| w / total).collect(),
        })
    }

    /// Parse `name weight` lines against the joint names of `s`.
    pub fn from_config(text: &str, s: &Skeleton) -> Result<Self> {
        let mut w = vec![None; s.joint_count()];
        for (ln, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let tok: Vec<&str> = line.split_whitespace().collect();
            if tok.len() != 2 {
                return Err(Error::Config(format!(
                    "mass line {}: expected 2 fields",
                    ln + 1
                )));
            }
            let j = s.joint(tok[0]).ok_or_else(|| {
                Error::Config(format!("mass line {}: unknown joint {}", ln + 1, tok[0]))
            })?;
            let v: f64 = tok[1]
                .parse()
                .map_err(|_| Error::Config(format!("mass line {}: bad weight", ln + 1)))?;
            if w[j].replace(v).is_some() {
                return Err(Error::Config(format!(
                    "mass line {}: duplicate joint {}",
                    ln + 1,
                    tok[0]
                )));
            }
        }
        let weights = w
            .into_iter()
            .enumerate()
            .map(|(j, v)| {
                v.ok_or_else(|| {
                    Error::Config(format!("mass profile misses joint {}", s.names()[j]))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(weights)
    }

    /// Segment masses of de Leva's table assigned to distal joints.
    pub fn de_leva() -> &'static MassProfile {
        static M: OnceLock<MassProfile> = OnceLock::new();
        M.get_or_init(|| {
            MassProfile::from_config(MASS_CONFIG, Skeleton::smpl24())
                .expect("bundled mass config is valid")
        })
    }
}

pub fn center_of_mass(p: &Pose, m: &MassProfile) -> Vec3 {
    p.joints
        .iter()
        .zip(&m.weights)
        .fold(Vec3::zeros(), |acc, (j, w)| acc + j * *w)
}
