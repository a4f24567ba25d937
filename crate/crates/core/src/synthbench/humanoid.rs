use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;

use crate::camera::{Mat3, Vec3};
use crate::error::{Error, Result};
use crate::kinematics::{
    fallback_axis, forward_kinematics_frames, rotation_angle, JointAngles, Skeleton,
};
use crate::rng::chacha;

/// Capsule radius per bone, indexed by the bone's child joint (index 0 unused).
pub const DEFAULT_RADII_BY_CHILD: [f64; 24] = [
    0.0, 0.09, 0.09, 0.12, 0.07, 0.07, 0.12, 0.05, 0.05, 0.13, 0.025, 0.025, 0.05, 0.06, 0.06,
    0.09, 0.05, 0.05, 0.045, 0.045, 0.04, 0.04, 0.035, 0.035,
];

/// Child joints of the bones that carry loose garment vertices: lower torso,
/// both thighs and both upper arms.
pub const DEFAULT_GARMENT_CHILDREN: [usize; 5] = [3, 4, 5, 18, 19];

pub const DEFAULT_SUBDIVISIONS: usize = 7;

const GARMENT_STREAM: u64 = 0x6761_726d;

#[derive(Clone, Debug, PartialEq)]
pub struct HumanoidParams {
    /// Capsule radius per bone, meters.
    pub radii: Vec<f64>,
    pub subdivisions: usize,
    pub garment_bones: Vec<usize>,
}

impl HumanoidParams {
    pub fn default_for(s: &Skeleton) -> Self {
        let radii = s
            .bones()
            .iter()
            .map(|b| DEFAULT_RADII_BY_CHILD.get(b.child).copied().unwrap_or(0.04))
            .collect();
        let garment_bones = DEFAULT_GARMENT_CHILDREN
            .iter()
            .filter_map(|&c| s.bone_into(c))
            .collect();
        HumanoidParams {
            radii,
            subdivisions: DEFAULT_SUBDIVISIONS,
            garment_bones,
        }
    }
}

/// Up to four `(bone, weight)` pairs.
pub type SkinWeights = Vec<(usize, f64)>;

#[derive(Clone, Debug)]
pub struct Humanoid {
    pub skeleton: Skeleton,
    pub params: HumanoidParams,
    /// Template vertices at the skeleton's rest pose.
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub skin: Vec<SkinWeights>,
    pub owner: Vec<usize>,
    /// Garment offset scale in `[0, 1]`; zero for skin-tight vertices.
    pub garment: Vec<f64>,
    /// Rest-pose outward direction orthogonal to the owning bone.
    pub radial: Vec<Vec3>,
    rest_joints: Vec<Vec3>,
}

impl Humanoid {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn min_garment_radius(&self) -> f64 {
        self.params
            .garment_bones
            .iter()
            .map(|&b| self.params.radii[b])
            .fold(f64::INFINITY, f64::min)
    }

    /// Broken invariants, empty when the mesh is well formed.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.vertices.len();
        if self
            .triangles
            .iter()
            .any(|t| t.iter().any(|&k| k as usize >= n))
        {
            out.push("triangle references a missing vertex".into());
        }
        for (k, w) in self.skin.iter().enumerate() {
            let sum: f64 = w.iter().map(|x| x.1).sum();
            if w.is_empty()
                || w.len() > 4
                || w.iter().any(|x| x.1 < 0.0)
                || (sum - 1.0).abs() > 1e-6
            {
                out.push(format!("vertex {k} has invalid skinning weights"));
                break;
            }
        }
        out
    }
}

/// One capsule per bone, `4s` vertices around, `s` latitude bands per cap and
/// `s − 1` bands along the cylinder. Proximal cap vertices blend toward the
/// parent bone, reaching an even split at the pole.
pub fn build_humanoid(s: &Skeleton, params: &HumanoidParams, seed: u64) -> Result<Humanoid> {
    let sub = params.subdivisions;
    if sub < 4 {
        return Err(Error::Validation(format!(
            "subdivisions must be >= 4, got {sub}"
        )));
    }
    if params.radii.len() != s.bones().len() {
        return Err(Error::Validation(format!(
            "{} radii for {} bones",
            params.radii.len(),
            s.bones().len()
        )));
    }
    if let Some(&b) = params.garment_bones.iter().find(|&&b| b >= s.bones().len()) {
        return Err(Error::Validation(format!(
            "garment bone {b} does not exist"
        )));
    }
    let rest = s.rest_pose();
    let around = 4 * sub;
    let mut rng = chacha(seed, GARMENT_STREAM);
    let mut h = Humanoid {
        skeleton: s.clone(),
        params: params.clone(),
        vertices: Vec::new(),
        triangles: Vec::new(),
        skin: Vec::new(),
        owner: Vec::new(),
        garment: Vec::new(),
        radial: Vec::new(),
        rest_joints: rest.joints.clone(),
    };

    for (b, bone) in s.bones().iter().enumerate() {
        let r = params.radii[b];
        let (a, c) = (rest.joints[bone.parent], rest.joints[bone.child]);
        let len = (c - a).norm();
        if !(r > 0.0 && r.is_finite()) || !(len > 0.0) {
            return Err(Error::Validation(format!(
                "bone {b} gives a degenerate capsule (radius {r}, length {len})"
            )));
        }
        let d = (c - a) / len;
        let e1 = fallback_axis(&d);
        let e2 = d.cross(&e1);
        let parent = s.parent_bone(b);
        let is_garment = params.garment_bones.contains(&b);
        let jitter = if is_garment {
            rng.random_range(0.75..1.0)
        } else {
            0.0
        };
        let base = h.vertices.len() as u32;

        // (center, axial offset, radial scale, proximal blend, axial fraction)
        let mut rings: Vec<(Vec3, f64, f64, f64, f64)> = Vec::new();
        for k in 1..=sub {
            let th = k as f64 * FRAC_PI_2 / sub as f64;
            rings.push((
                a,
                -th.cos() * r,
                th.sin(),
                0.5 * (1.0 - th / FRAC_PI_2),
                0.0,
            ));
        }
        for j in 1..sub - 1 {
            let t = j as f64 / (sub - 1) as f64;
            rings.push((a + (c - a) * t, 0.0, 1.0, 0.0, t));
        }
        for k in (1..=sub).rev() {
            let th = k as f64 * FRAC_PI_2 / sub as f64;
            rings.push((c, th.cos() * r, th.sin(), 0.0, 1.0));
        }

        let push = |h: &mut Humanoid, p: Vec3, radial: Vec3, blend: f64, frac: f64| {
            h.vertices.push(p);
            h.skin.push(match parent {
                Some(pb) if blend > 0.0 => vec![(b, 1.0 - blend), (pb, blend)],
                _ => vec![(b, 1.0)],
            });
            h.owner.push(b);
            h.garment.push(jitter * frac);
            h.radial.push(radial);
        };
        push(
            &mut h,
            a - d * r,
            Vec3::zeros(),
            if parent.is_some() { 0.5 } else { 0.0 },
            0.0,
        );
        for &(center, ax, rs, blend, frac) in &rings {
            for m in 0..around {
                let phi = 2.0 * PI * m as f64 / around as f64;
                let dir = e1 * phi.cos() + e2 * phi.sin();
                push(&mut h, center + d * ax + dir * (rs * r), dir, blend, frac);
            }
        }
        push(&mut h, c + d * r, Vec3::zeros(), 0.0, 1.0);

        let ring = |k: usize, m: usize| base + 1 + (k * around + m % around) as u32;
        let south = base;
        let north = base + 1 + (rings.len() * around) as u32;
        for m in 0..around {
            h.triangles.push([south, ring(0, m + 1), ring(0, m)]);
        }
        for k in 0..rings.len() - 1 {
            for m in 0..around {
                h.triangles
                    .push([ring(k, m), ring(k, m + 1), ring(k + 1, m + 1)]);
                h.triangles
                    .push([ring(k, m), ring(k + 1, m + 1), ring(k + 1, m)]);
            }
        }
        let last = rings.len() - 1;
        for m in 0..around {
            h.triangles.push([north, ring(last, m), ring(last, m + 1)]);
        }
    }
    Ok(h)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GarmentParams {
    pub lag_seconds: f64,
    pub max_offset: f64,
    /// Target offset per unit bone angular speed, meters per (rad/s).
    pub gain: f64,
}

impl Default for GarmentParams {
    fn default() -> Self {
        GarmentParams {
            lag_seconds: 0.15,
            max_offset: 0.03,
            gain: 0.015,
        }
    }
}

/// Current garment offset amplitude per bone, meters.
#[derive(Clone, Debug, PartialEq)]
pub struct GarmentState {
    pub amplitude: Vec<f64>,
}

impl GarmentState {
    pub fn rest(bones: usize) -> Self {
        GarmentState {
            amplitude: vec![0.0; bones],
        }
    }

    /// Exact discrete first-order lag toward `min(max, gain·ω)`, where `ω` is
    /// the bone's angular speed between the two global rotations.
    pub fn advance(
        &self,
        h: &Humanoid,
        prev: &[Mat3],
        next: &[Mat3],
        dt: f64,
        p: &GarmentParams,
    ) -> Self {
        let decay = (-dt / p.lag_seconds).exp();
        let mut amplitude = self.amplitude.clone();
        for &b in &h.params.garment_bones {
            let omega = rotation_angle(&(next[b] * prev[b].transpose())) / dt;
            let target = (p.gain * omega).min(p.max_offset);
            amplitude[b] = self.amplitude[b] * decay + (1.0 - decay) * target;
        }
        GarmentState { amplitude }
    }
}

/// Linear blend skinning in displacement form, plus garment offsets along
/// each garment vertex's posed radial direction.
pub fn skin_vertices(h: &Humanoid, q: &JointAngles, garment: &GarmentState) -> Vec<Vec3> {
    let s = &h.skeleton;
    let (pose, global) = forward_kinematics_frames(q, s);
    let lin: Vec<Mat3> = global.iter().map(|g| g - Mat3::identity()).collect();
    let shift: Vec<Vec3> = s
        .bones()
        .iter()
        .map(|b| pose.joints[b.parent] - h.rest_joints[b.parent])
        .collect();
    let anchor: Vec<Vec3> = s.bones().iter().map(|b| h.rest_joints[b.parent]).collect();
    h.vertices
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let mut out = *v;
            for &(b, w) in &h.skin[k] {
                out += (lin[b] * (v - anchor[b]) + shift[b]) * w;
            }
            let g = h.garment[k] * garment.amplitude[h.owner[k]];
            if g != 0.0 {
                out += global[h.owner[k]] * h.radial[k] * g;
            }
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{axis_angle_to_matrix, forward_kinematics};

    fn default_humanoid(sub: usize) -> Humanoid {
        let s = Skeleton::smpl24();
        let mut p = HumanoidParams::default_for(s);
        p.subdivisions = sub;
        build_humanoid(s, &p, 0).unwrap()
    }

    #[test]
    fn default_mesh_is_valid() {
        let h = default_humanoid(DEFAULT_SUBDIVISIONS);
        assert!(h.violations().is_empty());
        assert!(h.triangle_count() >= 24_000, "{}", h.triangle_count());
        assert_eq!(h.triangle_count(), 23 * 8 * 7 * (3 * 7 - 2));
        let d = default_humanoid(14);
        let ratio = d.triangle_count() as f64 / h.triangle_count() as f64;
        assert!((3.5..4.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn capsules_are_closed() {
        let h = default_humanoid(4);
        let mut edges = std::collections::HashMap::new();
        for t in &h.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        assert!(edges.values().all(|&c| c == 2));
    }

    #[test]
    fn rejects_bad_parameters() {
        let s = Skeleton::smpl24();
        let mut p = HumanoidParams::default_for(s);
        p.subdivisions = 3;
        assert!(build_humanoid(s, &p, 0).is_err());
        let mut p = HumanoidParams::default_for(s);
        p.radii[4] = 0.0;
        assert!(build_humanoid(s, &p, 0).is_err());
    }

    #[test]
    fn seed_only_changes_garment_jitter() {
        let s = Skeleton::smpl24();
        let p = HumanoidParams::default_for(s);
        let (a, b) = (
            build_humanoid(s, &p, 1).unwrap(),
            build_humanoid(s, &p, 2).unwrap(),
        );
        assert_eq!(a.vertices, b.vertices);
        assert_eq!(a.triangles, b.triangles);
        assert_eq!(a.skin, b.skin);
    }

    #[test]
    fn rest_skinning_is_template() {
        let h = default_humanoid(DEFAULT_SUBDIVISIONS);
        let v = skin_vertices(&h, &h.skeleton.rest_angles(), &GarmentState::rest(23));
        assert_eq!(v, h.vertices);
    }

    #[test]
    fn root_translation_shifts_everything() {
        let h = default_humanoid(5);
        let mut q = h.skeleton.rest_angles();
        q.angles[3] = Vec3::new(0.0, 0.0, 0.4);
        q.angles[17] = Vec3::new(0.3, 0.1, 0.0);
        let base = skin_vertices(&h, &q, &GarmentState::rest(23));
        let t = Vec3::new(0.3, -0.2, 1.5);
        q.root += t;
        let moved = skin_vertices(&h, &q, &GarmentState::rest(23));
        let err = base
            .iter()
            .zip(&moved)
            .map(|(a, b)| (b - a - t).amax())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn rigid_vertices_follow_their_bone() {
        let h = default_humanoid(5);
        let s = &h.skeleton;
        let mut q = s.rest_angles();
        let b = s.bone_into(s.joint("left_elbow").unwrap()).unwrap();
        q.angles[b] = Vec3::new(0.0, 0.0, 0.7);
        let posed = skin_vertices(&h, &q, &GarmentState::rest(23));
        let p = forward_kinematics(&q, s);
        let rest = s.rest_pose();
        let r = axis_angle_to_matrix(&q.angles[b]);
        let bone = s.bones()[b];
        for k in 0..h.vertex_count() {
            if h.skin[k].len() == 1 && h.skin[k][0].0 == b {
                let expect = r * (h.vertices[k] - rest.joints[bone.parent]) + p.joints[bone.parent];
                assert!((posed[k] - expect).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn garment_amplitude_stays_bounded() {
        let h = default_humanoid(4);
        let p = GarmentParams::default();
        let mut state = GarmentState::rest(23);
        let s = &h.skeleton;
        let mut prev = forward_kinematics_frames(&s.rest_angles(), s).1;
        for i in 1..200 {
            let mut q = s.rest_angles();
            for &b in &h.params.garment_bones {
                q.angles[b] = Vec3::new(0.0, 0.0, 1.2 * (i as f64 * 0.7).sin());
            }
            let next = forward_kinematics_frames(&q, s).1;
            state = state.advance(&h, &prev, &next, 1.0 / 30.0, &p);
            prev = next;
            let v = skin_vertices(&h, &q, &state);
            let rigid = skin_vertices(&h, &q, &GarmentState::rest(23));
            let worst = v
                .iter()
                .zip(&rigid)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(worst <= p.max_offset + 1e-12);
        }
        assert!(state.amplitude.iter().any(|&a| a > 0.01));
    }
}
