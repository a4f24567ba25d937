//! Synthetic ground truth: a skinned capsule humanoid with lagging garment
//! offsets, played through keyposes with quintic blending, rendered by a
//! software rasterizer. Flow is propagated from vertex motion through the
//! visible triangle and its barycentrics, so it is exact per pixel.
//!
//! World frame: +y up, ground at `y = GROUND_Y`, subject centered near
//! `z = SUBJECT_Z` in front of a camera at the origin. Pixels that miss the
//! body see the ground or a large cylindrical backdrop, so every depth is
//! finite.

mod humanoid;
mod raster;

pub use humanoid::{
    build_humanoid, skin_vertices, GarmentParams, GarmentState, Humanoid, HumanoidParams,
    SkinWeights, DEFAULT_GARMENT_CHILDREN, DEFAULT_RADII_BY_CHILD, DEFAULT_SUBDIVISIONS,
};
pub use raster::{pixel_flow_gt, rasterize_frame, NEAR_CLIP};

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::camera::{CameraParams, Mat3, Vec3};
use crate::error::{Error, Result};
use crate::fields::{
    ClipMeta, DepthField, FlowField, FrameRecord, Grid, SceneClip, BACKGROUND_ID, FORMAT_VERSION,
};
use crate::kinematics::{
    blend_angles, forward_kinematics, forward_kinematics_frames, inverse_kinematics, JointAngles,
    Pose, Skeleton,
};
use crate::priors::Tolerances;

pub const GROUND_Y: f64 = -1.0;
pub const SUBJECT_Z: f64 = 3.5;
pub const BACKDROP_RADIUS: f64 = 12.0;
pub const DEFAULT_INTRINSICS: [f64; 4] = [1.25, 1.25, 0.5, 0.5];
pub const DEFAULT_DT: f64 = 1.0 / 30.0;
/// Orbit speed about the subject's vertical axis, radians per frame.
pub const ORBIT_RATE: f64 = 0.01;
/// Required ratio of mesh vertices to foreground pixels.
pub const MIN_VERTICES_PER_PIXEL: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Preset {
    Idle,
    Walk,
    Swing,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Idle, Preset::Walk, Preset::Swing];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Idle => "idle",
            Preset::Walk => "walk",
            Preset::Swing => "swing",
        }
    }

    /// Frames between consecutive keyposes.
    pub fn period(self) -> usize {
        match self {
            Preset::Idle => 1,
            Preset::Walk => 8,
            Preset::Swing => 12,
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                Error::Validation(format!(
                    "unknown preset {s:?}; expected idle, walk or swing"
                ))
            })
    }
}

/// Keyposes with frame stamps; poses between stamps follow the quintic blend.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionScript {
    pub keyposes: Vec<(usize, JointAngles)>,
    pub garment: GarmentParams,
}

impl MotionScript {
    /// Stamps strictly increasing, garment lag positive, and the garment
    /// offset inside the smallest skeletal-coupling margin of a garment
    /// vertex (`ρ_min + α·r`).
    pub fn validate(&self, h: &Humanoid, tol: &Tolerances) -> Result<()> {
        if self.keyposes.is_empty() {
            return Err(Error::Validation("motion script has no keyposes".into()));
        }
        if self.keyposes.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Validation(
                "keypose frame stamps must be strictly increasing".into(),
            ));
        }
        let g = &self.garment;
        if !(g.lag_seconds > 0.0) || !(g.gain >= 0.0) || !(g.max_offset >= 0.0) {
            return Err(Error::Validation(
                "garment lag must be positive, gain and offset non-negative".into(),
            ));
        }
        let budget = tol.rho_min + tol.alpha * h.min_garment_radius();
        if !(g.max_offset < budget) {
            return Err(Error::Validation(format!(
                "garment offset {} m is not below the coupling margin {budget} m",
                g.max_offset
            )));
        }
        Ok(())
    }

    /// Angles at frame `i`, holding the first and last keyposes outside the
    /// scripted range.
    pub fn angles_at(&self, i: usize) -> JointAngles {
        let k = &self.keyposes;
        if i <= k[0].0 {
            return k[0].1.clone();
        }
        for w in k.windows(2) {
            let ((a, qa), (b, qb)) = (&w[0], &w[1]);
            if i == *b {
                return qb.clone();
            }
            if i < *b {
                let tau = (i - a) as f64 / (b - a) as f64;
                return blend_angles(qa, qb, tau).expect("phase in [0, 1]");
            }
        }
        k[k.len() - 1].1.clone()
    }

    /// Consecutive keypose stamp pairs that both fall inside `0..frames`.
    pub fn keypose_windows(&self, frames: usize) -> Vec<(usize, usize)> {
        self.keyposes
            .windows(2)
            .map(|w| (w[0].0, w[1].0))
            .filter(|&(_, b)| b < frames)
            .collect()
    }
}

fn bone(s: &Skeleton, child: &str) -> usize {
    s.bone_into(s.joint(child).expect("joint name"))
        .expect("non-root joint")
}

/// Place the body so the lower foot capsule rests on the ground, then
/// replace the angles by their inverse-kinematics canonical form.
fn grounded(mut q: JointAngles, s: &Skeleton, foot_radius: f64) -> JointAngles {
    let p = forward_kinematics(&q, s);
    let low = ["left_foot", "right_foot"]
        .iter()
        .map(|n| p.joints[s.joint(n).unwrap()].y)
        .fold(f64::INFINITY, f64::min);
    q.root.y += GROUND_Y + foot_radius - low;
    inverse_kinematics(&forward_kinematics(&q, s), s).expect("valid keypose")
}

pub fn preset_script(preset: Preset, frames: usize, h: &Humanoid) -> MotionScript {
    let s = &h.skeleton;
    let foot_radius = h.params.radii[bone(s, "left_foot")];
    let base = |x: f64| {
        let mut q = s.rest_angles();
        q.root += Vec3::new(x, 0.0, SUBJECT_Z);
        q
    };
    let period = preset.period();
    let count = if preset == Preset::Idle {
        1
    } else {
        (frames.saturating_sub(1)).div_ceil(period) + 1
    };
    let keyposes = (0..count)
        .map(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let q = match preset {
                Preset::Idle => base(0.0),
                Preset::Walk => {
                    let mut q = base(0.03 * k as f64);
                    q.angles[bone(s, "left_knee")] = Vec3::new(0.0, 0.0, 0.15 * sign);
                    q.angles[bone(s, "right_knee")] = Vec3::new(0.0, 0.0, -0.15 * sign);
                    // Keep both feet flat.
                    q.angles[bone(s, "left_foot")] = Vec3::new(0.0, 0.0, -0.15 * sign);
                    q.angles[bone(s, "right_foot")] = Vec3::new(0.0, 0.0, 0.15 * sign);
                    q.angles[bone(s, "left_elbow")] = Vec3::new(0.0, 0.0, -0.2 * sign);
                    q.angles[bone(s, "right_elbow")] = Vec3::new(0.0, 0.0, 0.2 * sign);
                    q
                }
                Preset::Swing => {
                    let mut q = base(0.0);
                    q.angles[bone(s, "spine2")] = Vec3::new(0.0, 0.0, -0.05 * sign);
                    q.angles[bone(s, "left_elbow")] = Vec3::new(0.0, 0.0, 0.6 * sign);
                    q.angles[bone(s, "right_elbow")] = Vec3::new(0.0, 0.0, -0.6 * sign);
                    q.angles[bone(s, "left_wrist")] = Vec3::new(0.0, 0.0, 0.4 + 0.2 * sign);
                    q.angles[bone(s, "right_wrist")] = Vec3::new(0.0, 0.0, 0.4 - 0.2 * sign);
                    q
                }
            };
            (k * period, grounded(q, s, foot_radius))
        })
        .collect();
    MotionScript {
        keyposes,
        garment: GarmentParams::default(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneOptions {
    /// Orbit the camera about the subject at [`ORBIT_RATE`].
    pub orbit: bool,
    pub subdivisions: usize,
    pub intrinsics: [f64; 4],
}

impl Default for SceneOptions {
    fn default() -> Self {
        SceneOptions {
            orbit: false,
            subdivisions: DEFAULT_SUBDIVISIONS,
            intrinsics: DEFAULT_INTRINSICS,
        }
    }
}

/// Frame-`i` camera. Frame 0 is the identity; with `orbit` the camera
/// circles the vertical axis through `(0, 0, SUBJECT_Z)`.
pub fn scene_camera(i: usize, grid: Grid, opts: &SceneOptions) -> Result<CameraParams> {
    if !opts.orbit || i == 0 {
        return CameraParams::identity(opts.intrinsics, grid);
    }
    let th = ORBIT_RATE * i as f64;
    let (sn, cs) = th.sin_cos();
    let ry = Mat3::new(cs, 0.0, sn, 0.0, 1.0, 0.0, -sn, 0.0, cs);
    let c = Vec3::new(0.0, 0.0, SUBJECT_Z);
    // Stored extrinsics are single precision; render with exactly those.
    let q = |x: f64| x as f32 as f64;
    CameraParams::new(
        ry.transpose().map(q),
        (c - ry * c).map(q),
        opts.intrinsics,
        grid,
    )
}

/// Camera depth at which the pixel ray meets the ground or the backdrop.
pub fn backdrop_depth(camera: &CameraParams, u: f64, v: f64) -> f64 {
    let o = camera.translation;
    let d = camera.world_ray(u, v);
    let mut t = f64::INFINITY;
    if d.y < 0.0 {
        let tg = (GROUND_Y - o.y) / d.y;
        if tg > 0.0 {
            t = tg;
        }
    }
    let (ox, oz) = (o.x, o.z - SUBJECT_Z);
    let a = d.x * d.x + d.z * d.z;
    if a > 0.0 {
        let b = 2.0 * (ox * d.x + oz * d.z);
        let c = ox * ox + oz * oz - BACKDROP_RADIUS * BACKDROP_RADIUS;
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let tc = (-b + disc.sqrt()) / (2.0 * a);
            if tc > 0.0 {
                t = t.min(tc);
            }
        }
    }
    t
}

/// Per-frame skeleton state and skinned vertices of a preset.
pub struct Animation {
    pub script: MotionScript,
    pub kinematics: Vec<(Pose, Vec<Mat3>)>,
    pub garment: Vec<GarmentState>,
    pub vertices: Vec<Vec<Vec3>>,
}

pub fn animate_preset(
    preset: Preset,
    frames: usize,
    dt: f64,
    seed: u64,
    opts: &SceneOptions,
) -> Result<(Humanoid, Animation)> {
    let s = Skeleton::smpl24();
    let mut params = HumanoidParams::default_for(s);
    params.subdivisions = opts.subdivisions;
    let h = build_humanoid(s, &params, seed)?;
    let script = preset_script(preset, frames, &h);
    script.validate(&h, &Tolerances::default())?;

    let angles: Vec<JointAngles> = (0..frames).map(|i| script.angles_at(i)).collect();
    let kinematics: Vec<_> = angles
        .iter()
        .map(|q| forward_kinematics_frames(q, s))
        .collect();
    let mut garment = vec![GarmentState::rest(s.bones().len())];
    for i in 1..frames {
        let next = garment[i - 1].advance(
            &h,
            &kinematics[i - 1].1,
            &kinematics[i].1,
            dt,
            &script.garment,
        );
        garment.push(next);
    }
    let vertices = (0..frames)
        .into_par_iter()
        .map(|i| skin_vertices(&h, &angles[i], &garment[i]))
        .collect();
    Ok((
        h,
        Animation {
            script,
            kinematics,
            garment,
            vertices,
        },
    ))
}

pub fn generate_scene(
    preset: Preset,
    grid: Grid,
    frames: usize,
    dt: f64,
    seed: u64,
) -> Result<SceneClip> {
    generate_scene_with(preset, grid, frames, dt, seed, &SceneOptions::default())
}

pub fn generate_scene_with(
    preset: Preset,
    grid: Grid,
    frames: usize,
    dt: f64,
    seed: u64,
    opts: &SceneOptions,
) -> Result<SceneClip> {
    if frames < 2 {
        return Err(Error::Validation(format!(
            "a clip needs at least 2 frames, got {frames}"
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Validation(format!("dt must be positive, got {dt}")));
    }
    let (h, anim) = animate_preset(preset, frames, dt, seed, opts)?;
    let vertices = &anim.vertices;
    let kin = &anim.kinematics;
    let cameras: Vec<CameraParams> = (0..frames)
        .map(|i| scene_camera(i, grid, opts))
        .collect::<Result<_>>()?;

    let records: Vec<FrameRecord> = (0..frames)
        .into_par_iter()
        .map(|i| {
            let cam = &cameras[i];
            let raster = rasterize_frame(&vertices[i], &h.triangles, cam, grid);
            let fg = raster.covered();
            if fg == 0 {
                return Err(Error::Validation(format!(
                    "body is not visible in frame {i}"
                )));
            }
            if h.vertex_count() < MIN_VERTICES_PER_PIXEL * fg {
                return Err(Error::Validation(format!(
                    "{} mesh vertices for {fg} foreground pixels in frame {i}; raise subdivisions",
                    h.vertex_count()
                )));
            }
            let flow = if i + 1 < frames {
                pixel_flow_gt(&raster, &vertices[i], &vertices[i + 1], &h.triangles)?
            } else {
                FlowField::zeros(grid)
            };
            let depth = DepthField {
                grid,
                values: (0..grid.len())
                    .map(|k| {
                        if raster.triangle_ids[k] != BACKGROUND_ID {
                            raster.depth[k]
                        } else {
                            let (u, v) = grid.coords(k);
                            backdrop_depth(cam, u as f64, v as f64)
                        }
                    })
                    .collect(),
            };
            Ok(FrameRecord {
                depth,
                flow,
                mask: raster.mask(),
                pose: kin[i].0.clone(),
                camera: cam.clone(),
                raster: Some(raster),
            })
        })
        .collect::<Result<_>>()?;

    let mut clip = SceneClip {
        frames: records,
        meta: ClipMeta {
            seed,
            dt_seconds: dt,
            version: FORMAT_VERSION,
        },
    };
    clip.quantize_f32();
    Ok(clip)
}
