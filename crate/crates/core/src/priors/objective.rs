use rayon::prelude::*;

use super::{
    c_cam, c_com, c_dist, c_eff, c_silh, c_skel, Constraint, ConstraintResult, PriorWeights,
    Tolerances,
};
use crate::camera::Vec3;
use crate::error::{Error, Result};
use crate::fields::{DepthField, FlowField, SceneClip};
use crate::kinematics::{MassProfile, Pose, Skeleton};
use crate::rng::{derive_seed, SplitMix64};

const WINDOW_STREAM: u64 = 0x5749_4e44;
const PLANE_STREAM: u64 = 0x504c_4e45;

/// Per-frame teacher depth and pose.
#[derive(Clone, Debug, PartialEq)]
pub struct TeacherSet {
    pub depth: Vec<DepthField>,
    pub poses: Vec<Pose>,
}

/// Decision variables of a clip: per-frame depth, flow and pose.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipVariables {
    pub depth: Vec<DepthField>,
    pub flow: Vec<FlowField>,
    pub poses: Vec<Pose>,
}

impl ClipVariables {
    pub fn from_clip(clip: &SceneClip) -> Self {
        ClipVariables {
            depth: clip.frames.iter().map(|f| f.depth.clone()).collect(),
            flow: clip.frames.iter().map(|f| f.flow.clone()).collect(),
            poses: clip.poses(),
        }
    }

    pub fn len(&self) -> usize {
        self.depth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depth.is_empty()
    }
}

/// Weighted objective, unweighted per-constraint values and per-frame gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveReport {
    pub value: f64,
    pub parts: Vec<(Constraint, f64)>,
    /// `(start, length)` of the minimum-jerk window, if one was drawn.
    pub window: Option<(usize, usize)>,
    pub grad_depth: Vec<Vec<f64>>,
    pub grad_flow: Vec<Vec<Vec3>>,
    pub grad_pose: Vec<Vec<Vec3>>,
    pub grad_intrinsics: Vec<[f64; 4]>,
}

impl ObjectiveReport {
    pub fn part(&self, c: Constraint) -> f64 {
        self.parts
            .iter()
            .find(|(k, _)| *k == c)
            .map_or(0.0, |(_, v)| *v)
    }

    /// Largest absolute gradient entry over depth, flow and pose.
    pub fn grad_max_abs(&self) -> f64 {
        let d = self
            .grad_depth
            .iter()
            .flatten()
            .fold(0.0f64, |a, x| a.max(x.abs()));
        let f = self
            .grad_flow
            .iter()
            .flatten()
            .fold(0.0f64, |a, x| a.max(x.amax()));
        let p = self
            .grad_pose
            .iter()
            .flatten()
            .fold(0.0f64, |a, x| a.max(x.amax()));
        d.max(f).max(p)
    }
}

/// Window for `c_eff`: length uniform in `[window_min, min(window_max, T)]`
/// (or `T` for shorter clips), start uniform over valid positions.
pub fn draw_window(t: usize, tol: &Tolerances, seed: u64) -> Option<(usize, usize)> {
    if t < 3 {
        return None;
    }
    let mut rng = SplitMix64::new(derive_seed(seed, WINDOW_STREAM));
    let hi = tol.window_max.min(t);
    let len = if hi < tol.window_min {
        t
    } else {
        tol.window_min + rng.below((hi - tol.window_min + 1) as u64) as usize
    };
    let start = rng.below((t - len + 1) as u64) as usize;
    Some((start, len))
}

#[derive(Default)]
struct FrameParts {
    silh: Option<ConstraintResult>,
    skel: Option<ConstraintResult>,
    com: Option<ConstraintResult>,
    dist: Option<ConstraintResult>,
}

fn check(c: Constraint, r: ConstraintResult) -> Result<ConstraintResult> {
    if r.all_finite() {
        Ok(r)
    } else {
        Err(Error::Divergence {
            constraint: c.name().into(),
        })
    }
}

/// `Σ_k λ_k C_k` over a clip. `c_silh`, `c_skel` (frames `0..T−1`) and
/// `c_dist` are summed over frames, `c_com` is averaged, `c_eff` uses one
/// seeded window and `c_cam` is applied once. Constraints with zero weight
/// are skipped.
#[allow(clippy::too_many_arguments)]
pub fn total_objective(
    vars: &ClipVariables,
    clip: &SceneClip,
    teachers: Option<&TeacherSet>,
    weights: &PriorWeights,
    tol: &Tolerances,
    s: &Skeleton,
    m: &MassProfile,
    seed: u64,
) -> Result<ObjectiveReport> {
    let t = clip.len();
    if vars.depth.len() != t || vars.flow.len() != t || vars.poses.len() != t {
        return Err(Error::Validation(
            "variable frame count differs from the clip".into(),
        ));
    }
    if weights.dist > 0.0 {
        match teachers {
            Some(tch) if tch.depth.len() == t && tch.poses.len() == t => {}
            _ => {
                return Err(Error::Validation(
                    "c_dist needs one teacher depth and pose per frame".into(),
                ))
            }
        }
    }
    let on = |c: Constraint| weights.get(c) > 0.0;

    let frames: Vec<FrameParts> = (0..t)
        .into_par_iter()
        .map(|i| -> Result<FrameParts> {
            let f = &clip.frames[i];
            let mut out = FrameParts::default();
            if on(Constraint::Silh) {
                out.silh = Some(check(
                    Constraint::Silh,
                    c_silh(&vars.depth[i], &vars.flow[i], &f.mask, tol)?,
                )?);
            }
            if on(Constraint::Skel) && i + 1 < t {
                let r = c_skel(
                    &vars.flow[i],
                    &vars.depth[i],
                    &vars.poses[i],
                    &vars.poses[i + 1],
                    &f.mask,
                    &f.camera,
                    s,
                    tol,
                )?;
                out.skel = Some(check(Constraint::Skel, r)?);
            }
            if on(Constraint::Com) {
                let r = c_com(
                    &vars.poses[i],
                    &vars.depth[i],
                    &f.mask,
                    &f.camera,
                    m,
                    s,
                    tol,
                    derive_seed(seed, PLANE_STREAM + i as u64),
                )?;
                out.com = Some(check(Constraint::Com, r)?);
            }
            if on(Constraint::Dist) {
                let tch = teachers.unwrap();
                let r = c_dist(
                    &vars.depth[i],
                    &vars.poses[i],
                    &tch.depth[i],
                    &tch.poses[i],
                    tol,
                )?;
                out.dist = Some(check(Constraint::Dist, r)?);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut rep = ObjectiveReport {
        value: 0.0,
        parts: Vec::new(),
        window: None,
        grad_depth: vars
            .depth
            .iter()
            .map(|d| vec![0.0; d.values.len()])
            .collect(),
        grad_flow: vars
            .flow
            .iter()
            .map(|f| vec![Vec3::zeros(); f.values.len()])
            .collect(),
        grad_pose: vars
            .poses
            .iter()
            .map(|p| vec![Vec3::zeros(); p.joints.len()])
            .collect(),
        grad_intrinsics: vec![[0.0; 4]; t],
    };

    // Adds `scale ·` every slot of `r` to frames starting at `first`.
    let add = |rep: &mut ObjectiveReport, r: &ConstraintResult, first: usize, scale: f64| {
        for (k, g) in r.grad_depth.iter().flatten().enumerate() {
            rep.grad_depth[first + k]
                .iter_mut()
                .zip(g)
                .for_each(|(a, b)| *a += scale * b);
        }
        for (k, g) in r.grad_flow.iter().flatten().enumerate() {
            rep.grad_flow[first + k]
                .iter_mut()
                .zip(g)
                .for_each(|(a, b)| *a += b * scale);
        }
        for (k, g) in r.grad_pose.iter().flatten().enumerate() {
            rep.grad_pose[first + k]
                .iter_mut()
                .zip(g)
                .for_each(|(a, b)| *a += b * scale);
        }
        for (k, g) in r.grad_intrinsics.iter().flatten().enumerate() {
            for c in 0..4 {
                rep.grad_intrinsics[first + k][c] += scale * g[c];
            }
        }
    };

    for c in [
        Constraint::Silh,
        Constraint::Skel,
        Constraint::Com,
        Constraint::Dist,
    ] {
        if !on(c) {
            continue;
        }
        let lam = weights.get(c);
        let norm = if c == Constraint::Com {
            1.0 / t as f64
        } else {
            1.0
        };
        let mut total = 0.0;
        for (i, fp) in frames.iter().enumerate() {
            let r = match c {
                Constraint::Silh => &fp.silh,
                Constraint::Skel => &fp.skel,
                Constraint::Com => &fp.com,
                _ => &fp.dist,
            };
            if let Some(r) = r {
                total += r.value * norm;
                add(&mut rep, r, i, lam * norm);
            }
        }
        rep.parts.push((c, total));
        rep.value += lam * total;
    }

    if on(Constraint::Eff) {
        if let Some((start, len)) = draw_window(t, tol, seed) {
            let r = check(
                Constraint::Eff,
                c_eff(&vars.poses[start..start + len], s, tol)?,
            )?;
            add(&mut rep, &r, start, weights.eff);
            rep.parts.push((Constraint::Eff, r.value));
            rep.value += weights.eff * r.value;
            rep.window = Some((start, len));
        }
    }
    if on(Constraint::Cam) {
        let cams: Vec<_> = clip.frames.iter().map(|f| f.camera.clone()).collect();
        let r = check(Constraint::Cam, c_cam(&cams)?)?;
        add(&mut rep, &r, 0, weights.cam);
        rep.parts.push((Constraint::Cam, r.value));
        rep.value += weights.cam * r.value;
    }
    rep.parts.sort_by_key(|(c, _)| *c);
    Ok(rep)
}
