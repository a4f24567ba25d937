use crate::camera::{Mat3, Vec3};
use crate::fields::{SceneClip, BACKGROUND_ID};
use crate::kinematics::{Skeleton, JOINT_COUNT, MAX_BONE_LENGTH, MIN_BONE_LENGTH};

/// One broken invariant. `frame` is `None` for clip-level rules.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub frame: Option<usize>,
    pub field: &'static str,
    pub rule: &'static str,
    pub detail: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.frame {
            Some(i) => write!(
                f,
                "frame {i}: {} violates \"{}\" ({})",
                self.field, self.rule, self.detail
            ),
            None => write!(
                f,
                "clip: {} violates \"{}\" ({})",
                self.field, self.rule, self.detail
            ),
        }
    }
}

/// Check every clip invariant. Each (frame, field, rule) triple is reported at
/// most once, with the number of offending pixels or joints in `detail`.
pub fn validate_clip(clip: &SceneClip) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |frame: Option<usize>, field, rule, detail: String| {
        out.push(Violation {
            frame,
            field,
            rule,
            detail,
        })
    };

    if clip.frames.len() < 2 {
        push(
            None,
            "frames",
            "clip length >= 2",
            format!("{} frames", clip.frames.len()),
        );
    }
    if !(clip.meta.dt_seconds > 0.0 && clip.meta.dt_seconds.is_finite()) {
        push(
            None,
            "meta",
            "dt_seconds > 0",
            format!("{}", clip.meta.dt_seconds),
        );
    }
    let Some(grid) = clip.grid() else { return out };
    let skeleton = Skeleton::smpl24();
    let last = clip.frames.len() - 1;

    for (i, f) in clip.frames.iter().enumerate() {
        let fr = Some(i);
        if f.flow.grid != grid
            || f.mask.grid != grid
            || f.depth.grid != grid
            || f.camera.grid != grid
        {
            push(fr, "grid", "grids equal", format!("expected {grid}"));
            continue;
        }

        let nonfinite = f.depth.values.iter().filter(|d| !d.is_finite()).count();
        if nonfinite > 0 {
            push(fr, "depth", "depth finite", format!("{nonfinite} pixels"));
        }
        let nonpos = f
            .depth
            .values
            .iter()
            .filter(|&&d| d.is_finite() && d <= 0.0)
            .count();
        if nonpos > 0 {
            push(fr, "depth", "depth > 0", format!("{nonpos} pixels"));
        }

        let bad_flow = f
            .flow
            .values
            .iter()
            .filter(|v| !v.iter().all(|x| x.is_finite()))
            .count();
        if bad_flow > 0 {
            push(fr, "flow", "flow finite", format!("{bad_flow} pixels"));
        }
        if i == last {
            let nz = f
                .flow
                .values
                .iter()
                .filter(|v| **v != Vec3::zeros())
                .count();
            if nz > 0 {
                push(fr, "flow", "last-frame flow zero", format!("{nz} pixels"));
            }
        }

        let bad_mask = f.mask.values.iter().filter(|&&m| m > 1).count();
        if bad_mask > 0 {
            push(fr, "mask", "mask in {0,1}", format!("{bad_mask} pixels"));
        }
        if f.mask.values.iter().all(|&m| m == 0) {
            push(
                fr,
                "mask",
                "mask has foreground",
                "no foreground pixel".into(),
            );
        }

        if f.pose.joints.len() != JOINT_COUNT {
            push(
                fr,
                "pose",
                "pose has 24 joints",
                format!("{} joints", f.pose.joints.len()),
            );
        } else if !f
            .pose
            .joints
            .iter()
            .all(|p| p.iter().all(|x| x.is_finite()))
        {
            push(fr, "pose", "pose finite", String::new());
        } else {
            let bad: Vec<usize> = skeleton
                .bones()
                .iter()
                .enumerate()
                .filter(|(_, b)| {
                    let l = (f.pose.joints[b.child] - f.pose.joints[b.parent]).norm();
                    !(l > MIN_BONE_LENGTH && l < MAX_BONE_LENGTH)
                })
                .map(|(k, _)| k)
                .collect();
            if !bad.is_empty() {
                push(
                    fr,
                    "pose",
                    "bone length in (0.01, 1.0) m",
                    format!("bones {bad:?}"),
                );
            }
        }

        if let Some(why) = f.camera.violation() {
            push(fr, "camera", "camera valid", why);
        }
        if i == 0
            && (f.camera.rotation != Mat3::identity() || f.camera.translation != Vec3::zeros())
        {
            push(
                fr,
                "camera",
                "frame 0 camera anchored",
                "rotation must be I and translation 0".into(),
            );
        }

        if let Some(r) = &f.raster {
            if r.grid != grid {
                push(fr, "raster", "grids equal", format!("expected {grid}"));
                continue;
            }
            let mismatch = r
                .triangle_ids
                .iter()
                .zip(f.mask.values.iter())
                .filter(|(&t, &m)| (t != BACKGROUND_ID) != (m != 0))
                .count();
            if mismatch > 0 {
                push(
                    fr,
                    "raster",
                    "triangle id valid iff mask",
                    format!("{mismatch} pixels"),
                );
            }
            let bad_bary = r
                .triangle_ids
                .iter()
                .zip(r.barycentrics.iter())
                .filter(|(&t, b)| t != BACKGROUND_ID && ((b[0] + b[1] + b[2]) - 1.0).abs() > 1e-6)
                .count();
            if bad_bary > 0 {
                push(
                    fr,
                    "raster",
                    "barycentrics sum to 1",
                    format!("{bad_bary} pixels"),
                );
            }
        }
    }
    out
}
