//! First-order refinement of perturbed ground-truth variables under the
//! weighted prior objective.
//!
//! Updates are plain gradient descent with one step length per variable
//! kind. Field gradients are scaled by the frame's foreground pixel count
//! and pose gradients by the joint count, which undoes the averaging inside
//! the constraints, so each step length reads as meters per unit gradient.
//! Depth is projected to at least [`MIN_DEPTH`] after every update; the
//! last frame's flow stays zero.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fields::{DepthField, Grid, SceneClip};
use crate::kinematics::{MassProfile, Pose, Skeleton};
use crate::metrics::clip_report;
use crate::priors::{
    total_objective, ClipVariables, ObjectiveReport, PriorWeights, TeacherSet, Tolerances,
};
use crate::rng::{chacha, derive_seed};

pub const MIN_DEPTH: f64 = 1e-4;
/// Standard deviation, in pixels, of the Gaussian blur that makes depth noise smooth.
pub const DEPTH_NOISE_BLUR_PX: f64 = 4.0;
pub const LOG_EVERY: usize = 10;

const STEP_STREAM: u64 = 0x5354_4550_0000_0000;
const TEACHER_STREAM: u64 = 0x5445_4143;
const PERTURB_STREAM: u64 = 0x5045_5254;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TeacherNoise {
    pub depth_sigma: f64,
    pub depth_bias: f64,
    pub pose_sigma: f64,
}

impl Default for TeacherNoise {
    fn default() -> Self {
        TeacherNoise {
            depth_sigma: 0.02,
            depth_bias: 0.02,
            pose_sigma: 0.01,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Perturbation {
    pub flow: f64,
    pub depth: f64,
    pub pose: f64,
}

impl Perturbation {
    pub const ZERO: Perturbation = Perturbation {
        flow: 0.0,
        depth: 0.0,
        pose: 0.0,
    };
}

impl Default for Perturbation {
    fn default() -> Self {
        Perturbation {
            flow: 0.1,
            depth: 0.05,
            pose: 0.05,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSizes {
    pub depth: f64,
    pub flow: f64,
    pub pose: f64,
}

impl Default for StepSizes {
    fn default() -> Self {
        StepSizes {
            depth: 0.002,
            flow: 0.002,
            pose: 0.002,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimConfig {
    pub steps: StepSizes,
    pub iterations: usize,
    pub weights: PriorWeights,
    pub tolerances: Tolerances,
    pub perturbation: Perturbation,
    pub teacher: TeacherNoise,
    pub seed: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            steps: StepSizes::default(),
            iterations: 500,
            weights: PriorWeights::default(),
            tolerances: Tolerances::default(),
            perturbation: Perturbation::default(),
            teacher: TeacherNoise::default(),
            seed: 0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let s = self.steps;
        if ![s.depth, s.flow, s.pose]
            .iter()
            .all(|x| *x > 0.0 && x.is_finite())
        {
            return Err(Error::Config(
                "step sizes must be positive and finite".into(),
            ));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        self.weights.validate()?;
        if self.weights.is_all_zero() {
            return Err(Error::Config("all constraint weights are zero".into()));
        }
        self.tolerances.validate()?;
        let p = self.perturbation;
        let t = self.teacher;
        if ![p.flow, p.depth, p.pose, t.depth_sigma, t.pose_sigma]
            .iter()
            .all(|x| *x >= 0.0 && x.is_finite())
            || !t.depth_bias.is_finite()
        {
            return Err(Error::Config(
                "noise magnitudes must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// One trajectory sample: objective and clip-level errors, meters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogEntry {
    pub step: usize,
    pub objective: f64,
    pub epe_m: f64,
    pub mpjpe_m: f64,
    pub mae_m: f64,
}

impl LogEntry {
    pub const HEADER: &'static str = "step, objective, epe_m, mpjpe_m, mae_m";

    pub fn to_line(&self) -> String {
        format!(
            "{}, {:e}, {:e}, {:e}, {:e}",
            self.step, self.objective, self.epe_m, self.mpjpe_m, self.mae_m
        )
    }
}

pub fn render_log(log: &[LogEntry]) -> String {
    let mut out = String::from(LogEntry::HEADER);
    out.push('\n');
    for e in log {
        out.push_str(&e.to_line());
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimState {
    pub vars: ClipVariables,
    pub step: usize,
    /// Objective recorded by every call to [`step`].
    pub objectives: Vec<f64>,
}

impl OptimState {
    pub fn from_clip(clip: &SceneClip) -> Self {
        OptimState {
            vars: ClipVariables::from_clip(clip),
            step: 0,
            objectives: Vec::new(),
        }
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-r..=r)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|x| x / s).collect()
}

/// Unit-variance smooth noise: white Gaussian noise blurred separably with
/// a Gaussian of [`DEPTH_NOISE_BLUR_PX`] (replicated borders) and rescaled
/// by the kernel's energy.
pub fn smooth_noise(grid: Grid, rng: &mut impl Rng) -> Vec<f64> {
    let k = gaussian_kernel(DEPTH_NOISE_BLUR_PX);
    let r = (k.len() / 2) as isize;
    let energy: f64 = k.iter().map(|x| x * x).sum();
    let (w, h) = (grid.width as isize, grid.height as isize);
    let white: Vec<f64> = (0..grid.len())
        .map(|_| rng.sample(StandardNormal))
        .collect();
    let mut tmp = vec![0.0; grid.len()];
    for y in 0..h {
        for x in 0..w {
            tmp[(y * w + x) as usize] = k
                .iter()
                .enumerate()
                .map(|(j, c)| c * white[(y * w + (x + j as isize - r).clamp(0, w - 1)) as usize])
                .sum();
        }
    }
    let mut out = vec![0.0; grid.len()];
    for y in 0..h {
        for x in 0..w {
            out[(y * w + x) as usize] = k
                .iter()
                .enumerate()
                .map(|(j, c)| c * tmp[((y + j as isize - r).clamp(0, h - 1) * w + x) as usize])
                .sum::<f64>()
                / energy;
        }
    }
    out
}

fn noisy_pose(p: &Pose, sigma: f64, rng: &mut impl Rng) -> Pose {
    Pose::new(
        p.joints
            .iter()
            .map(|j| {
                let n: [f64; 3] = [
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                ];
                j + crate::camera::Vec3::from(n) * sigma
            })
            .collect(),
    )
}

/// Synthetic teachers: smooth depth noise plus a constant bias, and
/// independent Gaussian joint noise.
pub fn make_teachers(clip: &SceneClip, noise: &TeacherNoise, seed: u64) -> TeacherSet {
    let mut rng = chacha(seed, TEACHER_STREAM);
    let mut depth = Vec::with_capacity(clip.len());
    let mut poses = Vec::with_capacity(clip.len());
    for f in &clip.frames {
        let n = smooth_noise(f.depth.grid, &mut rng);
        depth.push(DepthField {
            grid: f.depth.grid,
            values: f
                .depth
                .values
                .iter()
                .zip(&n)
                .map(|(d, e)| d + noise.depth_sigma * e + noise.depth_bias)
                .collect(),
        });
        poses.push(noisy_pose(&f.pose, noise.pose_sigma, &mut rng));
    }
    TeacherSet { depth, poses }
}

/// Initial state: i.i.d. Gaussian flow noise on every frame with flow, smooth
/// depth noise (projected positive) and Gaussian joint noise.
pub fn perturb(clip: &SceneClip, p: &Perturbation, seed: u64) -> OptimState {
    let mut rng = chacha(seed, PERTURB_STREAM);
    let mut state = OptimState::from_clip(clip);
    let t = clip.len();
    for i in 0..t {
        let n = smooth_noise(clip.frames[i].depth.grid, &mut rng);
        for (d, e) in state.vars.depth[i].values.iter_mut().zip(&n) {
            *d = (*d + p.depth * e).max(MIN_DEPTH);
        }
        if i + 1 < t {
            for f in state.vars.flow[i].values.iter_mut() {
                let n: [f64; 3] = [
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                ];
                *f += crate::camera::Vec3::from(n) * p.flow;
            }
        }
        state.vars.poses[i] = noisy_pose(&state.vars.poses[i], p.pose, &mut rng);
    }
    state
}

/// Flow EPE, MPJPE and depth MAE of the variables against the ground truth.
pub fn clip_errors(vars: &ClipVariables, clip: &SceneClip) -> Result<(f64, f64, f64)> {
    let r = clip_report(&vars.depth, &vars.flow, &vars.poses, clip)?;
    Ok((r.flow.epe, r.pose.mpjpe, r.depth.mae))
}

fn evaluate(
    state: &OptimState,
    clip: &SceneClip,
    teachers: &TeacherSet,
    config: &OptimConfig,
) -> Result<ObjectiveReport> {
    total_objective(
        &state.vars,
        clip,
        Some(teachers),
        &config.weights,
        &config.tolerances,
        Skeleton::smpl24(),
        MassProfile::de_leva(),
        derive_seed(config.seed, STEP_STREAM + state.step as u64),
    )
}

fn apply(
    state: &OptimState,
    clip: &SceneClip,
    rep: &ObjectiveReport,
    config: &OptimConfig,
) -> Result<OptimState> {
    let t = clip.len();
    let mut next = state.clone();
    let joints = state.vars.poses.first().map_or(1, |p| p.joints.len()) as f64;
    for i in 0..t {
        let fg = clip.frames[i].mask.foreground_count().max(1) as f64;
        let (sd, sf) = (config.steps.depth * fg, config.steps.flow * fg);
        for (d, g) in next.vars.depth[i].values.iter_mut().zip(&rep.grad_depth[i]) {
            *d = (*d - sd * g).max(MIN_DEPTH);
        }
        if i + 1 < t {
            for (f, g) in next.vars.flow[i].values.iter_mut().zip(&rep.grad_flow[i]) {
                *f -= g * sf;
            }
        }
        for (p, g) in next.vars.poses[i].joints.iter_mut().zip(&rep.grad_pose[i]) {
            *p -= g * (config.steps.pose * joints);
        }
    }
    let finite = next
        .vars
        .depth
        .iter()
        .all(|d| d.values.iter().all(|x| x.is_finite()))
        && next
            .vars
            .flow
            .iter()
            .all(|f| f.values.iter().all(|v| v.iter().all(|x| x.is_finite())))
        && next
            .vars
            .poses
            .iter()
            .all(|p| p.joints.iter().all(|v| v.iter().all(|x| x.is_finite())));
    if !finite {
        return Err(Error::Divergence {
            constraint: "update".into(),
        });
    }
    next.step += 1;
    next.objectives.push(rep.value);
    Ok(next)
}

/// One descent step with a freshly drawn minimum-jerk window.
pub fn step(
    state: &OptimState,
    clip: &SceneClip,
    teachers: &TeacherSet,
    config: &OptimConfig,
) -> Result<OptimState> {
    let rep = evaluate(state, clip, teachers, config)?;
    apply(state, clip, &rep, config)
}

fn log_entry(state: &OptimState, clip: &SceneClip, objective: f64) -> Result<LogEntry> {
    let (epe_m, mpjpe_m, mae_m) = clip_errors(&state.vars, clip)?;
    Ok(LogEntry {
        step: state.step,
        objective,
        epe_m,
        mpjpe_m,
        mae_m,
    })
}

/// Perturb, descend for `config.iterations` steps, and log every
/// [`LOG_EVERY`] steps plus the final state.
pub fn run(clip: &SceneClip, config: &OptimConfig) -> Result<(OptimState, Vec<LogEntry>)> {
    config.validate()?;
    let teachers = make_teachers(clip, &config.teacher, config.seed);
    let mut state = perturb(clip, &config.perturbation, config.seed);
    let mut log = Vec::new();
    for k in 0..config.iterations {
        let rep = evaluate(&state, clip, &teachers, config)?;
        if k % LOG_EVERY == 0 {
            log.push(log_entry(&state, clip, rep.value)?);
        }
        state = apply(&state, clip, &rep, config)?;
    }
    let last = evaluate(&state, clip, &teachers, config)?;
    log.push(log_entry(&state, clip, last.value)?);
    Ok((state, log))
}
