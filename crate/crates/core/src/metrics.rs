//! Flow, pose and depth error metrics. Everything is in meters; millimeter
//! conversion belongs to report formatting.

use nalgebra::SVD;

use crate::camera::{Mat3, Vec3};
use crate::error::{Error, Result};
use crate::fields::{DepthField, FlowField, MaskField, SceneClip};
use crate::kinematics::Pose;

/// Strict and relaxed end-point thresholds, meters.
pub const ACC_THRESHOLDS: (f64, f64) = (0.05, 0.10);
/// Vectors shorter than this are left out of the cosine term.
pub const COS_MIN_NORM: f64 = 1e-6;
/// Floor applied to non-positive predicted depth before taking logs.
pub const DEPTH_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct FlowReport {
    pub epe: f64,
    pub one_minus_cos: f64,
    pub acc_strict: f64,
    pub acc_relaxed: f64,
    pub count: usize,
    /// Pixels that entered the cosine term.
    pub cos_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoseReport {
    pub mpjpe: f64,
    pub pa_mpjpe: f64,
    pub frames: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DepthReport {
    pub mae: f64,
    pub silog: f64,
    pub count: usize,
    /// Region pixels whose prediction was raised to [`DEPTH_FLOOR`].
    pub clamped: usize,
}

impl FlowReport {
    pub fn to_key_values(&self) -> String {
        format!(
            "flow.epe_m={:e}\nflow.one_minus_cos={:e}\nflow.acc_strict={:e}\nflow.acc_relaxed={:e}\nflow.count={}\n",
            self.epe, self.one_minus_cos, self.acc_strict, self.acc_relaxed, self.count
        )
    }
}

impl PoseReport {
    pub fn to_key_values(&self) -> String {
        format!(
            "pose.mpjpe_m={:e}\npose.pa_mpjpe_m={:e}\npose.frames={}\n",
            self.mpjpe, self.pa_mpjpe, self.frames
        )
    }
}

impl DepthReport {
    pub fn to_key_values(&self) -> String {
        format!(
            "depth.mae_m={:e}\ndepth.silog={:e}\ndepth.count={}\ndepth.clamped={}\n",
            self.mae, self.silog, self.count, self.clamped
        )
    }
}

#[derive(Default)]
struct FlowAcc {
    epe: f64,
    cos: f64,
    strict: usize,
    relaxed: usize,
    n: usize,
    nc: usize,
}

impl FlowAcc {
    fn add(
        &mut self,
        pred: &FlowField,
        gt: &FlowField,
        mask: &MaskField,
        thresholds: (f64, f64),
    ) -> Result<()> {
        if pred.grid != gt.grid || mask.grid != gt.grid {
            return Err(Error::Validation(
                "flow metric inputs have different grids".into(),
            ));
        }
        for i in mask.foreground_indices() {
            let (p, g) = (pred.values[i], gt.values[i]);
            let e = (p - g).norm();
            self.epe += e;
            self.strict += (e < thresholds.0) as usize;
            self.relaxed += (e < thresholds.1) as usize;
            let (np, ng) = (p.norm(), g.norm());
            if np > COS_MIN_NORM && ng > COS_MIN_NORM {
                self.cos += 0.5 * (p / np - g / ng).norm_squared();
                self.nc += 1;
            }
            self.n += 1;
        }
        Ok(())
    }

    fn finish(self) -> Result<FlowReport> {
        if self.n == 0 {
            return Err(Error::Domain("flow metrics need a non-empty mask".into()));
        }
        let nf = self.n as f64;
        Ok(FlowReport {
            epe: self.epe / nf,
            one_minus_cos: if self.nc > 0 {
                self.cos / self.nc as f64
            } else {
                0.0
            },
            acc_strict: self.strict as f64 / nf,
            acc_relaxed: self.relaxed as f64 / nf,
            count: self.n,
            cos_count: self.nc,
        })
    }
}

pub fn flow_metrics(
    pred: &FlowField,
    gt: &FlowField,
    mask: &MaskField,
    thresholds: (f64, f64),
) -> Result<FlowReport> {
    let mut acc = FlowAcc::default();
    acc.add(pred, gt, mask, thresholds)?;
    acc.finish()
}

/// Similarity transform `x ↦ s·R·x + t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Similarity {
    pub fn apply(&self, x: &Vec3) -> Vec3 {
        self.rotation * x * self.scale + self.translation
    }
}

/// Closed-form similarity aligning `src` onto `dst` in the least-squares
/// sense: centroids, cross-covariance, orthogonal polar factor with a
/// reflection guard, trace-ratio scale.
pub fn procrustes(src: &[Vec3], dst: &[Vec3]) -> Result<Similarity> {
    if src.len() != dst.len() || src.is_empty() {
        return Err(Error::Domain(
            "procrustes needs two equally sized, non-empty point sets".into(),
        ));
    }
    let n = src.len() as f64;
    let mu_s = src.iter().sum::<Vec3>() / n;
    let mu_d = dst.iter().sum::<Vec3>() / n;
    let mut cov = Mat3::zeros();
    let mut var_s = 0.0;
    for (a, b) in src.iter().zip(dst) {
        let (x, y) = (a - mu_s, b - mu_d);
        cov += y * x.transpose();
        var_s += x.norm_squared();
    }
    cov /= n;
    var_s /= n;
    if !(var_s > 0.0) {
        return Ok(Similarity {
            scale: 1.0,
            rotation: Mat3::identity(),
            translation: mu_d - mu_s,
        });
    }
    let svd = SVD::new(cov, true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut sign = Vec3::new(1.0, 1.0, 1.0);
    if (u.determinant() * vt.determinant()) < 0.0 {
        sign[svd.singular_values.imin()] = -1.0;
    }
    let rotation = u * Mat3::from_diagonal(&sign) * vt;
    let scale = svd.singular_values.dot(&sign) / var_s;
    Ok(Similarity {
        scale,
        rotation,
        translation: mu_d - rotation * mu_s * scale,
    })
}

fn mean_joint_error(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).sum::<f64>() / a.len() as f64
}

pub fn pose_metrics(pred: &[Pose], gt: &[Pose]) -> Result<PoseReport> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::Domain(format!(
            "pose sequences differ in length ({} vs {}) or are empty",
            pred.len(),
            gt.len()
        )));
    }
    let (mut mp, mut pa) = (0.0, 0.0);
    for (p, g) in pred.iter().zip(gt) {
        if p.joints.len() != g.joints.len() || p.joints.is_empty() {
            return Err(Error::Domain("pose joint counts differ".into()));
        }
        mp += mean_joint_error(&p.joints, &g.joints);
        let sim = procrustes(&p.joints, &g.joints)?;
        let aligned: Vec<Vec3> = p.joints.iter().map(|x| sim.apply(x)).collect();
        pa += mean_joint_error(&aligned, &g.joints);
    }
    let n = pred.len() as f64;
    Ok(PoseReport {
        mpjpe: mp / n,
        pa_mpjpe: pa / n,
        frames: pred.len(),
    })
}

#[derive(Default)]
struct DepthAcc {
    abs: f64,
    s1: f64,
    s2: f64,
    n: usize,
    clamped: usize,
}

impl DepthAcc {
    fn add(&mut self, pred: &DepthField, gt: &DepthField, region: &MaskField) -> Result<()> {
        if pred.grid != gt.grid || region.grid != gt.grid {
            return Err(Error::Validation(
                "depth metric inputs have different grids".into(),
            ));
        }
        for i in region.foreground_indices() {
            let g = gt.values[i];
            if !(g > 0.0) {
                return Err(Error::Validation(format!(
                    "ground-truth depth {g} at pixel {i} is not positive"
                )));
            }
            let mut p = pred.values[i];
            self.abs += (p - g).abs();
            if p <= 0.0 {
                p = DEPTH_FLOOR;
                self.clamped += 1;
            }
            let d = p.ln() - g.ln();
            self.s1 += d;
            self.s2 += d * d;
            self.n += 1;
        }
        Ok(())
    }

    fn finish(self) -> Result<DepthReport> {
        if self.n == 0 {
            return Err(Error::Domain(
                "depth metrics need a non-empty region".into(),
            ));
        }
        let nf = self.n as f64;
        let var = (self.s2 / nf - (self.s1 / nf).powi(2)).max(0.0);
        Ok(DepthReport {
            mae: self.abs / nf,
            silog: 100.0 * var.sqrt(),
            count: self.n,
            clamped: self.clamped,
        })
    }
}

/// MAE and scale-invariant log error `100·sqrt(E[δ²] − E[δ]²)`,
/// `δ = ln pred − ln gt`, over the region.
pub fn depth_metrics(
    pred: &DepthField,
    gt: &DepthField,
    region: &MaskField,
) -> Result<DepthReport> {
    let mut acc = DepthAcc::default();
    acc.add(pred, gt, region)?;
    acc.finish()
}

/// Metrics of a whole clip against ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipReport {
    pub flow: FlowReport,
    pub pose: PoseReport,
    pub depth: DepthReport,
}

impl ClipReport {
    pub fn to_key_values(&self) -> String {
        format!(
            "{}{}{}",
            self.flow.to_key_values(),
            self.pose.to_key_values(),
            self.depth.to_key_values()
        )
    }
}

/// Flow pooled over the ground-truth foreground of every frame except the
/// last, depth pooled over the foreground of every frame, pose per frame.
pub fn clip_report(
    depth: &[DepthField],
    flow: &[FlowField],
    poses: &[Pose],
    gt: &SceneClip,
) -> Result<ClipReport> {
    let t = gt.len();
    if depth.len() != t || flow.len() != t || poses.len() != t {
        return Err(Error::Domain(format!(
            "prediction has a different frame count than the {t}-frame ground truth"
        )));
    }
    if t < 2 {
        return Err(Error::Domain("clip metrics need at least 2 frames".into()));
    }
    let (mut fa, mut da) = (FlowAcc::default(), DepthAcc::default());
    for (i, f) in gt.frames.iter().enumerate() {
        if i + 1 < t {
            fa.add(&flow[i], &f.flow, &f.mask, ACC_THRESHOLDS)?;
        }
        da.add(&depth[i], &f.depth, &f.mask)?;
    }
    Ok(ClipReport {
        flow: fa.finish()?,
        pose: pose_metrics(poses, &gt.poses())?,
        depth: da.finish()?,
    })
}

pub fn compare_clips(pred: &SceneClip, gt: &SceneClip) -> Result<ClipReport> {
    let depth: Vec<DepthField> = pred.frames.iter().map(|f| f.depth.clone()).collect();
    let flow: Vec<FlowField> = pred.frames.iter().map(|f| f.flow.clone()).collect();
    clip_report(&depth, &flow, &pred.poses(), gt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Grid;
    use crate::kinematics::Skeleton;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, s: f64) -> Vec3 {
        Vec3::new(
            rng.random_range(-s..s),
            rng.random_range(-s..s),
            rng.random_range(-s..s),
        )
    }

    #[test]
    fn flow_examples() {
        let g = Grid::new(8, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gt = FlowField::new(
            g,
            (0..64)
                .map(|_| rand_vec(&mut rng, 0.1) + Vec3::new(0.2, 0.0, 0.0))
                .collect(),
        )
        .unwrap();
        let mask = MaskField::from_fn(g, |u, _| u > 1);
        let r = flow_metrics(&gt, &gt, &mask, ACC_THRESHOLDS).unwrap();
        assert_eq!((r.epe, r.acc_strict, r.acc_relaxed), (0.0, 1.0, 1.0));
        assert!(r.one_minus_cos.abs() < 1e-15);
        let off = FlowField::new(
            g,
            gt.values
                .iter()
                .map(|v| v + Vec3::new(0.003, 0.004, 0.0))
                .collect(),
        )
        .unwrap();
        let r = flow_metrics(&off, &gt, &mask, ACC_THRESHOLDS).unwrap();
        assert!((r.epe - 0.005).abs() < 1e-12);
        assert_eq!(r.acc_strict, 1.0);
        assert!(flow_metrics(
            &gt,
            &gt,
            &MaskField::from_fn(g, |_, _| false),
            ACC_THRESHOLDS
        )
        .is_err());
    }

    #[test]
    fn flow_matches_naive_loop() {
        let g = Grid::new(16, 12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gt =
            FlowField::new(g, (0..g.len()).map(|_| rand_vec(&mut rng, 0.1)).collect()).unwrap();
        let pred = FlowField::new(
            g,
            gt.values
                .iter()
                .map(|v| v + rand_vec(&mut rng, 0.08))
                .collect(),
        )
        .unwrap();
        let mask = MaskField::from_fn(g, |_, _| rng.random_bool(0.6));
        let r = flow_metrics(&pred, &gt, &mask, ACC_THRESHOLDS).unwrap();
        let (mut e, mut c, mut nc, mut s, mut rl, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for k in 0..g.len() {
            if mask.values[k] == 0 {
                continue;
            }
            let (p, q) = (pred.values[k], gt.values[k]);
            let d = ((p.x - q.x).powi(2) + (p.y - q.y).powi(2) + (p.z - q.z).powi(2)).sqrt();
            e += d;
            if d < 0.05 {
                s += 1.0;
            }
            if d < 0.10 {
                rl += 1.0;
            }
            let pn = (p.x * p.x + p.y * p.y + p.z * p.z).sqrt();
            let qn = (q.x * q.x + q.y * q.y + q.z * q.z).sqrt();
            if pn > 1e-6 && qn > 1e-6 {
                c += 1.0 - (p.x * q.x + p.y * q.y + p.z * q.z) / (pn * qn);
                nc += 1.0;
            }
            n += 1.0;
        }
        assert!((r.epe - e / n).abs() < 1e-12);
        assert!((r.one_minus_cos - c / nc).abs() < 1e-12);
        assert!((r.acc_strict - s / n).abs() < 1e-12 && (r.acc_relaxed - rl / n).abs() < 1e-12);
        assert!(r.acc_strict <= r.acc_relaxed);
    }

    #[test]
    fn epe_triangle_inequality() {
        let g = Grid::new(10, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mask = MaskField::from_fn(g, |_, _| true);
        for _ in 0..20 {
            let gt =
                FlowField::new(g, (0..g.len()).map(|_| rand_vec(&mut rng, 0.1)).collect()).unwrap();
            let pred = FlowField::new(
                g,
                gt.values
                    .iter()
                    .map(|v| v + rand_vec(&mut rng, 0.05))
                    .collect(),
            )
            .unwrap();
            let c = rand_vec(&mut rng, 0.05);
            let shifted = FlowField::new(g, pred.values.iter().map(|v| v + c).collect()).unwrap();
            let a = flow_metrics(&pred, &gt, &mask, ACC_THRESHOLDS).unwrap().epe;
            let b = flow_metrics(&shifted, &gt, &mask, ACC_THRESHOLDS)
                .unwrap()
                .epe;
            assert!((a - b).abs() <= c.norm() + 1e-15);
        }
    }

    #[test]
    fn acc_monotone_in_threshold() {
        let g = Grid::new(10, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let gt = FlowField::zeros(g);
        let pred =
            FlowField::new(g, (0..g.len()).map(|_| rand_vec(&mut rng, 0.2)).collect()).unwrap();
        let mask = MaskField::from_fn(g, |_, _| true);
        let mut prev = 0.0;
        for k in 0..40 {
            let t = k as f64 * 0.01;
            let r = flow_metrics(&pred, &gt, &mask, (t, t)).unwrap();
            assert!(r.acc_strict >= prev);
            prev = r.acc_strict;
        }
    }

    #[test]
    fn hand_solved_procrustes() {
        let gt = vec![
            Vec3::new(-1.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        ];
        let pred = vec![
            Vec3::new(-1.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 3.0, 0.0),
        ];
        let sim = procrustes(&pred, &gt).unwrap();
        assert!((sim.scale - 0.5).abs() < 1e-12);
        assert!((sim.rotation - Mat3::identity()).amax() < 1e-12);
        let r = pose_metrics(&[Pose::new(pred)], &[Pose::new(gt)]).unwrap();
        assert!((r.mpjpe - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.pa_mpjpe - (10f64.sqrt() + 1.0) / 9.0).abs() < 1e-9);
    }

    fn random_similarity(rng: &mut ChaCha8Rng) -> Similarity {
        let axis = rand_vec(rng, 1.0).normalize() * rng.random_range(0.1..3.0);
        Similarity {
            scale: rng.random_range(0.5..2.0),
            rotation: crate::kinematics::axis_angle_to_matrix(&axis),
            translation: rand_vec(rng, 2.0),
        }
    }

    #[test]
    fn pa_removes_similarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let gt: Vec<Pose> = (0..5)
            .map(|k| {
                Skeleton::smpl24()
                    .rest_pose()
                    .translated(&Vec3::new(k as f64 * 0.1, 0.0, 3.0))
            })
            .collect();
        let pred: Vec<Pose> = gt
            .iter()
            .map(|p| {
                let s = random_similarity(&mut rng);
                Pose::new(p.joints.iter().map(|x| s.apply(x)).collect())
            })
            .collect();
        let r = pose_metrics(&pred, &gt).unwrap();
        assert!(r.mpjpe > 0.0);
        assert!(r.pa_mpjpe <= 1e-9);
        assert!(pose_metrics(&pred[..2], &gt).is_err());
    }

    #[test]
    fn pa_invariant_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let gt = Skeleton::smpl24().rest_pose();
            let pred = Pose::new(
                gt.joints
                    .iter()
                    .map(|x| x + rand_vec(&mut rng, 0.05))
                    .collect(),
            );
            let base =
                pose_metrics(std::slice::from_ref(&pred), std::slice::from_ref(&gt)).unwrap();
            assert!(base.pa_mpjpe <= base.mpjpe + 1e-9);
            let s = random_similarity(&mut rng);
            let moved = Pose::new(pred.joints.iter().map(|x| s.apply(x)).collect());
            let r = pose_metrics(&[moved], &[gt]).unwrap();
            assert!((r.pa_mpjpe - base.pa_mpjpe).abs() < 1e-9);
        }
    }

    #[test]
    fn depth_examples_and_oracle() {
        let g = Grid::new(12, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let gt = DepthField::new(
            g,
            (0..g.len()).map(|_| rng.random_range(1.0..5.0)).collect(),
        )
        .unwrap();
        let region = MaskField::from_fn(g, |_, _| rng.random_bool(0.5));
        let r = depth_metrics(&gt, &gt, &region).unwrap();
        assert_eq!((r.mae, r.silog), (0.0, 0.0));
        let twice = DepthField::new(g, gt.values.iter().map(|d| 2.0 * d).collect()).unwrap();
        let r = depth_metrics(&twice, &gt, &region).unwrap();
        let mean_gt = region
            .foreground_indices()
            .map(|i| gt.values[i])
            .sum::<f64>()
            / r.count as f64;
        assert!((r.mae - mean_gt).abs() < 1e-12);
        assert!(r.silog < 1e-6);

        let pred = DepthField::new(
            g,
            gt.values
                .iter()
                .map(|d| d * rng.random_range(0.8..1.2))
                .collect(),
        )
        .unwrap();
        let r = depth_metrics(&pred, &gt, &region).unwrap();
        let (mut a, mut s1, mut s2, mut n) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..g.len() {
            if region.values[i] == 1 {
                a += (pred.values[i] - gt.values[i]).abs();
                let d = (pred.values[i] / gt.values[i]).ln();
                s1 += d;
                s2 += d * d;
                n += 1.0;
            }
        }
        assert!((r.mae - a / n).abs() < 1e-12);
        assert!((r.silog - 100.0 * (s2 / n - (s1 / n) * (s1 / n)).sqrt()).abs() < 1e-12);
        for c in [0.3, 1.7, 10.0] {
            let scaled = DepthField::new(g, pred.values.iter().map(|d| d * c).collect()).unwrap();
            assert!((depth_metrics(&scaled, &gt, &region).unwrap().silog - r.silog).abs() < 1e-9);
        }
    }

    #[test]
    fn clip_report_pools_frames() {
        let clip = crate::synthbench::generate_scene(
            crate::synthbench::Preset::Walk,
            Grid::new(32, 32).unwrap(),
            4,
            0.04,
            1,
        )
        .unwrap();
        let same = compare_clips(&clip, &clip).unwrap();
        assert_eq!(
            (same.flow.epe, same.pose.mpjpe, same.depth.mae),
            (0.0, 0.0, 0.0)
        );
        let mut pred = clip.clone();
        for f in &mut pred.frames[..3] {
            f.flow
                .values
                .iter_mut()
                .for_each(|v| *v += Vec3::new(0.003, 0.0, 0.004));
        }
        let r = compare_clips(&pred, &clip).unwrap();
        assert!((r.flow.epe - 0.005).abs() < 1e-12);
        let fg: usize = clip.frames[..3]
            .iter()
            .map(|f| f.mask.foreground_count())
            .sum();
        assert_eq!(r.flow.count, fg);
        assert!(compare_clips(
            &clip,
            &SceneClip {
                frames: clip.frames[..3].to_vec(),
                meta: clip.meta.clone()
            }
        )
        .is_err());
    }

    #[test]
    fn depth_clamps_non_positive() {
        let g = Grid::new(8, 8).unwrap();
        let gt = DepthField::constant(g, 2.0);
        let mut pred = gt.clone();
        pred.values[3] = -1.0;
        let r = depth_metrics(&pred, &gt, &MaskField::from_fn(g, |_, _| true)).unwrap();
        assert_eq!(r.clamped, 1);
        assert!(r.silog.is_finite());
        assert!(depth_metrics(&gt, &gt, &MaskField::from_fn(g, |_, _| false)).is_err());
    }
}
