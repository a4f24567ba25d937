//! Central finite differences against the analytic gradients on seeded
//! fixtures. Discrete selections (bone assignment, plane, contacts, hull,
//! window reference) are frozen at the base point; a perturbation that flips
//! a hinge branch triggers a fresh fixture.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::com::{c_com_frozen, com_selection};
use super::silh::{silh_local, silh_weights};
use super::skel::{c_skel_frozen, pixel_term, skel_selection};
use super::{c_cam, c_dist, c_eff_with_reference, c_silh, eff_reference, Constraint, Tolerances};
use crate::camera::{CameraParams, Mat3, Vec3};
use crate::error::{Error, Result};
use crate::fields::{DepthField, FlowField, Grid, MaskField};
use crate::geometry::flatten_flow;
use crate::kinematics::{forward_kinematics, MassProfile, Pose, Skeleton};
use crate::rng::{chacha, derive_seed};

pub const MAX_REDRAWS: usize = 10;
pub const REL_ERR_BOUND: f64 = 1e-4;
pub const REL_ERR_BOUND_CAM: f64 = 1e-6;
const SIDE: usize = 64;

/// Pass threshold on the maximum relative error.
pub fn rel_err_bound(c: Constraint) -> f64 {
    if c == Constraint::Cam {
        REL_ERR_BOUND_CAM
    } else {
        REL_ERR_BOUND
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub constraint: Constraint,
    pub max_rel_err: f64,
    /// Number of gradient entries compared.
    pub entries: usize,
    pub redraws: usize,
}

/// Largest `|g_analytic − g_fd| / max(|g_fd|, 1e-8)` over every gradient
/// entry of a seeded fixture.
pub fn finite_difference_check(c: Constraint, seed: u64, step: f64) -> Result<GradCheckReport> {
    if !(1e-8..=1e-3).contains(&step) {
        return Err(Error::Domain(format!(
            "finite-difference step {step} outside [1e-8, 1e-3]"
        )));
    }
    for attempt in 0..=MAX_REDRAWS {
        let mut rng = chacha(derive_seed(seed, c as u64), attempt as u64);
        let mut acc = Acc::default();
        let done = match c {
            Constraint::Silh => check_silh(&mut rng, step, &mut acc),
            Constraint::Skel => check_skel(&mut rng, step, &mut acc),
            Constraint::Com => check_com(&mut rng, step, &mut acc),
            Constraint::Eff => check_eff(&mut rng, step, &mut acc),
            Constraint::Dist => check_dist(&mut rng, step, &mut acc),
            Constraint::Cam => check_cam(&mut rng, step, &mut acc),
        }?;
        if done {
            return Ok(GradCheckReport {
                constraint: c,
                max_rel_err: acc.max,
                entries: acc.n,
                redraws: attempt,
            });
        }
    }
    Err(Error::Inconclusive(format!(
        "{c}: hinge branches flipped on {} consecutive fixtures",
        MAX_REDRAWS + 1
    )))
}

#[derive(Default)]
struct Acc {
    max: f64,
    n: usize,
}

impl Acc {
    fn push(&mut self, ga: f64, gfd: f64) {
        let e = (ga - gfd).abs() / gfd.abs().max(1e-8);
        self.max = if e.is_nan() {
            f64::INFINITY
        } else {
            self.max.max(e)
        };
        self.n += 1;
    }
}

/// Central difference of `f(x)` around `x0`; `f` writes `x` into the
/// variable and evaluates. Returns `None` when the branch signature differs
/// from `base` on either side.
fn central<S: PartialEq>(
    x0: f64,
    h: f64,
    base: &S,
    mut f: impl FnMut(f64) -> (f64, S),
) -> Option<f64> {
    let (fp, sp) = f(x0 + h);
    let (fm, sm) = f(x0 - h);
    f(x0);
    (sp == *base && sm == *base).then(|| (fp - fm) / (2.0 * h))
}

fn grid() -> Grid {
    Grid::new(SIDE, SIDE).unwrap()
}

fn smooth_field(rng: &mut ChaCha8Rng, g: Grid, offset: f64, amp: f64, noise: f64) -> Vec<f64> {
    let terms: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.random_range(0.05..0.3),
                rng.random_range(0.05..0.3),
                rng.random_range(0.0..6.3),
                amp * rng.random_range(0.3..1.0),
            )
        })
        .collect();
    (0..g.len())
        .map(|i| {
            let (u, v) = g.coords(i);
            let s: f64 = terms
                .iter()
                .map(|(a, b, p, w)| w * (a * u as f64 + b * v as f64 + p).sin())
                .sum();
            offset + s + noise * rng.random_range(-1.0..1.0)
        })
        .collect()
}

fn blob_mask(rng: &mut ChaCha8Rng, g: Grid) -> MaskField {
    let (cx, cy) = (rng.random_range(24.0..40.0), rng.random_range(24.0..40.0));
    let (rx, ry) = (rng.random_range(8.0..18.0), rng.random_range(8.0..18.0));
    MaskField::from_fn(g, |u, v| {
        ((u as f64 - cx) / rx).powi(2) + ((v as f64 - cy) / ry).powi(2) < 1.0
    })
}

fn random_pose(rng: &mut ChaCha8Rng, spread: f64, root: Vec3) -> Pose {
    let s = Skeleton::smpl24();
    let mut q = s.rest_angles();
    q.root = root;
    for a in q.angles.iter_mut() {
        *a = Vec3::new(
            rng.random_range(-spread..spread),
            rng.random_range(-spread..spread),
            rng.random_range(-spread..spread),
        );
    }
    forward_kinematics(&q, s)
}

fn jitter(rng: &mut ChaCha8Rng, p: &Pose, sigma: f64) -> Pose {
    let n = Normal::new(0.0, sigma).unwrap();
    Pose::new(
        p.joints
            .iter()
            .map(|x| x + Vec3::new(n.sample(rng), n.sample(rng), n.sample(rng)))
            .collect(),
    )
}

fn check_silh(rng: &mut ChaCha8Rng, h: f64, acc: &mut Acc) -> Result<bool> {
    let g = grid();
    let tol = Tolerances::default();
    let mask = blob_mask(rng, g);
    let depth = DepthField::new(g, smooth_field(rng, g, 3.0, 0.3, 0.02))?;
    let flow = FlowField::new(g, {
        let (a, b, c) = (
            smooth_field(rng, g, 0.0, 0.1, 0.01),
            smooth_field(rng, g, 0.0, 0.1, 0.01),
            smooth_field(rng, g, 0.0, 0.1, 0.01),
        );
        (0..g.len()).map(|i| Vec3::new(a[i], b[i], c[i])).collect()
    })?;
    let r = c_silh(&depth, &flow, &mask, &tol)?;
    let w = silh_weights(&mask, &tol)?;
    let gd = &r.grad_depth.as_ref().unwrap()[0];
    let gf = &r.grad_flow.as_ref().unwrap()[0];
    let mut d = depth.values.clone();
    for i in 0..g.len() {
        let fd = central(d[i], h, &(), |x| {
            d[i] = x;
            (silh_local(g, 1, &d, &w, i), ())
        });
        acc.push(gd[i], fd.unwrap());
    }
    let mut f = flatten_flow(&flow);
    for i in 0..g.len() {
        for c in 0..3 {
            let k = 3 * i + c;
            let fd = central(f[k], h, &(), |x| {
                f[k] = x;
                (silh_local(g, 3, &f, &w, i), ())
            });
            acc.push(gf[i][c], fd.unwrap());
        }
    }
    Ok(true)
}

fn check_skel(rng: &mut ChaCha8Rng, h: f64, acc: &mut Acc) -> Result<bool> {
    let g = grid();
    let s = Skeleton::smpl24();
    let tol = Tolerances::default();
    let cam = CameraParams::identity([1.0, 1.0, 0.5, 0.5], g)?;
    let pose = random_pose(rng, 0.3, Vec3::new(0.0, -0.1, 3.0));
    let next = jitter(rng, &pose, 0.03);
    let mask = MaskField::from_fn(g, |u, v| (22..42).contains(&u) && (12..52).contains(&v));
    let depth = DepthField::new(
        g,
        (0..g.len())
            .map(|_| 3.0 + rng.random_range(-0.1..0.1))
            .collect(),
    )?;
    let n = Normal::new(0.0, 0.3).unwrap();
    let flow = FlowField::new(
        g,
        (0..g.len())
            .map(|_| Vec3::new(n.sample(rng), n.sample(rng), n.sample(rng)))
            .collect(),
    )?;
    let sel = skel_selection(&depth, &pose, &mask, &cam, s)?;
    let (r, active) = c_skel_frozen(&flow, &depth, &pose, &next, &cam, s, &tol, &sel)?;
    let inv_n = 1.0 / sel.len() as f64;
    let gd = &r.grad_depth.as_ref().unwrap()[0];
    let gf = &r.grad_flow.as_ref().unwrap()[0];
    let gp = r.grad_pose.as_ref().unwrap();

    for (k, (i, hit)) in sel.iter().enumerate() {
        let i = *i;
        let (u, v) = g.coords(i);
        let term = |d: f64, f: Vec3| {
            let x = cam.unproject(u as f64, v as f64, d).unwrap();
            let t = pixel_term(&x, &f, hit, &pose, &next, s, &tol);
            (t.hinge.max(0.0) * inv_n, t.hinge > 0.0)
        };
        let Some(fd) = central(depth.values[i], h, &active[k], |x| term(x, flow.values[i])) else {
            return Ok(false);
        };
        acc.push(gd[i], fd);
        for c in 0..3 {
            let fd = central(flow.values[i][c], h, &active[k], |x| {
                let mut f = flow.values[i];
                f[c] = x;
                term(depth.values[i], f)
            });
            let Some(fd) = fd else { return Ok(false) };
            acc.push(gf[i][c], fd);
        }
    }
    let mut poses = [pose.clone(), next.clone()];
    for w in 0..2 {
        for j in 0..poses[w].joints.len() {
            for c in 0..3 {
                let fd = central(poses[w].joints[j][c], h, &active, |x| {
                    poses[w].joints[j][c] = x;
                    let (r, a) =
                        c_skel_frozen(&flow, &depth, &poses[0], &poses[1], &cam, s, &tol, &sel)
                            .unwrap();
                    (r.value, a)
                });
                let Some(fd) = fd else { return Ok(false) };
                acc.push(gp[w][j][c], fd);
            }
        }
    }
    Ok(true)
}

/// Camera 1.5 m above the plane y = 0, pitched down 30°, with a box-shaped
/// foreground at 2 m depth.
pub(crate) fn ground_fixture(g: Grid) -> Result<(DepthField, MaskField, CameraParams)> {
    let a: f64 = 30f64.to_radians();
    let rot = Mat3::new(
        -1.0,
        0.0,
        0.0,
        0.0,
        -a.cos(),
        -a.sin(),
        0.0,
        -a.sin(),
        a.cos(),
    );
    let cam = CameraParams::new(rot, Vec3::new(0.0, 1.5, 0.0), [1.0, 1.0, 0.5, 0.5], g)?;
    let (w, hgt) = (g.width, g.height);
    let mask = MaskField::from_fn(g, |u, v| {
        (w * 2 / 5..w * 3 / 5).contains(&u) && (hgt / 5..hgt * 2 / 5).contains(&v)
    });
    let depth = (0..g.len())
        .map(|i| {
            let (u, v) = g.coords(i);
            let ray = cam.world_ray(u as f64, v as f64);
            if mask.is_fg(i) {
                2.0
            } else if ray.y < -1e-3 {
                -1.5 / ray.y
            } else {
                50.0
            }
        })
        .collect();
    Ok((DepthField::new(g, depth)?, mask, cam))
}

fn check_com(rng: &mut ChaCha8Rng, h: f64, acc: &mut Acc) -> Result<bool> {
    let g = grid();
    let s = Skeleton::smpl24();
    let m = MassProfile::de_leva();
    let tol = Tolerances::default();
    let (depth, mask, cam) = ground_fixture(g)?;
    let rest = s.rest_pose();
    let lf = s.joint("left_foot").unwrap();
    let mut pose = rest.translated(&Vec3::new(
        rng.random_range(-0.5..0.5),
        0.02 - rest.joints[lf].y,
        rng.random_range(2.0..3.0),
    ));
    let keep = [s.joint("left_ankle").unwrap(), lf];
    let n = Normal::new(0.0, 0.03).unwrap();
    for (j, p) in pose.joints.iter_mut().enumerate() {
        if !keep.contains(&j) {
            *p += Vec3::new(n.sample(rng), n.sample(rng), n.sample(rng));
        }
    }
    for name in ["right_ankle", "right_foot"] {
        pose.joints[s.joint(name).unwrap()].y += 0.4;
    }
    let sel = com_selection(&pose, &depth, &mask, &cam, s, &tol, rng.random())?;
    let (r, sig) = c_com_frozen(&pose, m, &sel);
    if sig.is_none() {
        return Ok(false);
    }
    let gp = &r.grad_pose.as_ref().unwrap()[0];
    let mut p = pose.clone();
    for j in 0..p.joints.len() {
        for c in 0..3 {
            let fd = central(p.joints[j][c], h, &true, |x| {
                p.joints[j][c] = x;
                let (r, sig) = c_com_frozen(&p, m, &sel);
                (r.value, sig.is_some())
            });
            let Some(fd) = fd else { return Ok(false) };
            acc.push(gp[j][c], fd);
        }
    }
    Ok(true)
}

fn check_eff(rng: &mut ChaCha8Rng, h: f64, acc: &mut Acc) -> Result<bool> {
    let s = Skeleton::smpl24();
    let tol = Tolerances::default();
    let w = 9;
    let p0 = random_pose(rng, 0.5, Vec3::new(0.0, 0.9, 3.0));
    let pt = random_pose(rng, 0.5, Vec3::new(0.3, 0.9, 3.2));
    let mut poses = vec![p0.clone(); w];
    poses[w - 1] = pt;
    let reference = eff_reference(&poses, s)?;
    for i in 1..w - 1 {
        poses[i] = jitter(rng, &reference[i], 0.03);
    }
    let (r, active) = c_eff_with_reference(&poses, &reference, &tol);
    let gp = r.grad_pose.as_ref().unwrap();
    if gp[0].iter().chain(&gp[w - 1]).any(|v| *v != Vec3::zeros()) {
        acc.max = f64::INFINITY;
        return Ok(true);
    }
    for i in 1..w - 1 {
        for j in 0..poses[i].joints.len() {
            for c in 0..3 {
                let fd = central(poses[i].joints[j][c], h, &active, |x| {
                    poses[i].joints[j][c] = x;
                    let (r, a) = c_eff_with_reference(&poses, &reference, &tol);
                    (r.value, a)
                });
                let Some(fd) = fd else { return Ok(false) };
                acc.push(gp[i][j][c], fd);
            }
        }
    }
    Ok(true)
}

fn check_dist(rng: &mut ChaCha8Rng, h: f64, acc: &mut Acc) -> Result<bool> {
    let g = grid();
    let tol = Tolerances::default();
    let teacher = DepthField::new(g, smooth_field(rng, g, 3.0, 0.3, 0.0))?;
    let depth = DepthField::new(
        g,
        teacher
            .values
            .iter()
            .map(|t| t + rng.random_range(-0.3..0.3))
            .collect(),
    )?;
    let tpose = random_pose(rng, 0.3, Vec3::new(0.0, 0.0, 3.0));
    let pose = jitter(rng, &tpose, 0.05);
    let r = c_dist(&depth, &pose, &teacher, &tpose, &tol)?;
    let gd = &r.grad_depth.as_ref().unwrap()[0];
    let gp = &r.grad_pose.as_ref().unwrap()[0];
    let inv_o = 1.0 / g.len() as f64;
    for i in 0..g.len() {
        let term = |d: f64| {
            let e = (d - teacher.values[i]).abs() - tol.rho_depth;
            (e.max(0.0) * inv_o, e > 0.0)
        };
        let base = term(depth.values[i]).1;
        let Some(fd) = central(depth.values[i], h, &base, term) else {
            return Ok(false);
        };
        acc.push(gd[i], fd);
    }
    let active = |p: &Pose| -> Vec<bool> {
        p.joints
            .iter()
            .zip(&tpose.joints)
            .map(|(a, b)| (a - b).norm() > tol.rho_pose)
            .collect()
    };
    let base = active(&pose);
    let mut p = pose.clone();
    for j in 0..p.joints.len() {
        for c in 0..3 {
            let fd = central(p.joints[j][c], h, &base, |x| {
                p.joints[j][c] = x;
                (
                    c_dist(&depth, &p, &teacher, &tpose, &tol).unwrap().value,
                    active(&p),
                )
            });
            let Some(fd) = fd else { return Ok(false) };
            acc.push(gp[j][c], fd);
        }
    }
    Ok(true)
}

fn check_cam(rng: &mut ChaCha8Rng, h: f64, acc: &mut Acc) -> Result<bool> {
    let g = grid();
    let mut cams: Vec<CameraParams> = (0..5)
        .map(|_| {
            let k = [
                1.0 + rng.random_range(-0.1..0.1),
                1.0 + rng.random_range(-0.1..0.1),
                0.5 + rng.random_range(-0.05..0.05),
                0.5 + rng.random_range(-0.05..0.05),
            ];
            CameraParams::identity(k, g)
        })
        .collect::<Result<_>>()?;
    let r = c_cam(&cams)?;
    let gk = r.grad_intrinsics.unwrap();
    for i in 0..cams.len() {
        for k in 0..4 {
            let fd = central(cams[i].intrinsics[k], h, &(), |x| {
                cams[i].intrinsics[k] = x;
                (c_cam(&cams).unwrap().value, ())
            });
            acc.push(gk[i][k], fd.unwrap());
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_constraint_passes_one_seed() {
        for c in Constraint::ALL {
            let r = finite_difference_check(c, 1, 1e-6).unwrap();
            assert!(r.max_rel_err <= rel_err_bound(c), "{c}: {}", r.max_rel_err);
            assert!(r.entries > 0);
        }
    }

    #[test]
    fn step_out_of_range() {
        assert!(matches!(
            finite_difference_check(Constraint::Cam, 0, 1e-2),
            Err(Error::Domain(_))
        ));
        assert!(finite_difference_check(Constraint::Cam, 0, 1e-9).is_err());
    }

    #[test]
    fn silh_step_from_example() {
        let r = finite_difference_check(Constraint::Silh, 4, 1e-5).unwrap();
        assert!(r.max_rel_err <= 1e-4, "{}", r.max_rel_err);
    }
}
