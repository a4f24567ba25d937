use nalgebra::SymmetricEigen;

use super::hull::Point2;
use crate::camera::{CameraParams, Mat3, Vec3};
use crate::error::{Error, Result};
use crate::fields::{DepthField, MaskField};
use crate::kinematics::fallback_axis;
use crate::rng::SplitMix64;

pub const RANSAC_ITERATIONS: usize = 256;
pub const RANSAC_INLIER_M: f64 = 0.02;
pub const RANSAC_MIN_POINTS: usize = 50;
/// Slack above the lowest foreground point for ground candidates, meters.
pub const GROUND_SLACK_M: f64 = 0.05;

/// `{x : n·x = offset}` with unit normal pointing up (`n.y > 0`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plane {
    pub normal: Vec3,
    pub offset: f64,
}

impl Plane {
    pub fn new(normal: Vec3, offset: f64) -> Result<Self> {
        let n = normal.norm();
        if !(n > 0.0) || !n.is_finite() || !offset.is_finite() {
            return Err(Error::Numeric(
                "plane normal must be finite and non-zero".into(),
            ));
        }
        let (mut normal, mut offset) = (normal / n, offset / n);
        if normal.y < 0.0 {
            normal = -normal;
            offset = -offset;
        }
        Ok(Plane { normal, offset })
    }

    /// Signed height of `x` above the plane.
    pub fn height(&self, x: &Vec3) -> f64 {
        self.normal.dot(x) - self.offset
    }

    /// In-plane orthonormal basis `(e1, e2)` with `e1 × e2 = n`.
    pub fn basis(&self) -> (Vec3, Vec3) {
        let e1 = fallback_axis(&self.normal);
        (e1, self.normal.cross(&e1))
    }

    /// Ground-plane coordinates of the orthogonal projection of `x`.
    pub fn to_2d(&self, x: &Vec3) -> Point2 {
        let (e1, e2) = self.basis();
        Point2::new(e1.dot(x), e2.dot(x))
    }
}

fn least_squares(points: &[Vec3], idx: &[usize]) -> Result<Plane> {
    let n = idx.len() as f64;
    let c = idx.iter().fold(Vec3::zeros(), |a, &i| a + points[i]) / n;
    let mut cov = Mat3::zeros();
    for &i in idx {
        let d = points[i] - c;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let k = eig.eigenvalues.imin();
    let normal: Vec3 = eig.eigenvectors.column(k).into();
    Plane::new(normal, normal.dot(&c))
}

/// RANSAC over 3-point samples drawn with SplitMix64, followed by a
/// least-squares refit over the best inlier set.
pub fn fit_plane_ransac(points: &[Vec3], seed: u64) -> Result<Plane> {
    if points.len() < RANSAC_MIN_POINTS {
        return Err(Error::InsufficientSupport {
            found: points.len(),
            required: RANSAC_MIN_POINTS,
        });
    }
    let mut rng = SplitMix64::new(seed);
    let n = points.len() as u64;
    let mut best: Option<(usize, Plane)> = None;
    for _ in 0..RANSAC_ITERATIONS {
        let a = rng.below(n) as usize;
        let mut b = rng.below(n) as usize;
        while b == a {
            b = rng.below(n) as usize;
        }
        let mut c = rng.below(n) as usize;
        while c == a || c == b {
            c = rng.below(n) as usize;
        }
        let nrm = (points[b] - points[a]).cross(&(points[c] - points[a]));
        if nrm.norm() < 1e-12 {
            continue;
        }
        let plane = Plane::new(nrm, nrm.dot(&points[a]))?;
        let count = points
            .iter()
            .filter(|p| plane.height(p).abs() < RANSAC_INLIER_M)
            .count();
        if best.is_none_or(|(k, _)| count > k) {
            best = Some((count, plane));
        }
    }
    let (_, plane) =
        best.ok_or_else(|| Error::Numeric("every RANSAC sample was collinear".into()))?;
    let inliers: Vec<usize> = (0..points.len())
        .filter(|&i| plane.height(&points[i]).abs() < RANSAC_INLIER_M)
        .collect();
    if inliers.len() < 3 {
        return Ok(plane);
    }
    least_squares(points, &inliers)
}

/// Fit the ground below the subject from background pixels whose world
/// height is under the lowest foreground point plus [`GROUND_SLACK_M`].
pub fn ransac_ground_plane(
    depth: &DepthField,
    mask: &MaskField,
    camera: &CameraParams,
    seed: u64,
) -> Result<Plane> {
    let g = depth.grid;
    let unproject = |i: usize| {
        let (u, v) = g.coords(i);
        camera.unproject(u as f64, v as f64, depth.values[i]).ok()
    };
    let min_y = mask
        .foreground_indices()
        .filter_map(unproject)
        .map(|p| p.y)
        .fold(f64::INFINITY, f64::min);
    if !min_y.is_finite() {
        return Err(Error::DegenerateMask(
            "no foreground point to bound the ground search".into(),
        ));
    }
    let candidates: Vec<Vec3> = (0..g.len())
        .filter(|&i| !mask.is_fg(i) && depth.values[i].is_finite())
        .filter_map(unproject)
        .filter(|p| p.y < min_y + GROUND_SLACK_M)
        .collect();
    fit_plane_ransac(&candidates, seed)
}
