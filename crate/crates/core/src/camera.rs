//! Pinhole camera with the 13-value packed layout
//! `[rotation col0 (3), rotation col1 (3), translation (3), fx/W, fy/H, cx/W, cy/H]`.
//!
//! Conventions used everywhere in the crate:
//! * extrinsics map a world point to the camera frame as `R · (p − t)`, so `t`
//!   is the camera center in world coordinates;
//! * pixel `(u, v)` has its center at the integer coordinate `(u, v)`;
//!   `u` indexes columns, `v` rows, and `v` grows with camera-frame `+Y`.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::fields::Grid;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

const DEGENERATE_NORM: f64 = 1e-8;
/// Loose enough to accept rotations rounded to single precision.
pub const ORTHO_TOL: f64 = 1e-6;
/// Minimum camera-frame depth accepted by [`CameraParams::project`].
pub const MIN_DEPTH: f64 = 1e-6;

/// Six numbers holding the first two columns of a rotation before
/// orthonormalization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rot6D(pub [f64; 6]);

impl Rot6D {
    pub fn from_matrix(m: &Mat3) -> Self {
        Rot6D([
            m[(0, 0)],
            m[(1, 0)],
            m[(2, 0)],
            m[(0, 1)],
            m[(1, 1)],
            m[(2, 1)],
        ])
    }
}

/// Gram-Schmidt map from the 6D representation to a proper rotation.
pub fn rot6d_to_matrix(r: &Rot6D) -> Result<Mat3> {
    let a = Vec3::new(r.0[0], r.0[1], r.0[2]);
    let b = Vec3::new(r.0[3], r.0[4], r.0[5]);
    let na = a.norm();
    if !(na > DEGENERATE_NORM) {
        return Err(Error::Numeric(format!(
            "rot6d column 0 is degenerate (norm {na:e})"
        )));
    }
    let c0 = a / na;
    let b_perp = b - c0 * c0.dot(&b);
    let nb = b_perp.norm();
    if !(nb > DEGENERATE_NORM) {
        return Err(Error::Numeric(format!(
            "rot6d column 1 is degenerate or parallel to column 0 (residual norm {nb:e})"
        )));
    }
    let c1 = b_perp / nb;
    let c2 = c0.cross(&c1);
    Ok(Mat3::from_columns(&[c0, c1, c2]))
}

pub fn is_rotation(m: &Mat3, tol: f64) -> bool {
    let e = m.transpose() * m - Mat3::identity();
    e.amax() <= tol && (m.determinant() - 1.0).abs() <= tol
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraParams {
    pub rotation: Mat3,
    pub translation: Vec3,
    /// `(fx/W, fy/H, cx/W, cy/H)`.
    pub intrinsics: [f64; 4],
    pub grid: Grid,
}

impl CameraParams {
    pub fn new(
        rotation: Mat3,
        translation: Vec3,
        intrinsics: [f64; 4],
        grid: Grid,
    ) -> Result<Self> {
        let cam = CameraParams {
            rotation,
            translation,
            intrinsics,
            grid,
        };
        if let Some(why) = cam.violation() {
            return Err(Error::Validation(why));
        }
        Ok(cam)
    }

    pub fn identity(intrinsics: [f64; 4], grid: Grid) -> Result<Self> {
        Self::new(Mat3::identity(), Vec3::zeros(), intrinsics, grid)
    }

    /// First broken invariant, if any.
    pub fn violation(&self) -> Option<String> {
        if !self.rotation.iter().all(|x| x.is_finite())
            || !self.translation.iter().all(|x| x.is_finite())
        {
            return Some("camera extrinsics must be finite".into());
        }
        if !is_rotation(&self.rotation, ORTHO_TOL) {
            return Some("camera rotation must be orthonormal with det +1".into());
        }
        let [fx, fy, cx, cy] = self.intrinsics;
        if !(fx > 0.0 && fy > 0.0)
            || !cx.is_finite()
            || !cy.is_finite()
            || !fx.is_finite()
            || !fy.is_finite()
        {
            return Some("normalized focal lengths must be positive and finite".into());
        }
        None
    }

    /// Focal lengths and principal point in pixels.
    pub fn pixel_intrinsics(&self) -> (f64, f64, f64, f64) {
        let w = self.grid.width as f64;
        let h = self.grid.height as f64;
        let [fx, fy, cx, cy] = self.intrinsics;
        (fx * w, fy * h, cx * w, cy * h)
    }

    pub fn to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation * (p - self.translation)
    }

    pub fn to_world(&self, x: &Vec3) -> Vec3 {
        self.rotation.transpose() * x + self.translation
    }

    /// Camera-frame ray through pixel `(u, v)` scaled to unit depth.
    pub fn pixel_ray(&self, u: f64, v: f64) -> Vec3 {
        let (fx, fy, cx, cy) = self.pixel_intrinsics();
        Vec3::new((u - cx) / fx, (v - cy) / fy, 1.0)
    }

    /// World-frame direction of [`pixel_ray`](Self::pixel_ray); a world point at
    /// camera depth `d` along the pixel is `t + d · dir`.
    pub fn world_ray(&self, u: f64, v: f64) -> Vec3 {
        self.rotation.transpose() * self.pixel_ray(u, v)
    }

    /// Project a world point; returns `(u, v, depth)`.
    pub fn project(&self, p: &Vec3) -> Result<(f64, f64, f64)> {
        let x = self.to_camera(p);
        if !(x.z > MIN_DEPTH) {
            return Err(Error::Domain(format!(
                "point is behind the camera (camera-frame z = {})",
                x.z
            )));
        }
        let (fx, fy, cx, cy) = self.pixel_intrinsics();
        Ok((fx * x.x / x.z + cx, fy * x.y / x.z + cy, x.z))
    }

    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Result<Vec3> {
        if !(depth > 0.0) {
            return Err(Error::Domain(format!(
                "unproject depth must be > 0, got {depth}"
            )));
        }
        Ok(self.to_world(&(self.pixel_ray(u, v) * depth)))
    }
}

pub fn camera_pack(c: &CameraParams) -> [f64; 13] {
    let r = Rot6D::from_matrix(&c.rotation).0;
    let mut out = [0.0; 13];
    out[..6].copy_from_slice(&r);
    out[6] = c.translation.x;
    out[7] = c.translation.y;
    out[8] = c.translation.z;
    out[9..].copy_from_slice(&c.intrinsics);
    out
}

pub fn camera_unpack(v: &[f64; 13], grid: Grid) -> Result<CameraParams> {
    let rot = rot6d_to_matrix(&Rot6D([v[0], v[1], v[2], v[3], v[4], v[5]]))?;
    CameraParams::new(
        rot,
        Vec3::new(v[6], v[7], v[8]),
        [v[9], v[10], v[11], v[12]],
        grid,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid100() -> Grid {
        Grid::new(100, 100).unwrap()
    }

    fn cam100() -> CameraParams {
        CameraParams::identity([1.0, 1.0, 0.5, 0.5], grid100()).unwrap()
    }

    fn random_rotation(rng: &mut ChaCha8Rng) -> Mat3 {
        loop {
            let r: [f64; 6] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            if let Ok(m) = rot6d_to_matrix(&Rot6D(r)) {
                return m;
            }
        }
    }

    #[test]
    fn rot6d_canonical_and_scaled() {
        let id = rot6d_to_matrix(&Rot6D([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])).unwrap();
        assert_eq!(id, Mat3::identity());
        let id2 = rot6d_to_matrix(&Rot6D([2.0, 0.0, 0.0, 0.0, 3.0, 0.0])).unwrap();
        assert_eq!(id2, Mat3::identity());
    }

    #[test]
    fn rot6d_hand_gram_schmidt() {
        let m = rot6d_to_matrix(&Rot6D([0.0, 1.0, 0.0, 1.0, 1.0, 0.0])).unwrap();
        let expect = Mat3::from_columns(&[
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 0.0, -1.0),
        ]);
        assert!((m - expect).amax() < 1e-15);
    }

    #[test]
    fn rot6d_degenerate_columns() {
        let e = rot6d_to_matrix(&Rot6D([0.0, 0.0, 0.0, 0.0, 1.0, 0.0])).unwrap_err();
        assert!(e.to_string().contains("column 0"));
        let e = rot6d_to_matrix(&Rot6D([1.0, 0.0, 0.0, 2.0, 0.0, 0.0])).unwrap_err();
        assert!(e.to_string().contains("column 1"));
    }

    #[test]
    fn rot6d_orthonormal_and_scale_invariant_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let r: [f64; 6] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let Ok(m) = rot6d_to_matrix(&Rot6D(r)) else {
                continue;
            };
            assert!((m.transpose() * m - Mat3::identity()).amax() < 1e-9);
            assert!((m.determinant() - 1.0).abs() < 1e-9);
            let s = rng.random_range(0.01..100.0);
            let scaled = Rot6D(r.map(|x| x * s));
            let m2 = rot6d_to_matrix(&scaled).unwrap();
            assert!((m - m2).amax() < 1e-9);
        }
    }

    #[test]
    fn pack_layout() {
        let c = cam100();
        assert_eq!(
            camera_pack(&c),
            [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.5, 0.5]
        );
        let mut c2 = c.clone();
        c2.translation = Vec3::new(0.0, 0.0, 2.0);
        assert_eq!(&camera_pack(&c2)[6..9], &[0.0, 0.0, 2.0]);
        assert_eq!(camera_unpack(&camera_pack(&c), grid100()).unwrap(), c);
    }

    #[test]
    fn unpack_scaled_rotation_slots() {
        let mut v = camera_pack(&cam100());
        for x in &mut v[..6] {
            *x *= 5.0;
        }
        assert_eq!(
            camera_unpack(&v, grid100()).unwrap().rotation,
            Mat3::identity()
        );
    }

    #[test]
    fn pack_unpack_idempotent_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let rot = random_rotation(&mut rng);
            let t = Vec3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            );
            let intr = [
                rng.random_range(0.5..2.0),
                rng.random_range(0.5..2.0),
                0.5,
                0.5,
            ];
            let c = CameraParams::new(rot, t, intr, grid100()).unwrap();
            let once = camera_pack(&camera_unpack(&camera_pack(&c), grid100()).unwrap());
            let twice = camera_pack(&camera_unpack(&once, grid100()).unwrap());
            for (a, b) in once.iter().zip(twice.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
            for (a, b) in once.iter().zip(camera_pack(&c).iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn project_examples() {
        let c = cam100();
        assert_eq!(
            c.project(&Vec3::new(0.0, 0.0, 2.0)).unwrap(),
            (50.0, 50.0, 2.0)
        );
        assert_eq!(
            c.project(&Vec3::new(1.0, 0.0, 2.0)).unwrap(),
            (100.0, 50.0, 2.0)
        );
        assert!(matches!(
            c.project(&Vec3::new(0.0, 0.0, -1.0)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn unproject_examples() {
        let c = cam100();
        assert_eq!(
            c.unproject(50.0, 50.0, 2.0).unwrap(),
            Vec3::new(0.0, 0.0, 2.0)
        );
        assert_eq!(
            c.unproject(0.0, 0.0, 1.0).unwrap(),
            Vec3::new(-0.5, -0.5, 1.0)
        );
        assert!(matches!(c.unproject(1.0, 1.0, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn project_unproject_round_trip_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..1000 {
            let rot = random_rotation(&mut rng);
            let t = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let c = CameraParams::new(rot, t, [1.1, 0.9, 0.45, 0.55], grid100()).unwrap();
            let (u, v) = (rng.random_range(0.0..100.0), rng.random_range(0.0..100.0));
            let d = rng.random_range(0.1..20.0);
            let p = c.unproject(u, v, d).unwrap();
            let (u2, v2, d2) = c.project(&p).unwrap();
            assert!((u - u2).abs() < 1e-9 && (v - v2).abs() < 1e-9 && (d - d2).abs() < 1e-9);
            let p2 = c.unproject(u2, v2, d2).unwrap();
            assert!((p - p2).norm() < 1e-9);
        }
    }
}
