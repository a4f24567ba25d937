use super::ConstraintResult;
use crate::camera::CameraParams;
use crate::error::{Error, Result};

/// Mean pairwise squared distance between per-frame normalized intrinsics,
/// `(1/T²) Σ_i Σ_j ‖K_i − K_j‖²`.
pub fn c_cam(cameras: &[CameraParams]) -> Result<ConstraintResult> {
    let t = cameras.len();
    if t < 2 {
        return Err(Error::Domain(format!(
            "c_cam needs at least 2 cameras, got {t}"
        )));
    }
    let inv = 1.0 / (t * t) as f64;
    let mut value = 0.0;
    let mut grad = vec![[0.0; 4]; t];
    for i in 0..t {
        for j in 0..t {
            for k in 0..4 {
                let d = cameras[i].intrinsics[k] - cameras[j].intrinsics[k];
                value += d * d * inv;
                // Each unordered pair appears twice in the double sum.
                grad[i][k] += 4.0 * d * inv;
            }
        }
    }
    Ok(ConstraintResult {
        value,
        grad_intrinsics: Some(grad),
        ..Default::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Grid;

    fn cam(k: [f64; 4]) -> CameraParams {
        CameraParams::identity(k, Grid::new(8, 8).unwrap()).unwrap()
    }

    #[test]
    fn examples() {
        let a = cam([1.0, 1.0, 0.5, 0.5]);
        assert_eq!(
            c_cam(&[a.clone(), a.clone(), a.clone()]).unwrap().value,
            0.0
        );
        let b = cam([1.1, 1.0, 0.5, 0.5]);
        assert!((c_cam(&[a.clone(), b]).unwrap().value - 0.005).abs() < 1e-15);
        assert!(c_cam(&[a]).is_err());
    }
}
