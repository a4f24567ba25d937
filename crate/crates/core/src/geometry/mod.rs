//! Mask signed distance, Sobel gradients, convex hulls, polygon signed
//! distance and ground-plane fitting.

mod hull;
mod plane;
mod sdf;
mod sobel;

pub use hull::{
    convex_hull, polygon_signed_distance, polygon_signed_distance_grad, Point2, Polygon2D,
};
pub use plane::{
    fit_plane_ransac, ransac_ground_plane, Plane, RANSAC_INLIER_M, RANSAC_ITERATIONS,
    RANSAC_MIN_POINTS,
};
pub use sdf::{mask_sdf, squared_edt, SignedDistanceField};
pub use sobel::{flatten_flow, grad_norm, grad_norm_depth, grad_norm_flow, sobel, sobel_adjoint};
