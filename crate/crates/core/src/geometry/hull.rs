use nalgebra::Vector2;

use crate::error::{Error, Result};

pub type Point2 = Vector2<f64>;

/// Convex polygon with counter-clockwise vertices. One vertex is a point,
/// two vertices a segment.
#[derive(Clone, Debug, PartialEq)]
pub struct Polygon2D {
    pub vertices: Vec<Point2>,
}

impl Polygon2D {
    pub fn is_degenerate(&self) -> bool {
        self.vertices.len() < 3
    }

    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| cross(&self.vertices[i], &self.vertices[(i + 1) % n]))
            .sum::<f64>()
            * 0.5
    }
}

#[inline]
fn cross(a: &Point2, b: &Point2) -> f64 {
    a.x * b.y - a.y * b.x
}

#[inline]
fn turn(o: &Point2, a: &Point2, b: &Point2) -> f64 {
    cross(&(a - o), &(b - o))
}

const DUP: f64 = 1e-9;

/// Andrew's monotone chain; collinear boundary points are dropped.
pub fn convex_hull(points: &[Point2]) -> Result<Polygon2D> {
    if points.is_empty() {
        return Err(Error::Domain("convex hull of an empty point set".into()));
    }
    if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(Error::Domain("convex hull input is not finite".into()));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup_by(|a, b| (*a - *b).norm() <= DUP);
    if pts.len() < 3 {
        return Ok(Polygon2D { vertices: pts });
    }
    let mut hull: Vec<Point2> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point2>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for p in iter {
            while hull.len() >= start + 2
                && turn(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0
            {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    hull.dedup_by(|a, b| (*a - *b).norm() <= DUP);
    while hull.len() > 1 && (hull[0] - hull[hull.len() - 1]).norm() <= DUP {
        hull.pop();
    }
    Ok(Polygon2D { vertices: hull })
}

/// Closest point on segment `[a, b]` to `q`.
fn closest_on_segment(q: &Point2, a: &Point2, b: &Point2) -> Point2 {
    let ab = b - a;
    let l2 = ab.norm_squared();
    if l2 == 0.0 {
        return *a;
    }
    a + ab * ((q - a).dot(&ab) / l2).clamp(0.0, 1.0)
}

fn closest_on_boundary(q: &Point2, poly: &Polygon2D) -> Point2 {
    let v = &poly.vertices;
    let n = v.len();
    if n == 1 {
        return v[0];
    }
    let edges = if n == 2 { 1 } else { n };
    let mut best = v[0];
    let mut best_d = f64::INFINITY;
    for i in 0..edges {
        let c = closest_on_segment(q, &v[i], &v[(i + 1) % n]);
        let d = (q - c).norm_squared();
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

fn inside(q: &Point2, poly: &Polygon2D) -> bool {
    let v = &poly.vertices;
    let n = v.len();
    n >= 3 && (0..n).all(|i| turn(&v[i], &v[(i + 1) % n], q) >= 0.0)
}

/// Signed Euclidean distance to the polygon boundary, negative inside.
/// Points and segments have no interior.
pub fn polygon_signed_distance(q: &Point2, poly: &Polygon2D) -> f64 {
    polygon_signed_distance_grad(q, poly).0
}

/// Signed distance and its gradient with respect to `q` (zero on the boundary).
pub fn polygon_signed_distance_grad(q: &Point2, poly: &Polygon2D) -> (f64, Point2) {
    let c = closest_on_boundary(q, poly);
    let d = (q - c).norm();
    let sign = if inside(q, poly) { -1.0 } else { 1.0 };
    let g = if d > 0.0 {
        (q - c) / d * sign
    } else {
        Point2::zeros()
    };
    (sign * d, g)
}
