use crate::camera::{CameraParams, Vec3};
use crate::error::{Error, Result};
use crate::fields::{FlowField, Grid, RasterBuffers, BACKGROUND_ID};

/// Triangles with any vertex closer than this camera depth are dropped.
pub const NEAR_CLIP: f64 = 0.01;

#[inline]
fn edge(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

/// Fill rule for pixel centers exactly on an edge of a positively wound
/// triangle: the edge owns them when it runs toward +v, or along −u when
/// horizontal. A shared edge is traversed in opposite directions by its two
/// triangles, so exactly one of them claims the center.
#[inline]
fn owns(a: (f64, f64), b: (f64, f64)) -> bool {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    dy > 0.0 || (dy == 0.0 && dx < 0.0)
}

/// Hard-coverage z-buffer rasterization. Barycentrics are perspective
/// correct and listed in the triangle's own vertex order; depth is camera z.
/// Triangles are visited in id order and only a strictly nearer surface
/// replaces a stored one, so depth ties keep the lower id.
pub fn rasterize_frame(
    vertices: &[Vec3],
    triangles: &[[u32; 3]],
    camera: &CameraParams,
    grid: Grid,
) -> RasterBuffers {
    let mut out = RasterBuffers::empty(grid);
    let (fx, fy, cx, cy) = camera.pixel_intrinsics();
    let cam: Vec<Vec3> = vertices.iter().map(|v| camera.to_camera(v)).collect();
    let screen: Vec<(f64, f64)> = cam
        .iter()
        .map(|x| (fx * x.x / x.z + cx, fy * x.y / x.z + cy))
        .collect();
    let (w, h) = (grid.width as f64, grid.height as f64);

    for (id, tri) in triangles.iter().enumerate() {
        let idx = tri.map(|k| k as usize);
        if idx.iter().any(|&k| !(cam[k].z >= NEAR_CLIP)) {
            continue;
        }
        let mut order = [0usize, 1, 2];
        let mut area = edge(screen[idx[0]], screen[idx[1]], screen[idx[2]]);
        if !area.is_finite() || area == 0.0 {
            continue;
        }
        if area < 0.0 {
            order.swap(1, 2);
            area = -area;
        }
        let p = order.map(|o| screen[idx[o]]);
        let z = order.map(|o| cam[idx[o]].z);
        let umin = p
            .iter()
            .map(|q| q.0)
            .fold(f64::INFINITY, f64::min)
            .ceil()
            .max(0.0);
        let umax = p
            .iter()
            .map(|q| q.0)
            .fold(f64::NEG_INFINITY, f64::max)
            .floor()
            .min(w - 1.0);
        let vmin = p
            .iter()
            .map(|q| q.1)
            .fold(f64::INFINITY, f64::min)
            .ceil()
            .max(0.0);
        let vmax = p
            .iter()
            .map(|q| q.1)
            .fold(f64::NEG_INFINITY, f64::max)
            .floor()
            .min(h - 1.0);
        if umin > umax || vmin > vmax {
            continue;
        }
        let owned = [owns(p[1], p[2]), owns(p[2], p[0]), owns(p[0], p[1])];
        for v in vmin as usize..=vmax as usize {
            for u in umin as usize..=umax as usize {
                let c = (u as f64, v as f64);
                let e = [
                    edge(p[1], p[2], c),
                    edge(p[2], p[0], c),
                    edge(p[0], p[1], c),
                ];
                if !(0..3).all(|k| e[k] > 0.0 || (e[k] == 0.0 && owned[k])) {
                    continue;
                }
                let l = e.map(|x| x / area);
                let inv = l[0] / z[0] + l[1] / z[1] + l[2] / z[2];
                let depth = 1.0 / inv;
                let i = grid.index(u, v);
                if depth < out.depth[i] {
                    let mut bary = [0.0; 3];
                    for k in 0..3 {
                        bary[order[k]] = l[k] / z[k] * depth;
                    }
                    out.triangle_ids[i] = id as u32;
                    out.barycentrics[i] = bary;
                    out.depth[i] = depth;
                }
            }
        }
    }
    out
}

/// Per-pixel flow from barycentric-weighted vertex displacement of the
/// triangle visible at frame `i`; background pixels get zero.
pub fn pixel_flow_gt(
    buffers: &RasterBuffers,
    vertices: &[Vec3],
    vertices_next: &[Vec3],
    triangles: &[[u32; 3]],
) -> Result<FlowField> {
    if vertices.len() != vertices_next.len() {
        return Err(Error::Validation(format!(
            "vertex sets differ in size ({} vs {})",
            vertices.len(),
            vertices_next.len()
        )));
    }
    let mut flow = FlowField::zeros(buffers.grid);
    for (i, &t) in buffers.triangle_ids.iter().enumerate() {
        if t == BACKGROUND_ID {
            continue;
        }
        let tri = triangles.get(t as usize).ok_or_else(|| Error::Corrupt {
            tag: "TRID".into(),
            offset: i as u64,
            detail: format!(
                "triangle id {t} out of range ({} triangles)",
                triangles.len()
            ),
        })?;
        let b = buffers.barycentrics[i];
        let mut f = Vec3::zeros();
        for k in 0..3 {
            let vk = tri[k] as usize;
            if vk >= vertices.len() {
                return Err(Error::Corrupt {
                    tag: "TRID".into(),
                    offset: i as u64,
                    detail: format!("triangle {t} references vertex {vk}"),
                });
            }
            f += (vertices_next[vk] - vertices[vk]) * b[k];
        }
        flow.values[i] = f;
    }
    Ok(flow)
}
