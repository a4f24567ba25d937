use crate::fields::{DepthField, FlowField, Grid};

const W: [f64; 3] = [1.0, 2.0, 1.0];

#[inline]
fn clampi(x: isize, n: usize) -> usize {
    x.clamp(0, n as isize - 1) as usize
}

/// Interleave a flow field into `[x, y, z, x, y, z, ...]`.
pub fn flatten_flow(f: &FlowField) -> Vec<f64> {
    f.values.iter().flat_map(|v| [v.x, v.y, v.z]).collect()
}

/// Sobel-x and Sobel-y responses per pixel and channel, normalized by 1/8,
/// with replicate padding. `data` holds `channels` interleaved values per pixel.
pub fn sobel(grid: Grid, channels: usize, data: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (grid.width, grid.height);
    let mut gx = vec![0.0; data.len()];
    let mut gy = vec![0.0; data.len()];
    for v in 0..h {
        for u in 0..w {
            let o = (v * w + u) * channels;
            for k in 0..3 {
                let wk = W[k] / 8.0;
                let vv = clampi(v as isize + k as isize - 1, h);
                let uu = clampi(u as isize + k as isize - 1, w);
                let (r, l) = (
                    (vv * w + clampi(u as isize + 1, w)) * channels,
                    (vv * w + clampi(u as isize - 1, w)) * channels,
                );
                let (d, t) = (
                    (clampi(v as isize + 1, h) * w + uu) * channels,
                    (clampi(v as isize - 1, h) * w + uu) * channels,
                );
                for c in 0..channels {
                    gx[o + c] += wk * (data[r + c] - data[l + c]);
                    gy[o + c] += wk * (data[d + c] - data[t + c]);
                }
            }
        }
    }
    (gx, gy)
}

/// Transpose of [`sobel`]: accumulates `Sxᵀ bx + Syᵀ by` into `out`.
pub fn sobel_adjoint(grid: Grid, channels: usize, bx: &[f64], by: &[f64], out: &mut [f64]) {
    let (w, h) = (grid.width, grid.height);
    for v in 0..h {
        for u in 0..w {
            let o = (v * w + u) * channels;
            for k in 0..3 {
                let wk = W[k] / 8.0;
                let vv = clampi(v as isize + k as isize - 1, h);
                let uu = clampi(u as isize + k as isize - 1, w);
                let (r, l) = (
                    (vv * w + clampi(u as isize + 1, w)) * channels,
                    (vv * w + clampi(u as isize - 1, w)) * channels,
                );
                let (d, t) = (
                    (clampi(v as isize + 1, h) * w + uu) * channels,
                    (clampi(v as isize - 1, h) * w + uu) * channels,
                );
                for c in 0..channels {
                    out[r + c] += wk * bx[o + c];
                    out[l + c] -= wk * bx[o + c];
                    out[d + c] += wk * by[o + c];
                    out[t + c] -= wk * by[o + c];
                }
            }
        }
    }
}

/// Per-pixel ℓ2 norm of the Sobel responses over both directions and all channels.
pub fn grad_norm(grid: Grid, channels: usize, data: &[f64]) -> Vec<f64> {
    let (gx, gy) = sobel(grid, channels, data);
    (0..grid.len())
        .map(|i| {
            let s = &gx[i * channels..(i + 1) * channels];
            let t = &gy[i * channels..(i + 1) * channels];
            s.iter().chain(t).map(|x| x * x).sum::<f64>().sqrt()
        })
        .collect()
}

pub fn grad_norm_depth(d: &DepthField) -> Vec<f64> {
    grad_norm(d.grid, 1, &d.values)
}

pub fn grad_norm_flow(f: &FlowField) -> Vec<f64> {
    grad_norm(f.grid, 3, &flatten_flow(f))
}
