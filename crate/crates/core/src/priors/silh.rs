use super::{ConstraintResult, Tolerances};
use crate::camera::Vec3;
use crate::error::{Error, Result};
use crate::fields::{DepthField, FlowField, Grid, MaskField};
use crate::geometry::{flatten_flow, mask_sdf, sobel, sobel_adjoint};

/// Per-pixel weights `|SDF| / |Ω|`.
pub(crate) fn silh_weights(mask: &MaskField, tol: &Tolerances) -> Result<Vec<f64>> {
    let sdf = mask_sdf(mask, tol.tau_sat)?;
    let n = mask.grid.len() as f64;
    Ok(sdf.values.iter().map(|s| s.abs() / n).collect())
}

/// Distance-weighted Sobel edge energy of depth and flow. The SDF weight is
/// data; gradients go through the Sobel adjoint. The norm's subgradient is 0
/// where the response vanishes.
pub fn c_silh(
    depth: &DepthField,
    flow: &FlowField,
    mask: &MaskField,
    tol: &Tolerances,
) -> Result<ConstraintResult> {
    let g = depth.grid;
    if flow.grid != g || mask.grid != g {
        return Err(Error::Validation(
            "c_silh inputs have different grids".into(),
        ));
    }
    let w = silh_weights(mask, tol)?;
    let (value_d, grad_d) = weighted_edge(g, 1, &depth.values, &w);
    let (value_f, grad_f) = weighted_edge(g, 3, &flatten_flow(flow), &w);
    let grad_flow = grad_f
        .chunks_exact(3)
        .map(|c| Vec3::new(c[0], c[1], c[2]))
        .collect();
    Ok(ConstraintResult {
        value: value_d + value_f,
        grad_depth: Some(vec![grad_d]),
        grad_flow: Some(vec![grad_flow]),
        ..Default::default()
    })
}

fn weighted_edge(g: Grid, ch: usize, data: &[f64], w: &[f64]) -> (f64, Vec<f64>) {
    let (gx, gy) = sobel(g, ch, data);
    let mut bx = vec![0.0; data.len()];
    let mut by = vec![0.0; data.len()];
    let mut value = 0.0;
    for i in 0..g.len() {
        let r = i * ch..(i + 1) * ch;
        let n = gx[r.clone()]
            .iter()
            .chain(&gy[r.clone()])
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt();
        value += w[i] * n;
        if n > 0.0 {
            for k in r {
                bx[k] = w[i] * gx[k] / n;
                by[k] = w[i] * gy[k] / n;
            }
        }
    }
    let mut grad = vec![0.0; data.len()];
    sobel_adjoint(g, ch, &bx, &by, &mut grad);
    (value, grad)
}

/// Sobel response at one pixel, written into `out` as `[gx.., gy..]`.
fn sobel_at(g: Grid, ch: usize, data: &[f64], u: usize, v: usize, out: &mut [f64]) {
    const W: [f64; 3] = [1.0, 2.0, 1.0];
    let c = |x: isize, n: usize| x.clamp(0, n as isize - 1) as usize;
    out.iter_mut().for_each(|x| *x = 0.0);
    for k in 0..3 {
        let wk = W[k] / 8.0;
        let vv = c(v as isize + k as isize - 1, g.height);
        let uu = c(u as isize + k as isize - 1, g.width);
        let r = (vv * g.width + c(u as isize + 1, g.width)) * ch;
        let l = (vv * g.width + c(u as isize - 1, g.width)) * ch;
        let d = (c(v as isize + 1, g.height) * g.width + uu) * ch;
        let t = (c(v as isize - 1, g.height) * g.width + uu) * ch;
        for j in 0..ch {
            out[j] += wk * (data[r + j] - data[l + j]);
            out[ch + j] += wk * (data[d + j] - data[t + j]);
        }
    }
}

/// Sum of weighted edge terms over the 3×3 neighborhood of pixel `center`:
/// every term that can change when `data` at `center` changes.
pub(crate) fn silh_local(g: Grid, ch: usize, data: &[f64], w: &[f64], center: usize) -> f64 {
    let (u0, v0) = g.coords(center);
    let mut buf = vec![0.0; 2 * ch];
    let mut s = 0.0;
    for v in v0.saturating_sub(1)..=(v0 + 1).min(g.height - 1) {
        for u in u0.saturating_sub(1)..=(u0 + 1).min(g.width - 1) {
            sobel_at(g, ch, data, u, v, &mut buf);
            s += w[g.index(u, v)] * buf.iter().map(|x| x * x).sum::<f64>().sqrt();
        }
    }
    s
}
