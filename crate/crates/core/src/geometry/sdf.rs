use crate::error::{Error, Result};
use crate::fields::{Grid, MaskField};

/// Per-pixel signed distance in pixels; positive outside the mask.
#[derive(Clone, Debug, PartialEq)]
pub struct SignedDistanceField {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub tau_sat: f64,
}

const FAR: f64 = 1e20;

/// One-dimensional squared distance transform of sampled function `f`
/// (lower envelope of parabolas). `v` and `z` are scratch buffers.
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let meet = |q: usize, p: usize| {
        ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64))
    };
    for q in 1..n {
        let mut s = meet(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = meet(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Exact squared Euclidean distance from every pixel to the nearest pixel with
/// `target[i] == true`. Pixels with no target anywhere get a huge value.
pub fn squared_edt(grid: Grid, target: impl Fn(usize) -> bool) -> Vec<f64> {
    let (w, h) = (grid.width, grid.height);
    let n = w.max(h);
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    let mut d: Vec<f64> = (0..grid.len())
        .map(|i| if target(i) { 0.0 } else { FAR })
        .collect();
    for u in 0..w {
        for y in 0..h {
            f[y] = d[y * w + u];
        }
        edt_1d(&f[..h], &mut out[..h], &mut v, &mut z);
        for y in 0..h {
            d[y * w + u] = out[y];
        }
    }
    for y in 0..h {
        f[..w].copy_from_slice(&d[y * w..(y + 1) * w]);
        edt_1d(&f[..w], &mut out[..w], &mut v, &mut z);
        d[y * w..(y + 1) * w].copy_from_slice(&out[..w]);
    }
    d
}

/// Signed Euclidean distance to the foreground/background boundary, clamped
/// to `±tau_sat`. Background pixels measure to the nearest foreground pixel,
/// foreground pixels to the nearest background pixel (negated).
pub fn mask_sdf(m: &MaskField, tau_sat: f64) -> Result<SignedDistanceField> {
    if !(tau_sat > 0.0) {
        return Err(Error::Domain(format!(
            "saturation {tau_sat} must be positive"
        )));
    }
    let fg = m.foreground_count();
    if fg == 0 || fg == m.grid.len() {
        return Err(Error::DegenerateMask(if fg == 0 {
            "mask has no foreground pixel".into()
        } else {
            "mask has no background pixel".into()
        }));
    }
    let to_fg = squared_edt(m.grid, |i| m.is_fg(i));
    let to_bg = squared_edt(m.grid, |i| !m.is_fg(i));
    let values = (0..m.grid.len())
        .map(|i| {
            let d = if m.is_fg(i) {
                -to_bg[i].sqrt()
            } else {
                to_fg[i].sqrt()
            };
            d.clamp(-tau_sat, tau_sat)
        })
        .collect();
    Ok(SignedDistanceField {
        grid: m.grid,
        values,
        tau_sat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Brute force over all opposite-class pixels, unsaturated.
    fn oracle(m: &MaskField) -> Vec<f64> {
        let g = m.grid;
        (0..g.len())
            .map(|i| {
                let (u, v) = g.coords(i);
                let mut best = f64::INFINITY;
                for j in 0..g.len() {
                    if m.is_fg(j) != m.is_fg(i) {
                        let (a, b) = g.coords(j);
                        let du = a as f64 - u as f64;
                        let dv = b as f64 - v as f64;
                        best = best.min((du * du + dv * dv).sqrt());
                    }
                }
                if m.is_fg(i) {
                    -best
                } else {
                    best
                }
            })
            .collect()
    }

    #[test]
    fn point_source() {
        let g = Grid::new(11, 11).unwrap();
        let m = MaskField::from_fn(g, |u, v| u == 5 && v == 5);
        let s = mask_sdf(&m, 32.0).unwrap();
        assert_eq!(s.values[g.index(5, 9)], 4.0);
        let c = s.values[g.index(5, 5)];
        assert!((-1.0..0.0).contains(&c));
    }

    #[test]
    fn saturates() {
        let g = Grid::new(100, 8).unwrap();
        let m = MaskField::from_fn(g, |u, _| u < 5);
        let s = mask_sdf(&m, 32.0).unwrap();
        assert_eq!(s.values[g.index(4 + 40, 3)], 32.0);
        let inside = MaskField::from_fn(g, |u, _| u >= 5);
        let s = mask_sdf(&inside, 32.0).unwrap();
        assert_eq!(s.values[g.index(4 + 40, 3)], -32.0);
    }

    #[test]
    fn degenerate_masks() {
        let g = Grid::new(8, 8).unwrap();
        assert!(matches!(
            mask_sdf(&MaskField::from_fn(g, |_, _| true), 32.0),
            Err(Error::DegenerateMask(_))
        ));
        assert!(matches!(
            mask_sdf(&MaskField::from_fn(g, |_, _| false), 32.0),
            Err(Error::DegenerateMask(_))
        ));
    }

    #[test]
    fn boundary_pixels_within_one() {
        let g = Grid::new(20, 20).unwrap();
        let m = MaskField::from_fn(g, |u, v| {
            (u as i32 - 9).pow(2) + (v as i32 - 10).pow(2) < 30
        });
        let s = mask_sdf(&m, 32.0).unwrap();
        for v in 1..19 {
            for u in 1..19 {
                let i = g.index(u, v);
                let edge = m.is_fg(i)
                    && [
                        g.index(u - 1, v),
                        g.index(u + 1, v),
                        g.index(u, v - 1),
                        g.index(u, v + 1),
                    ]
                    .iter()
                    .any(|&j| !m.is_fg(j));
                if edge {
                    assert!(s.values[i].abs() <= 1.0);
                }
            }
        }
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for (w, h, p) in [(32, 32, 0.5), (64, 64, 0.02), (40, 17, 0.9), (64, 48, 0.2)] {
            let g = Grid::new(w, h).unwrap();
            let m = MaskField::from_fn(g, |_, _| rng.random_bool(p));
            let s = mask_sdf(&m, 1e9).unwrap();
            assert_eq!(s.values, oracle(&m), "{w}x{h}");
        }
    }

    #[test]
    fn blob_matches_brute_force() {
        let g = Grid::new(64, 64).unwrap();
        let m = MaskField::from_fn(g, |u, v| {
            (u > 10 && u < 30 && v > 5 && v < 50) || (u + v) % 17 == 0
        });
        assert_eq!(mask_sdf(&m, 1e9).unwrap().values, oracle(&m));
    }
}
