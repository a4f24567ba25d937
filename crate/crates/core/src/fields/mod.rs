//! Dense per-pixel fields, per-frame records and whole clips.
//!
//! All dense payloads are row-major: pixel `(u, v)` lives at `v * width + u`.
//! Flow is a world-frame displacement from frame `i` to frame `i + 1`; the last
//! frame of a clip stores zeros.

mod container;
mod validate;

pub use container::{read_clip, write_clip, LoadedClip, ReadWarning, FORMAT_VERSION, MAGIC};
pub use validate::{validate_clip, Violation};

use crate::camera::{CameraParams, Vec3};
use crate::error::{Error, Result};
use crate::kinematics::Pose;

/// Sentinel triangle id for pixels not covered by the body.
pub const BACKGROUND_ID: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
}

impl Grid {
    pub const MIN_SIDE: usize = 8;

    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width < Self::MIN_SIDE || height < Self::MIN_SIDE {
            return Err(Error::Validation(format!(
                "grid {width}x{height} is smaller than {0}x{0}",
                Self::MIN_SIDE
            )));
        }
        Ok(Grid { width, height })
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, u: usize, v: usize) -> usize {
        v * self.width + u
    }

    #[inline]
    pub fn coords(&self, i: usize) -> (usize, usize) {
        (i % self.width, i / self.width)
    }
}

impl std::fmt::Display for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

fn check_len(grid: &Grid, n: usize, what: &str) -> Result<()> {
    if n != grid.len() {
        return Err(Error::Validation(format!(
            "{what} has {n} values, grid {grid} needs {}",
            grid.len()
        )));
    }
    Ok(())
}

/// Per-pixel depth in meters.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl DepthField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        check_len(&grid, values.len(), "depth field")?;
        Ok(DepthField { grid, values })
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        DepthField {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn at(&self, u: usize, v: usize) -> f64 {
        self.values[self.grid.index(u, v)]
    }
}

/// Per-pixel 3D displacement in meters.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    pub grid: Grid,
    pub values: Vec<Vec3>,
}

impl FlowField {
    pub fn new(grid: Grid, values: Vec<Vec3>) -> Result<Self> {
        check_len(&grid, values.len(), "flow field")?;
        Ok(FlowField { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        FlowField {
            grid,
            values: vec![Vec3::zeros(); grid.len()],
        }
    }

    pub fn at(&self, u: usize, v: usize) -> Vec3 {
        self.values[self.grid.index(u, v)]
    }
}

/// Hard foreground indicator, one byte per pixel with values 0 or 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskField {
    pub grid: Grid,
    pub values: Vec<u8>,
}

impl MaskField {
    pub fn new(grid: Grid, values: Vec<u8>) -> Result<Self> {
        check_len(&grid, values.len(), "mask field")?;
        Ok(MaskField { grid, values })
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for v in 0..grid.height {
            for u in 0..grid.width {
                values.push(f(u, v) as u8);
            }
        }
        MaskField { grid, values }
    }

    #[inline]
    pub fn is_fg(&self, i: usize) -> bool {
        self.values[i] != 0
    }

    pub fn foreground_count(&self) -> usize {
        self.values.iter().filter(|&&m| m != 0).count()
    }

    pub fn foreground_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &m)| m != 0)
            .map(|(i, _)| i)
    }
}

/// Rasterization side channels: covering triangle, perspective-correct
/// barycentrics of the visible surface point and its camera-frame depth.
/// Background pixels carry [`BACKGROUND_ID`], zero barycentrics and infinite depth.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterBuffers {
    pub grid: Grid,
    pub triangle_ids: Vec<u32>,
    pub barycentrics: Vec<[f64; 3]>,
    pub depth: Vec<f64>,
}

impl RasterBuffers {
    pub fn empty(grid: Grid) -> Self {
        RasterBuffers {
            grid,
            triangle_ids: vec![BACKGROUND_ID; grid.len()],
            barycentrics: vec![[0.0; 3]; grid.len()],
            depth: vec![f64::INFINITY; grid.len()],
        }
    }

    pub fn covered(&self) -> usize {
        self.triangle_ids
            .iter()
            .filter(|&&t| t != BACKGROUND_ID)
            .count()
    }

    /// True when no pixel is covered, e.g. the body is off-screen or behind the camera.
    pub fn is_empty(&self) -> bool {
        self.covered() == 0
    }

    pub fn mask(&self) -> MaskField {
        MaskField {
            grid: self.grid,
            values: self
                .triangle_ids
                .iter()
                .map(|&t| (t != BACKGROUND_ID) as u8)
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameRecord {
    pub depth: DepthField,
    pub flow: FlowField,
    pub mask: MaskField,
    pub pose: Pose,
    pub camera: CameraParams,
    pub raster: Option<RasterBuffers>,
}

impl FrameRecord {
    pub fn grid(&self) -> Grid {
        self.depth.grid
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClipMeta {
    pub seed: u64,
    pub dt_seconds: f64,
    pub version: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneClip {
    pub frames: Vec<FrameRecord>,
    pub meta: ClipMeta,
}

impl SceneClip {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn grid(&self) -> Option<Grid> {
        self.frames.first().map(|f| f.grid())
    }

    pub fn poses(&self) -> Vec<Pose> {
        self.frames.iter().map(|f| f.pose.clone()).collect()
    }

    /// Round every stored value to `f32` so that a write/read cycle is exact.
    pub fn quantize_f32(&mut self) {
        let q = |x: &mut f64| *x = *x as f32 as f64;
        for f in &mut self.frames {
            f.depth.values.iter_mut().for_each(q);
            f.flow
                .values
                .iter_mut()
                .for_each(|v| v.iter_mut().for_each(q));
            f.pose
                .joints
                .iter_mut()
                .for_each(|v| v.iter_mut().for_each(q));
            f.camera.intrinsics.iter_mut().for_each(q);
            f.camera.rotation.iter_mut().for_each(q);
            f.camera.translation.iter_mut().for_each(q);
            if let Some(r) = &mut f.raster {
                r.barycentrics
                    .iter_mut()
                    .for_each(|b| b.iter_mut().for_each(q));
                for (d, &t) in r.depth.iter_mut().zip(&r.triangle_ids) {
                    if t != BACKGROUND_ID {
                        q(d);
                    }
                }
            }
        }
    }
}
