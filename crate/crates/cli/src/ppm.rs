use std::fs;
use std::io::Write;
use std::path::Path;

use hflow_core::fields::SceneClip;
use hflow_core::{Error, Result};

fn io(source: std::io::Error) -> Error {
    Error::Io { offset: 0, source }
}

/// Write one binary grayscale PPM per frame, `flow_NNNN.ppm`, with flow
/// magnitude scaled by the largest magnitude in the clip. Returns the number
/// of files written.
pub fn dump_flow_magnitude(clip: &SceneClip, dir: &Path) -> Result<usize> {
    fs::create_dir_all(dir).map_err(io)?;
    let peak = clip
        .frames
        .iter()
        .flat_map(|f| f.flow.values.iter().map(|v| v.norm()))
        .fold(0.0f64, f64::max);
    let scale = if peak > 0.0 { 255.0 / peak } else { 0.0 };
    for (i, f) in clip.frames.iter().enumerate() {
        let g = f.grid();
        let mut buf = format!("P6\n{} {}\n255\n", g.width, g.height).into_bytes();
        for v in &f.flow.values {
            let level = (v.norm() * scale).round().clamp(0.0, 255.0) as u8;
            buf.extend_from_slice(&[level; 3]);
        }
        let mut file = fs::File::create(dir.join(format!("flow_{i:04}.ppm"))).map_err(io)?;
        file.write_all(&buf).map_err(io)?;
    }
    Ok(clip.frames.len())
}
