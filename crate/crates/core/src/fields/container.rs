//! HFSF binary container.
//!
//! Little-endian throughout:
//!
//! ```text
//! "HFSF" | version u32 | chunk count u32 | chunk*
//! chunk = tag [4]u8 | frame u32 (0xFFFFFFFF = clip-global) | dtype u8 | ndim u8
//!       | dims ndim × u32 | payload (row-major)
//! ```
//!
//! dtype: 0 = f32, 1 = u32, 2 = u8. Chunks are written as `META`, then for
//! each frame `DPTH FLOW MASK POSE CAMI CAMX [TRID BARY]`. Payloads are stored
//! as f32, so in-memory values round-trip bit-exactly only when they are
//! representable in single precision (the generator guarantees this).

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::camera::{is_rotation, rot6d_to_matrix, CameraParams, Mat3, Rot6D, Vec3, ORTHO_TOL};
use crate::error::{Error, Result};
use crate::fields::{
    ClipMeta, DepthField, FlowField, FrameRecord, Grid, MaskField, RasterBuffers, SceneClip,
    BACKGROUND_ID,
};
use crate::kinematics::{Pose, JOINT_COUNT};

pub const MAGIC: &[u8; 4] = b"HFSF";
pub const FORMAT_VERSION: u32 = 1;
const GLOBAL_FRAME: u32 = u32::MAX;

const DT_F32: u8 = 0;
const DT_U32: u8 = 1;
const DT_U8: u8 = 2;

struct CountingWriter<W> {
    inner: W,
    written: u64,
}

impl<W: Write> CountingWriter<W> {
    fn put(&mut self, bytes: &[u8]) -> Result<()> {
        self.inner.write_all(bytes).map_err(|source| Error::Io {
            offset: self.written,
            source,
        })?;
        self.written += bytes.len() as u64;
        Ok(())
    }
}

enum Payload<'a> {
    F32(Vec<f32>),
    U32(&'a [u32]),
    U8(&'a [u8]),
}

struct Chunk<'a> {
    tag: &'static [u8; 4],
    frame: u32,
    dims: Vec<u32>,
    payload: Payload<'a>,
}

fn frame_chunks(index: u32, f: &FrameRecord) -> Vec<Chunk<'_>> {
    let hw = |g: &Grid| vec![g.height as u32, g.width as u32];
    let hw3 = |g: &Grid| vec![g.height as u32, g.width as u32, 3];
    let mut out = vec![
        Chunk {
            tag: b"DPTH",
            frame: index,
            dims: hw(&f.depth.grid),
            payload: Payload::F32(f.depth.values.iter().map(|&d| d as f32).collect()),
        },
        Chunk {
            tag: b"FLOW",
            frame: index,
            dims: hw3(&f.flow.grid),
            payload: Payload::F32(
                f.flow
                    .values
                    .iter()
                    .flat_map(|v| [v.x as f32, v.y as f32, v.z as f32])
                    .collect(),
            ),
        },
        Chunk {
            tag: b"MASK",
            frame: index,
            dims: hw(&f.mask.grid),
            payload: Payload::U8(&f.mask.values),
        },
        Chunk {
            tag: b"POSE",
            frame: index,
            dims: vec![f.pose.joints.len() as u32, 3],
            payload: Payload::F32(
                f.pose
                    .joints
                    .iter()
                    .flat_map(|p| [p.x as f32, p.y as f32, p.z as f32])
                    .collect(),
            ),
        },
        Chunk {
            tag: b"CAMI",
            frame: index,
            dims: vec![4],
            payload: Payload::F32(f.camera.intrinsics.iter().map(|&x| x as f32).collect()),
        },
        Chunk {
            tag: b"CAMX",
            frame: index,
            dims: vec![12],
            payload: Payload::F32({
                let r = &f.camera.rotation;
                let t = &f.camera.translation;
                let mut v = Vec::with_capacity(12);
                for row in 0..3 {
                    for col in 0..3 {
                        v.push(r[(row, col)] as f32);
                    }
                }
                v.extend([t.x as f32, t.y as f32, t.z as f32]);
                v
            }),
        },
    ];
    if let Some(r) = &f.raster {
        out.push(Chunk {
            tag: b"TRID",
            frame: index,
            dims: hw(&r.grid),
            payload: Payload::U32(&r.triangle_ids),
        });
        out.push(Chunk {
            tag: b"BARY",
            frame: index,
            dims: hw3(&r.grid),
            payload: Payload::F32(
                r.barycentrics
                    .iter()
                    .flat_map(|b| [b[0] as f32, b[1] as f32, b[2] as f32])
                    .collect(),
            ),
        });
    }
    out
}

fn meta_text(clip: &SceneClip) -> String {
    let g = clip.grid().unwrap_or(Grid {
        width: 0,
        height: 0,
    });
    let joints = clip
        .frames
        .first()
        .map(|f| f.pose.joints.len())
        .unwrap_or(JOINT_COUNT);
    format!(
        "width={}\nheight={}\nframes={}\njoints={}\nseed={}\ndt_seconds={}\n",
        g.width,
        g.height,
        clip.frames.len(),
        joints,
        clip.meta.seed,
        clip.meta.dt_seconds
    )
}

/// Serialize `clip` as an HFSF container. Returns the number of bytes written.
pub fn write_clip<W: Write>(clip: &SceneClip, destination: W) -> Result<u64> {
    if clip.frames.is_empty() {
        return Err(Error::Validation(
            "cannot write a clip without frames".into(),
        ));
    }
    let meta = meta_text(clip);
    let mut chunks = vec![Chunk {
        tag: b"META",
        frame: GLOBAL_FRAME,
        dims: vec![meta.len() as u32],
        payload: Payload::U8(meta.as_bytes()),
    }];
    for (i, f) in clip.frames.iter().enumerate() {
        chunks.extend(frame_chunks(i as u32, f));
    }

    let mut w = CountingWriter {
        inner: destination,
        written: 0,
    };
    w.put(MAGIC)?;
    w.put(&FORMAT_VERSION.to_le_bytes())?;
    w.put(&(chunks.len() as u32).to_le_bytes())?;
    for c in &chunks {
        w.put(c.tag)?;
        w.put(&c.frame.to_le_bytes())?;
        let dtype = match c.payload {
            Payload::F32(_) => DT_F32,
            Payload::U32(_) => DT_U32,
            Payload::U8(_) => DT_U8,
        };
        w.put(&[dtype, c.dims.len() as u8])?;
        for d in &c.dims {
            w.put(&d.to_le_bytes())?;
        }
        let mut buf = Vec::new();
        match &c.payload {
            Payload::F32(v) => v
                .iter()
                .for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
            Payload::U32(v) => v
                .iter()
                .for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
            Payload::U8(v) => buf.extend_from_slice(v),
        }
        w.put(&buf)?;
    }
    w.inner.flush().map_err(|source| Error::Io {
        offset: w.written,
        source,
    })?;
    Ok(w.written)
}

/// Non-fatal event raised while reading a container.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReadWarning {
    pub tag: String,
    pub frame: Option<u32>,
    pub offset: u64,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadedClip {
    pub clip: SceneClip,
    pub warnings: Vec<ReadWarning>,
}

struct RawChunk {
    tag: [u8; 4],
    frame: u32,
    dtype: u8,
    dims: Vec<usize>,
    offset: u64,
    data: Vec<u8>,
}

impl RawChunk {
    fn tag_str(&self) -> String {
        String::from_utf8_lossy(&self.tag).into_owned()
    }

    fn expect(&self, dtype: u8, dims: &[usize]) -> Result<()> {
        if self.dtype != dtype || self.dims != dims {
            return Err(Error::Validation(format!(
                "chunk {} of frame {} has dtype {} dims {:?}, expected dtype {} dims {:?}",
                self.tag_str(),
                self.frame,
                self.dtype,
                self.dims,
                dtype,
                dims
            )));
        }
        Ok(())
    }

    fn f32s(&self) -> impl Iterator<Item = f64> + '_ {
        self.data
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
    }

    fn u32s(&self) -> impl Iterator<Item = u32> + '_ {
        self.data
            .chunks_exact(4)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

fn dtype_size(dtype: u8) -> Option<usize> {
    match dtype {
        DT_F32 | DT_U32 => Some(4),
        DT_U8 => Some(1),
        _ => None,
    }
}

fn parse_chunks(bytes: &[u8]) -> Result<Vec<RawChunk>> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected \"HFSF\"",
            String::from_utf8_lossy(&bytes[..bytes.len().min(4)])
        )));
    }
    let mut c = Cursor { bytes, pos: 4 };
    let version = c
        .u32()
        .ok_or_else(|| Error::Format("truncated header".into()))?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let count = c
        .u32()
        .ok_or_else(|| Error::Format("truncated header".into()))?;
    let mut out = Vec::new();
    for _ in 0..count {
        let offset = c.pos as u64;
        let corrupt = |tag: &str, detail: &str| Error::Corrupt {
            tag: tag.to_string(),
            offset,
            detail: detail.to_string(),
        };
        let tag_bytes = c
            .take(4)
            .ok_or_else(|| corrupt("????", "truncated chunk tag"))?;
        let tag: [u8; 4] = tag_bytes.try_into().unwrap();
        let tag_s = String::from_utf8_lossy(&tag).into_owned();
        let frame = c
            .u32()
            .ok_or_else(|| corrupt(&tag_s, "truncated chunk header"))?;
        let head = c
            .take(2)
            .ok_or_else(|| corrupt(&tag_s, "truncated chunk header"))?;
        let (dtype, ndim) = (head[0], head[1] as usize);
        let size =
            dtype_size(dtype).ok_or_else(|| corrupt(&tag_s, &format!("unknown dtype {dtype}")))?;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(c.u32().ok_or_else(|| corrupt(&tag_s, "truncated dims"))? as usize);
        }
        let n = dims
            .iter()
            .try_fold(size, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| corrupt(&tag_s, "payload size overflows"))?;
        let data = c
            .take(n)
            .ok_or_else(|| corrupt(&tag_s, &format!("truncated payload, need {n} bytes")))?
            .to_vec();
        out.push(RawChunk {
            tag,
            frame,
            dtype,
            dims,
            offset,
            data,
        });
    }
    Ok(out)
}

fn parse_meta(chunk: &RawChunk) -> Result<BTreeMap<String, String>> {
    let text = std::str::from_utf8(&chunk.data)
        .map_err(|_| Error::Format("META chunk is not UTF-8".into()))?;
    let mut map = BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("META line without '=': {line:?}")))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn meta_get<T: std::str::FromStr>(m: &BTreeMap<String, String>, key: &str) -> Result<T> {
    m.get(key)
        .ok_or_else(|| Error::Format(format!("META is missing {key}")))?
        .parse()
        .map_err(|_| Error::Format(format!("META {key} is malformed")))
}

const KNOWN: [&[u8; 4]; 8] = [
    b"DPTH", b"FLOW", b"MASK", b"POSE", b"CAMI", b"CAMX", b"TRID", b"BARY",
];

fn rotation_from_rows(v: &[f64]) -> Result<Mat3> {
    let m = Mat3::from_row_slice(&v[..9]);
    if is_rotation(&m, ORTHO_TOL) {
        return Ok(m);
    }
    // Single-precision storage of a general rotation; restore orthonormality.
    rot6d_to_matrix(&Rot6D::from_matrix(&m))
        .map_err(|e| Error::Validation(format!("CAMX rotation unusable: {e}")))
}

/// Parse an HFSF container. Unknown chunk tags are skipped and reported in
/// [`LoadedClip::warnings`].
pub fn read_clip<R: Read>(mut source: R) -> Result<LoadedClip> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes).map_err(|e| Error::Io {
        offset: bytes.len() as u64,
        source: e,
    })?;
    let chunks = parse_chunks(&bytes)?;

    let mut warnings = Vec::new();
    let mut meta = None;
    let mut per_frame: BTreeMap<u32, BTreeMap<[u8; 4], RawChunk>> = BTreeMap::new();
    for ch in chunks {
        if &ch.tag == b"META" {
            meta = Some(parse_meta(&ch)?);
            continue;
        }
        if !KNOWN.contains(&&ch.tag) {
            warnings.push(ReadWarning {
                tag: ch.tag_str(),
                frame: (ch.frame != GLOBAL_FRAME).then_some(ch.frame),
                offset: ch.offset,
                message: "unknown chunk tag skipped".into(),
            });
            continue;
        }
        let slot = per_frame.entry(ch.frame).or_default();
        if slot.contains_key(&ch.tag) {
            return Err(Error::Validation(format!(
                "duplicate {} chunk for frame {}",
                ch.tag_str(),
                ch.frame
            )));
        }
        slot.insert(ch.tag, ch);
    }

    let meta = meta.ok_or_else(|| Error::Format("container has no META chunk".into()))?;
    let width: usize = meta_get(&meta, "width")?;
    let height: usize = meta_get(&meta, "height")?;
    let frames: usize = meta_get(&meta, "frames")?;
    let joints: usize = meta_get(&meta, "joints")?;
    let seed: u64 = meta_get(&meta, "seed")?;
    let dt_seconds: f64 = meta_get(&meta, "dt_seconds")?;
    let grid = Grid::new(width, height)?;
    let (h, w) = (height, width);

    if let Some((&f, _)) = per_frame.iter().find(|(&f, _)| f as usize >= frames) {
        return Err(Error::Validation(format!(
            "chunk for frame {f} but META declares {frames} frames"
        )));
    }

    let mut out = Vec::with_capacity(frames);
    for i in 0..frames as u32 {
        let mut slot = per_frame.remove(&i).unwrap_or_default();
        let mut take = |tag: &[u8; 4]| {
            slot.remove(tag).ok_or_else(|| {
                Error::Validation(format!(
                    "frame {i} is missing its {} chunk",
                    String::from_utf8_lossy(tag)
                ))
            })
        };
        let dpth = take(b"DPTH")?;
        dpth.expect(DT_F32, &[h, w])?;
        let flow = take(b"FLOW")?;
        flow.expect(DT_F32, &[h, w, 3])?;
        let mask = take(b"MASK")?;
        mask.expect(DT_U8, &[h, w])?;
        let pose = take(b"POSE")?;
        pose.expect(DT_F32, &[joints, 3])?;
        let cami = take(b"CAMI")?;
        cami.expect(DT_F32, &[4])?;
        let camx = take(b"CAMX")?;
        camx.expect(DT_F32, &[12])?;
        let trid = slot.remove(b"TRID");
        let bary = slot.remove(b"BARY");

        let depth = DepthField::new(grid, dpth.f32s().collect())?;
        let fv: Vec<f64> = flow.f32s().collect();
        let flow = FlowField::new(
            grid,
            fv.chunks_exact(3)
                .map(|c| Vec3::new(c[0], c[1], c[2]))
                .collect(),
        )?;
        let mask = MaskField::new(grid, mask.data.clone())?;
        let pv: Vec<f64> = pose.f32s().collect();
        let pose = Pose::new(
            pv.chunks_exact(3)
                .map(|c| Vec3::new(c[0], c[1], c[2]))
                .collect(),
        );
        let iv: Vec<f64> = cami.f32s().collect();
        let xv: Vec<f64> = camx.f32s().collect();
        let camera = CameraParams::new(
            rotation_from_rows(&xv)?,
            Vec3::new(xv[9], xv[10], xv[11]),
            [iv[0], iv[1], iv[2], iv[3]],
            grid,
        )?;
        let raster = match (trid, bary) {
            (None, None) => None,
            (Some(t), Some(b)) => {
                t.expect(DT_U32, &[h, w])?;
                b.expect(DT_F32, &[h, w, 3])?;
                let triangle_ids: Vec<u32> = t.u32s().collect();
                let bv: Vec<f64> = b.f32s().collect();
                let barycentrics = bv.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
                let rdepth = triangle_ids
                    .iter()
                    .zip(depth.values.iter())
                    .map(|(&id, &d)| {
                        if id == BACKGROUND_ID {
                            f64::INFINITY
                        } else {
                            d
                        }
                    })
                    .collect();
                Some(RasterBuffers {
                    grid,
                    triangle_ids,
                    barycentrics,
                    depth: rdepth,
                })
            }
            _ => {
                return Err(Error::Validation(format!(
                    "frame {i} has only one of TRID/BARY"
                )))
            }
        };
        out.push(FrameRecord {
            depth,
            flow,
            mask,
            pose,
            camera,
            raster,
        });
    }

    if let Some((&f, _)) = per_frame.iter().next() {
        return Err(Error::Validation(format!(
            "unexpected chunks for frame {f:#x}"
        )));
    }

    Ok(LoadedClip {
        clip: SceneClip {
            frames: out,
            meta: ClipMeta {
                seed,
                dt_seconds,
                version: FORMAT_VERSION,
            },
        },
        warnings,
    })
}
