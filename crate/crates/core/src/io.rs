//! On-disk formats: binary gaussian scenes, PFM feature grids, PGM masks
//! and JSON calibration files. All writers replace the target atomically.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{CameraCalib, GeometryError};
use crate::fit::Mask;
use crate::quat::Quat;
use crate::raster::BevGrid;
use crate::scene::{validate, Gaussian, GaussianScene, Violation};

pub const SCENE_MAGIC: &[u8; 4] = b"GSBV";
pub const SCENE_VERSION: u32 = 1;
const SCENE_HEADER_LEN: usize = 16;

/// Rotation tolerance applied when reading calibration files.
pub const CALIB_FILE_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic {0:?} (expected \"GSBV\")")]
    BadMagic([u8; 4]),
    #[error("unsupported scene version {0}")]
    VersionUnsupported(u32),
    #[error("file is truncated: expected {expected} bytes, found {found}")]
    TruncatedFile { expected: usize, found: usize },
    #[error("file has {0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("scene failed validation: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    ValidationFailed(Vec<Violation>),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("invalid calibration file: {0}")]
    Calib(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io_err(path))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, FormatError> {
    fs::read(path).map_err(io_err(path))
}

// --- scene files ---------------------------------------------------------

pub fn encode_scene(scene: &GaussianScene) -> Vec<u8> {
    let c = scene.feature_dim;
    let mut out = Vec::with_capacity(SCENE_HEADER_LEN + scene.len() * (11 + c) * 4);
    out.extend_from_slice(SCENE_MAGIC);
    out.extend_from_slice(&SCENE_VERSION.to_le_bytes());
    out.extend_from_slice(&(scene.len() as u32).to_le_bytes());
    out.extend_from_slice(&(c as u32).to_le_bytes());
    for g in &scene.gaussians {
        let q = g.rotation;
        let fixed = [
            g.center.x, g.center.y, g.center.z, g.scale.x, g.scale.y, g.scale.z, q.w, q.x, q.y, q.z, g.opacity,
        ];
        for v in fixed.iter().chain(&g.embedding) {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

/// Parses a scene file and validates every gaussian.
pub fn decode_scene(bytes: &[u8]) -> Result<GaussianScene, FormatError> {
    if bytes.len() < SCENE_HEADER_LEN {
        if bytes.len() >= 4 && &bytes[..4] != SCENE_MAGIC {
            return Err(FormatError::BadMagic(bytes[..4].try_into().unwrap()));
        }
        return Err(FormatError::TruncatedFile {
            expected: SCENE_HEADER_LEN,
            found: bytes.len(),
        });
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if &magic != SCENE_MAGIC {
        return Err(FormatError::BadMagic(magic));
    }
    let version = word(4);
    if version != SCENE_VERSION {
        return Err(FormatError::VersionUnsupported(version));
    }
    let count = word(8) as usize;
    let c = word(12) as usize;
    let stride = (11 + c) * 4;
    let expected = SCENE_HEADER_LEN + count * stride;
    if bytes.len() < expected {
        return Err(FormatError::TruncatedFile {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(FormatError::TrailingBytes(bytes.len() - expected));
    }
    let mut gaussians = Vec::with_capacity(count);
    for record in bytes[SCENE_HEADER_LEN..].chunks_exact(stride) {
        let v: Vec<f64> = record
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        gaussians.push(Gaussian {
            center: Vector3::new(v[0], v[1], v[2]),
            scale: Vector3::new(v[3], v[4], v[5]),
            rotation: Quat::new(v[6], v[7], v[8], v[9]),
            opacity: v[10],
            embedding: v[11..].to_vec(),
        });
    }
    let scene = GaussianScene::from_parts(c, gaussians);
    let violations = validate(&scene);
    if !violations.is_empty() {
        return Err(FormatError::ValidationFailed(violations));
    }
    Ok(scene)
}

pub fn save_scene(path: &Path, scene: &GaussianScene) -> Result<(), FormatError> {
    write_atomic(path, &encode_scene(scene))
}

pub fn load_scene(path: &Path) -> Result<GaussianScene, FormatError> {
    decode_scene(&read_file(path)?)
}

// --- PFM grids -----------------------------------------------------------

/// Encodes a grid as PFM.
///
/// One channel uses `Pf`, three use `PF`. Any other channel count is
/// written as a `PFSTACK <C>` line followed by `C` complete single-channel
/// `Pf` images, one per channel. Rows are stored bottom to top with a
/// little-endian scale of `-1.0`.
pub fn encode_grid_pfm(grid: &BevGrid) -> Vec<u8> {
    let (h, w, c) = grid.shape();
    let mut out = Vec::new();
    let plane = |out: &mut Vec<u8>, tag: &str, channels: &[usize]| {
        out.extend_from_slice(format!("{tag}\n{w} {h}\n-1.0\n").as_bytes());
        for r in (0..h).rev() {
            for col in 0..w {
                let px = grid.pixel(r, col);
                for &ch in channels {
                    out.extend_from_slice(&(px[ch] as f32).to_le_bytes());
                }
            }
        }
    };
    match c {
        1 => plane(&mut out, "Pf", &[0]),
        3 => plane(&mut out, "PF", &[0, 1, 2]),
        _ => {
            out.extend_from_slice(format!("PFSTACK {c}\n").as_bytes());
            for ch in 0..c {
                plane(&mut out, "Pf", &[ch]);
            }
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn line(&mut self) -> Result<&'a str, FormatError> {
        let rest = &self.bytes[self.pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| FormatError::MalformedHeader("unterminated header line".into()))?;
        self.pos += end + 1;
        std::str::from_utf8(&rest[..end])
            .map(str::trim)
            .map_err(|_| FormatError::MalformedHeader("header is not ASCII".into()))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        if self.bytes.len() - self.pos < n {
            return Err(FormatError::TruncatedFile {
                expected: self.pos + n,
                found: self.bytes.len(),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
}

/// Reads one PFM image; returns `(height, width, channels, values)` with
/// values in top-to-bottom row order.
fn read_pfm_plane(cur: &mut Cursor<'_>) -> Result<(usize, usize, usize, Vec<f32>), FormatError> {
    let channels = match cur.line()? {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(FormatError::MalformedHeader(format!("unknown PFM tag {other:?}"))),
    };
    let dims = cur.line()?;
    let mut it = dims.split_whitespace().map(str::parse::<usize>);
    let (w, h) = match (it.next(), it.next(), it.next()) {
        (Some(Ok(w)), Some(Ok(h)), None) => (w, h),
        _ => return Err(FormatError::MalformedHeader(format!("bad dimensions {dims:?}"))),
    };
    let scale_line = cur.line()?;
    let scale: f32 = scale_line
        .parse()
        .map_err(|_| FormatError::MalformedHeader(format!("bad scale {scale_line:?}")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(FormatError::MalformedHeader(format!("bad scale {scale_line:?}")));
    }
    let little = scale < 0.0;
    let raw = cur.take(w * h * channels * 4)?;
    let mut values = vec![0f32; w * h * channels];
    for (i, b) in raw.chunks_exact(4).enumerate() {
        let b: [u8; 4] = b.try_into().unwrap();
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (file_row, rest) = (i / (w * channels), i % (w * channels));
        values[(h - 1 - file_row) * w * channels + rest] = v;
    }
    Ok((h, w, channels, values))
}

pub fn decode_grid_pfm(bytes: &[u8]) -> Result<BevGrid, FormatError> {
    let mut cur = Cursor { bytes, pos: 0 };
    let grid = if bytes.starts_with(b"PFSTACK") {
        let line = cur.line()?;
        let c: usize = line
            .strip_prefix("PFSTACK")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| FormatError::MalformedHeader(format!("bad stack header {line:?}")))?;
        let mut grid: Option<BevGrid> = None;
        for ch in 0..c {
            let (h, w, planes, values) = read_pfm_plane(&mut cur)?;
            if planes != 1 {
                return Err(FormatError::MalformedHeader("stacked planes must be single-channel".into()));
            }
            let g = grid.get_or_insert_with(|| BevGrid::zeros(h, w, c));
            if (g.height, g.width) != (h, w) {
                return Err(FormatError::MalformedHeader("stacked planes differ in size".into()));
            }
            for (p, v) in values.into_iter().enumerate() {
                g.data[p * c + ch] = v as f64;
            }
        }
        grid.unwrap_or_else(|| BevGrid::zeros(0, 0, 0))
    } else {
        let (h, w, c, values) = read_pfm_plane(&mut cur)?;
        BevGrid {
            height: h,
            width: w,
            channels: c,
            data: values.into_iter().map(f64::from).collect(),
        }
    };
    if cur.pos != bytes.len() {
        return Err(FormatError::TrailingBytes(bytes.len() - cur.pos));
    }
    Ok(grid)
}

pub fn save_grid_pfm(path: &Path, grid: &BevGrid) -> Result<(), FormatError> {
    write_atomic(path, &encode_grid_pfm(grid))
}

pub fn load_grid_pfm(path: &Path) -> Result<BevGrid, FormatError> {
    decode_grid_pfm(&read_file(path)?)
}

// --- PGM masks -----------------------------------------------------------

/// Binary PGM (`P5`), 255 for set pixels.
pub fn encode_mask_pgm(mask: &Mask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width, mask.height).into_bytes();
    out.extend(mask.data.iter().map(|&v| if v { 255u8 } else { 0 }));
    out
}

/// Reads a `P5` mask; any non-zero sample counts as set.
pub fn decode_mask_pgm(bytes: &[u8]) -> Result<Mask, FormatError> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.line()? != "P5" {
        return Err(FormatError::MalformedHeader("expected P5".into()));
    }
    let dims = cur.line()?;
    let mut it = dims.split_whitespace().map(str::parse::<usize>);
    let (w, h) = match (it.next(), it.next()) {
        (Some(Ok(w)), Some(Ok(h))) => (w, h),
        _ => return Err(FormatError::MalformedHeader(format!("bad dimensions {dims:?}"))),
    };
    if cur.line()? != "255" {
        return Err(FormatError::MalformedHeader("only maxval 255 is supported".into()));
    }
    let data = cur.take(w * h)?.iter().map(|&b| b != 0).collect();
    Ok(Mask {
        height: h,
        width: w,
        data,
    })
}

pub fn save_mask_pgm(path: &Path, mask: &Mask) -> Result<(), FormatError> {
    write_atomic(path, &encode_mask_pgm(mask))
}

// --- calibration files ---------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraEntry {
    pub name: String,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Camera-to-world rotation, row-major.
    #[serde(rename = "R")]
    pub rotation: [f64; 9],
    pub t: [f64; 3],
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibFile {
    pub f_ref: f64,
    pub cameras: Vec<CameraEntry>,
}

impl CalibFile {
    /// Builds a file from calibrations sharing one reference focal length.
    pub fn from_calibs(calibs: &[CameraCalib]) -> Result<Self, FormatError> {
        let f_ref = calibs.first().map_or(1.0, |c| c.f_ref);
        if calibs.iter().any(|c| c.f_ref != f_ref) {
            return Err(FormatError::Calib("cameras disagree on f_ref".into()));
        }
        let cameras = calibs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let r = c.rotation;
                CameraEntry {
                    name: format!("cam{i}"),
                    fx: c.fx,
                    fy: c.fy,
                    cx: c.cx,
                    cy: c.cy,
                    rotation: [
                        r[(0, 0)],
                        r[(0, 1)],
                        r[(0, 2)],
                        r[(1, 0)],
                        r[(1, 1)],
                        r[(1, 2)],
                        r[(2, 0)],
                        r[(2, 1)],
                        r[(2, 2)],
                    ],
                    t: c.translation.into(),
                    width: c.width,
                    height: c.height,
                }
            })
            .collect();
        Ok(Self { f_ref, cameras })
    }

    /// Checks each rotation at [`CALIB_FILE_TOL`] and snaps it to the
    /// nearest proper rotation.
    pub fn to_calibs(&self) -> Result<Vec<CameraCalib>, FormatError> {
        self.cameras
            .iter()
            .map(|e| {
                let mut calib = CameraCalib {
                    fx: e.fx,
                    fy: e.fy,
                    cx: e.cx,
                    cy: e.cy,
                    rotation: Matrix3::from_row_slice(&e.rotation),
                    translation: Vector3::from(e.t),
                    width: e.width,
                    height: e.height,
                    f_ref: self.f_ref,
                };
                calib
                    .check(CALIB_FILE_TOL)
                    .map_err(|err| FormatError::Calib(format!("camera {:?}: {err}", e.name)))?;
                calib.orthonormalize();
                Ok(calib)
            })
            .collect()
    }
}

pub fn save_calib(path: &Path, calibs: &[CameraCalib]) -> Result<(), FormatError> {
    let file = CalibFile::from_calibs(calibs)?;
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn load_calib(path: &Path) -> Result<Vec<CameraCalib>, FormatError> {
    let file: CalibFile = serde_json::from_slice(&read_file(path)?)?;
    file.to_calibs()
}
