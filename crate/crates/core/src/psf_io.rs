//! PSF grid container.
//!
//! Binary layout, little-endian:
//!
//! | field   | type        |
//! |---------|-------------|
//! | magic   | `b"PSFG"`   |
//! | version | u32 (= 1)   |
//! | rows    | u32         |
//! | cols    | u32         |
//! | d_psf   | u32         |
//! | pitch   | f64, meters |
//! | samples | `rows·cols·d_psf²` × f32, kernel-major then row-major |
//!
//! Wavelengths and field coordinates live in a JSON sidecar next to the grid
//! (`<file>.json`). A grid without a sidecar gets region-center coordinates.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::binio::{put_f32s, put_u32, Reader};
use crate::error::{Error, FormatError, Result};
use crate::optics::{field_grid_positions, PsfGrid, PsfKernel};

pub const MAGIC: [u8; 4] = *b"PSFG";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 * 4 + 8;
/// Guard against absurd headers before allocating.
const MAX_SAMPLES: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMetadata {
    pub rows: usize,
    pub cols: usize,
    pub d_psf: usize,
    pub pixel_pitch: f64,
    pub wavelengths_um: Vec<f64>,
    pub field_coords: Vec<(f64, f64)>,
}

impl GridMetadata {
    pub fn of(grid: &PsfGrid) -> Self {
        Self {
            rows: grid.rows(),
            cols: grid.cols(),
            d_psf: grid.d_psf(),
            pixel_pitch: grid.pixel_pitch(),
            wavelengths_um: grid.wavelengths().to_vec(),
            field_coords: grid.field_coords().to_vec(),
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn grid_to_bytes(grid: &PsfGrid) -> Vec<u8> {
    let d = grid.d_psf();
    let mut out = Vec::with_capacity(HEADER_LEN + grid.kernels().len() * d * d * 4);
    out.extend_from_slice(&MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, grid.rows() as u32);
    put_u32(&mut out, grid.cols() as u32);
    put_u32(&mut out, d as u32);
    out.extend_from_slice(&grid.pixel_pitch().to_le_bytes());
    for k in grid.kernels() {
        put_f32s(&mut out, k.samples());
    }
    out
}

/// Parse the binary container. Metadata beyond the header is filled with defaults.
pub fn grid_from_bytes(bytes: &[u8]) -> Result<PsfGrid> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version).into());
    }
    let rows = r.u32()? as u64;
    let cols = r.u32()? as u64;
    let d = r.u32()? as u64;
    let pitch = r.f64()?;
    let total = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(d))
        .and_then(|n| n.checked_mul(d))
        .filter(|&n| n <= MAX_SAMPLES)
        .ok_or_else(|| {
            FormatError::DimensionOverflow(format!("{rows}x{cols} kernels of {d}x{d}"))
        })?;
    if rows == 0 || cols == 0 || d == 0 || d.is_multiple_of(2) {
        return Err(
            FormatError::Malformed(format!("invalid grid shape {rows}x{cols}, d_psf {d}")).into(),
        );
    }
    let expected = HEADER_LEN as u64 + total * 4;
    if (bytes.len() as u64) < expected {
        return Err(FormatError::Truncated {
            expected,
            found: bytes.len() as u64,
        }
        .into());
    }
    let samples = r.f32s(total as usize)?;
    r.finish()?;
    let (rows, cols, d) = (rows as usize, cols as usize, d as usize);
    let kernels = samples
        .chunks_exact(d * d)
        .map(|c| PsfKernel::from_stored(d, c.to_vec(), pitch))
        .collect::<Result<Vec<_>>>()?;
    PsfGrid::new(
        rows,
        cols,
        kernels,
        field_grid_positions(rows, cols),
        Vec::new(),
    )
}

/// Write the grid and its JSON sidecar.
pub fn write_psf_grid(path: impl AsRef<Path>, grid: &PsfGrid) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, grid_to_bytes(grid)).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&GridMetadata::of(grid)).expect("metadata serializes");
    fs::write(&side, json).map_err(|e| Error::io(&side, e))
}

pub fn read_psf_grid(path: impl AsRef<Path>) -> Result<PsfGrid> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let grid = grid_from_bytes(&bytes)?;
    let side = sidecar_path(path);
    if !side.exists() {
        return Ok(grid);
    }
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: GridMetadata = serde_json::from_str(&text)
        .map_err(|e| FormatError::Malformed(format!("{}: {e}", side.display())))?;
    if meta.rows != grid.rows() || meta.cols != grid.cols() || meta.d_psf != grid.d_psf() {
        return Err(FormatError::Malformed(format!(
            "sidecar describes {}x{} grid of d_psf {}, binary has {}x{} of {}",
            meta.rows,
            meta.cols,
            meta.d_psf,
            grid.rows(),
            grid.cols(),
            grid.d_psf()
        ))
        .into());
    }
    PsfGrid::new(
        grid.rows(),
        grid.cols(),
        grid.kernels().to_vec(),
        meta.field_coords,
        meta.wavelengths_um,
    )
}
