//! Scalar-diffraction PSF synthesis.
//!
//! A [`PupilSpec`] fixes the aperture geometry and pupil sampling. A
//! [`WavefrontField`] supplies the wavefront error at one field position, either
//! as Noll-indexed Zernike coefficients or as an imported raster. The pupil
//! function `A·exp(i2πW)` is zero-padded and Fourier transformed; its squared
//! magnitude is the monochromatic PSF, which is then rebinned onto detector
//! pixels and spectrally averaged per field region into a [`PsfGrid`].

mod grid;
mod kernel;
mod resample;
pub mod zernike;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use grid::{build_psf_grid, field_grid_positions, FieldAberrationModel, GridParams, PsfGrid};
pub use kernel::{pairwise_sum, psf_from_pupil, PsfKernel, STORED_SUM_TOLERANCE};
pub use resample::{fit_support, rebin, resample_psf_to_detector};

/// Aperture geometry and pupil-plane sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PupilSpec {
    /// Samples per side of the square pupil grid; the aperture diameter spans the grid.
    pub grid_size: usize,
    /// Entrance pupil diameter in meters.
    pub aperture_diameter: f64,
    /// Focal length in meters.
    pub focal_length: f64,
    /// Central obstruction diameter as a fraction of the aperture diameter.
    pub obstruction_ratio: f64,
}

impl Default for PupilSpec {
    /// f = 70 mm at F/1.0, sampled on 256².
    fn default() -> Self {
        Self {
            grid_size: 256,
            aperture_diameter: 0.070,
            focal_length: 0.070,
            obstruction_ratio: 0.0,
        }
    }
}

impl PupilSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 32 || !self.grid_size.is_multiple_of(2) {
            return Err(Error::Parameter(format!(
                "grid_size must be even and >= 32, got {}",
                self.grid_size
            )));
        }
        if !(self.aperture_diameter > 0.0 && self.aperture_diameter.is_finite()) {
            return Err(Error::Parameter("aperture_diameter must be > 0".into()));
        }
        if !(self.focal_length > 0.0 && self.focal_length.is_finite()) {
            return Err(Error::Parameter("focal_length must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.obstruction_ratio) {
            return Err(Error::Parameter(
                "obstruction_ratio must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }

    pub fn f_number(&self) -> f64 {
        self.focal_length / self.aperture_diameter
    }

    /// Pupil sample spacing in meters.
    pub fn sample_spacing(&self) -> f64 {
        self.aperture_diameter / self.grid_size as f64
    }

    /// Normalized pupil coordinates `(x, y)` of sample `(row, col)`, in units of
    /// the aperture radius. Samples sit at half-integer offsets from the center.
    pub fn normalized_coords(&self, row: usize, col: usize) -> (f64, f64) {
        let half = self.grid_size as f64 / 2.0;
        let x = (col as f64 + 0.5 - half) / half;
        let y = (row as f64 + 0.5 - half) / half;
        (x, y)
    }

    /// Annular aperture transmission mask, row-major.
    pub fn aperture_mask(&self) -> Vec<bool> {
        let n = self.grid_size;
        let obs2 = self.obstruction_ratio * self.obstruction_ratio;
        let mut mask = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                let (x, y) = self.normalized_coords(r, c);
                let rho2 = x * x + y * y;
                mask.push(rho2 <= 1.0 && rho2 >= obs2);
            }
        }
        mask
    }
}

/// Source of the wavefront error at one field point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WavefrontSource {
    /// `(Noll index, coefficient in waves)` pairs.
    Zernike(Vec<(u32, f64)>),
    /// `grid_size²` row-major samples in waves.
    Raster(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WavefrontField {
    pub source: WavefrontSource,
    /// Normalized field position in `[-1, 1]²`.
    pub field_position: (f64, f64),
}

impl WavefrontField {
    pub fn zernike(coeffs: Vec<(u32, f64)>, field_position: (f64, f64)) -> Self {
        Self {
            source: WavefrontSource::Zernike(coeffs),
            field_position,
        }
    }

    pub fn raster(samples: Vec<f64>, field_position: (f64, f64)) -> Self {
        Self {
            source: WavefrontSource::Raster(samples),
            field_position,
        }
    }

    pub fn unaberrated(field_position: (f64, f64)) -> Self {
        Self::zernike(Vec::new(), field_position)
    }
}

/// Evaluate the wavefront (waves) on the pupil grid. Samples outside the
/// aperture are zero; raster sources pass through unchanged.
pub fn zernike_wavefront(spec: &PupilSpec, field: &WavefrontField) -> Result<Vec<f64>> {
    spec.validate()?;
    let n = spec.grid_size;
    match &field.source {
        WavefrontSource::Raster(r) => {
            if r.len() != n * n {
                return Err(Error::Dimension(format!(
                    "wavefront raster has {} samples, pupil grid needs {}",
                    r.len(),
                    n * n
                )));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parameter(
                    "wavefront raster contains non-finite values".into(),
                ));
            }
            Ok(r.clone())
        }
        WavefrontSource::Zernike(coeffs) => {
            for &(j, c) in coeffs {
                if j == 0 {
                    return Err(Error::Parameter("Noll indices start at 1".into()));
                }
                if !c.is_finite() {
                    return Err(Error::Parameter(format!(
                        "coefficient for Z{j} is not finite"
                    )));
                }
            }
            let mask = spec.aperture_mask();
            let mut out = vec![0.0; n * n];
            for r in 0..n {
                for c in 0..n {
                    let i = r * n + c;
                    if !mask[i] {
                        continue;
                    }
                    let (x, y) = spec.normalized_coords(r, c);
                    let rho = x.hypot(y);
                    let theta = y.atan2(x);
                    out[i] = coeffs
                        .iter()
                        .map(|&(j, a)| a * zernike::zernike(j, rho, theta))
                        .sum();
                }
            }
            Ok(out)
        }
    }
}

/// Least-squares removal of piston and x/y tilt over the aperture.
pub fn remove_piston_tilt(spec: &PupilSpec, wavefront: &mut [f64]) {
    let n = spec.grid_size;
    let mask = spec.aperture_mask();
    // normal equations for w ≈ a + b·x + c·y
    let mut ata = [[0.0f64; 3]; 3];
    let mut atb = [0.0f64; 3];
    for r in 0..n {
        for c in 0..n {
            let i = r * n + c;
            if !mask[i] {
                continue;
            }
            let (x, y) = spec.normalized_coords(r, c);
            let basis = [1.0, x, y];
            for p in 0..3 {
                atb[p] += basis[p] * wavefront[i];
                for q in 0..3 {
                    ata[p][q] += basis[p] * basis[q];
                }
            }
        }
    }
    let Some(coef) = solve3(ata, atb) else { return };
    for r in 0..n {
        for c in 0..n {
            let i = r * n + c;
            if mask[i] {
                let (x, y) = spec.normalized_coords(r, c);
                wavefront[i] -= coef[0] + coef[1] * x + coef[2] * y;
            }
        }
    }
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Complex pupil function sampled on the pupil grid.
#[derive(Debug, Clone)]
pub struct Pupil {
    size: usize,
    field: Vec<Complex64>,
    /// Pupil sample spacing (m).
    sample_spacing: f64,
    /// Wavelength (m).
    wavelength: f64,
    focal_length: f64,
}

impl Pupil {
    /// Wrap an arbitrary square complex grid.
    pub fn from_samples(
        size: usize,
        field: Vec<Complex64>,
        sample_spacing: f64,
        wavelength: f64,
        focal_length: f64,
    ) -> Result<Self> {
        if field.len() != size * size {
            return Err(Error::Dimension(format!(
                "pupil must be square: {} samples for side {size}",
                field.len()
            )));
        }
        if size < 32 {
            return Err(Error::Dimension(format!(
                "pupil side must be >= 32, got {size}"
            )));
        }
        if !(wavelength > 0.0 && sample_spacing > 0.0 && focal_length > 0.0) {
            return Err(Error::Parameter(
                "wavelength, sample spacing and focal length must be > 0".into(),
            ));
        }
        Ok(Self {
            size,
            field,
            sample_spacing,
            wavelength,
            focal_length,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.field
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    /// Image-plane sample pitch (m) of the PSF for a given zero-padding factor.
    pub fn psf_pitch(&self, pad_factor: usize) -> f64 {
        self.wavelength * self.focal_length
            / (pad_factor as f64 * self.size as f64 * self.sample_spacing)
    }
}

/// `U = A·exp(i·2π·W)` with `A` the annular aperture indicator and `W` in waves.
pub fn build_pupil(spec: &PupilSpec, wavefront: &[f64], wavelength: f64) -> Result<Pupil> {
    spec.validate()?;
    if !(wavelength > 0.0 && wavelength.is_finite()) {
        return Err(Error::Parameter(format!(
            "wavelength must be > 0, got {wavelength}"
        )));
    }
    let n = spec.grid_size;
    if wavefront.len() != n * n {
        return Err(Error::Dimension(format!(
            "wavefront has {} samples, pupil grid needs {}",
            wavefront.len(),
            n * n
        )));
    }
    let mask = spec.aperture_mask();
    let field = mask
        .iter()
        .zip(wavefront)
        .map(|(&inside, &w)| {
            if inside {
                Complex64::from_polar(1.0, std::f64::consts::TAU * w)
            } else {
                Complex64::default()
            }
        })
        .collect();
    Pupil::from_samples(
        n,
        field,
        spec.sample_spacing(),
        wavelength,
        spec.focal_length,
    )
}
