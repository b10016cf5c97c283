use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::pairwise_sum;
use super::{
    build_pupil, fit_support, psf_from_pupil, remove_piston_tilt, resample_psf_to_detector,
    zernike_wavefront, PsfKernel, PupilSpec, WavefrontField,
};
use crate::error::{Error, Result};

/// Field-dependent PSF set, one kernel per region, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PsfGrid {
    rows: usize,
    cols: usize,
    kernels: Vec<PsfKernel>,
    field_coords: Vec<(f64, f64)>,
    /// Wavelengths in micrometers.
    wavelengths: Vec<f64>,
}

impl PsfGrid {
    pub fn new(
        rows: usize,
        cols: usize,
        kernels: Vec<PsfKernel>,
        field_coords: Vec<(f64, f64)>,
        wavelengths: Vec<f64>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(
                "PSF grid needs at least one region".into(),
            ));
        }
        if kernels.len() != rows * cols || field_coords.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} grid with {} kernels and {} field coordinates",
                kernels.len(),
                field_coords.len()
            )));
        }
        let (d, pitch) = (kernels[0].size(), kernels[0].pixel_pitch());
        if kernels
            .iter()
            .any(|k| k.size() != d || k.pixel_pitch() != pitch)
        {
            return Err(Error::Dimension(
                "all kernels in a grid must share support and pitch".into(),
            ));
        }
        Ok(Self {
            rows,
            cols,
            kernels,
            field_coords,
            wavelengths,
        })
    }

    /// Every region uses the same kernel.
    pub fn uniform(rows: usize, cols: usize, kernel: PsfKernel) -> Self {
        let coords = field_grid_positions(rows, cols);
        Self::new(rows, cols, vec![kernel; rows * cols], coords, Vec::new())
            .expect("uniform grid is consistent")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn kernel(&self, row: usize, col: usize) -> &PsfKernel {
        &self.kernels[row * self.cols + col]
    }

    pub fn kernels(&self) -> &[PsfKernel] {
        &self.kernels
    }

    pub fn field_coords(&self) -> &[(f64, f64)] {
        &self.field_coords
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.wavelengths
    }

    pub fn d_psf(&self) -> usize {
        self.kernels[0].size()
    }

    pub fn pixel_pitch(&self) -> f64 {
        self.kernels[0].pixel_pitch()
    }
}

/// Region-center field coordinates for a `rows × cols` layout, normalized to `[-1, 1]`.
pub fn field_grid_positions(rows: usize, cols: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let fx = (c as f64 + 0.5) / cols as f64 * 2.0 - 1.0;
            let fy = (r as f64 + 0.5) / rows as f64 * 2.0 - 1.0;
            out.push((fx, fy));
        }
    }
    out
}

/// Field-dependent third-order aberration model used to synthesize per-region
/// Zernike coefficients when no imported wavefronts are available.
///
/// All strengths are in waves at the edge of the field (normalized field
/// height 1, i.e. the sensor corner).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldAberrationModel {
    /// Field curvature: defocus growing with height².
    pub defocus: f64,
    /// Astigmatism growing with height², oriented along the field azimuth.
    pub astigmatism: f64,
    /// Coma growing with height³, oriented along the field azimuth.
    pub coma: f64,
    /// Spherical aberration, constant over the field.
    pub spherical: f64,
}

impl Default for FieldAberrationModel {
    fn default() -> Self {
        Self {
            defocus: 0.6,
            astigmatism: 0.5,
            coma: 0.4,
            spherical: 0.15,
        }
    }
}

impl FieldAberrationModel {
    pub fn coefficients(&self, (fx, fy): (f64, f64)) -> Vec<(u32, f64)> {
        let h = (fx.hypot(fy) / std::f64::consts::SQRT_2).min(1.0);
        let phi = fy.atan2(fx);
        let h2 = h * h;
        let h3 = h2 * h;
        vec![
            (4, self.defocus * h2),
            (5, self.astigmatism * h2 * (2.0 * phi).sin()),
            (6, self.astigmatism * h2 * (2.0 * phi).cos()),
            (7, self.coma * h3 * phi.sin()),
            (8, self.coma * h3 * phi.cos()),
            (11, self.spherical),
        ]
    }

    pub fn fields(&self, rows: usize, cols: usize) -> Vec<WavefrontField> {
        field_grid_positions(rows, cols)
            .into_iter()
            .map(|pos| WavefrontField::zernike(self.coefficients(pos), pos))
            .collect()
    }
}

/// Knobs for [`build_psf_grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridParams {
    pub rows: usize,
    pub cols: usize,
    /// Wavelengths in meters.
    pub wavelengths: Vec<f64>,
    /// Relative spectral weights, same order as `wavelengths`; uniform when `None`.
    pub spectral_weights: Option<Vec<f64>>,
    /// When set, wavefronts are given in waves at this wavelength (m) and
    /// scaled by `reference / λ` (fixed optical path difference). When `None`
    /// the same wave values apply at every wavelength.
    pub reference_wavelength: Option<f64>,
    pub detector_pitch: f64,
    pub d_psf: usize,
    pub pad_factor: usize,
    pub remove_piston_tilt: bool,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            rows: 6,
            cols: 8,
            wavelengths: vec![8e-6, 9e-6, 10e-6, 11e-6, 12e-6],
            spectral_weights: None,
            reference_wavelength: Some(10e-6),
            detector_pitch: 12e-6,
            d_psf: 31,
            pad_factor: 4,
            remove_piston_tilt: false,
        }
    }
}

/// Compute the broadband, detector-sampled PSF for every field region.
///
/// Each (field, wavelength) PSF is rebinned to the detector pitch before
/// spectral averaging, since pupil-plane PSF sampling scales with λ.
/// Wavelengths are sorted before averaging so the result does not depend on
/// the order they were supplied in.
pub fn build_psf_grid(
    spec: &PupilSpec,
    fields: &[WavefrontField],
    params: &GridParams,
) -> Result<PsfGrid> {
    spec.validate()?;
    let (rows, cols) = (params.rows, params.cols);
    if rows == 0 || cols == 0 || fields.len() != rows * cols {
        return Err(Error::Dimension(format!(
            "{} fields for a {rows}x{cols} layout",
            fields.len()
        )));
    }
    if params.wavelengths.is_empty() {
        return Err(Error::Parameter(
            "at least one wavelength is required".into(),
        ));
    }
    if params.d_psf.is_multiple_of(2) {
        return Err(Error::Parameter(format!(
            "d_psf must be odd, got {}",
            params.d_psf
        )));
    }
    if params.pad_factor == 0 {
        return Err(Error::Parameter("pad_factor must be >= 1".into()));
    }
    let mut spectrum: Vec<(f64, f64)> = match &params.spectral_weights {
        None => params.wavelengths.iter().map(|&l| (l, 1.0)).collect(),
        Some(w) if w.len() == params.wavelengths.len() => params
            .wavelengths
            .iter()
            .copied()
            .zip(w.iter().copied())
            .collect(),
        Some(w) => {
            return Err(Error::Dimension(format!(
                "{} spectral weights for {} wavelengths",
                w.len(),
                params.wavelengths.len()
            )))
        }
    };
    if spectrum
        .iter()
        .any(|&(l, w)| !(l > 0.0 && l.is_finite()) || !(w >= 0.0 && w.is_finite()))
    {
        return Err(Error::Parameter(
            "wavelengths must be > 0 and weights >= 0".into(),
        ));
    }
    spectrum.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let weight_total = pairwise_sum(&spectrum.iter().map(|s| s.1).collect::<Vec<_>>());
    if !(weight_total > 0.0) {
        return Err(Error::Parameter("spectral weights sum to zero".into()));
    }

    let wavefronts: Vec<Vec<f64>> = fields
        .iter()
        .map(|f| {
            let mut w = zernike_wavefront(spec, f)?;
            if params.remove_piston_tilt {
                remove_piston_tilt(spec, &mut w);
            }
            Ok(w)
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> = (0..fields.len())
        .flat_map(|f| (0..spectrum.len()).map(move |l| (f, l)))
        .collect();
    let mono: Vec<PsfKernel> = jobs
        .par_iter()
        .map(|&(f, l)| {
            let lambda = spectrum[l].0;
            monochromatic_detector_psf(spec, &wavefronts[f], lambda, params)
        })
        .collect::<Result<_>>()?;

    let d = params.d_psf;
    let kernels = mono
        .chunks(spectrum.len())
        .map(|per_lambda| {
            let mut acc = vec![0.0; d * d];
            let mut terms = vec![0.0; per_lambda.len()];
            for (i, a) in acc.iter_mut().enumerate() {
                for (t, (k, &(_, w))) in terms.iter_mut().zip(per_lambda.iter().zip(&spectrum)) {
                    *t = k.samples()[i] * (w / weight_total);
                }
                *a = pairwise_sum(&terms);
            }
            PsfKernel::normalized(d, acc, params.detector_pitch)
        })
        .collect::<Result<Vec<_>>>()?;

    let coords = fields.iter().map(|f| f.field_position).collect();
    let wavelengths_um = spectrum.iter().map(|s| s.0 * 1e6).collect();
    PsfGrid::new(rows, cols, kernels, coords, wavelengths_um)
}

fn monochromatic_detector_psf(
    spec: &PupilSpec,
    wavefront: &[f64],
    lambda: f64,
    params: &GridParams,
) -> Result<PsfKernel> {
    let scaled;
    let w = match params.reference_wavelength {
        Some(reference) if reference != lambda => {
            let s = reference / lambda;
            scaled = wavefront.iter().map(|v| v * s).collect::<Vec<_>>();
            &scaled[..]
        }
        _ => wavefront,
    };
    let pupil = build_pupil(spec, w, lambda)?;
    let src_pitch = pupil.psf_pitch(params.pad_factor);
    // enough pupil-plane samples to cover the detector support plus a margin pixel
    let span = ((params.d_psf + 2) as f64 * params.detector_pitch / src_pitch).ceil() as usize;
    let crop = span | 1;
    let fine = psf_from_pupil(&pupil, params.pad_factor, crop)?;
    let coarse = resample_psf_to_detector(&fine, params.detector_pitch)?;
    fit_support(&coarse, params.d_psf)
}
