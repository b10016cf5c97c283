use num_complex::Complex64;

use super::Pupil;
use crate::error::{Error, Result};
use crate::fft::{fftshift, Fft2d};

/// Tolerance on the unit-sum invariant for kernels imported from 32-bit storage.
pub const STORED_SUM_TOLERANCE: f64 = 1e-6;

/// Discrete, nonnegative, unit-sum PSF on an odd square support.
#[derive(Debug, Clone, PartialEq)]
pub struct PsfKernel {
    size: usize,
    samples: Vec<f64>,
    pixel_pitch: f64,
}

impl PsfKernel {
    /// Build a kernel from nonnegative energies, scaling them to unit sum.
    pub fn normalized(size: usize, mut samples: Vec<f64>, pixel_pitch: f64) -> Result<Self> {
        check_shape(size, &samples, pixel_pitch)?;
        let total = pairwise_sum(&samples);
        if !(total > 0.0) {
            return Err(Error::DegenerateKernel);
        }
        for v in &mut samples {
            *v /= total;
        }
        Ok(Self {
            size,
            samples,
            pixel_pitch,
        })
    }

    /// Accept already-normalized samples as stored, without rescaling. The sum
    /// must be within [`STORED_SUM_TOLERANCE`] of one.
    pub fn from_stored(size: usize, samples: Vec<f64>, pixel_pitch: f64) -> Result<Self> {
        check_shape(size, &samples, pixel_pitch)?;
        let total = pairwise_sum(&samples);
        if (total - 1.0).abs() > STORED_SUM_TOLERANCE {
            return Err(Error::Parameter(format!(
                "stored kernel sums to {total}, expected 1"
            )));
        }
        Ok(Self {
            size,
            samples,
            pixel_pitch,
        })
    }

    /// All energy in the center sample.
    pub fn delta(size: usize, pixel_pitch: f64) -> Self {
        assert!(size % 2 == 1);
        let mut samples = vec![0.0; size * size];
        samples[size * size / 2] = 1.0;
        Self {
            size,
            samples,
            pixel_pitch,
        }
    }

    /// Sampled isotropic Gaussian with per-axis standard deviation `sigma` pixels.
    pub fn gaussian(size: usize, sigma: f64, pixel_pitch: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::Parameter("gaussian sigma must be > 0".into()));
        }
        let c = (size / 2) as f64;
        let mut samples = Vec::with_capacity(size * size);
        for y in 0..size {
            for x in 0..size {
                let r2 = (y as f64 - c).powi(2) + (x as f64 - c).powi(2);
                samples.push((-r2 / (2.0 * sigma * sigma)).exp());
            }
        }
        Self::normalized(size, samples, pixel_pitch)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn pixel_pitch(&self) -> f64 {
        self.pixel_pitch
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.samples[y * self.size + x]
    }

    pub fn sum(&self) -> f64 {
        pairwise_sum(&self.samples)
    }
}

fn check_shape(size: usize, samples: &[f64], pixel_pitch: f64) -> Result<()> {
    if size.is_multiple_of(2) {
        return Err(Error::Dimension(format!(
            "kernel size must be odd, got {size}"
        )));
    }
    if samples.len() != size * size {
        return Err(Error::Dimension(format!(
            "{} samples for a {size}x{size} kernel",
            samples.len()
        )));
    }
    if !(pixel_pitch > 0.0 && pixel_pitch.is_finite()) {
        return Err(Error::Parameter("kernel pixel pitch must be > 0".into()));
    }
    if samples.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Parameter(
            "kernel samples must be finite and >= 0".into(),
        ));
    }
    Ok(())
}

/// Pairwise (cascade) summation; the result depends only on element order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Squared magnitude of the centered DFT of the zero-padded pupil, cropped to
/// an odd `crop × crop` window around the optical axis and normalized.
///
/// The output pitch is `λ·f / (pad_factor · N · dx)`.
pub fn psf_from_pupil(pupil: &Pupil, pad_factor: usize, crop: usize) -> Result<PsfKernel> {
    if pad_factor == 0 {
        return Err(Error::Parameter("pad factor must be >= 1".into()));
    }
    if crop.is_multiple_of(2) || crop == 0 {
        return Err(Error::Parameter(format!("crop must be odd, got {crop}")));
    }
    if pupil.samples().iter().all(|u| u.norm_sqr() == 0.0) {
        return Err(Error::DegeneratePupil);
    }
    let n = pupil.size();
    let m = n * pad_factor;
    let crop = crop.min(m - 1);

    let mut buf = vec![Complex64::default(); m * m];
    for r in 0..n {
        buf[r * m..r * m + n].copy_from_slice(&pupil.samples()[r * n..(r + 1) * n]);
    }
    Fft2d::new(m, m).forward(&mut buf);
    let power: Vec<f64> = buf.iter().map(|c| c.norm_sqr()).collect();
    let centered = fftshift(&power, m, m);

    let half = crop / 2;
    let c0 = m / 2 - half;
    let mut samples = Vec::with_capacity(crop * crop);
    for r in 0..crop {
        samples.extend_from_slice(&centered[(c0 + r) * m + c0..(c0 + r) * m + c0 + crop]);
    }
    PsfKernel::normalized(crop, samples, pupil.psf_pitch(pad_factor))
}
