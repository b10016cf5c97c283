//! Spatially varying PSF degradation and the sensor quantization/noise model.
//!
//! The clean image is cut into `p × p` patches laid out like the PSF grid.
//! Every patch is widened by the blending margin and the kernel radius (with
//! edge replication at the image border), convolved with its own kernel, and
//! recombined with the [`BlendWeights`] partition of unity.

mod blend;
mod noise;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{next_fast_len, Fft2d};
use crate::optics::{PsfGrid, PsfKernel};
use crate::plane::ImagePlane;

pub use blend::{make_blend_weights, AxisWeights, BlendWeights};
pub use noise::{apply_noise, CLAMP_HI, CLAMP_LO};

/// 14-bit ADC full scale used to map the noise scale `q` to a normalized step.
pub const DEFAULT_FULL_SCALE: f64 = 16384.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvMethod {
    #[default]
    Fft,
    Direct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegradationConfig {
    pub patch_size: usize,
    pub overlap: usize,
    /// Quantization step in normalized intensity units; 0 disables quantization.
    pub q_step: f64,
    /// Standard deviation of the additive Gaussian term.
    pub sigma: f64,
    pub seed: u64,
    pub method: ConvMethod,
}

impl Default for DegradationConfig {
    fn default() -> Self {
        Self {
            patch_size: 80,
            overlap: 16,
            q_step: 90.0 / DEFAULT_FULL_SCALE,
            sigma: 0.0003,
            seed: 0,
            method: ConvMethod::Fft,
        }
    }
}

impl DegradationConfig {
    pub(crate) fn validate_noise(&self) -> Result<()> {
        if !(self.q_step >= 0.0 && self.q_step.is_finite()) {
            return Err(Error::Parameter(format!(
                "q_step must be >= 0, got {}",
                self.q_step
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Parameter(format!(
                "sigma must be >= 0, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// Per-patch FFT convolution sizes and cached kernel spectra.
struct FftPlan {
    fft: Fft2d,
    spectra: Vec<Vec<Complex64>>,
}

impl FftPlan {
    fn new(grid: &PsfGrid, max_extent: usize) -> Self {
        let n = next_fast_len(max_extent);
        let fft = Fft2d::new(n, n);
        let spectra = grid
            .kernels()
            .par_iter()
            .map(|k| {
                let d = k.size();
                let mut buf = vec![Complex64::default(); n * n];
                for y in 0..d {
                    for x in 0..d {
                        buf[y * n + x] = Complex64::new(k.get(y, x), 0.0);
                    }
                }
                fft.forward(&mut buf);
                buf
            })
            .collect();
        Self { fft, spectra }
    }
}

/// Sum over patches of `W[m][n] ⊙ (patch[m][n] * K[m][n])`.
pub fn degrade_image(
    img: &ImagePlane,
    grid: &PsfGrid,
    cfg: &DegradationConfig,
) -> Result<ImagePlane> {
    let (h, w) = (img.height(), img.width());
    let weights = make_blend_weights(h, w, cfg.patch_size, cfg.overlap)?;
    if weights.patch_rows() != grid.rows() || weights.patch_cols() != grid.cols() {
        return Err(Error::Dimension(format!(
            "{h}x{w} with patch size {} gives a {}x{} lattice, PSF grid is {}x{}",
            cfg.patch_size,
            weights.patch_rows(),
            weights.patch_cols(),
            grid.rows(),
            grid.cols()
        )));
    }
    let r = grid.d_psf() / 2;
    let max_support = weights
        .rows
        .iter()
        .chain(&weights.cols)
        .map(|a| a.weights.len())
        .max()
        .unwrap_or(0);
    let plan = match cfg.method {
        ConvMethod::Fft => Some(FftPlan::new(grid, max_support + 2 * r)),
        ConvMethod::Direct => None,
    };

    let patches: Vec<(usize, usize)> = (0..grid.rows())
        .flat_map(|m| (0..grid.cols()).map(move |n| (m, n)))
        .collect();
    let blurred: Vec<Vec<f64>> = patches
        .par_iter()
        .map(|&(m, n)| {
            let ry = &weights.rows[m];
            let rx = &weights.cols[n];
            let kernel = grid.kernel(m, n);
            match &plan {
                Some(p) => convolve_region_fft(img, kernel, ry, rx, p, m * grid.cols() + n),
                None => convolve_region_direct(img, kernel, ry, rx),
            }
        })
        .collect();

    // fixed patch order keeps accumulation bitwise reproducible
    let mut out = vec![0.0; h * w];
    for (&(m, n), block) in patches.iter().zip(&blurred) {
        let ry = &weights.rows[m];
        let rx = &weights.cols[n];
        let bw = rx.weights.len();
        for (j, &wy) in ry.weights.iter().enumerate() {
            let y = ry.start + j;
            let row = &mut out[y * w + rx.start..y * w + rx.end()];
            for ((o, &wx), &v) in row
                .iter_mut()
                .zip(&rx.weights)
                .zip(&block[j * bw..(j + 1) * bw])
            {
                *o += wy * wx * v;
            }
        }
    }
    ImagePlane::new(w, h, out)
}

fn convolve_region_direct(
    img: &ImagePlane,
    k: &PsfKernel,
    ry: &AxisWeights,
    rx: &AxisWeights,
) -> Vec<f64> {
    let d = k.size();
    let r = (d / 2) as isize;
    let (bh, bw) = (ry.weights.len(), rx.weights.len());
    // widened input tile, edge-replicated
    let (eh, ew) = (bh + d - 1, bw + d - 1);
    let mut ext = Vec::with_capacity(eh * ew);
    for i in 0..eh {
        let y = ry.start as isize - r + i as isize;
        for j in 0..ew {
            ext.push(img.get_clamped(y, rx.start as isize - r + j as isize));
        }
    }
    let ks = k.samples();
    let mut out = vec![0.0; bh * bw];
    for yy in 0..bh {
        for xx in 0..bw {
            let mut acc = 0.0;
            for a in 0..d {
                let erow = &ext[(yy + d - 1 - a) * ew..];
                let krow = &ks[a * d..(a + 1) * d];
                for (b, &kv) in krow.iter().enumerate() {
                    acc += kv * erow[xx + d - 1 - b];
                }
            }
            out[yy * bw + xx] = acc;
        }
    }
    out
}

fn convolve_region_fft(
    img: &ImagePlane,
    k: &PsfKernel,
    ry: &AxisWeights,
    rx: &AxisWeights,
    plan: &FftPlan,
    index: usize,
) -> Vec<f64> {
    let n = plan.fft.rows();
    let d = k.size();
    let r = (d / 2) as isize;
    let (bh, bw) = (ry.weights.len(), rx.weights.len());
    let (eh, ew) = (bh + d - 1, bw + d - 1);
    let mut buf = vec![Complex64::default(); n * n];
    for i in 0..eh {
        let y = ry.start as isize - r + i as isize;
        for j in 0..ew {
            buf[i * n + j].re = img.get_clamped(y, rx.start as isize - r + j as isize);
        }
    }
    plan.fft.forward(&mut buf);
    for (b, s) in buf.iter_mut().zip(&plan.spectra[index]) {
        *b *= s;
    }
    plan.fft.inverse(&mut buf);
    let scale = 1.0 / (n * n) as f64;
    // circular indices ≥ d-1 are free of wrap-around
    let mut out = Vec::with_capacity(bh * bw);
    for yy in 0..bh {
        let row = &buf[(yy + d - 1) * n + d - 1..(yy + d - 1) * n + d - 1 + bw];
        out.extend(row.iter().map(|c| c.re * scale));
    }
    out
}
