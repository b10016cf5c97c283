//! PSF-aware blur index and the spatially modulated branch gates.
//!
//! Each region's blur factor is the RMS radius of its PSF energy about the
//! energy centroid. Factors are min-max normalized over the grid and
//! bilinearly upsampled (cell-center anchored, edge clamped) to the target
//! plane. The gates then shift the sigmoid base coefficients up or down with
//! the local blur index and clip to `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Error, Result};
use crate::optics::{PsfGrid, PsfKernel};

/// Value assigned everywhere when all regions share the same blur factor.
pub const DEGENERATE_INDEX: f64 = 0.5;

/// RMS radius (pixels) of the kernel's energy about its centroid.
pub fn psf_blur_factor(psf: &PsfKernel) -> Result<f64> {
    let d = psf.size();
    let total: f64 = psf.samples().iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateKernel);
    }
    let (mut cy, mut cx) = (0.0, 0.0);
    for y in 0..d {
        for x in 0..d {
            let p = psf.get(y, x) / total;
            cy += p * y as f64;
            cx += p * x as f64;
        }
    }
    let mut second = 0.0;
    for y in 0..d {
        for x in 0..d {
            let p = psf.get(y, x) / total;
            second += p * ((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2));
        }
    }
    Ok(second.sqrt())
}

/// Normalized blur index `k(h, w)` in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurIndexMap {
    pub width: usize,
    pub height: usize,
    pub k: Vec<f64>,
}

impl BlurIndexMap {
    pub fn new(width: usize, height: usize, k: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || k.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} values for a {height}x{width} blur map",
                k.len()
            )));
        }
        if k.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Parameter(
                "blur index values must lie in [0, 1]".into(),
            ));
        }
        Ok(Self { width, height, k })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.k[y * self.width + x]
    }
}

/// Min-max normalize the per-region blur factors of `grid`.
pub fn normalized_blur_factors(grid: &PsfGrid) -> Result<Vec<f64>> {
    let factors = grid
        .kernels()
        .iter()
        .map(psf_blur_factor)
        .collect::<Result<Vec<_>>>()?;
    let lo = factors.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = factors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Ok(vec![DEGENERATE_INDEX; factors.len()]);
    }
    Ok(factors
        .iter()
        .map(|f| ((f - lo) / (hi - lo)).clamp(0.0, 1.0))
        .collect())
}

pub fn build_blur_index_map(grid: &PsfGrid, height: usize, width: usize) -> Result<BlurIndexMap> {
    let values = normalized_blur_factors(grid)?;
    let k = upsample_bilinear(&values, grid.rows(), grid.cols(), height, width)?;
    BlurIndexMap::new(width, height, k)
}

/// Bilinear upsampling with region centers at `((r + ½)·H/R − ½, (c + ½)·W/C − ½)`.
/// Samples beyond the outermost centers take the edge value.
pub fn upsample_bilinear(
    values: &[f64],
    rows: usize,
    cols: usize,
    height: usize,
    width: usize,
) -> Result<Vec<f64>> {
    if rows == 0 || cols == 0 || values.len() != rows * cols {
        return Err(Error::Dimension(format!(
            "{} values for a {rows}x{cols} grid",
            values.len()
        )));
    }
    if height == 0 || width == 0 {
        return Err(Error::Dimension("target plane must be at least 1x1".into()));
    }
    let axis = |i: usize, n_out: usize, n_in: usize| -> (usize, usize, f64) {
        let pos =
            ((i as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let i0 = pos.floor() as usize;
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, pos - i0 as f64)
    };
    let xs: Vec<_> = (0..width).map(|x| axis(x, width, cols)).collect();
    let mut out = Vec::with_capacity(height * width);
    for y in 0..height {
        let (r0, r1, ty) = axis(y, height, rows);
        for &(c0, c1, tx) in &xs {
            let top = values[r0 * cols + c0] * (1.0 - tx) + values[r0 * cols + c1] * tx;
            let bot = values[r1 * cols + c0] * (1.0 - tx) + values[r1 * cols + c1] * tx;
            out.push(top * (1.0 - ty) + bot * ty);
        }
    }
    Ok(out)
}

/// Gate logits, modulation strengths and the residual scale of the bridge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GateParams {
    pub theta_s: f64,
    pub theta_l: f64,
    pub theta_lambda: f64,
    pub alpha_s: f64,
    pub alpha_l: f64,
    pub alpha_lambda: f64,
    pub eta: f64,
}

impl Default for GateParams {
    fn default() -> Self {
        Self {
            theta_s: -3.0,
            theta_l: -2.0,
            theta_lambda: -4.0,
            alpha_s: 0.5,
            alpha_l: 0.5,
            alpha_lambda: 0.5,
            eta: 0.2,
        }
    }
}

impl GateParams {
    /// `eta` may be exactly 0 to switch the gated residual off.
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [
            ("theta_s", self.theta_s),
            ("theta_l", self.theta_l),
            ("theta_lambda", self.theta_lambda),
        ] {
            if !v.is_finite() {
                return Err(range(name, "finite"));
            }
        }
        for (name, v) in [
            ("alpha_s", self.alpha_s),
            ("alpha_l", self.alpha_l),
            ("alpha_lambda", self.alpha_lambda),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(range(name, ">= 0"));
            }
        }
        if !(0.0..1.0).contains(&self.eta) {
            return Err(range("eta", "in [0, 1)"));
        }
        Ok(())
    }
}

fn range(field: &str, bound: &str) -> ConfigError {
    ConfigError::Range {
        field: field.into(),
        bound: bound.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateMaps {
    pub width: usize,
    pub height: usize,
    pub g_s: Vec<f64>,
    pub g_l: Vec<f64>,
    pub g_lambda: Vec<f64>,
}

pub fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// `g_s = clip(σ(θ_s) + α_s(1−k))`, `g_l = clip(σ(θ_l) + α_l·k)`,
/// `g_λ = clip(σ(θ_λ) + α_λ(1−k))`.
pub fn compute_gate_maps(k: &BlurIndexMap, params: &GateParams) -> GateMaps {
    let (bs, bl, bx) = (
        logistic(params.theta_s),
        logistic(params.theta_l),
        logistic(params.theta_lambda),
    );
    let clip = |v: f64| v.clamp(0.0, 1.0);
    GateMaps {
        width: k.width,
        height: k.height,
        g_s: k
            .k
            .iter()
            .map(|&v| clip(bs + params.alpha_s * (1.0 - v)))
            .collect(),
        g_l: k.k.iter().map(|&v| clip(bl + params.alpha_l * v)).collect(),
        g_lambda: k
            .k
            .iter()
            .map(|&v| clip(bx + params.alpha_lambda * (1.0 - v)))
            .collect(),
    }
}
