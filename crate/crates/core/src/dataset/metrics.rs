use std::fmt;

use crate::error::{Error, Result};
use crate::optics::pairwise_sum;
use crate::plane::ImagePlane;

/// Reconstruction fidelity between two planes of nominal range `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub mse: f64,
    /// `+∞` for identical images.
    pub psnr: f64,
}

pub fn image_metrics(a: &ImagePlane, b: &ImagePlane) -> Result<MetricReport> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::Dimension(format!(
            "{}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    let sq: Vec<f64> = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .collect();
    let mse = pairwise_sum(&sq) / sq.len() as f64;
    let psnr = if mse > 0.0 {
        10.0 * (1.0 / mse).log10()
    } else {
        f64::INFINITY
    };
    Ok(MetricReport { mse, psnr })
}

impl fmt::Display for MetricReport {
    /// `key=value` lines; infinite PSNR prints as `inf`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mse={:.12e}", self.mse)?;
        if self.psnr.is_infinite() {
            writeln!(f, "psnr=inf")
        } else {
            writeln!(f, "psnr={:.6}", self.psnr)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_images() {
        let a = ImagePlane::from_fn(5, 4, |y, x| (y + x) as f64 / 10.0);
        let m = image_metrics(&a, &a).unwrap();
        assert_eq!(m.mse, 0.0);
        assert!(m.psnr.is_infinite());
        assert!(m.to_string().contains("psnr=inf"));
    }

    #[test]
    fn constant_offset() {
        let a = ImagePlane::from_fn(8, 8, |y, x| (y * 8 + x) as f64 / 100.0);
        let b = ImagePlane::from_fn(8, 8, |y, x| (y * 8 + x) as f64 / 100.0 + 0.1);
        let m = image_metrics(&a, &b).unwrap();
        assert!((m.mse - 0.01).abs() < 1e-12);
        assert!((m.psnr - 20.0).abs() < 1e-9);
        assert_eq!(image_metrics(&b, &a).unwrap(), m);
    }

    #[test]
    fn shape_mismatch() {
        let a = ImagePlane::filled(4, 4, 0.0);
        let b = ImagePlane::filled(4, 5, 0.0);
        assert!(matches!(image_metrics(&a, &b), Err(Error::Dimension(_))));
    }
}
