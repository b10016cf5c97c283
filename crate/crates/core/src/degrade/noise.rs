use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::DegradationConfig;
use crate::error::Result;
use crate::plane::ImagePlane;

pub const CLAMP_LO: f64 = 1e-20;
pub const CLAMP_HI: f64 = 1.0;

/// Quantize, add Gaussian noise and clamp:
/// `clamp((floor(v / q) + ε) · q, 1e-20, 1)` with `ε ~ N(0, σ²)`.
///
/// With `q_step = 0` the floor is skipped and `ε` is added directly.
/// Each image row draws from its own ChaCha8 stream keyed by `(seed, row)`,
/// so the result is independent of how rows are scheduled across threads.
pub fn apply_noise(img: &ImagePlane, cfg: &DegradationConfig) -> Result<ImagePlane> {
    cfg.validate_noise()?;
    let (w, h) = (img.width(), img.height());
    let (q, sigma, seed) = (cfg.q_step, cfg.sigma, cfg.seed);
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w)
        .zip(img.data().par_chunks(w))
        .enumerate()
        .for_each(|(row, (dst, src))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(row as u64);
            for (d, &v) in dst.iter_mut().zip(src) {
                let eps = if sigma > 0.0 {
                    sigma * rng.sample::<f64, _>(StandardNormal)
                } else {
                    0.0
                };
                let noisy = if q > 0.0 {
                    ((v / q).floor() + eps) * q
                } else {
                    v + eps
                };
                *d = noisy.clamp(CLAMP_LO, CLAMP_HI);
            }
        });
    ImagePlane::new(w, h, out)
}
