use super::PsfKernel;
use crate::error::{Error, Result};

/// Area-weighted rebinning of a square `size × size` array from `src_pitch` to
/// `dst_pitch`, with both grids centered on the array's geometric center.
///
/// Odd inputs produce odd outputs. An even input whose natural output is even
/// is rebinned at that size and then padded with a trailing zero row and
/// column. Returns `(samples, output_size)`; energy is conserved.
pub fn rebin(
    samples: &[f64],
    size: usize,
    src_pitch: f64,
    dst_pitch: f64,
) -> Result<(Vec<f64>, usize)> {
    if !(src_pitch > 0.0 && dst_pitch > 0.0 && src_pitch.is_finite() && dst_pitch.is_finite()) {
        return Err(Error::Parameter("pixel pitches must be > 0".into()));
    }
    if samples.len() != size * size {
        return Err(Error::Dimension(format!(
            "{} samples for side {size}",
            samples.len()
        )));
    }
    // everything below is in source-pixel units
    let ratio = dst_pitch / src_pitch;
    let mut n = (size as f64 / ratio - 1e-9).ceil() as usize;
    if n == 0 {
        return Err(Error::Resolution("rebinned kernel would be empty".into()));
    }
    let mut pad_trailing = false;
    if n.is_multiple_of(2) {
        if size % 2 == 1 {
            n += 1;
        } else {
            pad_trailing = true;
        }
    }

    let weights = overlap_matrix(size, n, ratio);
    // rows: tmp[r][j] = Σ_i K[r][i]·w[j][i]
    let mut tmp = vec![0.0; size * n];
    for r in 0..size {
        let row = &samples[r * size..(r + 1) * size];
        for (j, wj) in weights.iter().enumerate() {
            tmp[r * n + j] = wj.iter().map(|&(i, w)| row[i] * w).sum();
        }
    }
    let mut out = vec![0.0; n * n];
    for (jr, wr) in weights.iter().enumerate() {
        for jc in 0..n {
            out[jr * n + jc] = wr.iter().map(|&(i, w)| tmp[i * n + jc] * w).sum();
        }
    }

    if pad_trailing {
        let m = n + 1;
        let mut padded = vec![0.0; m * m];
        for r in 0..n {
            padded[r * m..r * m + n].copy_from_slice(&out[r * n..(r + 1) * n]);
        }
        return Ok((padded, m));
    }
    Ok((out, n))
}

/// Sparse rows: for each destination pixel, the `(source index, covered fraction)` pairs.
fn overlap_matrix(size: usize, n: usize, ratio: f64) -> Vec<Vec<(usize, f64)>> {
    let src_c = (size as f64 - 1.0) / 2.0;
    let dst_c = (n as f64 - 1.0) / 2.0;
    (0..n)
        .map(|j| {
            let lo = (j as f64 - dst_c - 0.5) * ratio;
            let hi = (j as f64 - dst_c + 0.5) * ratio;
            (0..size)
                .filter_map(|i| {
                    let slo = i as f64 - src_c - 0.5;
                    let shi = slo + 1.0;
                    let overlap = hi.min(shi) - lo.max(slo);
                    (overlap > 1e-12).then_some((i, overlap))
                })
                .collect()
        })
        .collect()
}

/// Rebin a kernel onto detector pixels of `detector_pitch` and renormalize.
pub fn resample_psf_to_detector(psf: &PsfKernel, detector_pitch: f64) -> Result<PsfKernel> {
    let (samples, n) = rebin(psf.samples(), psf.size(), psf.pixel_pitch(), detector_pitch)?;
    PsfKernel::normalized(n, samples, detector_pitch)
}

/// Center-crop or zero-pad a kernel to an odd `size`, then renormalize.
pub fn fit_support(psf: &PsfKernel, size: usize) -> Result<PsfKernel> {
    if size.is_multiple_of(2) {
        return Err(Error::Parameter(format!(
            "kernel support must be odd, got {size}"
        )));
    }
    let s = psf.size();
    if s == size {
        return Ok(psf.clone());
    }
    let mut out = vec![0.0; size * size];
    if s > size {
        let off = (s - size) / 2;
        for r in 0..size {
            let src = (r + off) * s + off;
            out[r * size..(r + 1) * size].copy_from_slice(&psf.samples()[src..src + size]);
        }
    } else {
        let off = (size - s) / 2;
        for r in 0..s {
            let dst = (r + off) * size + off;
            out[dst..dst + s].copy_from_slice(&psf.samples()[r * s..(r + 1) * s]);
        }
    }
    PsfKernel::normalized(size, out, psf.pixel_pitch())
}
