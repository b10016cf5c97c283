//! Reference forward pass of the PSF-gated large/small bridge block.
//!
//! Three branches run on the encoder feature `x`:
//!
//! ```text
//! s = SiLU(BN_s(GroupConv3x3(x)))
//! l = BN_l(PW(DW15x15(x)))
//! λ = BN_λ(x * K_λ)            K_λ = 4-neighbor Laplacian
//! y = BN_out(SE(x + η·(g_s⊙s + g_l⊙l + g_λ⊙λ)))
//! ```
//!
//! The gates come from [`crate::blurmap::compute_gate_maps`] and broadcast
//! over batch and channels. Every convolution is "same" sized with
//! edge-replicated borders. All arithmetic is `f64` with a fixed summation
//! order, so outputs are bitwise reproducible.

mod tensor;
mod weights;

use crate::blurmap::{compute_gate_maps, logistic, BlurIndexMap, GateParams};
use crate::error::{Error, Result};

pub use tensor::FeatureTensor;
pub use weights::{
    se_hidden_width, BatchNorm, BridgeWeights, DEFAULT_GROUPS, DEFAULT_SE_REDUCTION, LAPLACIAN,
    LARGE_KERNEL, NORM_EPS,
};

/// Branch outputs and their pre-norm convolution responses.
#[derive(Debug, Clone)]
pub struct Branches {
    pub small: FeatureTensor,
    pub large: FeatureTensor,
    pub laplacian: FeatureTensor,
    pub laplacian_pre_norm: FeatureTensor,
}

#[derive(Debug, Clone)]
pub struct BridgeTrace {
    pub branches: Branches,
    /// `x + η·(gated sum)`, before SE.
    pub fused: FeatureTensor,
    pub output: FeatureTensor,
}

fn check_channels(x: &FeatureTensor, w: &BridgeWeights) -> Result<()> {
    w.validate()?;
    if x.channels() != w.channels {
        return Err(Error::Dimension(format!(
            "input has {} channels, weights expect {}",
            x.channels(),
            w.channels
        )));
    }
    Ok(())
}

/// Same-size 2D convolution of one plane with a `k × k` kernel, accumulated
/// into `out` with weight 1. Borders replicate the nearest edge sample.
fn conv_plane_acc(src: &[f64], h: usize, w: usize, kernel: &[f64], k: usize, out: &mut [f64]) {
    let r = (k / 2) as isize;
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for a in 0..k {
                let sy = (y as isize + a as isize - r).clamp(0, h as isize - 1) as usize;
                let row = &src[sy * w..(sy + 1) * w];
                for b in 0..k {
                    let sx = (x as isize + b as isize - r).clamp(0, w as isize - 1) as usize;
                    acc += kernel[a * k + b] * row[sx];
                }
            }
            out[y * w + x] += acc;
        }
    }
}

fn apply_norm(t: &mut FeatureTensor, bn: &BatchNorm) {
    let [b, c, _, _] = t.dims();
    for bi in 0..b {
        for ci in 0..c {
            let (scale, shift) = bn.affine(ci);
            for v in t.plane_mut(bi, ci) {
                *v = scale * *v + shift;
            }
        }
    }
}

fn silu(v: f64) -> f64 {
    v * logistic(v)
}

/// Grouped 3×3 convolution (cross-correlation, as in learned conv layers).
pub fn grouped_conv3x3(x: &FeatureTensor, w: &BridgeWeights) -> Result<FeatureTensor> {
    check_channels(x, w)?;
    let [b, c, h, wd] = x.dims();
    let cg = c / w.groups;
    let mut out = FeatureTensor::zeros(x.dims());
    for bi in 0..b {
        for o in 0..c {
            let g = o / cg;
            let mut acc = vec![0.0; h * wd];
            for i in 0..cg {
                let kernel = &w.small_conv[(o * cg + i) * 9..(o * cg + i + 1) * 9];
                conv_plane_acc(x.plane(bi, g * cg + i), h, wd, kernel, 3, &mut acc);
            }
            out.plane_mut(bi, o).copy_from_slice(&acc);
        }
    }
    Ok(out)
}

pub fn depthwise_conv(x: &FeatureTensor, kernels: &[f64], k: usize) -> FeatureTensor {
    let [b, c, h, wd] = x.dims();
    assert_eq!(kernels.len(), c * k * k);
    let mut out = FeatureTensor::zeros(x.dims());
    for bi in 0..b {
        for ci in 0..c {
            let mut acc = vec![0.0; h * wd];
            conv_plane_acc(
                x.plane(bi, ci),
                h,
                wd,
                &kernels[ci * k * k..(ci + 1) * k * k],
                k,
                &mut acc,
            );
            out.plane_mut(bi, ci).copy_from_slice(&acc);
        }
    }
    out
}

pub fn pointwise(x: &FeatureTensor, mix: &[f64]) -> FeatureTensor {
    let [b, c, h, wd] = x.dims();
    assert_eq!(mix.len(), c * c);
    let mut out = FeatureTensor::zeros(x.dims());
    for bi in 0..b {
        for o in 0..c {
            let mut acc = vec![0.0; h * wd];
            for i in 0..c {
                let m = mix[o * c + i];
                for (a, v) in acc.iter_mut().zip(x.plane(bi, i)) {
                    *a += m * v;
                }
            }
            out.plane_mut(bi, o).copy_from_slice(&acc);
        }
    }
    out
}

/// Per-channel response to the fixed Laplacian, before normalization.
pub fn laplacian_response(x: &FeatureTensor, w: &BridgeWeights) -> FeatureTensor {
    let c = x.channels();
    let kernels: Vec<f64> = (0..c).flat_map(|_| w.laplacian).collect();
    depthwise_conv(x, &kernels, 3)
}

/// The small, large and Laplacian branch outputs.
pub fn pals_branches(x: &FeatureTensor, w: &BridgeWeights) -> Result<Branches> {
    check_channels(x, w)?;

    let mut small = grouped_conv3x3(x, w)?;
    apply_norm(&mut small, &w.small_norm);
    small.data_mut().iter_mut().for_each(|v| *v = silu(*v));

    let mut large = pointwise(&depthwise_conv(x, &w.large_dw, LARGE_KERNEL), &w.large_pw);
    apply_norm(&mut large, &w.large_norm);

    let laplacian_pre_norm = laplacian_response(x, w);
    let mut laplacian = laplacian_pre_norm.clone();
    apply_norm(&mut laplacian, &w.laplacian_norm);

    Ok(Branches {
        small,
        large,
        laplacian,
        laplacian_pre_norm,
    })
}

/// Per-`(batch, channel)` SE scales in `(0, 1)`.
pub fn se_scales(x: &FeatureTensor, w: &BridgeWeights) -> Result<Vec<f64>> {
    check_channels(x, w)?;
    let [b, c, h, wd] = x.dims();
    let hid = w.se_hidden;
    let mut scales = Vec::with_capacity(b * c);
    for bi in 0..b {
        let pooled: Vec<f64> = (0..c)
            .map(|ci| x.plane(bi, ci).iter().sum::<f64>() / (h * wd) as f64)
            .collect();
        let hidden: Vec<f64> = (0..hid)
            .map(|j| {
                let z: f64 = (0..c)
                    .map(|ci| w.se_fc1_w[j * c + ci] * pooled[ci])
                    .sum::<f64>()
                    + w.se_fc1_b[j];
                z.max(0.0)
            })
            .collect();
        for ci in 0..c {
            let z: f64 = (0..hid)
                .map(|j| w.se_fc2_w[ci * hid + j] * hidden[j])
                .sum::<f64>()
                + w.se_fc2_b[ci];
            scales.push(logistic(z));
        }
    }
    Ok(scales)
}

pub fn se_reweight(x: &FeatureTensor, w: &BridgeWeights) -> Result<FeatureTensor> {
    let scales = se_scales(x, w)?;
    let [b, c, _, _] = x.dims();
    let mut out = x.clone();
    for bi in 0..b {
        for ci in 0..c {
            let s = scales[bi * c + ci];
            out.plane_mut(bi, ci).iter_mut().for_each(|v| *v *= s);
        }
    }
    Ok(out)
}

pub fn bridge_forward(
    x: &FeatureTensor,
    k: &BlurIndexMap,
    p: &GateParams,
    w: &BridgeWeights,
) -> Result<FeatureTensor> {
    Ok(bridge_forward_traced(x, k, p, w)?.output)
}

/// Forward pass that keeps every intermediate for inspection.
pub fn bridge_forward_traced(
    x: &FeatureTensor,
    k: &BlurIndexMap,
    p: &GateParams,
    w: &BridgeWeights,
) -> Result<BridgeTrace> {
    if k.height != x.height() || k.width != x.width() {
        return Err(Error::Dimension(format!(
            "blur map is {}x{}, features are {}x{}",
            k.height,
            k.width,
            x.height(),
            x.width()
        )));
    }
    p.validate()?;
    let branches = pals_branches(x, w)?;
    let gates = compute_gate_maps(k, p);
    let [b, c, _, _] = x.dims();
    let mut fused = x.clone();
    for bi in 0..b {
        for ci in 0..c {
            let s = branches.small.plane(bi, ci);
            let l = branches.large.plane(bi, ci);
            let lam = branches.laplacian.plane(bi, ci);
            for (i, v) in fused.plane_mut(bi, ci).iter_mut().enumerate() {
                let gated = gates.g_s[i] * s[i] + gates.g_l[i] * l[i] + gates.g_lambda[i] * lam[i];
                *v += p.eta * gated;
            }
        }
    }
    let mut output = se_reweight(&fused, w)?;
    apply_norm(&mut output, &w.out_norm);
    Ok(BridgeTrace {
        branches,
        fused,
        output,
    })
}
