use crate::error::{Error, Result};

/// Weights of one patch along one axis, nonzero only on `[start, start + len)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisWeights {
    pub start: usize,
    pub weights: Vec<f64>,
}

impl AxisWeights {
    pub fn end(&self) -> usize {
        self.start + self.weights.len()
    }

    #[inline]
    pub fn at(&self, i: usize) -> f64 {
        if i < self.start || i >= self.end() {
            0.0
        } else {
            self.weights[i - self.start]
        }
    }
}

/// Separable per-patch blending weights `W[m][n](y, x) = wy[m](y) · wx[n](x)`.
///
/// Adjacent patches cross-fade with a raised-cosine ramp `overlap` pixels wide,
/// centered on their shared boundary. Along each axis the weights of all
/// patches sum to one, so the 2D weights form a partition of unity.
#[derive(Debug, Clone, PartialEq)]
pub struct BlendWeights {
    pub patch_size: usize,
    pub overlap: usize,
    pub rows: Vec<AxisWeights>,
    pub cols: Vec<AxisWeights>,
}

impl BlendWeights {
    pub fn patch_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn patch_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn weight(&self, m: usize, n: usize, y: usize, x: usize) -> f64 {
        self.rows[m].at(y) * self.cols[n].at(x)
    }
}

/// Build blending weights for an `height × width` plane cut into `patch_size` tiles.
pub fn make_blend_weights(
    height: usize,
    width: usize,
    patch_size: usize,
    overlap: usize,
) -> Result<BlendWeights> {
    if patch_size == 0 {
        return Err(Error::Parameter("patch size must be >= 1".into()));
    }
    if overlap >= patch_size {
        return Err(Error::Parameter(format!(
            "overlap ({overlap}) must be smaller than the patch size ({patch_size})"
        )));
    }
    if height == 0
        || width == 0
        || !height.is_multiple_of(patch_size)
        || !width.is_multiple_of(patch_size)
    {
        return Err(Error::Dimension(format!(
            "{height}x{width} is not a multiple of the patch size {patch_size}"
        )));
    }
    Ok(BlendWeights {
        patch_size,
        overlap,
        rows: axis_weights(height, patch_size, overlap),
        cols: axis_weights(width, patch_size, overlap),
    })
}

fn axis_weights(len: usize, p: usize, overlap: usize) -> Vec<AxisWeights> {
    let count = len / p;
    let reach = overlap.div_ceil(2);
    (0..count)
        .map(|i| {
            let start = if i == 0 { 0 } else { i * p - reach };
            let end = if i + 1 == count {
                len
            } else {
                (i + 1) * p + reach
            };
            let weights = (start..end)
                .map(|y| {
                    let mut w = 1.0;
                    if i > 0 {
                        w *= rise(y, i * p, overlap);
                    }
                    if i + 1 < count {
                        w *= 1.0 - rise(y, (i + 1) * p, overlap);
                    }
                    w
                })
                .collect();
            AxisWeights { start, weights }
        })
        .collect()
}

/// Weight of the patch starting at `boundary`, as seen from pixel `y`:
/// 0 well before the boundary, 1 well after, `sin²` ramp in between.
fn rise(y: usize, boundary: usize, overlap: usize) -> f64 {
    if overlap == 0 {
        return if y >= boundary { 1.0 } else { 0.0 };
    }
    let t = ((y as f64 + 0.5) - (boundary as f64 - overlap as f64 / 2.0)) / overlap as f64;
    let t = t.clamp(0.0, 1.0);
    (std::f64::consts::FRAC_PI_2 * t).sin().powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_partition(h: usize, w: usize, p: usize, o: usize) {
        let bw = make_blend_weights(h, w, p, o).unwrap();
        for y in 0..h {
            for x in 0..w {
                let mut s = 0.0;
                for m in 0..bw.patch_rows() {
                    for n in 0..bw.patch_cols() {
                        let v = bw.weight(m, n, y, x);
                        assert!(v >= 0.0);
                        s += v;
                    }
                }
                assert!((s - 1.0).abs() < 1e-9, "({y},{x}) sums to {s}");
            }
        }
    }

    #[test]
    fn zero_overlap_is_indicator() {
        let bw = make_blend_weights(8, 12, 4, 0).unwrap();
        for m in 0..2 {
            for n in 0..3 {
                for y in 0..8 {
                    for x in 0..12 {
                        let inside = y / 4 == m && x / 4 == n;
                        assert_eq!(bw.weight(m, n, y, x), if inside { 1.0 } else { 0.0 });
                    }
                }
            }
        }
    }

    #[test]
    fn partition_of_unity_160_80_16() {
        check_partition(160, 160, 80, 16);
    }

    #[test]
    fn partition_of_unity_odd_overlap() {
        check_partition(30, 40, 10, 7);
        check_partition(30, 40, 10, 9);
    }

    #[test]
    fn sensor_lattice_is_6_by_8() {
        let bw = make_blend_weights(480, 640, 80, 16).unwrap();
        assert_eq!((bw.patch_rows(), bw.patch_cols()), (6, 8));
    }

    #[test]
    fn ramps_are_symmetric() {
        let bw = make_blend_weights(160, 160, 80, 16).unwrap();
        for k in 0..8 {
            let a = bw.rows[0].at(80 - 1 - k);
            let b = bw.rows[1].at(80 + k);
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(bw.rows[0].at(71), 1.0);
        assert_eq!(bw.rows[0].at(88), 0.0);
    }

    #[test]
    fn invalid_parameters() {
        assert!(matches!(
            make_blend_weights(160, 160, 80, 80),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            make_blend_weights(150, 160, 80, 0),
            Err(Error::Dimension(_))
        ));
    }
}
