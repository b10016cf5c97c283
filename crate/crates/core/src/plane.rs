//! Single-channel floating-point image planes and their on-disk forms.

use std::fs;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma};

use crate::error::{Error, FormatError, Result};

/// Row-major grayscale image with nominal range `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImagePlane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "image must be at least 1x1, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} samples for a {width}x{height} plane",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0);
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0);
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Sample with edge replication for out-of-range coordinates.
    #[inline]
    pub fn get_clamped(&self, y: isize, x: isize) -> f64 {
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        self.data[yc * self.width + xc]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Bilinear resize with half-pixel-center alignment and edge clamping.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Result<ImagePlane> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(
                "resize target must be at least 1x1".into(),
            ));
        }
        if width == self.width && height == self.height {
            return Ok(self.clone());
        }
        let sy = self.height as f64 / height as f64;
        let sx = self.width as f64 / width as f64;
        let xs: Vec<(usize, usize, f64)> = (0..width)
            .map(|x| lerp_index((x as f64 + 0.5) * sx - 0.5, self.width))
            .collect();
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            let (y0, y1, ty) = lerp_index((y as f64 + 0.5) * sy - 0.5, self.height);
            for &(x0, x1, tx) in &xs {
                let top = self.get(y0, x0) * (1.0 - tx) + self.get(y0, x1) * tx;
                let bot = self.get(y1, x0) * (1.0 - tx) + self.get(y1, x1) * tx;
                data.push(top * (1.0 - ty) + bot * ty);
            }
        }
        ImagePlane::new(width, height, data)
    }

    /// Load an 8- or 16-bit grayscale PNG/PGM, normalized by the format's full scale.
    /// Color inputs are reduced to luma.
    pub fn load(path: impl AsRef<Path>) -> Result<ImagePlane> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_owned(),
            source,
        })?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        let data: Vec<f64> = match img {
            DynamicImage::ImageLuma8(buf) => buf
                .into_raw()
                .into_iter()
                .map(|v| v as f64 / 255.0)
                .collect(),
            DynamicImage::ImageLuma16(buf) => buf
                .into_raw()
                .into_iter()
                .map(|v| v as f64 / 65535.0)
                .collect(),
            other
                if other.color().bytes_per_pixel() / other.color().channel_count().max(1) == 1 =>
            {
                other
                    .to_luma8()
                    .into_raw()
                    .into_iter()
                    .map(|v| v as f64 / 255.0)
                    .collect()
            }
            other => other
                .to_luma16()
                .into_raw()
                .into_iter()
                .map(|v| v as f64 / 65535.0)
                .collect(),
        };
        ImagePlane::new(w, h, data)
    }

    /// Quantize to 16 bits (clamped to `[0, 1]`) and write a grayscale PNG.
    pub fn save_png16(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let raw: Vec<u16> = self
            .data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
            .collect();
        let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_raw(self.width as u32, self.height as u32, raw)
                .expect("buffer length matches dimensions");
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| Error::Image {
                path: path.to_owned(),
                source,
            })
    }

    /// Headerless little-endian `f32` samples, row-major.
    pub fn save_raw_f32(&self, path: impl AsRef<Path>) -> Result<()> {
        write_raw_f32(path, &self.data)
    }

    pub fn load_raw_f32(path: impl AsRef<Path>, width: usize, height: usize) -> Result<ImagePlane> {
        let data = read_raw_f32(path, width * height)?;
        ImagePlane::new(width, height, data)
    }
}

fn lerp_index(pos: f64, len: usize) -> (usize, usize, f64) {
    let p = pos.clamp(0.0, (len - 1) as f64);
    let i0 = p.floor() as usize;
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, p - i0 as f64)
}

pub fn write_raw_f32(path: impl AsRef<Path>, data: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for v in data {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_raw_f32(path: impl AsRef<Path>, count: usize) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = count as u64 * 4;
    if bytes.len() as u64 != expected {
        return Err(FormatError::Truncated {
            expected,
            found: bytes.len() as u64,
        }
        .into());
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}
