use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Detection label with a normalized `(cx, cy, w, h)` box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Annotation {
    pub class_id: u32,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

/// Pixel-space box given by its top-left corner and extent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbsoluteBox {
    pub class_id: u32,
    pub x_min: f64,
    pub y_min: f64,
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoxInput {
    Normalized(Annotation),
    Absolute(AbsoluteBox),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelFormat {
    /// `class cx cy w h`, all normalized.
    #[default]
    Normalized,
    /// `class x_min y_min width height` in source pixels.
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Rescaled {
    pub boxes: Vec<Annotation>,
    /// Boxes with no area left after clamping.
    pub dropped: usize,
}

/// `(to_w / from_w, to_h / from_h)`.
pub fn scale_factors(from: (usize, usize), to: (usize, usize)) -> (f64, f64) {
    (to.0 as f64 / from.0 as f64, to.1 as f64 / from.1 as f64)
}

/// Map boxes from a `from = (width, height)` image onto a `to` image.
///
/// Normalized boxes are resolution independent and only get clamped;
/// absolute boxes are scaled, normalized by the target size and clamped.
pub fn rescale_annotations(
    boxes: &[BoxInput],
    from: (usize, usize),
    to: (usize, usize),
) -> Result<Rescaled> {
    if from.0 == 0 || from.1 == 0 || to.0 == 0 || to.1 == 0 {
        return Err(Error::Parameter("image sizes must be positive".into()));
    }
    let (sx, sy) = scale_factors(from, to);
    let (tw, th) = (to.0 as f64, to.1 as f64);
    let mut out = Rescaled::default();
    for b in boxes {
        let (class_id, x0, y0, x1, y1) = match *b {
            BoxInput::Normalized(a) => (
                a.class_id,
                a.cx - a.w / 2.0,
                a.cy - a.h / 2.0,
                a.cx + a.w / 2.0,
                a.cy + a.h / 2.0,
            ),
            BoxInput::Absolute(a) => (
                a.class_id,
                a.x_min * sx / tw,
                a.y_min * sy / th,
                (a.x_min + a.width) * sx / tw,
                (a.y_min + a.height) * sy / th,
            ),
        };
        match clamp_box(class_id, x0, y0, x1, y1) {
            Some(a) => out.boxes.push(a),
            None => out.dropped += 1,
        }
    }
    if out.dropped > 0 {
        log::warn!("dropped {} degenerate boxes", out.dropped);
    }
    Ok(out)
}

fn clamp_box(class_id: u32, x0: f64, y0: f64, x1: f64, y1: f64) -> Option<Annotation> {
    if ![x0, y0, x1, y1].iter().all(|v| v.is_finite()) {
        return None;
    }
    let (x0, x1) = (x0.clamp(0.0, 1.0), x1.clamp(0.0, 1.0));
    let (y0, y1) = (y0.clamp(0.0, 1.0), y1.clamp(0.0, 1.0));
    let (w, h) = (x1 - x0, y1 - y0);
    (w > 0.0 && h > 0.0).then(|| Annotation {
        class_id,
        cx: (x0 + x1) / 2.0,
        cy: (y0 + y1) / 2.0,
        w,
        h,
    })
}

impl Annotation {
    /// Pixel box on a `(width, height)` image.
    pub fn to_absolute(&self, size: (usize, usize)) -> AbsoluteBox {
        let (iw, ih) = (size.0 as f64, size.1 as f64);
        AbsoluteBox {
            class_id: self.class_id,
            x_min: (self.cx - self.w / 2.0) * iw,
            y_min: (self.cy - self.h / 2.0) * ih,
            width: self.w * iw,
            height: self.h * ih,
        }
    }
}

impl fmt::Display for Annotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:.6} {:.6} {:.6} {:.6}",
            self.class_id, self.cx, self.cy, self.w, self.h
        )
    }
}

fn parse_five(line: &str) -> Result<(u32, [f64; 4])> {
    let mut it = line.split_whitespace();
    let class_id = it
        .next()
        .and_then(|t| t.parse::<u32>().ok())
        .ok_or_else(|| Error::Parameter(format!("bad class id in label line `{line}`")))?;
    let mut v = [0.0; 4];
    for slot in &mut v {
        *slot = it
            .next()
            .and_then(|t| t.parse::<f64>().ok())
            .ok_or_else(|| Error::Parameter(format!("bad label line `{line}`")))?;
    }
    if it.next().is_some() {
        return Err(Error::Parameter(format!(
            "trailing fields in label line `{line}`"
        )));
    }
    Ok((class_id, v))
}

impl FromStr for Annotation {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let (class_id, [cx, cy, w, h]) = parse_five(line)?;
        Ok(Annotation {
            class_id,
            cx,
            cy,
            w,
            h,
        })
    }
}

/// Parse a label file body; blank lines are ignored.
pub fn parse_labels(text: &str, format: LabelFormat) -> Result<Vec<BoxInput>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let (class_id, [a, b, c, d]) = parse_five(l)?;
            Ok(match format {
                LabelFormat::Normalized => BoxInput::Normalized(Annotation {
                    class_id,
                    cx: a,
                    cy: b,
                    w: c,
                    h: d,
                }),
                LabelFormat::Absolute => BoxInput::Absolute(AbsoluteBox {
                    class_id,
                    x_min: a,
                    y_min: b,
                    width: c,
                    height: d,
                }),
            })
        })
        .collect()
}

pub fn format_labels(boxes: &[Annotation]) -> String {
    let mut s = String::new();
    for b in boxes {
        s.push_str(&b.to_string());
        s.push('\n');
    }
    s
}
