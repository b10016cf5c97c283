//! Pipeline configuration (TOML).
//!
//! Every key is optional; an empty file yields the defaults. Relative paths
//! resolve against the directory of the config file.
//!
//! ```toml
//! [optics]
//! rows = 6
//! cols = 8
//! wavelengths_um = [8.0, 9.0, 10.0, 11.0, 12.0]
//!
//! [optics.pupil]
//! grid_size = 256
//! aperture_diameter = 0.07
//! focal_length = 0.07
//!
//! [degrade]
//! q = 90.0
//! sigma = 0.0003
//! seed = 7
//!
//! [gates]
//! eta = 0.2
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::blurmap::GateParams;
use crate::degrade::{ConvMethod, DegradationConfig, DEFAULT_FULL_SCALE};
use crate::error::{ConfigError, Error, Result};
use crate::optics::{
    field_grid_positions, FieldAberrationModel, GridParams, PupilSpec, WavefrontField,
};
use crate::plane::read_raw_f32;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub optics: OpticsSection,
    pub degrade: DegradeSection,
    pub blurmap: BlurmapSection,
    pub gates: GateParams,
    pub bridge: BridgeSection,
    pub dataset: DatasetSection,
}

/// Wavefront of one field region. A raster file holds `grid_size²` f32 samples in waves.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldEntry {
    /// `[noll_index, waves]` pairs.
    pub zernike: Vec<(u32, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raster: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OpticsSection {
    pub pupil: PupilSpec,
    pub rows: usize,
    pub cols: usize,
    pub wavelengths_um: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectral_weights: Option<Vec<f64>>,
    /// Wavefronts are specified in waves at this wavelength and scaled to the others.
    pub reference_wavelength_um: f64,
    /// When false the same wave values apply at every wavelength.
    pub scale_wavefront: bool,
    pub detector_pitch_um: f64,
    pub d_psf: usize,
    pub pad_factor: usize,
    pub remove_piston_tilt: bool,
    /// Used when `fields` is empty.
    pub field_model: FieldAberrationModel,
    /// Explicit per-region wavefronts, row-major; either empty or `rows·cols` long.
    pub fields: Vec<FieldEntry>,
}

impl Default for OpticsSection {
    fn default() -> Self {
        let g = GridParams::default();
        Self {
            pupil: PupilSpec::default(),
            rows: g.rows,
            cols: g.cols,
            wavelengths_um: g.wavelengths.iter().map(|l| l * 1e6).collect(),
            spectral_weights: None,
            reference_wavelength_um: 10.0,
            scale_wavefront: true,
            detector_pitch_um: g.detector_pitch * 1e6,
            d_psf: g.d_psf,
            pad_factor: g.pad_factor,
            remove_piston_tilt: false,
            field_model: FieldAberrationModel::default(),
            fields: Vec::new(),
        }
    }
}

impl OpticsSection {
    pub fn grid_params(&self) -> GridParams {
        GridParams {
            rows: self.rows,
            cols: self.cols,
            wavelengths: self.wavelengths_um.iter().map(|l| l / 1e6).collect(),
            spectral_weights: self.spectral_weights.clone(),
            reference_wavelength: self
                .scale_wavefront
                .then_some(self.reference_wavelength_um / 1e6),
            detector_pitch: self.detector_pitch_um / 1e6,
            d_psf: self.d_psf,
            pad_factor: self.pad_factor,
            remove_piston_tilt: self.remove_piston_tilt,
        }
    }

    /// Per-region wavefronts, loading raster files as needed.
    pub fn wavefront_fields(&self) -> Result<Vec<WavefrontField>> {
        if self.fields.is_empty() {
            return Ok(self.field_model.fields(self.rows, self.cols));
        }
        let n = self.pupil.grid_size;
        self.fields
            .iter()
            .zip(field_grid_positions(self.rows, self.cols))
            .map(|(f, pos)| match &f.raster {
                Some(p) => Ok(WavefrontField::raster(read_raw_f32(p, n * n)?, pos)),
                None => Ok(WavefrontField::zernike(f.zernike.clone(), pos)),
            })
            .collect()
    }
}

/// How `q` maps to the quantization step in normalized units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantization {
    /// `q_step = q / q_full`, with `q` in ADC counts.
    #[default]
    Scaled,
    /// `q_step = q`.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DegradeSection {
    pub patch_size: usize,
    pub overlap: usize,
    pub q: f64,
    pub q_full: f64,
    pub quantization: Quantization,
    pub sigma: f64,
    pub seed: u64,
    pub method: ConvMethod,
}

impl Default for DegradeSection {
    fn default() -> Self {
        Self {
            patch_size: 80,
            overlap: 16,
            q: 90.0,
            q_full: DEFAULT_FULL_SCALE,
            quantization: Quantization::Scaled,
            sigma: 0.0003,
            seed: 0,
            method: ConvMethod::Fft,
        }
    }
}

impl DegradeSection {
    pub fn q_step(&self) -> f64 {
        match self.quantization {
            Quantization::Scaled => self.q / self.q_full,
            Quantization::Literal => self.q,
        }
    }

    pub fn to_config(&self) -> DegradationConfig {
        DegradationConfig {
            patch_size: self.patch_size,
            overlap: self.overlap,
            q_step: self.q_step(),
            sigma: self.sigma,
            seed: self.seed,
            method: self.method,
        }
    }
}

/// Feature-plane size the blur index map is upsampled to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlurmapSection {
    pub height: usize,
    pub width: usize,
}

impl Default for BlurmapSection {
    fn default() -> Self {
        Self {
            height: 480,
            width: 640,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BridgeSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<PathBuf>,
    pub channels: usize,
    pub groups: usize,
    pub se_reduction: usize,
}

impl Default for BridgeSection {
    fn default() -> Self {
        Self {
            weights: None,
            channels: 16,
            groups: crate::bridge::DEFAULT_GROUPS,
            se_reduction: crate::bridge::DEFAULT_SE_REDUCTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSection {
    /// Input manifest, one JSON record per line.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub width: usize,
    pub height: usize,
    pub write_raw: bool,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            manifest: None,
            out_dir: PathBuf::from("dataset"),
            width: 640,
            height: 480,
            write_raw: false,
        }
    }
}

/// Read, resolve and validate a config file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<PipelineConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = PipelineConfig::from_toml(&text)?;
    if let Some(base) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        cfg.resolve_paths(base);
    }
    cfg.validate()?;
    Ok(cfg)
}

impl PipelineConfig {
    /// Parse without path resolution or validation. All unknown keys are reported together.
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        let mut unknown = Vec::new();
        let cfg: Self = serde_ignored::deserialize(de, |p| unknown.push(p.to_string()))
            .map_err(|e| ConfigError::Syntax(e.to_string()))?;
        if !unknown.is_empty() {
            return Err(ConfigError::UnknownKeys(unknown).into());
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for f in &mut self.optics.fields {
            if let Some(r) = &mut f.raster {
                fix(r);
            }
        }
        if let Some(w) = &mut self.bridge.weights {
            fix(w);
        }
        if let Some(m) = &mut self.dataset.manifest {
            fix(m);
        }
        fix(&mut self.dataset.out_dir);
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let o = &self.optics;
        let p = &o.pupil;
        check(
            p.grid_size >= 32 && p.grid_size.is_multiple_of(2),
            "optics.pupil.grid_size",
            "even and >= 32",
        )?;
        check(
            pos(p.aperture_diameter),
            "optics.pupil.aperture_diameter",
            "> 0",
        )?;
        check(pos(p.focal_length), "optics.pupil.focal_length", "> 0")?;
        check(
            (0.0..1.0).contains(&p.obstruction_ratio),
            "optics.pupil.obstruction_ratio",
            "in [0, 1)",
        )?;
        check(o.rows >= 1, "optics.rows", ">= 1")?;
        check(o.cols >= 1, "optics.cols", ">= 1")?;
        check(
            !o.wavelengths_um.is_empty(),
            "optics.wavelengths_um",
            "non-empty",
        )?;
        check(
            o.wavelengths_um.iter().all(|&l| pos(l)),
            "optics.wavelengths_um",
            "> 0",
        )?;
        if let Some(w) = &o.spectral_weights {
            check(
                w.len() == o.wavelengths_um.len(),
                "optics.spectral_weights",
                "one weight per wavelength",
            )?;
            check(
                w.iter().all(|&v| v >= 0.0 && v.is_finite()) && w.iter().any(|&v| v > 0.0),
                "optics.spectral_weights",
                ">= 0 with a positive sum",
            )?;
        }
        check(
            pos(o.reference_wavelength_um),
            "optics.reference_wavelength_um",
            "> 0",
        )?;
        check(pos(o.detector_pitch_um), "optics.detector_pitch_um", "> 0")?;
        check(o.d_psf % 2 == 1, "optics.d_psf", "odd")?;
        check(o.pad_factor >= 2, "optics.pad_factor", ">= 2")?;
        for (name, v) in [
            ("optics.field_model.defocus", o.field_model.defocus),
            ("optics.field_model.astigmatism", o.field_model.astigmatism),
            ("optics.field_model.coma", o.field_model.coma),
            ("optics.field_model.spherical", o.field_model.spherical),
        ] {
            check(v.is_finite(), name, "finite")?;
        }
        check(
            o.fields.is_empty() || o.fields.len() == o.rows * o.cols,
            "optics.fields",
            "empty or rows*cols entries",
        )?;
        for f in &o.fields {
            check(
                f.zernike.iter().all(|&(j, c)| j >= 1 && c.is_finite()),
                "optics.fields.zernike",
                "Noll index >= 1 with finite coefficients",
            )?;
            if let Some(r) = &f.raster {
                exists("optics.fields.raster", r)?;
            }
        }

        let d = &self.degrade;
        check(d.patch_size >= 1, "degrade.patch_size", ">= 1")?;
        check(d.overlap < d.patch_size, "degrade.overlap", "< patch_size")?;
        check(d.q >= 0.0 && d.q.is_finite(), "degrade.q", ">= 0")?;
        check(pos(d.q_full), "degrade.q_full", "> 0")?;
        check(
            d.sigma >= 0.0 && d.sigma.is_finite(),
            "degrade.sigma",
            ">= 0",
        )?;

        check(self.blurmap.height >= 1, "blurmap.height", ">= 1")?;
        check(self.blurmap.width >= 1, "blurmap.width", ">= 1")?;
        self.gates.validate().map_err(|e| match e {
            ConfigError::Range { field, bound } => ConfigError::Range {
                field: format!("gates.{field}"),
                bound,
            },
            other => other,
        })?;

        let b = &self.bridge;
        check(b.channels >= 1, "bridge.channels", ">= 1")?;
        check(
            b.groups >= 1 && b.channels.is_multiple_of(b.groups),
            "bridge.groups",
            "divides channels",
        )?;
        check(b.se_reduction >= 1, "bridge.se_reduction", ">= 1")?;
        if let Some(w) = &b.weights {
            exists("bridge.weights", w)?;
        }

        let s = &self.dataset;
        if let Some(m) = &s.manifest {
            exists("dataset.manifest", m)?;
        }
        check(
            s.width >= 1 && s.width.is_multiple_of(d.patch_size),
            "dataset.width",
            "positive multiple of degrade.patch_size",
        )?;
        check(
            s.height >= 1 && s.height.is_multiple_of(d.patch_size),
            "dataset.height",
            "positive multiple of degrade.patch_size",
        )?;
        Ok(())
    }
}

fn pos(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

fn check(ok: bool, field: &str, bound: &str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::Range {
            field: field.into(),
            bound: bound.into(),
        })
    }
}

fn exists(field: &str, path: &Path) -> Result<(), ConfigError> {
    if path.exists() {
        Ok(())
    } else {
        Err(ConfigError::MissingPath {
            field: field.into(),
            path: path.to_owned(),
        })
    }
}
