//! Paired clean/degraded dataset generation.
//!
//! Output layout under the dataset root:
//!
//! ```text
//! clean/      resized ground truth, 16-bit PNG
//! degraded/   simulated raw frames, 16-bit PNG (+ optional f32 planes)
//! labels/     one `class cx cy w h` line per object
//! manifests/  manifest.jsonl, one SampleRecord per line
//! ```

mod annotation;
mod metrics;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::degrade::{apply_noise, degrade_image, DegradationConfig};
use crate::error::{Error, Result};
use crate::optics::PsfGrid;
use crate::plane::ImagePlane;
use crate::psf_io::grid_to_bytes;

pub use annotation::{
    format_labels, parse_labels, rescale_annotations, scale_factors, AbsoluteBox, Annotation,
    BoxInput, LabelFormat, Rescaled,
};
pub use metrics::{image_metrics, MetricReport};

/// One line of an input manifest. Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputRecord {
    pub image: PathBuf,
    #[serde(default)]
    pub labels: Option<PathBuf>,
    #[serde(default)]
    pub label_format: LabelFormat,
}

/// One line of the output manifest. Paths are relative to the dataset root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    pub source: PathBuf,
    pub clean_path: PathBuf,
    pub degraded_path: PathBuf,
    pub annotation_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_path: Option<PathBuf>,
    pub q_step: f64,
    pub sigma: f64,
    pub seed: u64,
    pub psf_grid_id: String,
    pub boxes: usize,
    pub dropped_boxes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetOptions {
    pub width: usize,
    pub height: usize,
    pub write_raw: bool,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            write_raw: false,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct BuildReport {
    pub records: Vec<SampleRecord>,
    /// `(input line number, reason)` for every skipped entry.
    pub skipped: Vec<(usize, String)>,
    pub manifest_path: PathBuf,
}

pub const MANIFEST_NAME: &str = "manifest.jsonl";

/// splitmix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Noise seed of sample `index` under `master`.
pub fn sample_seed(master: u64, index: usize) -> u64 {
    mix64(master ^ mix64(index as u64))
}

/// Short content hash identifying a PSF grid.
pub fn psf_grid_id(grid: &PsfGrid) -> String {
    let digest = Sha256::digest(grid_to_bytes(grid));
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Parse a JSON-lines manifest; blank lines and `#` comments are ignored.
/// Returns `(line number, parsed record or error)` per entry.
pub fn read_input_manifest(
    path: &Path,
) -> Result<Vec<(usize, std::result::Result<InputRecord, String>)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            let rec = serde_json::from_str::<InputRecord>(l)
                .map(|mut r| {
                    r.image = base.join(&r.image);
                    r.labels = r.labels.map(|p| base.join(p));
                    r
                })
                .map_err(|e| format!("malformed manifest line: {e}"));
            (i + 1, rec)
        })
        .collect())
}

struct Job<'a> {
    index: usize,
    line: usize,
    record: &'a InputRecord,
}

/// Degrade every listed image and write the paired dataset under `out_dir`.
///
/// Sample `i` uses noise seed [`sample_seed`]`(cfg.seed, i)`, so the output is
/// identical for any worker count. Unreadable inputs are skipped and reported;
/// a non-empty manifest that yields no samples is an error.
pub fn build_dataset(
    manifest_in: &Path,
    out_dir: &Path,
    grid: &PsfGrid,
    cfg: &DegradationConfig,
    opts: &DatasetOptions,
) -> Result<BuildReport> {
    if !opts.width.is_multiple_of(cfg.patch_size) || !opts.height.is_multiple_of(cfg.patch_size) {
        return Err(Error::Dimension(format!(
            "target {}x{} is not a multiple of the patch size {}",
            opts.width, opts.height, cfg.patch_size
        )));
    }
    let entries = read_input_manifest(manifest_in)?;
    for sub in ["clean", "degraded", "labels", "manifests"] {
        let d = out_dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let grid_id = psf_grid_id(grid);

    let mut skipped = Vec::new();
    let mut jobs = Vec::new();
    for (line, rec) in &entries {
        match rec {
            Ok(r) => jobs.push(Job {
                index: jobs.len(),
                line: *line,
                record: r,
            }),
            Err(e) => skipped.push((*line, e.clone())),
        }
    }

    let results: Vec<(usize, std::result::Result<SampleRecord, String>)> = jobs
        .par_iter()
        .map(|job| {
            let r =
                process_sample(job, out_dir, grid, &grid_id, cfg, opts).map_err(|e| e.to_string());
            (job.line, r)
        })
        .collect();

    let mut records = Vec::new();
    for (line, r) in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => {
                log::warn!("skipping manifest line {line}: {e}");
                skipped.push((line, e));
            }
        }
    }
    skipped.sort_by_key(|s| s.0);

    if entries.is_empty() {
        log::warn!("input manifest {} lists no samples", manifest_in.display());
    } else if records.is_empty() {
        return Err(Error::EmptyBuild {
            skipped: skipped.len(),
        });
    }

    let manifest_path = out_dir.join("manifests").join(MANIFEST_NAME);
    let mut file = fs::File::create(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    for rec in &records {
        let line = serde_json::to_string(rec).expect("record serializes");
        writeln!(file, "{line}").map_err(|e| Error::io(&manifest_path, e))?;
    }
    Ok(BuildReport {
        records,
        skipped,
        manifest_path,
    })
}

fn process_sample(
    job: &Job<'_>,
    out_dir: &Path,
    grid: &PsfGrid,
    grid_id: &str,
    cfg: &DegradationConfig,
    opts: &DatasetOptions,
) -> Result<SampleRecord> {
    let rec = job.record;
    let source = ImagePlane::load(&rec.image)?;
    let from = (source.width(), source.height());
    let to = (opts.width, opts.height);
    let clean = source.resize_bilinear(opts.width, opts.height)?;

    let boxes = match &rec.labels {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            parse_labels(&text, rec.label_format)?
        }
        None => Vec::new(),
    };
    let rescaled = rescale_annotations(&boxes, from, to)?;

    let seed = sample_seed(cfg.seed, job.index);
    let sample_cfg = DegradationConfig {
        seed,
        ..cfg.clone()
    };
    let blurred = degrade_image(&clean, grid, &sample_cfg)?;
    let raw = apply_noise(&blurred, &sample_cfg)?;

    let stem = rec
        .image
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sample".into());
    let name = format!("{:06}_{stem}", job.index);
    let clean_rel = PathBuf::from("clean").join(format!("{name}.png"));
    let degraded_rel = PathBuf::from("degraded").join(format!("{name}.png"));
    let labels_rel = PathBuf::from("labels").join(format!("{name}.txt"));

    clean.save_png16(out_dir.join(&clean_rel))?;
    raw.save_png16(out_dir.join(&degraded_rel))?;
    let raw_rel = if opts.write_raw {
        let p = PathBuf::from("degraded").join(format!("{name}.f32"));
        raw.save_raw_f32(out_dir.join(&p))?;
        Some(p)
    } else {
        None
    };
    let label_path = out_dir.join(&labels_rel);
    fs::write(&label_path, format_labels(&rescaled.boxes))
        .map_err(|e| Error::io(&label_path, e))?;

    Ok(SampleRecord {
        index: job.index,
        source: rec.image.clone(),
        clean_path: clean_rel,
        degraded_path: degraded_rel,
        annotation_path: labels_rel,
        raw_path: raw_rel,
        q_step: cfg.q_step,
        sigma: cfg.sigma,
        seed,
        psf_grid_id: grid_id.to_owned(),
        boxes: rescaled.boxes.len(),
        dropped_boxes: rescaled.dropped,
    })
}
