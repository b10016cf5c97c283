//! `lenssim`: PSF synthesis, frame degradation and dataset generation from the command line.
//!
//! Results go to stdout as `key=value` lines; diagnostics go to stderr.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lenssim::blurmap::{
    build_blur_index_map, compute_gate_maps, normalized_blur_factors, BlurIndexMap,
};
use lenssim::bridge::{bridge_forward_traced, se_hidden_width, BridgeWeights, FeatureTensor};
use lenssim::config::{parse_config, PipelineConfig};
use lenssim::dataset::{build_dataset, image_metrics, psf_grid_id, DatasetOptions};
use lenssim::degrade::{apply_noise, degrade_image};
use lenssim::optics::{build_psf_grid, PsfGrid};
use lenssim::plane::{read_raw_f32, write_raw_f32};
use lenssim::psf_io::{read_psf_grid, write_psf_grid};
use lenssim::{ConfigError, Error, ImagePlane};

#[derive(Parser, Debug)]
#[command(
    name = "lenssim",
    version,
    about = "Thermal lens PSF simulation and image degradation"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Pipeline config (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master RNG seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: logical cores).
    #[arg(long, global = true, env = "LENSSIM_THREADS")]
    threads: Option<usize>,
    /// Quantization step in ADC counts (see `degrade.quantization`).
    #[arg(long, global = true)]
    q: Option<f64>,
    /// Gaussian noise standard deviation.
    #[arg(long, global = true)]
    sigma: Option<f64>,
    /// Precomputed PSF grid; built from the config when omitted.
    #[arg(long, global = true)]
    psf_grid: Option<PathBuf>,
    /// Only report errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize the field-dependent PSF grid.
    Psf,
    /// Blur and add sensor noise to one image.
    Degrade {
        #[arg(long = "in")]
        input: PathBuf,
        /// Also write the noisy frame as raw f32.
        #[arg(long)]
        raw: Option<PathBuf>,
        /// Skip quantization and noise.
        #[arg(long)]
        no_noise: bool,
    },
    /// Export the normalized blur index map as raw f32 (+ optional PNG preview).
    Blurmap {
        #[arg(long)]
        height: Option<usize>,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        preview: Option<PathBuf>,
    },
    /// Export the three gate maps into the `--out` directory.
    Gates {
        #[arg(long)]
        height: Option<usize>,
        #[arg(long)]
        width: Option<usize>,
        /// Precomputed blur map (raw f32); derived from the PSF grid otherwise.
        #[arg(long)]
        blur_map: Option<PathBuf>,
    },
    /// Blur-aware bridge reference pass.
    #[command(subcommand)]
    Bridge(BridgeCommand),
    /// Build a paired clean/degraded dataset.
    Dataset {
        /// Input manifest; overrides `dataset.manifest`.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        write_raw: bool,
    },
    /// MSE and PSNR between two images.
    Metrics {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
enum BridgeCommand {
    /// Run the bridge on a feature dump; writes the output and per-branch tensors into `--out`.
    Run {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Raw f32 blur map matching the feature plane; derived from the PSF grid otherwise.
        #[arg(long)]
        blur_map: Option<PathBuf>,
    },
    /// Write a weight file (seeded random, or identity).
    InitWeights {
        #[arg(long)]
        identity: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = if cli.global.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("lenssim: cannot size worker pool: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lenssim: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Format(f) => u8::try_from(f.code()).unwrap_or(1),
        Error::Config(_) => 3,
        Error::Io { .. } | Error::Image { .. } => 4,
        Error::EmptyBuild { .. } => 5,
        _ => 1,
    }
}

fn load_config(g: &Global) -> Result<PipelineConfig, Error> {
    let mut cfg = match &g.config {
        Some(p) => parse_config(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.degrade.seed = s;
    }
    if let Some(q) = g.q {
        cfg.degrade.q = q;
    }
    if let Some(s) = g.sigma {
        cfg.degrade.sigma = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn require_out(g: &Global) -> Result<&Path, Error> {
    g.out
        .as_deref()
        .ok_or_else(|| Error::Parameter("--out is required for this subcommand".into()))
}

fn grid_for(g: &Global, cfg: &PipelineConfig) -> Result<PsfGrid, Error> {
    match &g.psf_grid {
        Some(p) => read_psf_grid(p),
        None => {
            log::info!("no --psf-grid given, synthesizing from config");
            build_psf_grid(
                &cfg.optics.pupil,
                &cfg.optics.wavefront_fields()?,
                &cfg.optics.grid_params(),
            )
        }
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let g = &cli.global;
    let cfg = load_config(g)?;
    match &cli.command {
        Command::Psf => {
            let out = require_out(g)?;
            let grid = grid_for(g, &cfg)?;
            write_psf_grid(out, &grid)?;
            println!("psf_grid={}", out.display());
            println!("psf_grid_id={}", psf_grid_id(&grid));
            println!(
                "rows={}\ncols={}\nd_psf={}",
                grid.rows(),
                grid.cols(),
                grid.d_psf()
            );
        }
        Command::Degrade {
            input,
            raw,
            no_noise,
        } => {
            let out = require_out(g)?;
            let grid = grid_for(g, &cfg)?;
            let dcfg = cfg.degrade.to_config();
            let img = ImagePlane::load(input)?;
            let blurred = degrade_image(&img, &grid, &dcfg)?;
            let result = if *no_noise {
                blurred
            } else {
                apply_noise(&blurred, &dcfg)?
            };
            result.save_png16(out)?;
            if let Some(r) = raw {
                result.save_raw_f32(r)?;
            }
            println!("out={}", out.display());
            println!(
                "q_step={}\nsigma={}\nseed={}",
                dcfg.q_step, dcfg.sigma, dcfg.seed
            );
            println!("psf_grid_id={}", psf_grid_id(&grid));
        }
        Command::Blurmap {
            height,
            width,
            preview,
        } => {
            let out = require_out(g)?;
            let grid = grid_for(g, &cfg)?;
            let h = height.unwrap_or(cfg.blurmap.height);
            let w = width.unwrap_or(cfg.blurmap.width);
            let map = build_blur_index_map(&grid, h, w)?;
            write_raw_f32(out, &map.k)?;
            if let Some(p) = preview {
                ImagePlane::new(w, h, map.k.clone())?.save_png16(p)?;
            }
            let factors = normalized_blur_factors(&grid)?;
            let fmt: Vec<String> = factors.iter().map(|v| format!("{v:.6}")).collect();
            println!("out={}\nheight={h}\nwidth={w}", out.display());
            println!("region_k={}", fmt.join(","));
        }
        Command::Gates {
            height,
            width,
            blur_map,
        } => {
            let out = require_out(g)?;
            let h = height.unwrap_or(cfg.blurmap.height);
            let w = width.unwrap_or(cfg.blurmap.width);
            let map = match blur_map {
                Some(p) => BlurIndexMap::new(w, h, read_raw_f32(p, w * h)?)?,
                None => build_blur_index_map(&grid_for(g, &cfg)?, h, w)?,
            };
            let gates = compute_gate_maps(&map, &cfg.gates);
            std::fs::create_dir_all(out)
                .map_err(|e| Error::Parameter(format!("{}: {e}", out.display())))?;
            for (name, data) in [
                ("g_s", &gates.g_s),
                ("g_l", &gates.g_l),
                ("g_lambda", &gates.g_lambda),
            ] {
                write_raw_f32(out.join(format!("{name}.f32")), data)?;
                ImagePlane::new(w, h, data.clone())?.save_png16(out.join(format!("{name}.png")))?;
                let (lo, hi) = data
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                        (a.min(v), b.max(v))
                    });
                println!("{name}_min={lo:.9}\n{name}_max={hi:.9}");
            }
        }
        Command::Bridge(BridgeCommand::Run {
            features,
            weights,
            blur_map,
        }) => {
            let out = require_out(g)?;
            let x = FeatureTensor::load(features)?;
            let wpath = weights
                .as_ref()
                .or(cfg.bridge.weights.as_ref())
                .ok_or_else(|| {
                    Error::Config(ConfigError::Range {
                        field: "bridge.weights".into(),
                        bound: "a weight file (or --weights)".into(),
                    })
                })?;
            let w = BridgeWeights::load(wpath)?;
            let (h, wd) = (x.height(), x.width());
            let map = match blur_map {
                Some(p) => BlurIndexMap::new(wd, h, read_raw_f32(p, wd * h)?)?,
                None => build_blur_index_map(&grid_for(g, &cfg)?, h, wd)?,
            };
            let trace = bridge_forward_traced(&x, &map, &cfg.gates, &w)?;
            std::fs::create_dir_all(out)
                .map_err(|e| Error::Parameter(format!("{}: {e}", out.display())))?;
            for (name, t) in [
                ("output", &trace.output),
                ("fused", &trace.fused),
                ("small", &trace.branches.small),
                ("large", &trace.branches.large),
                ("laplacian", &trace.branches.laplacian),
                ("laplacian_pre_norm", &trace.branches.laplacian_pre_norm),
            ] {
                t.save(out.join(format!("{name}.ften")))?;
            }
            let [b, c, hh, ww] = trace.output.dims();
            println!("out={}\ndims={b}x{c}x{hh}x{ww}", out.display());
        }
        Command::Bridge(BridgeCommand::InitWeights { identity }) => {
            let out = require_out(g)?;
            let b = &cfg.bridge;
            let hidden = se_hidden_width(b.channels, b.se_reduction);
            let w = if *identity {
                BridgeWeights::identity(b.channels, b.groups, hidden)
            } else {
                BridgeWeights::random(b.channels, b.groups, hidden, cfg.degrade.seed)
            };
            w.save(out)?;
            println!(
                "out={}\nchannels={}\ngroups={}\nse_hidden={hidden}",
                out.display(),
                b.channels,
                b.groups
            );
        }
        Command::Dataset {
            manifest,
            write_raw,
        } => {
            let out = g.out.clone().unwrap_or_else(|| cfg.dataset.out_dir.clone());
            let manifest = manifest
                .clone()
                .or_else(|| cfg.dataset.manifest.clone())
                .ok_or_else(|| {
                    Error::Config(ConfigError::Range {
                        field: "dataset.manifest".into(),
                        bound: "an input manifest (or --manifest)".into(),
                    })
                })?;
            let grid = grid_for(g, &cfg)?;
            let opts = DatasetOptions {
                width: cfg.dataset.width,
                height: cfg.dataset.height,
                write_raw: *write_raw || cfg.dataset.write_raw,
            };
            let report = build_dataset(&manifest, &out, &grid, &cfg.degrade.to_config(), &opts)?;
            for (line, why) in &report.skipped {
                log::warn!("skipped input line {line}: {why}");
            }
            println!("manifest={}", report.manifest_path.display());
            println!(
                "samples={}\nskipped={}",
                report.records.len(),
                report.skipped.len()
            );
        }
        Command::Metrics { a, b } => {
            let r = image_metrics(&ImagePlane::load(a)?, &ImagePlane::load(b)?)?;
            print!("{r}");
        }
    }
    Ok(())
}
