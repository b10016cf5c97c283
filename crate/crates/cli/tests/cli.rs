use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lenssim::bridge::FeatureTensor;
use lenssim::optics::{PsfGrid, PsfKernel};
use lenssim::psf_io::write_psf_grid;
use lenssim::ImagePlane;

fn lenssim(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lenssim"))
        .args(args)
        .current_dir(cwd)
        .env_remove("LENSSIM_THREADS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(
        o.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn kv(out: &str, key: &str) -> String {
    out.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {out}"))
        .to_owned()
}

fn gaussian_grid(dir: &Path) {
    let kernels = (0..48)
        .map(|i| PsfKernel::gaussian(31, 0.7 + 0.05 * i as f64, 12e-6).unwrap())
        .collect();
    let grid = PsfGrid::new(
        6,
        8,
        kernels,
        lenssim::optics::field_grid_positions(6, 8),
        vec![10.0],
    )
    .unwrap();
    write_psf_grid(dir.join("grid.psfg"), &grid).unwrap();
}

fn scene(dir: &Path, name: &str) {
    ImagePlane::from_fn(640, 480, |y, x| {
        0.3 + 0.5 * (((x / 40) + (y / 40)) % 2) as f64
    })
    .save_png16(dir.join(name))
    .unwrap();
}

#[test]
fn psf_from_small_config() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.toml"),
        "[optics]\nrows = 2\ncols = 3\nwavelengths_um = [10.0]\n[optics.pupil]\ngrid_size = 64\n",
    )
    .unwrap();
    let out = stdout(&lenssim(
        &["psf", "--config", "c.toml", "--out", "g.psfg"],
        dir.path(),
    ));
    assert_eq!(kv(&out, "rows"), "2");
    assert_eq!(kv(&out, "cols"), "3");
    assert!(dir.path().join("g.psfg").exists());
    assert!(dir.path().join("g.psfg.json").exists());
    let grid = lenssim::psf_io::read_psf_grid(dir.path().join("g.psfg")).unwrap();
    assert_eq!(grid.wavelengths(), &[10.0]);
}

#[test]
fn degrade_with_default_noise_parameters() {
    let dir = tempfile::tempdir().unwrap();
    gaussian_grid(dir.path());
    scene(dir.path(), "img.png");
    let args = [
        "degrade",
        "--psf-grid",
        "grid.psfg",
        "--in",
        "img.png",
        "--out",
        "raw.png",
        "--q",
        "90",
        "--sigma",
        "0.0003",
        "--raw",
        "raw.f32",
    ];
    let out = stdout(&lenssim(&args, dir.path()));
    assert_eq!(kv(&out, "q_step").parse::<f64>().unwrap(), 90.0 / 16384.0);
    assert_eq!(kv(&out, "sigma"), "0.0003");
    let raw = ImagePlane::load_raw_f32(dir.path().join("raw.f32"), 640, 480).unwrap();
    assert!(raw.data().iter().all(|v| (1e-20..=1.0).contains(v)));
    let blurred_edges = raw
        .data()
        .iter()
        .filter(|v| **v > 0.35 && **v < 0.75)
        .count();
    assert!(blurred_edges > 1000);
}

#[test]
fn thread_count_does_not_change_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    gaussian_grid(dir.path());
    scene(dir.path(), "img.png");
    for t in ["1", "3"] {
        let out = format!("raw{t}.png");
        stdout(&lenssim(
            &[
                "degrade",
                "--psf-grid",
                "grid.psfg",
                "--in",
                "img.png",
                "--out",
                &out,
                "--seed",
                "5",
                "--threads",
                t,
            ],
            dir.path(),
        ));
    }
    let env = Command::new(env!("CARGO_BIN_EXE_lenssim"))
        .args([
            "degrade",
            "--psf-grid",
            "grid.psfg",
            "--in",
            "img.png",
            "--out",
            "rawenv.png",
            "--seed",
            "5",
        ])
        .env("LENSSIM_THREADS", "2")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(env.status.success());
    let a = fs::read(dir.path().join("raw1.png")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("raw3.png")).unwrap());
    assert_eq!(a, fs::read(dir.path().join("rawenv.png")).unwrap());
}

#[test]
fn metrics_are_key_value() {
    let dir = tempfile::tempdir().unwrap();
    let a = ImagePlane::from_fn(32, 16, |y, x| (x + y) as f64 / 64.0);
    let b = ImagePlane::from_fn(32, 16, |y, x| (x + y) as f64 / 64.0 + 0.1);
    a.save_png16(dir.path().join("a.png")).unwrap();
    b.save_png16(dir.path().join("b.png")).unwrap();
    let out = stdout(&lenssim(
        &["metrics", "--a", "a.png", "--b", "b.png"],
        dir.path(),
    ));
    let mse: f64 = kv(&out, "mse").parse().unwrap();
    assert!((mse - 0.01).abs() < 1e-6, "{mse}");
    let psnr: f64 = kv(&out, "psnr").parse().unwrap();
    assert!((psnr - 20.0).abs() < 1e-3);
    let same = stdout(&lenssim(
        &["metrics", "--a", "a.png", "--b", "a.png"],
        dir.path(),
    ));
    assert_eq!(kv(&same, "psnr"), "inf");
}

#[test]
fn unknown_subcommand_prints_usage() {
    let dir = tempfile::tempdir().unwrap();
    let o = lenssim(&["frobnicate"], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn config_errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("bad.toml"),
        "[degrade]\nsigma = -1.0\ncolour = 3\n",
    )
    .unwrap();
    let o = lenssim(
        &["psf", "--config", "bad.toml", "--out", "g.psfg"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("degrade.colour"));

    fs::write(dir.path().join("neg.toml"), "[degrade]\nsigma = -1.0\n").unwrap();
    let o = lenssim(
        &["psf", "--config", "neg.toml", "--out", "g.psfg"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sigma"));
}

#[test]
fn corrupt_grid_files_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    gaussian_grid(dir.path());
    let bytes = fs::read(dir.path().join("grid.psfg")).unwrap();
    fs::write(dir.path().join("cut.psfg"), &bytes[..bytes.len() / 2]).unwrap();
    let mut swapped = bytes.clone();
    swapped[..4].copy_from_slice(b"GFSP");
    fs::write(dir.path().join("be.psfg"), &swapped).unwrap();
    let code = |f: &str| {
        let o = lenssim(&["blurmap", "--psf-grid", f, "--out", "k.f32"], dir.path());
        assert!(!o.status.success());
        o.status.code().unwrap()
    };
    let (cut, be) = (code("cut.psfg"), code("be.psfg"));
    assert_ne!(cut, be);
    assert!(cut >= 10 && be >= 10);
}

#[test]
fn blurmap_gates_and_bridge() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gaussian_grid(d);
    let out = stdout(&lenssim(
        &[
            "blurmap",
            "--psf-grid",
            "grid.psfg",
            "--out",
            "k.f32",
            "--height",
            "12",
            "--width",
            "16",
            "--preview",
            "k.png",
        ],
        d,
    ));
    assert_eq!(kv(&out, "region_k").split(',').count(), 48);
    assert_eq!(fs::metadata(d.join("k.f32")).unwrap().len(), 12 * 16 * 4);

    stdout(&lenssim(
        &[
            "gates",
            "--blur-map",
            "k.f32",
            "--height",
            "12",
            "--width",
            "16",
            "--out",
            "gates",
        ],
        d,
    ));
    for g in ["g_s", "g_l", "g_lambda"] {
        assert!(d.join("gates").join(format!("{g}.f32")).exists());
    }

    fs::write(d.join("b.toml"), "[bridge]\nchannels = 8\ngroups = 2\n").unwrap();
    stdout(&lenssim(
        &[
            "bridge",
            "init-weights",
            "--config",
            "b.toml",
            "--out",
            "w.brwt",
            "--seed",
            "3",
        ],
        d,
    ));
    FeatureTensor::from_fn([1, 8, 12, 16], |_, c, y, x| {
        ((c + 2 * y + 3 * x) as f64 * 0.37).sin()
    })
    .save(d.join("x.ften"))
    .unwrap();
    let out = stdout(&lenssim(
        &[
            "bridge",
            "run",
            "--config",
            "b.toml",
            "--features",
            "x.ften",
            "--weights",
            "w.brwt",
            "--blur-map",
            "k.f32",
            "--out",
            "trace",
        ],
        d,
    ));
    assert_eq!(kv(&out, "dims"), "1x8x12x16");
    for t in [
        "output",
        "fused",
        "small",
        "large",
        "laplacian",
        "laplacian_pre_norm",
    ] {
        let y = FeatureTensor::load(d.join("trace").join(format!("{t}.ften"))).unwrap();
        assert_eq!(y.dims(), [1, 8, 12, 16]);
    }
}

#[test]
fn empty_manifest_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    gaussian_grid(dir.path());
    fs::write(dir.path().join("in.jsonl"), "# nothing yet\n").unwrap();
    let o = lenssim(
        &[
            "dataset",
            "--psf-grid",
            "grid.psfg",
            "--manifest",
            "in.jsonl",
            "--out",
            "ds",
        ],
        dir.path(),
    );
    let out = stdout(&o);
    assert_eq!(kv(&out, "samples"), "0");
    assert_eq!(
        fs::read_to_string(dir.path().join("ds/manifests/manifest.jsonl")).unwrap(),
        ""
    );
    assert!(String::from_utf8_lossy(&o.stderr).contains("no samples"));
}

#[test]
fn dataset_with_only_bad_inputs_fails() {
    let dir = tempfile::tempdir().unwrap();
    gaussian_grid(dir.path());
    fs::write(dir.path().join("broken.png"), b"not a png").unwrap();
    fs::write(
        dir.path().join("in.jsonl"),
        "{\"image\": \"broken.png\"}\n{\"image\": \"missing.png\"}\n",
    )
    .unwrap();
    let o = lenssim(
        &[
            "dataset",
            "--psf-grid",
            "grid.psfg",
            "--manifest",
            "in.jsonl",
            "--out",
            "ds",
        ],
        dir.path(),
    );
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("lenssim:"));
}
