use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::binio::{put_f32s, put_u32, Reader};
use crate::error::{Error, FormatError, Result};

pub const NORM_EPS: f64 = 1e-5;
pub const LARGE_KERNEL: usize = 15;
pub const DEFAULT_GROUPS: usize = 4;
pub const DEFAULT_SE_REDUCTION: usize = 4;

/// 4-neighbor Laplacian.
pub const LAPLACIAN: [f64; 9] = [0.0, 1.0, 0.0, 1.0, -4.0, 1.0, 0.0, 1.0, 0.0];

/// Inference-mode normalization `γ(v − μ)/√(σ² + ε) + β` per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl BatchNorm {
    /// Maps every input to itself (up to rounding in `√(σ² + ε)`).
    pub fn identity(c: usize) -> Self {
        Self {
            gamma: vec![1.0; c],
            beta: vec![0.0; c],
            mean: vec![0.0; c],
            var: vec![1.0 - NORM_EPS; c],
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// `(scale, shift)` such that `y = scale·v + shift`.
    pub fn affine(&self, c: usize) -> (f64, f64) {
        let scale = self.gamma[c] / (self.var[c] + NORM_EPS).sqrt();
        (scale, self.beta[c] - scale * self.mean[c])
    }

    fn validate(&self, name: &str, c: usize) -> Result<()> {
        for v in [&self.gamma, &self.beta, &self.mean, &self.var] {
            if v.len() != c {
                return Err(Error::Dimension(format!(
                    "{name}: {} channels, expected {c}",
                    v.len()
                )));
            }
        }
        if self.var.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Parameter(format!(
                "{name}: running variances must be > 0"
            )));
        }
        Ok(())
    }
}

/// All parameters of the bridge block.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgeWeights {
    pub channels: usize,
    pub groups: usize,
    pub se_hidden: usize,
    /// Grouped 3×3 conv, `[C, C/groups, 3, 3]`.
    pub small_conv: Vec<f64>,
    pub small_norm: BatchNorm,
    /// Depthwise kernels, `[C, 15, 15]`.
    pub large_dw: Vec<f64>,
    /// Pointwise mix, `[C_out, C_in]`.
    pub large_pw: Vec<f64>,
    pub large_norm: BatchNorm,
    /// Fixed 3×3 kernel applied per channel.
    pub laplacian: [f64; 9],
    pub laplacian_norm: BatchNorm,
    /// `[hidden, C]` and `[hidden]`.
    pub se_fc1_w: Vec<f64>,
    pub se_fc1_b: Vec<f64>,
    /// `[C, hidden]` and `[C]`.
    pub se_fc2_w: Vec<f64>,
    pub se_fc2_b: Vec<f64>,
    pub out_norm: BatchNorm,
}

pub fn se_hidden_width(channels: usize, reduction: usize) -> usize {
    (channels / reduction.max(1)).max(1)
}

impl BridgeWeights {
    /// Center-tap convolutions, identity mixing and norms, and an SE block
    /// saturated to scale ≈ 1.
    pub fn identity(channels: usize, groups: usize, se_hidden: usize) -> Self {
        let c = channels;
        let cg = c / groups.max(1);
        let mut small_conv = vec![0.0; c * cg * 9];
        for o in 0..c {
            small_conv[(o * cg + o % cg) * 9 + 4] = 1.0;
        }
        let mut large_dw = vec![0.0; c * LARGE_KERNEL * LARGE_KERNEL];
        let center = LARGE_KERNEL * LARGE_KERNEL / 2;
        for ch in 0..c {
            large_dw[ch * LARGE_KERNEL * LARGE_KERNEL + center] = 1.0;
        }
        let mut large_pw = vec![0.0; c * c];
        for ch in 0..c {
            large_pw[ch * c + ch] = 1.0;
        }
        Self {
            channels: c,
            groups,
            se_hidden,
            small_conv,
            small_norm: BatchNorm::identity(c),
            large_dw,
            large_pw,
            large_norm: BatchNorm::identity(c),
            laplacian: LAPLACIAN,
            laplacian_norm: BatchNorm::identity(c),
            se_fc1_w: vec![0.0; se_hidden * c],
            se_fc1_b: vec![0.0; se_hidden],
            se_fc2_w: vec![0.0; c * se_hidden],
            se_fc2_b: vec![20.0; c],
            out_norm: BatchNorm::identity(c),
        }
    }

    /// Seeded random weights with fan-in scaling; norms get random but valid statistics.
    pub fn random(channels: usize, groups: usize, se_hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = channels;
        let cg = c / groups.max(1);
        let mut uniform = |n: usize, bound: f64| -> Vec<f64> {
            (0..n).map(|_| rng.random_range(-bound..bound)).collect()
        };
        let small_conv = uniform(c * cg * 9, 1.0 / ((cg * 9) as f64).sqrt());
        let large_dw = uniform(c * LARGE_KERNEL * LARGE_KERNEL, 1.0 / LARGE_KERNEL as f64);
        let large_pw = uniform(c * c, 1.0 / (c as f64).sqrt());
        let se_fc1_w = uniform(se_hidden * c, 1.0 / (c as f64).sqrt());
        let se_fc1_b = uniform(se_hidden, 0.1);
        let se_fc2_w = uniform(c * se_hidden, 1.0 / (se_hidden as f64).sqrt());
        let se_fc2_b = uniform(c, 0.1);
        let mut norm = || BatchNorm {
            gamma: (0..c).map(|_| rng.random_range(0.5..1.5)).collect(),
            beta: (0..c).map(|_| rng.random_range(-0.2..0.2)).collect(),
            mean: (0..c).map(|_| rng.random_range(-0.2..0.2)).collect(),
            var: (0..c).map(|_| rng.random_range(0.5..2.0)).collect(),
        };
        let (small_norm, large_norm, laplacian_norm, out_norm) = (norm(), norm(), norm(), norm());
        Self {
            channels: c,
            groups,
            se_hidden,
            small_conv,
            small_norm,
            large_dw,
            large_pw,
            large_norm,
            laplacian: LAPLACIAN,
            laplacian_norm,
            se_fc1_w,
            se_fc1_b,
            se_fc2_w,
            se_fc2_b,
            out_norm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.channels;
        if c == 0 || self.groups == 0 || !c.is_multiple_of(self.groups) {
            return Err(Error::Dimension(format!(
                "group count {} must divide channel count {c}",
                self.groups
            )));
        }
        if self.se_hidden == 0 {
            return Err(Error::Dimension("SE hidden width must be >= 1".into()));
        }
        let cg = c / self.groups;
        let h = self.se_hidden;
        let k2 = LARGE_KERNEL * LARGE_KERNEL;
        for (name, len, want) in [
            ("small.conv.weight", self.small_conv.len(), c * cg * 9),
            ("large.dw.weight", self.large_dw.len(), c * k2),
            ("large.pw.weight", self.large_pw.len(), c * c),
            ("se.fc1.weight", self.se_fc1_w.len(), h * c),
            ("se.fc1.bias", self.se_fc1_b.len(), h),
            ("se.fc2.weight", self.se_fc2_w.len(), c * h),
            ("se.fc2.bias", self.se_fc2_b.len(), c),
        ] {
            if len != want {
                return Err(Error::Dimension(format!(
                    "{name}: {len} values, expected {want}"
                )));
            }
        }
        self.small_norm.validate("small.norm", c)?;
        self.large_norm.validate("large.norm", c)?;
        self.laplacian_norm.validate("lap.norm", c)?;
        self.out_norm.validate("out.norm", c)?;
        if self.laplacian.iter().sum::<f64>().abs() > 1e-12 {
            return Err(Error::Parameter("laplacian kernel must sum to zero".into()));
        }
        Ok(())
    }

    fn records(&self) -> Vec<(String, Vec<u32>, &[f64])> {
        let (c, cg, h) = (
            self.channels as u32,
            (self.channels / self.groups) as u32,
            self.se_hidden as u32,
        );
        let k = LARGE_KERNEL as u32;
        let mut recs: Vec<(String, Vec<u32>, &[f64])> = vec![
            (
                "small.conv.weight".into(),
                vec![c, cg, 3, 3],
                &self.small_conv,
            ),
            ("large.dw.weight".into(), vec![c, 1, k, k], &self.large_dw),
            ("large.pw.weight".into(), vec![c, c, 1, 1], &self.large_pw),
            ("lap.kernel".into(), vec![3, 3], &self.laplacian),
            ("se.fc1.weight".into(), vec![h, c], &self.se_fc1_w),
            ("se.fc1.bias".into(), vec![h], &self.se_fc1_b),
            ("se.fc2.weight".into(), vec![c, h], &self.se_fc2_w),
            ("se.fc2.bias".into(), vec![c], &self.se_fc2_b),
        ];
        for (prefix, bn) in [
            ("small.norm", &self.small_norm),
            ("large.norm", &self.large_norm),
            ("lap.norm", &self.laplacian_norm),
            ("out.norm", &self.out_norm),
        ] {
            recs.push((format!("{prefix}.gamma"), vec![c], &bn.gamma));
            recs.push((format!("{prefix}.beta"), vec![c], &bn.beta));
            recs.push((format!("{prefix}.mean"), vec![c], &bn.mean));
            recs.push((format!("{prefix}.var"), vec![c], &bn.var));
        }
        recs
    }

    /// Layout: `"BRWT"`, version, channels, groups, se_hidden, large kernel
    /// size, record count (all u32); then per record the name length and
    /// UTF-8 name, the rank and dims (u32), and the `f32` values.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        for v in [
            VERSION,
            self.channels as u32,
            self.groups as u32,
            self.se_hidden as u32,
            LARGE_KERNEL as u32,
        ] {
            put_u32(&mut out, v);
        }
        let recs = self.records();
        put_u32(&mut out, recs.len() as u32);
        for (name, dims, data) in recs {
            put_u32(&mut out, name.len() as u32);
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, dims.len() as u32);
            for d in dims {
                put_u32(&mut out, d);
            }
            put_f32s(&mut out, data);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(MAGIC)?;
        let version = r.u32()?;
        if version != VERSION {
            return Err(FormatError::UnsupportedVersion(version).into());
        }
        let channels = r.u32()? as usize;
        let groups = r.u32()? as usize;
        let se_hidden = r.u32()? as usize;
        let kernel = r.u32()? as usize;
        if kernel != LARGE_KERNEL {
            return Err(FormatError::Malformed(format!(
                "large kernel {kernel}, expected {LARGE_KERNEL}"
            ))
            .into());
        }
        if groups == 0 || !channels.is_multiple_of(groups) {
            return Err(Error::Dimension(format!(
                "{groups} groups for {channels} channels"
            )));
        }
        let count = r.u32()?;
        let mut named: BTreeMap<String, (Vec<u32>, Vec<f64>)> = BTreeMap::new();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.bytes(len)?)
                .map_err(|_| FormatError::Malformed("record name is not UTF-8".into()))?
                .to_owned();
            let rank = r.u32()? as usize;
            if rank > 8 {
                return Err(FormatError::Malformed(format!("{name}: rank {rank}")).into());
            }
            let dims = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
            let n = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
                .ok_or_else(|| FormatError::DimensionOverflow(format!("{name}: {dims:?}")))?;
            let data = r.f32s(n)?;
            if named.insert(name.clone(), (dims, data)).is_some() {
                return Err(FormatError::Malformed(format!("duplicate record {name}")).into());
            }
        }
        r.finish()?;

        let mut shell = Self::identity(channels, groups, se_hidden.max(1));
        shell.se_hidden = se_hidden;
        let expected: Vec<(String, Vec<u32>)> = shell
            .records()
            .into_iter()
            .map(|(n, d, _)| (n, d))
            .collect();
        let mut take = |name: &str, dims: &[u32]| -> Result<Vec<f64>> {
            let (d, v) = named
                .remove(name)
                .ok_or_else(|| FormatError::Malformed(format!("missing record {name}")))?;
            if d != dims {
                return Err(Error::Dimension(format!(
                    "{name}: dims {d:?}, expected {dims:?}"
                )));
            }
            Ok(v)
        };
        let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for (name, dims) in &expected {
            values.insert(name.clone(), take(name, dims)?);
        }
        if let Some(extra) = named.keys().next() {
            return Err(FormatError::Malformed(format!("unexpected record {extra}")).into());
        }
        let mut get = |n: &str| values.remove(n).expect("record collected above");
        let mut norm = |p: &str| BatchNorm {
            gamma: get(&format!("{p}.gamma")),
            beta: get(&format!("{p}.beta")),
            mean: get(&format!("{p}.mean")),
            var: get(&format!("{p}.var")),
        };
        let small_norm = norm("small.norm");
        let large_norm = norm("large.norm");
        let laplacian_norm = norm("lap.norm");
        let out_norm = norm("out.norm");
        let lap = get("lap.kernel");
        let mut laplacian = [0.0; 9];
        laplacian.copy_from_slice(&lap);
        let w = Self {
            channels,
            groups,
            se_hidden,
            small_conv: get("small.conv.weight"),
            small_norm,
            large_dw: get("large.dw.weight"),
            large_pw: get("large.pw.weight"),
            large_norm,
            laplacian,
            laplacian_norm,
            se_fc1_w: get("se.fc1.weight"),
            se_fc1_b: get("se.fc1.bias"),
            se_fc2_w: get("se.fc2.weight"),
            se_fc2_b: get("se.fc2.bias"),
            out_norm,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

const MAGIC: [u8; 4] = *b"BRWT";
const VERSION: u32 = 1;
