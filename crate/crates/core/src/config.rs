//! Pipeline configuration: a flat `key = value` text file.
//!
//! Blank lines and text after `#` are ignored. Every key has a default, so an
//! empty file is a valid configuration. Unknown or repeated keys are errors.
//! Vectors are written as comma-separated numbers.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::deconvolve::{StainMatrix, DAB_OD, HEMATOXYLIN_OD};
use crate::error::{Error, Result};
use crate::gate::{GateConfig, Region};
use crate::image::RgbImage;
use crate::mask::{Connectivity, DiskSE, MaskParams};
use crate::normalize::{lab_stats_with_floor, LabStats, MacenkoParams, NormalizationMethod, Normalizer, STD_FLOOR};
use crate::orient::RotationParams;
use crate::quantify::OverlayStyle;
use crate::segment::SegmentParams;

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "EPIDERMAQUANT_CONFIG";

/// Every recognised key, in canonical order.
pub const KEYS: &[&str] = &[
    "normalization.method",
    "normalization.reference_image",
    "normalization.std_floor",
    "normalization.reinhard.mean",
    "normalization.reinhard.std",
    "stain.hematoxylin",
    "stain.dab",
    "stain.residual",
    "macenko.od_cutoff",
    "macenko.alpha",
    "macenko.beta",
    "macenko.min_pixels",
    "mask.se_radius",
    "mask.connectivity",
    "rotation.step",
    "rotation.margin",
    "rotation.downsample_cap",
    "rotation.refine_window",
    "gate.pixel_threshold",
    "gate.ap_threshold",
    "gate.region",
    "segment.seed",
    "segment.uniformity_tau",
    "segment.dark_tau",
    "segment.max_iter",
    "segment.tol",
    "overlay.color",
    "overlay.thickness",
    "output.dir",
    "output.save_intermediates",
    "output.save_rotated",
    "output.save_clusters",
];

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationConfig {
    pub method: NormalizationMethod,
    /// Reference slide. Reinhard takes its Lab statistics from it (overriding
    /// `reinhard_target`); histogram specification requires it.
    pub reference_image: Option<PathBuf>,
    pub std_floor: f64,
    pub reinhard_target: LabStats,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        Self {
            method: NormalizationMethod::Reinhard,
            reference_image: None,
            std_floor: STD_FLOOR,
            reinhard_target: LabStats::REFERENCE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StainConfig {
    pub hematoxylin: [f64; 3],
    pub dab: [f64; 3],
    /// Third stain; the unit cross product of the first two when absent.
    pub residual: Option<[f64; 3]>,
}

impl Default for StainConfig {
    fn default() -> Self {
        Self {
            hematoxylin: HEMATOXYLIN_OD,
            dab: DAB_OD,
            residual: None,
        }
    }
}

impl StainConfig {
    pub fn matrix(&self) -> Result<StainMatrix> {
        match self.residual {
            Some(r) => StainMatrix::from_rows([self.hematoxylin, self.dab, r]),
            None => StainMatrix::from_two_stains(self.hematoxylin, self.dab),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutputConfig {
    /// Used when no output directory is given on the command line.
    pub dir: Option<PathBuf>,
    /// Also write the normalized image, stain channels and tissue mask.
    pub save_intermediates: bool,
    /// Also write the rotated, cropped original and tissue mask.
    pub save_rotated: bool,
    /// Also write a gray-level rendering of the cluster labels.
    pub save_clusters: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub normalization: NormalizationConfig,
    pub stain: StainConfig,
    pub macenko: MacenkoParams,
    pub mask: MaskParams,
    pub rotation: RotationParams,
    /// Pixels added around the rotated tissue bounding box before cropping.
    pub margin: u32,
    pub gate: GateConfig,
    pub segment: SegmentParams,
    pub overlay: OverlayStyle,
    pub output: OutputConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            normalization: NormalizationConfig::default(),
            stain: StainConfig::default(),
            macenko: MacenkoParams::default(),
            mask: MaskParams::default(),
            rotation: RotationParams::default(),
            margin: 10,
            gate: GateConfig::default(),
            segment: SegmentParams::default(),
            overlay: OverlayStyle::default(),
            output: OutputConfig::default(),
        }
    }
}

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

fn parse_f64(key: &str, v: &str, line: usize) -> Result<f64> {
    let x: f64 = v
        .parse()
        .map_err(|_| err(line, format!("{key}: '{v}' is not a number")))?;
    if !x.is_finite() {
        return Err(err(line, format!("{key}: value must be finite")));
    }
    Ok(x)
}

fn parse_int<T: std::str::FromStr>(key: &str, v: &str, line: usize) -> Result<T> {
    v.parse()
        .map_err(|_| err(line, format!("{key}: '{v}' is not a valid integer")))
}

fn parse_vec3(key: &str, v: &str, line: usize) -> Result<[f64; 3]> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(err(line, format!("{key}: expected three comma-separated numbers")));
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = parse_f64(key, p, line)?;
    }
    Ok(out)
}

fn parse_bool(key: &str, v: &str, line: usize) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(err(line, format!("{key}: expected true or false, got '{v}'"))),
    }
}

fn in_range(key: &str, x: f64, lo: f64, hi: f64, line: usize) -> Result<f64> {
    if x < lo || x > hi {
        return Err(err(line, format!("{key}: {x} outside [{lo}, {hi}]")));
    }
    Ok(x)
}

fn fmt_vec3(v: [f64; 3]) -> String {
    format!("{}, {}, {}", v[0], v[1], v[2])
}

impl PipelineConfig {
    /// Parses config text; relative paths are kept as written.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(line, format!("expected 'key = value', got '{content}'")))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(err(line, format!("unknown key '{key}'")));
            }
            if !seen.insert(key.to_string()) {
                return Err(err(line, format!("duplicate key '{key}'")));
            }
            cfg.set(key, value, line)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. A relative `normalization.reference_image` is
    /// resolved against the file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| err(0, format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if let (Some(r), Some(dir)) = (&cfg.normalization.reference_image, path.parent()) {
            if r.is_relative() {
                cfg.normalization.reference_image = Some(dir.join(r));
            }
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str, line: usize) -> Result<()> {
        match key {
            "normalization.method" => self.normalization.method = v.parse().map_err(|m: String| err(line, m))?,
            "normalization.reference_image" => {
                self.normalization.reference_image = (!v.is_empty()).then(|| PathBuf::from(v))
            }
            "normalization.std_floor" => {
                let x = parse_f64(key, v, line)?;
                if x <= 0.0 {
                    return Err(err(line, format!("{key}: must be positive")));
                }
                self.normalization.std_floor = x;
            }
            "normalization.reinhard.mean" => self.normalization.reinhard_target.mean = parse_vec3(key, v, line)?,
            "normalization.reinhard.std" => {
                let s = parse_vec3(key, v, line)?;
                if s.iter().any(|&x| x < 0.0) {
                    return Err(err(line, format!("{key}: standard deviations must be non-negative")));
                }
                self.normalization.reinhard_target.std = s;
            }
            "stain.hematoxylin" => self.stain.hematoxylin = parse_vec3(key, v, line)?,
            "stain.dab" => self.stain.dab = parse_vec3(key, v, line)?,
            "stain.residual" => {
                self.stain.residual = if v.is_empty() || v == "auto" {
                    None
                } else {
                    Some(parse_vec3(key, v, line)?)
                }
            }
            "macenko.od_cutoff" => self.macenko.od_cutoff = in_range(key, parse_f64(key, v, line)?, 0.0, 5.0, line)?,
            "macenko.alpha" => self.macenko.alpha = in_range(key, parse_f64(key, v, line)?, 0.0, 50.0, line)?,
            "macenko.beta" => self.macenko.beta = in_range(key, parse_f64(key, v, line)?, 50.0, 100.0, line)?,
            "macenko.min_pixels" => self.macenko.min_pixels = parse_int(key, v, line)?,
            "mask.se_radius" => {
                let r: u32 = parse_int(key, v, line)?;
                if !(1..=256).contains(&r) {
                    return Err(err(line, format!("{key}: {r} outside [1, 256]")));
                }
                self.mask.se = DiskSE::new(r)?;
            }
            "mask.connectivity" => {
                self.mask.connectivity = match v {
                    "4" => Connectivity::Four,
                    "8" => Connectivity::Eight,
                    _ => return Err(err(line, format!("{key}: expected 4 or 8, got '{v}'"))),
                }
            }
            "rotation.step" => {
                let s = in_range(key, parse_f64(key, v, line)?, 1e-3, 90.0, line)?;
                let n = 180.0 / s;
                if (n - n.round()).abs() > 1e-6 {
                    return Err(err(line, format!("{key}: {s} does not divide 180")));
                }
                self.rotation.step = s;
            }
            "rotation.margin" => self.margin = parse_int(key, v, line)?,
            "rotation.downsample_cap" => {
                let c: u32 = parse_int(key, v, line)?;
                if c < 16 {
                    return Err(err(line, format!("{key}: must be at least 16")));
                }
                self.rotation.downsample_cap = c;
            }
            "rotation.refine_window" => {
                self.rotation.refine_window = in_range(key, parse_f64(key, v, line)?, 0.0, 90.0, line)?
            }
            "gate.pixel_threshold" => self.gate.pixel_threshold = parse_int(key, v, line)?,
            "gate.ap_threshold" => self.gate.ap_threshold = in_range(key, parse_f64(key, v, line)?, 0.0, 100.0, line)?,
            "gate.region" => self.gate.region = v.parse::<Region>().map_err(|m| err(line, m))?,
            "segment.seed" => self.segment.seed = parse_int(key, v, line)?,
            "segment.uniformity_tau" => {
                self.segment.uniformity_tau = in_range(key, parse_f64(key, v, line)?, 0.0, 255.0, line)?
            }
            "segment.dark_tau" => self.segment.dark_tau = in_range(key, parse_f64(key, v, line)?, 0.0, 256.0, line)?,
            "segment.max_iter" => {
                let n: usize = parse_int(key, v, line)?;
                if n == 0 {
                    return Err(err(line, format!("{key}: must be at least 1")));
                }
                self.segment.kmeans.max_iter = n;
            }
            "segment.tol" => {
                let t = parse_f64(key, v, line)?;
                if t <= 0.0 {
                    return Err(err(line, format!("{key}: must be positive")));
                }
                self.segment.kmeans.tol = t;
            }
            "overlay.color" => {
                let parts: Vec<&str> = v.split(',').map(str::trim).collect();
                if parts.len() != 3 {
                    return Err(err(line, format!("{key}: expected r, g, b")));
                }
                for (c, p) in self.overlay.color.iter_mut().zip(parts) {
                    *c = parse_int(key, p, line)?;
                }
            }
            "overlay.thickness" => {
                let t: u32 = parse_int(key, v, line)?;
                if !(1..=32).contains(&t) {
                    return Err(err(line, format!("{key}: {t} outside [1, 32]")));
                }
                self.overlay.thickness = t;
            }
            "output.dir" => self.output.dir = (!v.is_empty()).then(|| PathBuf::from(v)),
            "output.save_intermediates" => self.output.save_intermediates = parse_bool(key, v, line)?,
            "output.save_rotated" => self.output.save_rotated = parse_bool(key, v, line)?,
            "output.save_clusters" => self.output.save_clusters = parse_bool(key, v, line)?,
            _ => unreachable!("key list and setter out of sync: {key}"),
        }
        Ok(())
    }

    /// Cross-key checks.
    pub fn validate(&self) -> Result<()> {
        self.stain.matrix().map_err(|e| err(0, format!("stain vectors: {e}")))?;
        if self.macenko.alpha >= self.macenko.beta {
            return Err(err(0, "macenko.alpha must be below macenko.beta"));
        }
        if self.normalization.method == NormalizationMethod::HistogramSpecification
            && self.normalization.reference_image.is_none()
        {
            return Err(err(0, "normalization.method = histogram requires normalization.reference_image"));
        }
        Ok(())
    }

    /// Canonical text form listing every key; parsing it gives back `self`.
    pub fn to_canonical_string(&self) -> String {
        let mut s = String::new();
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let n = &self.normalization;
        let mut kv = |k: &str, v: String| {
            if v.is_empty() {
                writeln!(s, "{k} =").unwrap();
            } else {
                writeln!(s, "{k} = {v}").unwrap();
            }
        };
        kv("normalization.method", n.method.as_str().into());
        kv("normalization.reference_image", path(&n.reference_image));
        kv("normalization.std_floor", n.std_floor.to_string());
        kv("normalization.reinhard.mean", fmt_vec3(n.reinhard_target.mean));
        kv("normalization.reinhard.std", fmt_vec3(n.reinhard_target.std));
        kv("stain.hematoxylin", fmt_vec3(self.stain.hematoxylin));
        kv("stain.dab", fmt_vec3(self.stain.dab));
        kv("stain.residual", self.stain.residual.map(fmt_vec3).unwrap_or_else(|| "auto".into()));
        kv("macenko.od_cutoff", self.macenko.od_cutoff.to_string());
        kv("macenko.alpha", self.macenko.alpha.to_string());
        kv("macenko.beta", self.macenko.beta.to_string());
        kv("macenko.min_pixels", self.macenko.min_pixels.to_string());
        kv("mask.se_radius", self.mask.se.radius().to_string());
        kv(
            "mask.connectivity",
            match self.mask.connectivity {
                Connectivity::Four => "4",
                Connectivity::Eight => "8",
            }
            .into(),
        );
        kv("rotation.step", self.rotation.step.to_string());
        kv("rotation.margin", self.margin.to_string());
        kv("rotation.downsample_cap", self.rotation.downsample_cap.to_string());
        kv("rotation.refine_window", self.rotation.refine_window.to_string());
        kv("gate.pixel_threshold", self.gate.pixel_threshold.to_string());
        kv("gate.ap_threshold", self.gate.ap_threshold.to_string());
        kv("gate.region", self.gate.region.as_str().into());
        kv("segment.seed", self.segment.seed.to_string());
        kv("segment.uniformity_tau", self.segment.uniformity_tau.to_string());
        kv("segment.dark_tau", self.segment.dark_tau.to_string());
        kv("segment.max_iter", self.segment.kmeans.max_iter.to_string());
        kv("segment.tol", self.segment.kmeans.tol.to_string());
        let c = self.overlay.color;
        kv("overlay.color", format!("{}, {}, {}", c[0], c[1], c[2]));
        kv("overlay.thickness", self.overlay.thickness.to_string());
        kv("output.dir", path(&self.output.dir));
        kv("output.save_intermediates", self.output.save_intermediates.to_string());
        kv("output.save_rotated", self.output.save_rotated.to_string());
        kv("output.save_clusters", self.output.save_clusters.to_string());
        s
    }

    /// Builds the normalizer, reading the reference image when one is set.
    pub fn normalizer(&self) -> Result<Normalizer> {
        let n = &self.normalization;
        let reference = match &n.reference_image {
            Some(p) => Some(crate::io::load_rgb(p)?),
            None => None,
        };
        Ok(match n.method {
            NormalizationMethod::Reinhard => Normalizer::Reinhard {
                target: reference
                    .as_ref()
                    .map(|r: &RgbImage| lab_stats_with_floor(r, n.std_floor))
                    .unwrap_or(n.reinhard_target.with_floor(n.std_floor)),
                floor: n.std_floor,
            },
            NormalizationMethod::HistogramSpecification => Normalizer::HistogramSpecification {
                reference: reference.ok_or_else(|| err(0, "histogram specification needs a reference image"))?,
            },
            NormalizationMethod::Macenko => Normalizer::Macenko(self.macenko),
            NormalizationMethod::None => Normalizer::None,
        })
    }
}
