//! Flat `key=value` pipeline configuration.
//!
//! One key per line, `#` starts a comment. Keys map 1:1 to
//! [`PipelineConfig`] fields; lists are comma separated.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::PelletClass;
use crate::error::{Error, Result};
use crate::metrics::LossWeights;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub n_rays: usize,
    pub prob_threshold: f64,
    pub nms_iou_threshold: f64,
    pub candidate_stride: usize,
    pub match_tau: f64,
    pub mm_per_px: Option<f64>,
    pub expansion_radius_px: f64,
    pub tile_h: usize,
    pub tile_w: usize,
    pub tile_stride: usize,
    pub pyramid_floor: f64,
    pub loss_weights: LossWeights,
    pub bin_edges_mm: Vec<f64>,
    pub measured_classes: Vec<PelletClass>,
    pub test_fraction: f64,
    pub restarts: usize,
    pub seed: Option<u64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            n_rays: 32,
            prob_threshold: crate::postproc::DEFAULT_PROB_THRESHOLD,
            nms_iou_threshold: crate::postproc::DEFAULT_NMS_THRESHOLD,
            candidate_stride: 1,
            match_tau: crate::metrics::DEFAULT_TAU,
            mm_per_px: None,
            expansion_radius_px: crate::targets::DEFAULT_EXPANSION_RADIUS,
            tile_h: 256,
            tile_w: 256,
            tile_stride: 192,
            pyramid_floor: crate::postproc::DEFAULT_PYRAMID_FLOOR,
            loss_weights: LossWeights::default(),
            bin_edges_mm: vec![0.0, 5.0, 8.0, 10.0, 12.0, 14.0, 16.0, 20.0, 30.0],
            measured_classes: vec![PelletClass::Nice],
            test_fraction: crate::dataset::DEFAULT_TEST_FRACTION,
            restarts: 16,
            seed: None,
        }
    }
}

pub const KEYS: &[&str] = &[
    "n_rays",
    "prob_threshold",
    "nms_iou_threshold",
    "candidate_stride",
    "match_tau",
    "mm_per_px",
    "expansion_radius_px",
    "tile_h",
    "tile_w",
    "tile_stride",
    "pyramid_floor",
    "w_dist",
    "w_type",
    "w_stardist",
    "bin_edges_mm",
    "measured_classes",
    "test_fraction",
    "restarts",
    "seed",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("bad value for {key}: {value:?}")))
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl PipelineConfig {
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("line {}: expected key=value, got {raw:?}", lineno + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_kv_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    /// Sets one field from its textual value. Does not validate ranges.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "n_rays" => self.n_rays = parse(key, value)?,
            "prob_threshold" => self.prob_threshold = parse(key, value)?,
            "nms_iou_threshold" => self.nms_iou_threshold = parse(key, value)?,
            "candidate_stride" => self.candidate_stride = parse(key, value)?,
            "match_tau" => self.match_tau = parse(key, value)?,
            "mm_per_px" => {
                self.mm_per_px = match value {
                    "" | "none" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "expansion_radius_px" => self.expansion_radius_px = parse(key, value)?,
            "tile_h" => self.tile_h = parse(key, value)?,
            "tile_w" => self.tile_w = parse(key, value)?,
            "tile_stride" => self.tile_stride = parse(key, value)?,
            "pyramid_floor" => self.pyramid_floor = parse(key, value)?,
            "w_dist" => self.loss_weights.w_dist = parse(key, value)?,
            "w_type" => self.loss_weights.w_type = parse(key, value)?,
            "w_stardist" => self.loss_weights.w_stardist = parse(key, value)?,
            "bin_edges_mm" => {
                self.bin_edges_mm = value
                    .split(',')
                    .map(|s| parse(key, s))
                    .collect::<Result<_>>()?
            }
            "measured_classes" => {
                self.measured_classes = value
                    .split(',')
                    .map(|s| {
                        PelletClass::parse(s)
                            .filter(|c| *c != PelletClass::Background)
                            .ok_or_else(|| Error::invalid(format!("unknown pellet class {s:?}")))
                    })
                    .collect::<Result<_>>()?
            }
            "test_fraction" => self.test_fraction = parse(key, value)?,
            "restarts" => self.restarts = parse(key, value)?,
            "seed" => {
                self.seed = match value {
                    "" | "none" => None,
                    v => Some(parse(key, v)?),
                }
            }
            _ => return Err(Error::invalid(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} = {v} outside [0, 1]")))
            }
        };
        unit("prob_threshold", self.prob_threshold)?;
        unit("nms_iou_threshold", self.nms_iou_threshold)?;
        unit("match_tau", self.match_tau)?;
        if self.n_rays < 3 {
            return Err(Error::invalid(format!("n_rays = {} must be >= 3", self.n_rays)));
        }
        if let Some(s) = self.mm_per_px {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::invalid(format!("mm_per_px = {s} must be > 0")));
            }
        }
        if !(self.expansion_radius_px >= 0.0) {
            return Err(Error::invalid("expansion_radius_px must be >= 0"));
        }
        if self.candidate_stride == 0 || self.tile_h == 0 || self.tile_w == 0 || self.tile_stride == 0 {
            return Err(Error::invalid("strides and tile sizes must be positive"));
        }
        if !(self.pyramid_floor > 0.0 && self.pyramid_floor <= 1.0) {
            return Err(Error::invalid("pyramid_floor must be in (0, 1]"));
        }
        let w = &self.loss_weights;
        if !(w.w_dist >= 0.0 && w.w_type >= 0.0 && w.w_stardist >= 0.0) {
            return Err(Error::invalid("loss weights must be >= 0"));
        }
        if self.bin_edges_mm.len() < 2 || self.bin_edges_mm.windows(2).any(|p| !(p[0] < p[1])) {
            return Err(Error::invalid("bin_edges_mm must hold >= 2 strictly increasing values"));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::invalid("test_fraction must be in (0, 1)"));
        }
        if self.restarts == 0 {
            return Err(Error::invalid("restarts must be >= 1"));
        }
        Ok(())
    }

    /// Canonical `key=value` text, one line per key in [`KEYS`] order.
    pub fn to_kv_string(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
        let mut s = String::new();
        let w = &self.loss_weights;
        let classes = self
            .measured_classes
            .iter()
            .map(|c| c.name())
            .collect::<Vec<_>>()
            .join(",");
        let values = [
            self.n_rays.to_string(),
            self.prob_threshold.to_string(),
            self.nms_iou_threshold.to_string(),
            self.candidate_stride.to_string(),
            self.match_tau.to_string(),
            opt(self.mm_per_px.map(|v| v.to_string())),
            self.expansion_radius_px.to_string(),
            self.tile_h.to_string(),
            self.tile_w.to_string(),
            self.tile_stride.to_string(),
            self.pyramid_floor.to_string(),
            w.w_dist.to_string(),
            w.w_type.to_string(),
            w.w_stardist.to_string(),
            fmt_list(&self.bin_edges_mm),
            classes,
            self.test_fraction.to_string(),
            self.restarts.to_string(),
            opt(self.seed.map(|v| v.to_string())),
        ];
        for (k, v) in KEYS.iter().zip(values) {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    /// SHA-256 of [`Self::to_kv_string`], hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_kv_string().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub inputs: Vec<String>,
    pub tool_version: String,
}

impl Provenance {
    pub fn new(cfg: &PipelineConfig, inputs: impl IntoIterator<Item = impl AsRef<Path>>) -> Self {
        Provenance {
            config_hash: cfg.hash(),
            inputs: inputs
                .into_iter()
                .map(|p| p.as_ref().display().to_string())
                .collect(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}
