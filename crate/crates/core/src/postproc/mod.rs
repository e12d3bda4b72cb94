//! From predicted maps to instances.
//!
//! The usual chain is [`extract_candidates`] → [`nms`] →
//! [`render_instance_map`]. Tiled predictions are first merged with
//! [`blend_tiles`].

mod nms;
mod tiles;

pub use nms::nms;
pub use tiles::{blend_tiles, DEFAULT_PYRAMID_FLOOR, pyramid_weight_map, TileLayout};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rasterize_polygon, RayFan, StarPolygon};
use crate::grid::{Grid, LabelMap};
use crate::targets::{DistanceMaps, ProbMap};

pub const DEFAULT_PROB_THRESHOLD: f64 = 0.5;
pub const DEFAULT_NMS_THRESHOLD: f64 = 0.3;

/// The three network outputs for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMaps {
    pub prob: ProbMap,
    pub dist: DistanceMaps,
    /// Class scores per pixel; channel 0 is background.
    pub type_scores: Grid<f32>,
}

impl PredictionMaps {
    pub fn new(prob: ProbMap, dist: DistanceMaps, type_scores: Grid<f32>) -> Result<Self> {
        if prob.channels() != 1 {
            return Err(Error::shape("1 probability channel", prob.channels()));
        }
        prob.check_same_shape(&dist)?;
        prob.check_same_shape(&type_scores)?;
        Ok(PredictionMaps {
            prob,
            dist,
            type_scores,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.prob.shape()
    }

    pub fn n_rays(&self) -> usize {
        self.dist.channels()
    }

    pub fn n_classes(&self) -> usize {
        self.type_scores.channels()
    }
}

/// Star polygons ordered by descending score, ties by row-major center.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CandidateSet {
    polygons: Vec<StarPolygon>,
}

impl CandidateSet {
    pub fn from_unsorted(mut polygons: Vec<StarPolygon>) -> Self {
        polygons.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.center.cmp(&b.center)));
        CandidateSet { polygons }
    }

    pub fn as_slice(&self) -> &[StarPolygon] {
        &self.polygons
    }

    pub fn len(&self) -> usize {
        self.polygons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polygons.is_empty()
    }
}

/// Index of the best non-background class; 0 when there is none.
pub(crate) fn argmax_foreground(scores: &[f32]) -> u8 {
    let mut best = 0usize;
    for k in 1..scores.len() {
        if best == 0 || scores[k] > scores[best] {
            best = k;
        }
    }
    best as u8
}

/// One candidate per pixel with `prob >= prob_threshold`.
pub fn extract_candidates(maps: &PredictionMaps, fan: &RayFan, prob_threshold: f64) -> Result<CandidateSet> {
    extract_candidates_strided(maps, fan, prob_threshold, 1)
}

/// Like [`extract_candidates`] but only visits every `stride`-th row and column.
pub fn extract_candidates_strided(
    maps: &PredictionMaps,
    fan: &RayFan,
    prob_threshold: f64,
    stride: usize,
) -> Result<CandidateSet> {
    if !(0.0..=1.0).contains(&prob_threshold) {
        return Err(Error::invalid(format!(
            "probability threshold {prob_threshold} outside [0, 1]"
        )));
    }
    if stride == 0 {
        return Err(Error::invalid("stride must be >= 1"));
    }
    if maps.n_rays() != fan.n_rays() {
        return Err(Error::shape(
            format!("{} rays", fan.n_rays()),
            format!("{} rays", maps.n_rays()),
        ));
    }
    let (h, w) = maps.shape();
    let rows: Vec<usize> = (0..h).step_by(stride).collect();
    let per_row = crate::par::map(&rows, |&r| {
        let mut out = Vec::new();
        for c in (0..w).step_by(stride) {
            let p = *maps.prob.get(r, c) as f64;
            if p >= prob_threshold {
                out.push(StarPolygon {
                    center: (r as i64, c as i64),
                    radii: maps.dist.pixel(r, c).iter().map(|&d| d.max(0.0) as f64).collect(),
                    score: p.clamp(0.0, 1.0),
                    class_id: argmax_foreground(maps.type_scores.pixel(r, c)),
                });
            }
        }
        out
    });
    Ok(CandidateSet::from_unsorted(per_row.into_iter().flatten().collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: u32,
    pub score: f64,
    pub class_id: u8,
}

/// Rendered instances; ids run from 1 in kept order.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMap {
    pub labels: LabelMap,
    pub records: Vec<InstanceRecord>,
}

/// Candidate extraction, suppression and rendering in one call.
pub fn postprocess(
    maps: &PredictionMaps,
    fan: &RayFan,
    prob_threshold: f64,
    nms_threshold: f64,
    stride: usize,
) -> Result<InstanceMap> {
    let candidates = extract_candidates_strided(maps, fan, prob_threshold, stride)?;
    let kept = nms(&candidates, fan, nms_threshold)?;
    Ok(render_instance_map(&kept, fan, maps.shape()))
}

/// Paints kept polygons; contested pixels go to the highest-score polygon,
/// ties to the earlier one.
pub fn render_instance_map(kept: &[StarPolygon], fan: &RayFan, shape: (usize, usize)) -> InstanceMap {
    let (h, w) = shape;
    let masks = crate::par::map(kept, |p| rasterize_polygon(p, fan, Some(shape)));
    // Pixels are claimed in reverse priority so the winner writes last.
    let mut order: Vec<usize> = (0..kept.len()).collect();
    order.sort_by(|&a, &b| kept[a].score.total_cmp(&kept[b].score).then(b.cmp(&a)));
    let mut labels = Grid::new(h, w, 0u32);
    for i in order {
        for (r, c) in masks[i].pixels() {
            *labels.get_mut(r as usize, c as usize) = i as u32 + 1;
        }
    }
    let records = kept
        .iter()
        .enumerate()
        .map(|(i, p)| InstanceRecord {
            id: i as u32 + 1,
            score: p.score,
            class_id: p.class_id,
        })
        .collect();
    InstanceMap { labels, records }
}
