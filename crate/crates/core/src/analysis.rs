//! Per-instance classification, contour-based sizing and size reports.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{min_enclosing_circle, trace_contour, Circle, PixelMask};
use crate::grid::{Grid, LabelMap};

/// Instances whose contour has fewer points than this are not sized.
pub const MIN_CONTOUR_POINTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PelletClass {
    Background = 0,
    /// Round, well formed.
    Nice = 1,
    /// Oval or rod shaped, or with an overlapped surface.
    Ugly = 2,
    /// Regular and round but oversized.
    Big = 3,
    /// Small pellets stuck together.
    Joint = 4,
}

impl PelletClass {
    pub const COUNT: usize = 5;
    pub const ALL: [PelletClass; 5] = [
        PelletClass::Background,
        PelletClass::Nice,
        PelletClass::Ugly,
        PelletClass::Big,
        PelletClass::Joint,
    ];
    pub const FOREGROUND: [PelletClass; 4] = [
        PelletClass::Nice,
        PelletClass::Ugly,
        PelletClass::Big,
        PelletClass::Joint,
    ];

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            PelletClass::Background => "background",
            PelletClass::Nice => "nice",
            PelletClass::Ugly => "ugly",
            PelletClass::Big => "big",
            PelletClass::Joint => "joint",
        }
    }

    /// Annotation color.
    pub fn color_name(self) -> &'static str {
        match self {
            PelletClass::Background => "black",
            PelletClass::Nice => "green",
            PelletClass::Ugly => "red",
            PelletClass::Big => "purple",
            PelletClass::Joint => "blue",
        }
    }

    pub fn rgb(self) -> [u8; 3] {
        match self {
            PelletClass::Background => [0, 0, 0],
            PelletClass::Nice => [0, 200, 0],
            PelletClass::Ugly => [220, 0, 0],
            PelletClass::Big => [160, 32, 240],
            PelletClass::Joint => [0, 0, 230],
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name().eq_ignore_ascii_case(s.trim()))
    }
}

impl fmt::Display for PelletClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Majority vote of the per-pixel argmax class over the mask.
///
/// Background-voting pixels abstain. Ties are broken by the larger summed
/// score, then the lower class id. With no foreground votes at all, the
/// foreground class with the largest summed score wins.
pub fn classify_instance(mask: &PixelMask, type_scores: &Grid<f32>) -> Result<PelletClass> {
    if mask.is_empty() {
        return Err(Error::EmptyInput("instance mask has no pixels"));
    }
    if type_scores.channels() != PelletClass::COUNT {
        return Err(Error::shape(
            format!("{} class channels", PelletClass::COUNT),
            format!("{} class channels", type_scores.channels()),
        ));
    }
    let mut votes = [0usize; PelletClass::COUNT];
    let mut sums = [0.0f64; PelletClass::COUNT];
    for (r, c) in mask.pixels() {
        if !type_scores.in_bounds(r, c) {
            return Err(Error::invalid(format!("mask pixel ({r}, {c}) outside the score map")));
        }
        let s = type_scores.pixel(r as usize, c as usize);
        let mut arg = 0;
        for k in 1..s.len() {
            if s[k] > s[arg] {
                arg = k;
            }
        }
        votes[arg] += 1;
        for (acc, v) in sums.iter_mut().zip(s) {
            *acc += *v as f64;
        }
    }
    let any_votes = votes[1..].iter().any(|&v| v > 0);
    let best = (1..PelletClass::COUNT)
        .max_by(|&a, &b| {
            let by_votes = if any_votes {
                votes[a].cmp(&votes[b])
            } else {
                std::cmp::Ordering::Equal
            };
            by_votes
                .then(sums[a].total_cmp(&sums[b]))
                .then(b.cmp(&a))
        })
        .expect("four foreground classes");
    Ok(PelletClass::ALL[best])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Measurement {
    Measured {
        circle: Circle,
        diameter_px: f64,
        diameter_mm: f64,
        contour_points: usize,
    },
    Rejected {
        contour_points: usize,
    },
}

/// Traces the contour and sizes the instance by its minimum enclosing circle.
pub fn measure_instance(mask: &PixelMask, mm_per_px: f64) -> Result<Measurement> {
    if !(mm_per_px > 0.0) || !mm_per_px.is_finite() {
        return Err(Error::invalid(format!("mm_per_px must be positive, got {mm_per_px}")));
    }
    let contour = trace_contour(mask)?;
    let n = contour.points.len();
    if n < MIN_CONTOUR_POINTS {
        return Ok(Measurement::Rejected { contour_points: n });
    }
    let pts: Vec<(f64, f64)> = contour.points.iter().map(|&(r, c)| (r as f64, c as f64)).collect();
    let circle = min_enclosing_circle(&pts)?;
    let diameter_px = 2.0 * circle.radius;
    Ok(Measurement::Measured {
        circle,
        diameter_px,
        diameter_mm: diameter_px * mm_per_px,
        contour_points: n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: u32,
    pub mask: PixelMask,
    pub class: PelletClass,
    pub contour: Vec<(i64, i64)>,
    pub circle: Option<Circle>,
    pub diameter_px: Option<f64>,
    pub diameter_mm: Option<f64>,
}

/// Pixel masks of every nonzero id, keyed by id.
pub fn instance_masks(labels: &LabelMap) -> BTreeMap<u32, PixelMask> {
    let mut pixels: BTreeMap<u32, Vec<(i64, i64)>> = BTreeMap::new();
    for r in 0..labels.height() {
        for c in 0..labels.width() {
            let id = *labels.get(r, c);
            if id != 0 {
                pixels.entry(id).or_default().push((r as i64, c as i64));
            }
        }
    }
    pixels
        .into_iter()
        .map(|(id, px)| (id, PixelMask::from_pixels(px)))
        .collect()
}

/// Classifies and measures every instance of `labels`.
pub fn analyze_instances(labels: &LabelMap, type_scores: &Grid<f32>, mm_per_px: f64) -> Result<Vec<Instance>> {
    labels.check_same_shape(type_scores)?;
    let masks: Vec<(u32, PixelMask)> = instance_masks(labels).into_iter().collect();
    crate::par::map(&masks, |(id, mask)| -> Result<Instance> {
        let class = classify_instance(mask, type_scores)?;
        let contour = trace_contour(mask)?.points;
        let (circle, diameter_px, diameter_mm) = match measure_instance(mask, mm_per_px)? {
            Measurement::Measured {
                circle,
                diameter_px,
                diameter_mm,
                ..
            } => (Some(circle), Some(diameter_px), Some(diameter_mm)),
            Measurement::Rejected { .. } => (None, None, None),
        };
        Ok(Instance {
            id: *id,
            mask: mask.clone(),
            class,
            contour,
            circle,
            diameter_px,
            diameter_mm,
        })
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSizes {
    /// Instances of the class, sized or not.
    pub count: u64,
    /// Instances that passed the contour filter (only for measured classes).
    pub measured: u64,
    /// Counts per bin; `[lo, hi)` except the last bin, which is closed.
    pub histogram: Vec<u64>,
    pub below_range: u64,
    pub above_range: u64,
    pub diameters_mm: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeReport {
    pub bin_edges_mm: Vec<f64>,
    pub measured_classes: Vec<PelletClass>,
    pub classes: BTreeMap<PelletClass, ClassSizes>,
    pub rejected_ids: Vec<u32>,
}

fn bin_index(edges: &[f64], v: f64) -> Result<usize, bool> {
    let last = edges.len() - 1;
    if v < edges[0] {
        return Err(false);
    }
    if v > edges[last] {
        return Err(true);
    }
    if v == edges[last] {
        return Ok(last - 1);
    }
    Ok(edges.partition_point(|&e| e <= v) - 1)
}

/// Per-class counts for all instances and diameter histograms for the
/// classes in `measured_classes`.
pub fn size_report(instances: &[Instance], bin_edges_mm: &[f64], measured_classes: &[PelletClass]) -> Result<SizeReport> {
    if bin_edges_mm.len() < 2 {
        return Err(Error::invalid("need at least two bin edges"));
    }
    if bin_edges_mm.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("bin edges must be strictly increasing"));
    }
    let nbins = bin_edges_mm.len() - 1;
    let mut classes: BTreeMap<PelletClass, ClassSizes> = PelletClass::FOREGROUND
        .iter()
        .map(|&c| {
            (
                c,
                ClassSizes {
                    count: 0,
                    measured: 0,
                    histogram: vec![0; nbins],
                    below_range: 0,
                    above_range: 0,
                    diameters_mm: Vec::new(),
                },
            )
        })
        .collect();
    let mut rejected_ids = Vec::new();
    for inst in instances {
        let entry = classes.entry(inst.class).or_insert_with(|| ClassSizes {
            count: 0,
            measured: 0,
            histogram: vec![0; nbins],
            below_range: 0,
            above_range: 0,
            diameters_mm: Vec::new(),
        });
        entry.count += 1;
        let Some(d) = inst.diameter_mm else {
            rejected_ids.push(inst.id);
            continue;
        };
        if !measured_classes.contains(&inst.class) {
            continue;
        }
        entry.measured += 1;
        entry.diameters_mm.push(d);
        match bin_index(bin_edges_mm, d) {
            Ok(i) => entry.histogram[i] += 1,
            Err(false) => entry.below_range += 1,
            Err(true) => entry.above_range += 1,
        }
    }
    rejected_ids.sort_unstable();
    Ok(SizeReport {
        bin_edges_mm: bin_edges_mm.to_vec(),
        measured_classes: measured_classes.to_vec(),
        classes,
        rejected_ids,
    })
}
