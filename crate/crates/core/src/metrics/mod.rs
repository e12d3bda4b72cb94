//! Evaluation: IoU-threshold instance matching, per-pixel class metrics and
//! the training losses (kept here as reference implementations).

mod assignment;
mod losses;

pub use assignment::max_weight_assignment;
pub use losses::{
    combined_loss, masked_bce_mse, masked_ce_dice, masked_mae, LossWeights, MaskedLoss, BCE_EPS,
    DICE_SMOOTH,
};

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::analysis::PelletClass;
use crate::error::{Error, Result};
use crate::grid::{ClassMap, LabelMap};

pub const DEFAULT_TAU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub tau: f64,
}

impl MatchConfig {
    pub fn new(tau: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::invalid(format!("tau {tau} outside [0, 1]")));
        }
        Ok(MatchConfig { tau })
    }
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig { tau: DEFAULT_TAU }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub pred_id: u32,
    pub gt_id: u32,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub tau: f64,
    pub n_pred: usize,
    pub n_gt: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mean_matched_iou: f64,
    /// Sorted by prediction id.
    pub pairs: Vec<MatchedPair>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1_of(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Instance ids of each map and the pixel IoU between every pair.
#[derive(Debug, Clone, PartialEq)]
pub struct IouMatrix {
    pub pred_ids: Vec<u32>,
    pub gt_ids: Vec<u32>,
    /// `iou[i][j]` for `pred_ids[i]`, `gt_ids[j]`.
    pub iou: Vec<Vec<f64>>,
}

const ROWS_PER_BLOCK: usize = 64;

pub fn iou_matrix(pred: &LabelMap, gt: &LabelMap) -> Result<IouMatrix> {
    pred.check_same_shape(gt)?;
    let (h, w) = pred.shape();
    type Counts = (HashMap<u32, u64>, HashMap<u32, u64>, HashMap<(u32, u32), u64>);
    let blocks = crate::par::map_range(h.div_ceil(ROWS_PER_BLOCK), |b| {
        let mut counts: Counts = Default::default();
        for r in b * ROWS_PER_BLOCK..((b + 1) * ROWS_PER_BLOCK).min(h) {
            for c in 0..w {
                let (p, g) = (*pred.get(r, c), *gt.get(r, c));
                if p != 0 {
                    *counts.0.entry(p).or_default() += 1;
                }
                if g != 0 {
                    *counts.1.entry(g).or_default() += 1;
                }
                if p != 0 && g != 0 {
                    *counts.2.entry((p, g)).or_default() += 1;
                }
            }
        }
        counts
    });
    let mut pred_area: BTreeMap<u32, u64> = BTreeMap::new();
    let mut gt_area: BTreeMap<u32, u64> = BTreeMap::new();
    let mut inter: HashMap<(u32, u32), u64> = HashMap::new();
    for (pa, ga, it) in blocks {
        for (k, v) in pa {
            *pred_area.entry(k).or_default() += v;
        }
        for (k, v) in ga {
            *gt_area.entry(k).or_default() += v;
        }
        for (k, v) in it {
            *inter.entry(k).or_default() += v;
        }
    }
    let pred_ids: Vec<u32> = pred_area.keys().copied().collect();
    let gt_ids: Vec<u32> = gt_area.keys().copied().collect();
    let iou = pred_ids
        .iter()
        .map(|p| {
            gt_ids
                .iter()
                .map(|g| {
                    let i = inter.get(&(*p, *g)).copied().unwrap_or(0);
                    let u = pred_area[p] + gt_area[g] - i;
                    i as f64 / u as f64
                })
                .collect()
        })
        .collect();
    Ok(IouMatrix {
        pred_ids,
        gt_ids,
        iou,
    })
}

/// Optimal one-to-one matching over pairs with IoU above `tau`, maximizing the
/// total matched IoU.
pub fn match_instances(pred: &LabelMap, gt: &LabelMap, cfg: MatchConfig) -> Result<MatchReport> {
    let m = iou_matrix(pred, gt)?;
    Ok(match_from_matrix(&m, cfg))
}

pub fn match_from_matrix(m: &IouMatrix, cfg: MatchConfig) -> MatchReport {
    let weights: Vec<Vec<f64>> = m
        .iou
        .iter()
        .map(|row| row.iter().map(|&v| if v > cfg.tau { v } else { 0.0 }).collect())
        .collect();
    let assignment = max_weight_assignment(&weights, m.gt_ids.len());
    let mut pairs: Vec<MatchedPair> = assignment
        .into_iter()
        .enumerate()
        .filter_map(|(i, j)| {
            let j = j?;
            (m.iou[i][j] > cfg.tau).then(|| MatchedPair {
                pred_id: m.pred_ids[i],
                gt_id: m.gt_ids[j],
                iou: m.iou[i][j],
            })
        })
        .collect();
    pairs.sort_by_key(|p| p.pred_id);
    let (n_pred, n_gt, tp) = (m.pred_ids.len(), m.gt_ids.len(), pairs.len());
    let precision = ratio(tp, n_pred);
    let recall = ratio(tp, n_gt);
    let mean_matched_iou = if tp == 0 {
        0.0
    } else {
        pairs.iter().map(|p| p.iou).sum::<f64>() / tp as f64
    };
    MatchReport {
        tau: cfg.tau,
        n_pred,
        n_gt,
        tp,
        fp: n_pred - tp,
        fn_: n_gt - tp,
        precision,
        recall,
        f1: f1_of(precision, recall),
        mean_matched_iou,
        pairs,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub class: PelletClass,
    pub support: u64,
    pub predicted: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelMetrics {
    pub classes: Vec<ClassScores>,
    pub accuracy: f64,
    /// Averages over classes with nonzero support.
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// `confusion[gt][pred]`
    pub confusion: Vec<Vec<u64>>,
}

impl PixelMetrics {
    pub fn class(&self, c: PelletClass) -> &ClassScores {
        &self.classes[c as usize]
    }
}

/// Confusion-matrix metrics between two class maps.
pub fn pixel_metrics(pred: &ClassMap, gt: &ClassMap) -> Result<PixelMetrics> {
    pred.check_same_shape(gt)?;
    let k = PelletClass::COUNT;
    let mut confusion = vec![vec![0u64; k]; k];
    for (&p, &g) in pred.as_slice().iter().zip(gt.as_slice()) {
        if p as usize >= k || g as usize >= k {
            return Err(Error::invalid(format!("class id {} out of range", p.max(g))));
        }
        confusion[g as usize][p as usize] += 1;
    }
    let total = pred.len_pixels() as u64;
    let correct: u64 = (0..k).map(|i| confusion[i][i]).sum();
    let classes: Vec<ClassScores> = PelletClass::ALL
        .iter()
        .map(|&class| {
            let i = class as usize;
            let support: u64 = confusion[i].iter().sum();
            let predicted: u64 = confusion.iter().map(|row| row[i]).sum();
            let tp = confusion[i][i];
            let precision = ratio(tp as usize, predicted as usize);
            let recall = ratio(tp as usize, support as usize);
            ClassScores {
                class,
                support,
                predicted,
                precision,
                recall,
                f1: f1_of(precision, recall),
            }
        })
        .collect();
    let present: Vec<&ClassScores> = classes.iter().filter(|c| c.support > 0).collect();
    let mean = |f: fn(&ClassScores) -> f64| {
        if present.is_empty() {
            0.0
        } else {
            present.iter().map(|c| f(c)).sum::<f64>() / present.len() as f64
        }
    };
    Ok(PixelMetrics {
        accuracy: ratio(correct as usize, total as usize),
        macro_precision: mean(|c| c.precision),
        macro_recall: mean(|c| c.recall),
        macro_f1: mean(|c| c.f1),
        classes,
        confusion,
    })
}
