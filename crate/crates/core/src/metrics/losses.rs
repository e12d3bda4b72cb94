//! Masked training losses, usable as reference values for model outputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Probability clamp for the binary cross-entropy term.
pub const BCE_EPS: f64 = 1e-7;
/// Additive smoothing in the Dice numerator and denominator.
pub const DICE_SMOOTH: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Object-probability head.
    pub w_dist: f64,
    pub w_type: f64,
    /// Radial-distance head.
    pub w_stardist: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_dist: 1.0,
            w_type: 1.0,
            w_stardist: 0.5,
        }
    }
}

/// A masked mean; `empty_mask` is set (and `value` is 0) when no pixel was
/// selected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskedLoss {
    pub value: f64,
    pub empty_mask: bool,
}

fn check(pred: &Grid<f32>, gt: &Grid<f32>, mask: &Grid<bool>) -> Result<()> {
    pred.check_same_shape(gt)?;
    pred.check_same_shape(mask)?;
    if pred.channels() != gt.channels() {
        return Err(Error::shape(
            format!("{} channels", pred.channels()),
            format!("{} channels", gt.channels()),
        ));
    }
    if mask.channels() != 1 {
        return Err(Error::shape("single-channel mask", format!("{} channels", mask.channels())));
    }
    Ok(())
}

fn masked_pixels<'a>(mask: &'a Grid<bool>) -> impl Iterator<Item = (usize, usize)> + 'a {
    (0..mask.height())
        .flat_map(move |r| (0..mask.width()).map(move |c| (r, c)))
        .filter(move |&(r, c)| *mask.get(r, c))
}

/// Mean absolute error over masked pixels and all channels.
pub fn masked_mae(pred: &Grid<f32>, gt: &Grid<f32>, mask: &Grid<bool>) -> Result<MaskedLoss> {
    check(pred, gt, mask)?;
    let (mut sum, mut n) = (0.0f64, 0usize);
    for (r, c) in masked_pixels(mask) {
        for (p, g) in pred.pixel(r, c).iter().zip(gt.pixel(r, c)) {
            sum += (*p as f64 - *g as f64).abs();
            n += 1;
        }
    }
    Ok(mean_or_flag(sum, n))
}

fn mean_or_flag(sum: f64, n: usize) -> MaskedLoss {
    if n == 0 {
        MaskedLoss {
            value: 0.0,
            empty_mask: true,
        }
    } else {
        MaskedLoss {
            value: sum / n as f64,
            empty_mask: false,
        }
    }
}

/// Binary cross-entropy plus squared error, averaged over masked pixels.
pub fn masked_bce_mse(pred: &Grid<f32>, gt: &Grid<f32>, mask: &Grid<bool>) -> Result<MaskedLoss> {
    check(pred, gt, mask)?;
    let (mut sum, mut n) = (0.0f64, 0usize);
    for (r, c) in masked_pixels(mask) {
        for (p, g) in pred.pixel(r, c).iter().zip(gt.pixel(r, c)) {
            let p = (*p as f64).clamp(BCE_EPS, 1.0 - BCE_EPS);
            let g = *g as f64;
            let bce = -(g * p.ln() + (1.0 - g) * (1.0 - p).ln());
            sum += bce + (p - g) * (p - g);
            n += 1;
        }
    }
    Ok(mean_or_flag(sum, n))
}

fn softmax(scores: &[f32]) -> Vec<f64> {
    let max = scores.iter().fold(f64::NEG_INFINITY, |m, &s| m.max(s as f64));
    let e: Vec<f64> = scores.iter().map(|&s| (s as f64 - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// Categorical cross-entropy on softmax-normalized scores plus
/// `1 - mean soft Dice` over the classes present in the masked ground truth.
pub fn masked_ce_dice(scores: &Grid<f32>, gt_onehot: &Grid<f32>, mask: &Grid<bool>) -> Result<MaskedLoss> {
    check(scores, gt_onehot, mask)?;
    let k = scores.channels();
    let mut ce = 0.0f64;
    let mut n = 0usize;
    let mut inter = vec![0.0f64; k];
    let mut psum = vec![0.0f64; k];
    let mut gsum = vec![0.0f64; k];
    for (r, c) in masked_pixels(mask) {
        let p = softmax(scores.pixel(r, c));
        let g = gt_onehot.pixel(r, c);
        for j in 0..k {
            let gj = g[j] as f64;
            if gj > 0.0 {
                ce -= gj * p[j].max(f64::MIN_POSITIVE).ln();
            }
            inter[j] += p[j] * gj;
            psum[j] += p[j];
            gsum[j] += gj;
        }
        n += 1;
    }
    if n == 0 {
        return Ok(mean_or_flag(0.0, 0));
    }
    let present: Vec<usize> = (0..k).filter(|&j| gsum[j] > 0.0).collect();
    let dice = if present.is_empty() {
        1.0
    } else {
        present
            .iter()
            .map(|&j| (2.0 * inter[j] + DICE_SMOOTH) / (psum[j] + gsum[j] + DICE_SMOOTH))
            .sum::<f64>()
            / present.len() as f64
    };
    Ok(MaskedLoss {
        value: ce / n as f64 + (1.0 - dice),
        empty_mask: false,
    })
}

/// Weighted sum of the three head losses.
pub fn combined_loss(dist_loss: f64, type_loss: f64, stardist_loss: f64, w: &LossWeights) -> Result<f64> {
    for (name, v) in [("dist", dist_loss), ("type", type_loss), ("stardist", stardist_loss)] {
        if !(v >= 0.0) {
            return Err(Error::invalid(format!("{name} loss must be >= 0, got {v}")));
        }
    }
    Ok(w.w_dist * dist_loss + w.w_type * type_loss + w.w_stardist * stardist_loss)
}
