use std::collections::HashMap;

use super::CandidateSet;
use crate::error::{Error, Result};
use crate::geometry::{rasterize_polygon, PixelMask, RayFan, StarPolygon};

const CELL: i64 = 32;
#[cfg(feature = "parallel")]
const BATCH: usize = 256;
#[cfg(not(feature = "parallel"))]
const BATCH: usize = 1;

/// Kept masks bucketed by the grid cells their bounding boxes touch.
#[derive(Default)]
struct KeptIndex {
    masks: Vec<PixelMask>,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

fn cell_span(m: &PixelMask) -> (i64, i64, i64, i64) {
    let (r0, c0) = m.origin();
    let (h, w) = m.bbox_shape();
    (
        r0.div_euclid(CELL),
        (r0 + h as i64 - 1).div_euclid(CELL),
        c0.div_euclid(CELL),
        (c0 + w as i64 - 1).div_euclid(CELL),
    )
}

impl KeptIndex {
    fn push(&mut self, m: PixelMask) {
        let idx = self.masks.len();
        if !m.is_empty() {
            let (a, b, c, d) = cell_span(&m);
            for i in a..=b {
                for j in c..=d {
                    self.cells.entry((i, j)).or_default().push(idx);
                }
            }
        }
        self.masks.push(m);
    }

    /// True if `m` overlaps any kept mask with index `>= from` by more than
    /// `threshold` IoU.
    fn suppresses(&self, m: &PixelMask, from: usize, threshold: f64) -> bool {
        if m.is_empty() {
            return false;
        }
        let (a, b, c, d) = cell_span(m);
        let mut seen: Vec<usize> = Vec::new();
        for i in a..=b {
            for j in c..=d {
                if let Some(ids) = self.cells.get(&(i, j)) {
                    seen.extend(ids.iter().copied().filter(|&k| k >= from));
                }
            }
        }
        seen.sort_unstable();
        seen.dedup();
        seen.into_iter().any(|k| m.iou(&self.masks[k]) > threshold)
    }
}

/// Greedy non-maximum suppression in candidate order: a polygon is kept iff
/// its IoU with every previously kept polygon is at most `iou_threshold`.
pub fn nms(candidates: &CandidateSet, fan: &RayFan, iou_threshold: f64) -> Result<Vec<StarPolygon>> {
    if !(0.0..=1.0).contains(&iou_threshold) {
        return Err(Error::invalid(format!(
            "IoU threshold {iou_threshold} outside [0, 1]"
        )));
    }
    let mut kept = Vec::new();
    let mut index = KeptIndex::default();
    for batch in candidates.as_slice().chunks(BATCH) {
        let before = index.masks.len();
        // Masks and the check against everything kept before this batch are
        // independent per candidate.
        let checked = crate::par::map(batch, |p| {
            let m = rasterize_polygon(p, fan, None);
            let dropped = index.suppresses(&m, 0, iou_threshold);
            (m, dropped)
        });
        for (p, (m, dropped)) in batch.iter().zip(checked) {
            if dropped || index.suppresses(&m, before, iou_threshold) {
                continue;
            }
            index.push(m);
            kept.push(p.clone());
        }
    }
    Ok(kept)
}
