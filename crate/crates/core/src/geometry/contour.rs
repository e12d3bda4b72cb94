//! Moore-neighbor boundary tracing.

use super::PixelMask;
use crate::error::{Error, Result};

/// Clockwise (on screen) neighbor offsets starting at west.
const MOORE: [(i64, i64); 8] = [
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
];

#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    /// Boundary pixels in clockwise order; the first follows the last.
    /// Pixels on one-pixel-wide parts appear once per pass.
    pub points: Vec<(i64, i64)>,
    /// Set when the mask has more than one 8-connected component; only the
    /// component containing the start pixel was traced.
    pub multiple_components: bool,
}

/// Traces the outer boundary of the component containing the top-most,
/// then left-most, pixel of `mask`.
pub fn trace_contour(mask: &PixelMask) -> Result<Contour> {
    let start = mask.pixels().next().ok_or(Error::EmptyInput("mask has no pixels"))?;
    let multiple_components = component_size(mask, start) != mask.count();

    // Enter from the west: the pixel left of the top-left member is background.
    let mut points = vec![start];
    let first = match step(mask, start, 0) {
        Some(s) => s,
        None => {
            return Ok(Contour {
                points,
                multiple_components,
            })
        }
    };
    let mut next = first;
    loop {
        let (current, backtrack) = next;
        let following = step(mask, current, backtrack).expect("a traced pixel has a neighbor");
        if current == start && following.0 == first.0 {
            break;
        }
        points.push(current);
        next = following;
    }
    Ok(Contour {
        points,
        multiple_components,
    })
}

/// Scans the neighbors of `p` clockwise starting at direction `from`; returns
/// the first member and the direction (as seen from it) to resume scanning.
fn step(mask: &PixelMask, p: (i64, i64), from: usize) -> Option<((i64, i64), usize)> {
    for i in 0..8 {
        let d = (from + i) % 8;
        let q = (p.0 + MOORE[d].0, p.1 + MOORE[d].1);
        if mask.contains(q.0, q.1) {
            // The previously scanned (background) neighbor of p, expressed
            // relative to q, is where the scan around q resumes.
            let prev = (from + i + 7) % 8;
            let b = (p.0 + MOORE[prev].0, p.1 + MOORE[prev].1);
            let rel = (b.0 - q.0, b.1 - q.1);
            let resume = MOORE.iter().position(|&m| m == rel).unwrap_or(0);
            return Some((q, resume));
        }
    }
    None
}

fn component_size(mask: &PixelMask, start: (i64, i64)) -> usize {
    let (h, w) = mask.bbox_shape();
    let (r0, c0) = mask.origin();
    let mut seen = vec![false; h * w];
    let idx = |p: (i64, i64)| (p.0 - r0) as usize * w + (p.1 - c0) as usize;
    let mut stack = vec![start];
    seen[idx(start)] = true;
    let mut n = 0;
    while let Some(p) = stack.pop() {
        n += 1;
        for (dr, dc) in MOORE {
            let q = (p.0 + dr, p.1 + dc);
            if mask.contains(q.0, q.1) && !seen[idx(q)] {
                seen[idx(q)] = true;
                stack.push(q);
            }
        }
    }
    n
}
