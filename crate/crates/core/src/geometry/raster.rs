//! Scanline rasterization of star polygons.
//!
//! A pixel belongs to a polygon when its center is inside under the even-odd
//! rule, or lies within [`EDGE_EPS`] of an edge. Crossings are computed per
//! pixel row with the same formula a per-point even-odd test would use, so the
//! scanline output is identical to testing every pixel center individually.

use super::{PixelMask, RayFan, StarPolygon};

/// Distance below which a pixel center counts as lying on an edge.
pub const EDGE_EPS: f64 = 1e-9;

/// Rasterizes `poly`; with `clip = Some((height, width))` the result is
/// restricted to `[0, height) × [0, width)`.
pub fn rasterize_polygon(poly: &StarPolygon, fan: &RayFan, clip: Option<(usize, usize)>) -> PixelMask {
    debug_assert_eq!(poly.radii.len(), fan.n_rays());
    let in_clip = |r: i64, c: i64| match clip {
        Some((h, w)) => r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w,
        None => true,
    };
    if poly.radii.iter().all(|&r| r == 0.0) {
        let (r, c) = poly.center;
        return if in_clip(r, c) {
            PixelMask::from_pixels([(r, c)])
        } else {
            PixelMask::empty()
        };
    }

    let verts = poly.vertices(fan);
    let (mut ymin, mut ymax, mut xmin, mut xmax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(y, x) in &verts {
        ymin = ymin.min(y);
        ymax = ymax.max(y);
        xmin = xmin.min(x);
        xmax = xmax.max(x);
    }
    let mut r0 = (ymin - EDGE_EPS).ceil() as i64;
    let mut r1 = (ymax + EDGE_EPS).floor() as i64;
    let mut c0 = (xmin - EDGE_EPS).ceil() as i64;
    let mut c1 = (xmax + EDGE_EPS).floor() as i64;
    if let Some((h, w)) = clip {
        r0 = r0.max(0);
        c0 = c0.max(0);
        r1 = r1.min(h as i64 - 1);
        c1 = c1.min(w as i64 - 1);
    }
    if r0 > r1 || c0 > c1 {
        return PixelMask::empty();
    }
    let height = (r1 - r0 + 1) as usize;
    let width = (c1 - c0 + 1) as usize;
    let mut bits = vec![false; height * width];
    let n = verts.len();
    let mut xs: Vec<f64> = Vec::with_capacity(n);

    for row in r0..=r1 {
        let py = row as f64;
        let line = &mut bits[(row - r0) as usize * width..(row - r0 + 1) as usize * width];
        let mut set = |col: i64| {
            if col >= c0 && col <= c1 {
                line[(col - c0) as usize] = true;
            }
        };

        xs.clear();
        for k in 0..n {
            let a = verts[k];
            let b = verts[(k + 1) % n];
            if let Some(x) = crossing(a, b, py) {
                xs.push(x);
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            // px >= left && px < right
            let lo = pair[0].ceil() as i64;
            let hi = pair[1].ceil() as i64 - 1;
            for col in lo.max(c0)..=hi.min(c1) {
                set(col);
            }
        }

        for k in 0..n {
            let a = verts[k];
            let b = verts[(k + 1) % n];
            let (ey0, ey1) = (a.0.min(b.0), a.0.max(b.0));
            if py < ey0 - EDGE_EPS || py > ey1 + EDGE_EPS {
                continue;
            }
            let (ex0, ex1) = (a.1.min(b.1), a.1.max(b.1));
            let dy = b.0 - a.0;
            let (mut lo, mut hi) = (ex0 - EDGE_EPS, ex1 + EDGE_EPS);
            if dy.abs() > 1e-12 {
                let dx = b.1 - a.1;
                let x_at = a.1 + (py - a.0) * dx / dy;
                let half = EDGE_EPS * (dx * dx + dy * dy).sqrt() / dy.abs() + 1.0;
                lo = lo.max(x_at - half);
                hi = hi.min(x_at + half);
            }
            for col in lo.ceil() as i64..=hi.floor() as i64 {
                if on_segment((py, col as f64), a, b) {
                    set(col);
                }
            }
        }
    }
    PixelMask::from_box((r0, c0), height, width, bits)
}

/// Column where edge `a → b` crosses row `py` under the half-open straddle rule.
#[inline]
fn crossing(a: (f64, f64), b: (f64, f64), py: f64) -> Option<f64> {
    if (a.0 > py) != (b.0 > py) {
        Some(a.1 + (py - a.0) * (b.1 - a.1) / (b.0 - a.0))
    } else {
        None
    }
}

#[inline]
fn on_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> bool {
    let (vy, vx) = (b.0 - a.0, b.1 - a.1);
    let (wy, wx) = (p.0 - a.0, p.1 - a.1);
    let len2 = vy * vy + vx * vx;
    let t = if len2 > 0.0 {
        ((wy * vy + wx * vx) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (dy, dx) = (wy - t * vy, wx - t * vx);
    dy * dy + dx * dx <= EDGE_EPS * EDGE_EPS
}

/// Raster IoU of two polygons sharing a fan; 0 if both rasterize to nothing.
pub fn polygon_iou(a: &StarPolygon, b: &StarPolygon, fan: &RayFan) -> f64 {
    let ma = rasterize_polygon(a, fan, None);
    let mb = rasterize_polygon(b, fan, None);
    ma.iou(&mb)
}
