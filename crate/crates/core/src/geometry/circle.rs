//! Minimum enclosing circle by randomized incremental construction.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    /// `(row, col)`
    pub center: (f64, f64),
    pub radius: f64,
}

impl Circle {
    fn from_two(a: (f64, f64), b: (f64, f64)) -> Circle {
        let center = ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0);
        Circle {
            center,
            radius: dist(a, b) / 2.0,
        }
    }

    /// Circumcircle, or the circle on the farthest pair when collinear.
    fn from_three(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> Circle {
        let (bx, by) = (b.0 - a.0, b.1 - a.1);
        let (cx, cy) = (c.0 - a.0, c.1 - a.1);
        let d = 2.0 * (bx * cy - by * cx);
        let scale = (bx * bx + by * by).max(cx * cx + cy * cy);
        if d.abs() <= 1e-12 * scale {
            let mut best = Circle::from_two(a, b);
            for cand in [Circle::from_two(a, c), Circle::from_two(b, c)] {
                if cand.radius > best.radius {
                    best = cand;
                }
            }
            return best;
        }
        let b2 = bx * bx + by * by;
        let c2 = cx * cx + cy * cy;
        let ux = (cy * b2 - by * c2) / d;
        let uy = (bx * c2 - cx * b2) / d;
        Circle {
            center: (a.0 + ux, a.1 + uy),
            radius: (ux * ux + uy * uy).sqrt(),
        }
    }

    pub fn contains(&self, p: (f64, f64), tol: f64) -> bool {
        dist(self.center, p) <= self.radius + tol
    }
}

#[inline]
fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// Smallest circle containing every point.
///
/// Points are visited in a fixed pseudo-random order, so the result is a pure
/// function of the input.
pub fn min_enclosing_circle(points: &[(f64, f64)]) -> Result<Circle> {
    if points.is_empty() {
        return Err(Error::EmptyInput("no points"));
    }
    let mut pts = points.to_vec();
    pts.shuffle(&mut ChaCha8Rng::seed_from_u64(0x5eed_c1c1e));

    let scale = pts
        .iter()
        .fold(1.0f64, |m, p| m.max(p.0.abs()).max(p.1.abs()));
    let tol = 1e-12 * scale;

    let mut circle = Circle {
        center: pts[0],
        radius: 0.0,
    };
    for i in 1..pts.len() {
        if circle.contains(pts[i], tol) {
            continue;
        }
        circle = Circle {
            center: pts[i],
            radius: 0.0,
        };
        for j in 0..i {
            if circle.contains(pts[j], tol) {
                continue;
            }
            circle = Circle::from_two(pts[i], pts[j]);
            for k in 0..j {
                if !circle.contains(pts[k], tol) {
                    circle = Circle::from_three(pts[i], pts[j], pts[k]);
                }
            }
        }
    }
    Ok(circle)
}
