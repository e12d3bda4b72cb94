//! Star-polygon primitives: ray fans, rasterization, polygon IoU, contour
//! tracing and minimum enclosing circles.
//!
//! Coordinates are `(row, col)` with rows growing downward. Ray 0 points along
//! `+col` and angles increase toward `+row`, i.e. clockwise on screen.

mod circle;
mod contour;
mod mask;
mod raster;

pub use circle::{min_enclosing_circle, Circle};
pub use contour::{trace_contour, Contour};
pub use mask::PixelMask;
pub use raster::{polygon_iou, rasterize_polygon, EDGE_EPS};

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Evenly spaced ray directions around a center pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct RayFan {
    angles: Vec<f64>,
    /// `(d_row, d_col)` unit vectors, one per angle.
    dirs: Vec<(f64, f64)>,
}

impl RayFan {
    pub fn new(n_rays: usize) -> Result<Self> {
        if n_rays < 3 {
            return Err(Error::invalid(format!("n_rays must be >= 3, got {n_rays}")));
        }
        let angles: Vec<f64> = (0..n_rays).map(|k| TAU * k as f64 / n_rays as f64).collect();
        let dirs = (0..n_rays).map(|k| unit_direction(k, n_rays)).collect();
        Ok(RayFan { angles, dirs })
    }

    #[inline]
    pub fn n_rays(&self) -> usize {
        self.angles.len()
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    /// `(d_row, d_col)` for each ray.
    pub fn directions(&self) -> &[(f64, f64)] {
        &self.dirs
    }
}

/// Same as [`RayFan::new`].
pub fn ray_directions(n_rays: usize) -> Result<RayFan> {
    RayFan::new(n_rays)
}

// Quarter turns are snapped to exact values so axis-aligned rays stay on
// pixel rows and columns.
fn unit_direction(k: usize, n: usize) -> (f64, f64) {
    if (4 * k) % n == 0 {
        return match 4 * k / n {
            0 => (0.0, 1.0),
            1 => (1.0, 0.0),
            2 => (0.0, -1.0),
            _ => (-1.0, 0.0),
        };
    }
    let theta = TAU * k as f64 / n as f64;
    (theta.sin(), theta.cos())
}

/// A star-convex polygon: one radius per ray of a [`RayFan`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarPolygon {
    /// `(row, col)` of the center pixel.
    pub center: (i64, i64),
    pub radii: Vec<f64>,
    pub score: f64,
    pub class_id: u8,
}

impl StarPolygon {
    pub fn new(center: (i64, i64), radii: Vec<f64>, score: f64, class_id: u8) -> Result<Self> {
        if radii.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::invalid("radii must be finite and non-negative"));
        }
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::invalid(format!("score {score} outside [0, 1]")));
        }
        Ok(StarPolygon {
            center,
            radii,
            score,
            class_id,
        })
    }

    /// Vertices as `(row, col)`, in ray order.
    pub fn vertices(&self, fan: &RayFan) -> Vec<(f64, f64)> {
        let (cr, cc) = (self.center.0 as f64, self.center.1 as f64);
        self.radii
            .iter()
            .zip(fan.directions())
            .map(|(&r, &(dr, dc))| (cr + r * dr, cc + r * dc))
            .collect()
    }
}
