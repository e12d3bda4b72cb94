//! Overlapping-tile inference support: tent weights and weighted blending.

use super::PredictionMaps;
use crate::error::{Error, Result};
use crate::grid::Grid;

pub const DEFAULT_PYRAMID_FLOOR: f64 = 0.01;

fn tri(i: usize, n: usize) -> f64 {
    if n == 1 {
        return 1.0;
    }
    let span = (n - 1) as f64;
    1.0 - (2.0 * i as f64 - span).abs() / span
}

/// Separable tent weights peaking at 1 in the tile center, clamped below at
/// `floor`.
pub fn pyramid_weight_map(tile_h: usize, tile_w: usize, floor: f64) -> Result<Grid<f64>> {
    if tile_h == 0 || tile_w == 0 {
        return Err(Error::invalid(format!("tile size {tile_h}x{tile_w} must be positive")));
    }
    if !(floor > 0.0 && floor <= 1.0) {
        return Err(Error::invalid(format!("pyramid floor {floor} outside (0, 1]")));
    }
    Ok(Grid::from_fn(tile_h, tile_w, |r, c| {
        (tri(r, tile_h) * tri(c, tile_w)).max(floor)
    }))
}

/// Tile size, stride and the offsets that cover an image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileLayout {
    pub tile_h: usize,
    pub tile_w: usize,
    pub stride: usize,
    pub offsets: Vec<(usize, usize)>,
}

impl TileLayout {
    /// Regular layout over an `height × width` image. Tiles larger than the
    /// image are shrunk to it; the last row and column of tiles are pinned to
    /// the far edge.
    pub fn covering(height: usize, width: usize, tile_h: usize, tile_w: usize, stride: usize) -> Result<Self> {
        if height == 0 || width == 0 || tile_h == 0 || tile_w == 0 {
            return Err(Error::invalid("image and tile sizes must be positive"));
        }
        let tile_h = tile_h.min(height);
        let tile_w = tile_w.min(width);
        if stride == 0 || stride > tile_h.min(tile_w) {
            return Err(Error::invalid(format!(
                "stride {stride} must be in 1..={}",
                tile_h.min(tile_w)
            )));
        }
        let starts = |len: usize, tile: usize| {
            let mut v: Vec<usize> = (0..=len - tile).step_by(stride).collect();
            if *v.last().unwrap() != len - tile {
                v.push(len - tile);
            }
            v
        };
        let rows = starts(height, tile_h);
        let cols = starts(width, tile_w);
        let offsets = rows
            .iter()
            .flat_map(|&r| cols.iter().map(move |&c| (r, c)))
            .collect();
        Ok(TileLayout {
            tile_h,
            tile_w,
            stride,
            offsets,
        })
    }
}

/// Merges per-tile predictions into full-image maps with pyramid weights.
///
/// Pixels covered by a single tile take that tile's value unchanged. Tiles
/// are accumulated in offset order so the result does not depend on the order
/// of `tiles`.
pub fn blend_tiles(
    tiles: &[((usize, usize), PredictionMaps)],
    layout: &TileLayout,
    shape: (usize, usize),
    floor: f64,
) -> Result<PredictionMaps> {
    let (h, w) = shape;
    let first = &tiles.first().ok_or(Error::EmptyInput("no tiles"))?.1;
    let (n_rays, n_classes) = (first.n_rays(), first.n_classes());
    for (off, t) in tiles {
        if !layout.offsets.contains(off) {
            return Err(Error::invalid(format!("tile offset {off:?} not in layout")));
        }
        if t.shape() != (layout.tile_h, layout.tile_w) {
            return Err(Error::shape(
                format!("{}x{} tile", layout.tile_h, layout.tile_w),
                format!("{}x{} tile", t.shape().0, t.shape().1),
            ));
        }
        if t.n_rays() != n_rays || t.n_classes() != n_classes {
            return Err(Error::shape(
                format!("{n_rays} rays / {n_classes} classes"),
                format!("{} rays / {} classes", t.n_rays(), t.n_classes()),
            ));
        }
        if off.0 + layout.tile_h > h || off.1 + layout.tile_w > w {
            return Err(Error::invalid(format!("tile at {off:?} exceeds the image")));
        }
    }
    let weights = pyramid_weight_map(layout.tile_h, layout.tile_w, floor)?;
    let mut sorted: Vec<&((usize, usize), PredictionMaps)> = tiles.iter().collect();
    sorted.sort_by_key(|t| t.0);

    // Per pixel: [weight sum, coverage count, weighted sums.., first raw values..]
    let n_vals = 1 + n_rays + n_classes;
    let stride = 2 + 2 * n_vals;
    let mut acc = vec![0.0f64; h * w * stride];
    crate::par::for_each_row(&mut acc, w * stride, |r, row| {
        for ((r0, c0), t) in &sorted {
            if r < *r0 || r >= r0 + layout.tile_h {
                continue;
            }
            let tr = r - r0;
            for tc in 0..layout.tile_w {
                let cell = &mut row[(c0 + tc) * stride..(c0 + tc + 1) * stride];
                let wt = *weights.get(tr, tc);
                let first_visit = cell[1] == 0.0;
                cell[0] += wt;
                cell[1] += 1.0;
                let (sums, raw) = cell[2..].split_at_mut(n_vals);
                let vals = std::iter::once(*t.prob.get(tr, tc))
                    .chain(t.dist.pixel(tr, tc).iter().copied())
                    .chain(t.type_scores.pixel(tr, tc).iter().copied());
                for (k, v) in vals.enumerate() {
                    sums[k] += wt * v as f64;
                    if first_visit {
                        raw[k] = v as f64;
                    }
                }
            }
        }
    });

    let mut prob = Grid::new(h, w, 0.0f32);
    let mut dist = Grid::with_channels(h, w, n_rays, 0.0f32);
    let mut type_scores = Grid::with_channels(h, w, n_classes, 0.0f32);
    for r in 0..h {
        for c in 0..w {
            let cell = &acc[(r * w + c) * stride..(r * w + c + 1) * stride];
            let (wsum, count) = (cell[0], cell[1]);
            if count == 0.0 {
                return Err(Error::Coverage { row: r, col: c });
            }
            let (sums, raw) = cell[2..].split_at(n_vals);
            let value = |k: usize| -> f32 {
                if count == 1.0 {
                    raw[k] as f32
                } else {
                    (sums[k] / wsum) as f32
                }
            };
            *prob.get_mut(r, c) = value(0);
            for (k, slot) in dist.pixel_mut(r, c).iter_mut().enumerate() {
                *slot = value(1 + k);
            }
            for (k, slot) in type_scores.pixel_mut(r, c).iter_mut().enumerate() {
                *slot = value(1 + n_rays + k);
            }
        }
    }
    PredictionMaps::new(prob, dist, type_scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_tile(h: usize, w: usize, v: f32) -> PredictionMaps {
        PredictionMaps::new(
            Grid::new(h, w, v),
            Grid::with_channels(h, w, 4, v),
            Grid::with_channels(h, w, 2, v),
        )
        .unwrap()
    }

    #[test]
    fn one_by_one_weight() {
        let g = pyramid_weight_map(1, 1, 0.5).unwrap();
        assert_eq!(g.as_slice(), &[1.0]);
    }

    #[test]
    fn three_by_three_weights() {
        let g = pyramid_weight_map(3, 3, 0.01).unwrap();
        // tri = (0, 1, 0) on both axes
        let expected = [0.01, 0.01, 0.01, 0.01, 1.0, 0.01, 0.01, 0.01, 0.01];
        assert_eq!(g.as_slice(), &expected);
    }

    #[test]
    fn weights_are_flip_symmetric() {
        for (h, w) in [(4, 7), (8, 8), (5, 2), (1, 9)] {
            let g = pyramid_weight_map(h, w, 0.05).unwrap();
            for r in 0..h {
                for c in 0..w {
                    assert_eq!(g.get(r, c), g.get(h - 1 - r, c));
                    assert_eq!(g.get(r, c), g.get(r, w - 1 - c));
                }
            }
            let max = g.as_slice().iter().cloned().fold(0.0, f64::max);
            assert!(max <= 1.0);
        }
    }

    #[test]
    fn bad_weight_params() {
        assert!(pyramid_weight_map(0, 3, 0.1).is_err());
        assert!(pyramid_weight_map(3, 3, 0.0).is_err());
        assert!(pyramid_weight_map(3, 3, 1.5).is_err());
    }

    #[test]
    fn layout_covers_image() {
        let l = TileLayout::covering(10, 13, 4, 5, 3).unwrap();
        let mut hit = vec![false; 130];
        for &(r, c) in &l.offsets {
            for i in 0..l.tile_h {
                for j in 0..l.tile_w {
                    hit[(r + i) * 13 + c + j] = true;
                }
            }
        }
        assert!(hit.iter().all(|&b| b));
        assert!(TileLayout::covering(10, 10, 4, 4, 5).is_err());
    }

    #[test]
    fn single_tile_is_identity() {
        let mut t = constant_tile(3, 4, 0.25);
        *t.prob.get_mut(1, 2) = 0.123_456_79;
        let layout = TileLayout::covering(3, 4, 3, 4, 3).unwrap();
        let out = blend_tiles(&[((0, 0), t.clone())], &layout, (3, 4), 0.01).unwrap();
        assert_eq!(out, t);
    }

    #[test]
    fn uncovered_pixel_is_reported() {
        let layout = TileLayout::covering(4, 8, 4, 4, 4).unwrap();
        let t = constant_tile(4, 4, 1.0);
        let err = blend_tiles(&[((0, 0), t)], &layout, (4, 8), 0.01).unwrap_err();
        assert!(matches!(err, Error::Coverage { row: 0, col: 4 }));
    }

    #[test]
    fn overlap_ramps_between_tiles() {
        // Two 4x8 tiles overlapping by 4 columns: values 0 (left) and 1 (right).
        let layout = TileLayout::covering(4, 12, 4, 8, 4).unwrap();
        assert_eq!(layout.offsets, vec![(0, 0), (0, 4)]);
        let tiles = vec![((0, 0), constant_tile(4, 8, 0.0)), ((0, 4), constant_tile(4, 8, 1.0))];
        let out = blend_tiles(&tiles, &layout, (4, 12), 0.01).unwrap();
        let wts = pyramid_weight_map(4, 8, 0.01).unwrap();
        for r in 0..4 {
            let mut prev = 0.0;
            for c in 4..8 {
                let v = *out.prob.get(r, c) as f64;
                let (wl, wr) = (*wts.get(r, c), *wts.get(r, c - 4));
                assert!((v - wr / (wl + wr)).abs() < 1e-6);
                assert!(v > 0.0 && v < 1.0 && v >= prev);
                prev = v;
            }
            assert_eq!(*out.prob.get(r, 0), 0.0);
            assert_eq!(*out.prob.get(r, 11), 1.0);
        }
    }

    #[test]
    fn order_does_not_matter() {
        let layout = TileLayout::covering(6, 6, 4, 4, 2).unwrap();
        let tiles: Vec<_> = layout
            .offsets
            .iter()
            .enumerate()
            .map(|(i, &o)| (o, constant_tile(4, 4, 0.1 * i as f32 + 0.05)))
            .collect();
        let mut rev = tiles.clone();
        rev.reverse();
        let a = blend_tiles(&tiles, &layout, (6, 6), 0.01).unwrap();
        let b = blend_tiles(&rev, &layout, (6, 6), 0.01).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn equal_tiles_blend_to_common_value() {
        let layout = TileLayout::covering(9, 9, 5, 5, 2).unwrap();
        let tiles: Vec<_> = layout.offsets.iter().map(|&o| (o, constant_tile(5, 5, 0.7))).collect();
        let out = blend_tiles(&tiles, &layout, (9, 9), 0.01).unwrap();
        for &v in out.dist.as_slice() {
            assert!((v as f64 - 0.7f32 as f64).abs() < 1e-12);
        }
    }
}
