//! Brute-force reference implementations and random case generators.
//!
//! Every oracle here is written from the operation's definition, without
//! calling the library routine it checks.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;

use pellet_core::dataset::ImageStats;
use pellet_core::geometry::{RayFan, StarPolygon};
use pellet_core::{ClassMap, Grid, LabelMap};
use rand::{Rng, RngCore};

pub type Pixel = (i64, i64);

// ---------------------------------------------------------------- geometry

pub fn direction(k: usize, n: usize) -> (f64, f64) {
    if (4 * k) % n == 0 {
        return [(0.0, 1.0), (1.0, 0.0), (0.0, -1.0), (-1.0, 0.0)][4 * k / n];
    }
    let t = TAU * k as f64 / n as f64;
    (t.sin(), t.cos())
}

pub fn vertices(p: &StarPolygon) -> Vec<(f64, f64)> {
    let n = p.radii.len();
    (0..n)
        .map(|k| {
            let (dr, dc) = direction(k, n);
            (p.center.0 as f64 + p.radii[k] * dr, p.center.1 as f64 + p.radii[k] * dc)
        })
        .collect()
}

fn dist_to_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let v = (b.0 - a.0, b.1 - a.1);
    let w = (p.0 - a.0, p.1 - a.1);
    let l2 = v.0 * v.0 + v.1 * v.1;
    let t = if l2 == 0.0 { 0.0 } else { ((w.0 * v.0 + w.1 * v.1) / l2).clamp(0.0, 1.0) };
    ((w.0 - t * v.0).powi(2) + (w.1 - t * v.1).powi(2)).sqrt()
}

/// Even-odd test with edge points counted as inside.
pub fn point_in_polygon(p: (f64, f64), verts: &[(f64, f64)]) -> bool {
    let n = verts.len();
    let mut inside = false;
    for i in 0..n {
        let a = verts[i];
        let b = verts[(i + 1) % n];
        if dist_to_segment(p, a, b) <= 1e-9 {
            return true;
        }
        if (a.0 > p.0) != (b.0 > p.0) {
            let x = a.1 + (p.0 - a.0) * (b.1 - a.1) / (b.0 - a.0);
            if p.1 < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Pixel set of a polygon, by testing every pixel center of its bounding box.
pub fn raster(p: &StarPolygon, clip: Option<(usize, usize)>) -> BTreeSet<Pixel> {
    let verts = vertices(p);
    let mut out = BTreeSet::new();
    if p.radii.iter().all(|&r| r == 0.0) {
        out.insert(p.center);
    } else {
        let r0 = verts.iter().map(|v| v.0).fold(f64::INFINITY, f64::min).floor() as i64 - 1;
        let r1 = verts.iter().map(|v| v.0).fold(f64::NEG_INFINITY, f64::max).ceil() as i64 + 1;
        let c0 = verts.iter().map(|v| v.1).fold(f64::INFINITY, f64::min).floor() as i64 - 1;
        let c1 = verts.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max).ceil() as i64 + 1;
        for r in r0..=r1 {
            for c in c0..=c1 {
                if point_in_polygon((r as f64, c as f64), &verts) {
                    out.insert((r, c));
                }
            }
        }
    }
    if let Some((h, w)) = clip {
        out.retain(|&(r, c)| r >= 0 && c >= 0 && r < h as i64 && c < w as i64);
    }
    out
}

pub fn set_iou(a: &BTreeSet<Pixel>, b: &BTreeSet<Pixel>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Smallest circle over all diametral pairs and circumcircles of triples.
pub fn enclosing_circle_oracle(pts: &[(f64, f64)]) -> ((f64, f64), f64) {
    let scale = pts.iter().map(|p| p.0.abs().max(p.1.abs())).fold(1.0, f64::max);
    let tol = 1e-9 * scale;
    let covers = |c: (f64, f64), r: f64| pts.iter().all(|p| (p.0 - c.0).hypot(p.1 - c.1) <= r + tol);
    let mut best: Option<((f64, f64), f64)> = None;
    let mut consider = |c: (f64, f64), r: f64| {
        if best.is_none_or(|(_, br)| r < br) && covers(c, r) {
            best = Some((c, r));
        }
    };
    if pts.len() == 1 {
        return (pts[0], 0.0);
    }
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let (a, b) = (pts[i], pts[j]);
            let c = ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0);
            consider(c, (a.0 - b.0).hypot(a.1 - b.1) / 2.0);
            for &k in &pts[j + 1..] {
                let (ax, ay, bx, by, cx, cy) = (a.0, a.1, b.0, b.1, k.0, k.1);
                let d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by));
                if d.abs() < 1e-12 {
                    continue;
                }
                let a2 = ax * ax + ay * ay;
                let b2 = bx * bx + by * by;
                let c2 = cx * cx + cy * cy;
                let ux = (a2 * (by - cy) + b2 * (cy - ay) + c2 * (ay - by)) / d;
                let uy = (a2 * (cx - bx) + b2 * (ax - cx) + c2 * (bx - ax)) / d;
                consider((ux, uy), (ax - ux).hypot(ay - uy));
            }
        }
    }
    best.expect("some pair circle covers everything")
}

// ---------------------------------------------------------------- postproc

/// Greedy suppression over an explicit IoU matrix, candidates in the
/// documented order (score descending, then row-major center).
pub fn nms_oracle(cands: &[StarPolygon], thr: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by(|&a, &b| {
        cands[b]
            .score
            .total_cmp(&cands[a].score)
            .then(cands[a].center.cmp(&cands[b].center))
    });
    let rasters: Vec<_> = cands.iter().map(|p| raster(p, None)).collect();
    let n = cands.len();
    let mut iou = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            iou[i][j] = set_iou(&rasters[i], &rasters[j]);
        }
    }
    let mut kept: Vec<usize> = Vec::new();
    for &i in &order {
        if kept.iter().all(|&k| iou[i][k] <= thr) {
            kept.push(i);
        }
    }
    kept
}

// ---------------------------------------------------------------- targets

/// Ray march in `step` increments with nearest-pixel membership.
pub fn ray_march(labels: &LabelMap, r: usize, c: usize, dir: (f64, f64), step: f64) -> f64 {
    let id = *labels.get(r, c);
    let mut last = 0.0;
    let mut k = 1u32;
    loop {
        let t = k as f64 * step;
        let pr = (r as f64 + t * dir.0).round() as i64;
        let pc = (c as f64 + t * dir.1).round() as i64;
        if pr < 0 || pc < 0 || pr >= labels.height() as i64 || pc >= labels.width() as i64 {
            return last;
        }
        if *labels.get(pr as usize, pc as usize) != id {
            return last;
        }
        last = t;
        k += 1;
    }
}

/// Distance to the nearest pixel (inside or just outside the image) without
/// the pixel's label, by exhaustive scan.
pub fn boundary_distance_oracle(labels: &LabelMap) -> Grid<f64> {
    let (h, w) = labels.shape();
    let mut out = Grid::new(h, w, 0.0);
    for r in 0..h {
        for c in 0..w {
            let id = *labels.get(r, c);
            if id == 0 {
                continue;
            }
            // Nearest outside pixel: one step past the closest border.
            let edge = (r + 1).min(c + 1).min(h - r).min(w - c) as f64;
            let mut best = edge * edge;
            for rr in 0..h {
                for cc in 0..w {
                    if *labels.get(rr, cc) != id {
                        let d = (rr as f64 - r as f64).powi(2) + (cc as f64 - c as f64).powi(2);
                        best = best.min(d);
                    }
                }
            }
            *out.get_mut(r, c) = best.sqrt();
        }
    }
    out
}

/// Nearest labeled pixel within `radius`, ties to the lower id.
pub fn expand_oracle(labels: &LabelMap, radius: f64) -> LabelMap {
    let (h, w) = labels.shape();
    let seeds: Vec<(i64, i64, u32)> = (0..h)
        .flat_map(|r| (0..w).map(move |c| (r, c)))
        .filter_map(|(r, c)| {
            let id = *labels.get(r, c);
            (id != 0).then_some((r as i64, c as i64, id))
        })
        .collect();
    let mut out = labels.clone();
    for r in 0..h {
        for c in 0..w {
            if *labels.get(r, c) != 0 {
                continue;
            }
            let mut best: Option<(i64, u32)> = None;
            for &(sr, sc, id) in &seeds {
                let d2 = (sr - r as i64).pow(2) + (sc - c as i64).pow(2);
                if best.is_none_or(|(bd, bid)| d2 < bd || (d2 == bd && id < bid)) {
                    best = Some((d2, id));
                }
            }
            if let Some((d2, id)) = best {
                if d2 as f64 <= radius * radius {
                    *out.get_mut(r, c) = id;
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------- metrics

fn label_sets(m: &LabelMap) -> BTreeMap<u32, BTreeSet<usize>> {
    let mut s: BTreeMap<u32, BTreeSet<usize>> = BTreeMap::new();
    for (i, &id) in m.as_slice().iter().enumerate() {
        if id != 0 {
            s.entry(id).or_default().insert(i);
        }
    }
    s
}

pub struct MatchOracle {
    pub tp: usize,
    pub total_iou: f64,
    pub pairs: Vec<(u32, u32)>,
    /// True when a different assignment reaches the same total.
    pub ambiguous: bool,
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Best one-to-one assignment over an IoU matrix by enumerating every
/// permutation of the padded square; only pairs with IoU > tau count.
pub fn match_matrix_oracle(iou: &[Vec<f64>], n_cols: usize, tau: f64) -> (usize, f64, Vec<(usize, usize)>, bool) {
    let n = iou.len().max(n_cols);
    let mut best: Option<(f64, usize, Vec<(usize, usize)>)> = None;
    let mut ties = 0;
    for perm in permutations(n) {
        let mut total = 0.0;
        let mut pairs = Vec::new();
        for (i, &j) in perm.iter().enumerate() {
            if i < iou.len() && j < n_cols && iou[i][j] > tau {
                total += iou[i][j];
                pairs.push((i, j));
            }
        }
        pairs.sort();
        match &best {
            Some((bt, _, bp)) if (total - bt).abs() <= 1e-12 => {
                if *bp != pairs {
                    ties += 1;
                }
            }
            Some((bt, _, _)) if total < *bt => {}
            _ => {
                best = Some((total, pairs.len(), pairs));
                ties = 0;
            }
        }
    }
    let (total, tp, pairs) = best.expect("at least one permutation");
    (tp, total, pairs, ties > 0)
}

pub fn match_oracle(pred: &LabelMap, gt: &LabelMap, tau: f64) -> MatchOracle {
    let ps: Vec<_> = label_sets(pred).into_iter().collect();
    let gs: Vec<_> = label_sets(gt).into_iter().collect();
    let iou: Vec<Vec<f64>> = ps
        .iter()
        .map(|(_, a)| {
            gs.iter()
                .map(|(_, b)| {
                    let inter = a.intersection(b).count();
                    inter as f64 / (a.len() + b.len() - inter) as f64
                })
                .collect()
        })
        .collect();
    let (tp, total_iou, pairs, ambiguous) = match_matrix_oracle(&iou, gs.len(), tau);
    MatchOracle {
        tp,
        total_iou,
        pairs: pairs.into_iter().map(|(i, j)| (ps[i].0, gs[j].0)).collect(),
        ambiguous,
    }
}

pub struct PixelOracle {
    pub confusion: Vec<Vec<u64>>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
}

pub fn pixel_oracle(pred: &ClassMap, gt: &ClassMap, n_classes: usize) -> PixelOracle {
    let mut confusion = vec![vec![0u64; n_classes]; n_classes];
    for (&p, &g) in pred.as_slice().iter().zip(gt.as_slice()) {
        confusion[g as usize][p as usize] += 1;
    }
    let total: u64 = confusion.iter().flatten().sum();
    let correct: u64 = (0..n_classes).map(|k| confusion[k][k]).sum();
    let mut precision = vec![0.0; n_classes];
    let mut recall = vec![0.0; n_classes];
    let mut f1 = vec![0.0; n_classes];
    let (mut sp, mut sr, mut sf, mut n_sup) = (0.0, 0.0, 0.0, 0usize);
    for k in 0..n_classes {
        let tp = confusion[k][k];
        let support: u64 = confusion[k].iter().sum();
        let predicted: u64 = (0..n_classes).map(|g| confusion[g][k]).sum();
        precision[k] = if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 };
        recall[k] = if support == 0 { 0.0 } else { tp as f64 / support as f64 };
        f1[k] = if precision[k] + recall[k] == 0.0 {
            0.0
        } else {
            2.0 * precision[k] * recall[k] / (precision[k] + recall[k])
        };
        if support > 0 {
            sp += precision[k];
            sr += recall[k];
            sf += f1[k];
            n_sup += 1;
        }
    }
    let d = n_sup.max(1) as f64;
    PixelOracle {
        confusion,
        precision,
        recall,
        f1,
        accuracy: correct as f64 / total as f64,
        macro_precision: sp / d,
        macro_recall: sr / d,
        macro_f1: sf / d,
    }
}

// ---------------------------------------------------------------- dataset

/// W2 by midpoint quadrature of the quantile functions on a grid fine enough
/// that every cell lies inside one step of both.
pub fn w2_quantile_oracle(a: &[f64], b: &[f64]) -> f64 {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let cells = xs.len() * ys.len() * 2;
    let mut acc = 0.0;
    for k in 0..cells {
        let u = (k as f64 + 0.5) / cells as f64;
        let qa = xs[((u * xs.len() as f64) as usize).min(xs.len() - 1)];
        let qb = ys[((u * ys.len() as f64) as usize).min(ys.len() - 1)];
        acc += (qa - qb) * (qa - qb);
    }
    (acc / cells as f64).sqrt()
}

/// Worst-class W2 for a partition, from per-image fractions.
pub fn split_objective_oracle(fractions: &[[f64; 4]], is_test: &[bool]) -> f64 {
    (0..4)
        .map(|k| {
            let tr: Vec<f64> = fractions.iter().zip(is_test).filter(|(_, &t)| !t).map(|(f, _)| f[k]).collect();
            let te: Vec<f64> = fractions.iter().zip(is_test).filter(|(_, &t)| t).map(|(f, _)| f[k]).collect();
            w2_quantile_oracle(&tr, &te)
        })
        .fold(0.0, f64::max)
}

/// Minimum objective over every partition with `n_test` test images.
pub fn exhaustive_split(fractions: &[[f64; 4]], n_test: usize) -> f64 {
    let n = fractions.len();
    let mut best = f64::INFINITY;
    for bits in 0u32..(1 << n) {
        if bits.count_ones() as usize != n_test {
            continue;
        }
        let is_test: Vec<bool> = (0..n).map(|i| bits >> i & 1 == 1).collect();
        best = best.min(split_objective_oracle(fractions, &is_test));
    }
    best
}

fn srgb_linear(v: u8) -> f64 {
    let c = v as f64 / 255.0;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

/// CIELAB lightness of an sRGB pixel under D65.
pub fn lightness(rgb: [u8; 3]) -> f64 {
    let [r, g, b] = rgb.map(srgb_linear);
    let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    let f = if y > (6.0f64 / 29.0).powi(3) {
        y.cbrt()
    } else {
        y / (3.0 * (6.0f64 / 29.0).powi(2)) + 4.0 / 29.0
    };
    116.0 * f - 16.0
}

pub fn lightness_stats(img: &Grid<u8>) -> (f64, f64) {
    let ls: Vec<f64> = (0..img.height())
        .flat_map(|r| (0..img.width()).map(move |c| (r, c)))
        .map(|(r, c)| {
            let p = img.pixel(r, c);
            lightness([p[0], p[1], p[2]])
        })
        .collect();
    let n = ls.len() as f64;
    let mean = ls.iter().sum::<f64>() / n;
    let var = ls.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

// ---------------------------------------------------------------- generators

/// Per-image statistics with random class fractions summing to at most 0.8.
pub fn fraction_corpus(rng: &mut impl RngCore, n: usize) -> Vec<ImageStats> {
    (0..n)
        .map(|i| {
            let mut f = [0.0; 4];
            let mut left = rng.random_range(0.2..0.8);
            for slot in f.iter_mut() {
                let v = rng.random_range(0.0..left);
                *slot = v;
                left -= v;
            }
            ImageStats {
                id: format!("img{i:03}"),
                fractions: f,
                l_mean: 50.0,
                l_std: 10.0,
            }
        })
        .collect()
}

/// Random image whose lightness stays well inside the gamut after
/// normalization: mid-range grays and muted colors.
pub fn muted_image(rng: &mut impl RngCore) -> Grid<u8> {
    let (h, w) = (rng.random_range(8..40), rng.random_range(8..40));
    let base = rng.random_range(70..170i32);
    let spread = rng.random_range(5..40i32);
    let mut img = Grid::with_channels(h, w, 3, 0u8);
    for r in 0..h {
        for c in 0..w {
            let v = base + rng.random_range(-spread..=spread);
            let tint = [rng.random_range(-8..=8), rng.random_range(-8..=8), rng.random_range(-8..=8)];
            for k in 0..3 {
                img.pixel_mut(r, c)[k] = (v + tint[k]).clamp(0, 255) as u8;
            }
        }
    }
    img
}

pub fn random_polygon(rng: &mut impl RngCore, fan: &RayFan, center_span: (i64, i64), rmax: f64) -> StarPolygon {
    let center = (rng.random_range(0..center_span.0), rng.random_range(0..center_span.1));
    let radii = (0..fan.n_rays()).map(|_| rng.random_range(0.0..rmax)).collect();
    let score = rng.random_range(0.0..1.0);
    StarPolygon::new(center, radii, score, 1).unwrap()
}

/// Label map painted with random star blobs; later blobs overwrite earlier.
pub fn random_blob_map(rng: &mut impl RngCore, h: usize, w: usize, n: usize, rmax: f64) -> LabelMap {
    let mut m = Grid::new(h, w, 0u32);
    for id in 1..=n as u32 {
        let center = (rng.random_range(0..h as i64), rng.random_range(0..w as i64));
        let base = rng.random_range(1.0..rmax);
        let radii = (0..12).map(|_| base * rng.random_range(0.6..1.0)).collect();
        let p = StarPolygon::new(center, radii, 1.0, 1).unwrap();
        for (r, c) in raster(&p, Some((h, w))) {
            *m.get_mut(r as usize, c as usize) = id;
        }
    }
    m
}

/// Sparse map of single labeled pixels with random ids.
pub fn random_seed_map(rng: &mut impl RngCore, h: usize, w: usize, density: f64, max_id: u32) -> LabelMap {
    Grid::from_fn(h, w, |_, _| {
        if rng.random_bool(density) {
            rng.random_range(1..=max_id)
        } else {
            0
        }
    })
}

/// One smooth star-shaped blob (id 1) with low-order radial wobble, centered
/// well inside an `h`×`w` map. Returns the map and the star center.
pub fn smooth_blob(rng: &mut impl RngCore, h: usize, w: usize) -> (LabelMap, (usize, usize)) {
    let base = rng.random_range(4.0..(h.min(w) as f64 / 4.0));
    let center = (
        rng.random_range((h as f64 / 2.0 - 3.0) as i64..=(h as f64 / 2.0 + 3.0) as i64),
        rng.random_range((w as f64 / 2.0 - 3.0) as i64..=(w as f64 / 2.0 + 3.0) as i64),
    );
    let (a2, p2) = (rng.random_range(0.0..0.15), rng.random_range(0.0..TAU));
    let (a3, p3) = (rng.random_range(0.0..0.1), rng.random_range(0.0..TAU));
    let n = 64;
    let radii = (0..n)
        .map(|k| {
            let t = TAU * k as f64 / n as f64;
            base * (1.0 + a2 * (2.0 * t + p2).cos() + a3 * (3.0 * t + p3).cos())
        })
        .collect();
    let p = StarPolygon::new(center, radii, 1.0, 1).unwrap();
    let mut m = Grid::new(h, w, 0u32);
    for (r, c) in raster(&p, Some((h, w))) {
        *m.get_mut(r as usize, c as usize) = 1;
    }
    (m, (center.0 as usize, center.1 as usize))
}
