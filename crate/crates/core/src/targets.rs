//! Training and evaluation targets derived from ground-truth label maps.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::RayFan;
use crate::analysis::PelletClass;
use crate::grid::{ClassMap, Grid, LabelMap};
use crate::postproc::PredictionMaps;
use crate::par;

/// Per-pixel radial distances, one channel per ray.
pub type DistanceMaps = Grid<f32>;
/// Per-pixel object probability in `[0, 1]`.
pub type ProbMap = Grid<f32>;

/// Default growth applied when correcting under-segmented annotations.
pub const DEFAULT_EXPANSION_RADIUS: f64 = 2.0;

/// Radial distance from every foreground pixel to its instance boundary.
///
/// Each ray is marched in whole-pixel steps, rounding to the nearest pixel;
/// the recorded value is the length of the last step that still lands on the
/// starting label. Background pixels get 0 on every ray.
pub fn star_distances(labels: &LabelMap, fan: &RayFan) -> DistanceMaps {
    let (h, w) = labels.shape();
    let n = fan.n_rays();
    let mut out = Grid::with_channels(h, w, n, 0.0f32);
    let max_steps = (h + w + 2) as u32;
    let dirs = fan.directions();
    par::for_each_row(out.as_mut_slice(), w * n, |r, row| {
        for c in 0..w {
            let id = *labels.get(r, c);
            if id == 0 {
                continue;
            }
            for (k, &(dr, dc)) in dirs.iter().enumerate() {
                let mut t = 1u32;
                while t <= max_steps {
                    let pr = (r as f64 + t as f64 * dr).round() as i64;
                    let pc = (c as f64 + t as f64 * dc).round() as i64;
                    if !labels.in_bounds(pr, pc) || *labels.get(pr as usize, pc as usize) != id {
                        break;
                    }
                    t += 1;
                }
                row[c * n + k] = (t - 1) as f32;
            }
        }
    });
    out
}

#[derive(Debug, Clone, Copy)]
struct BBox {
    r0: usize,
    r1: usize,
    c0: usize,
    c1: usize,
}

fn instance_boxes(labels: &LabelMap) -> BTreeMap<u32, BBox> {
    let mut boxes: BTreeMap<u32, BBox> = BTreeMap::new();
    for r in 0..labels.height() {
        for c in 0..labels.width() {
            let id = *labels.get(r, c);
            if id == 0 {
                continue;
            }
            boxes
                .entry(id)
                .and_modify(|b| {
                    b.r0 = b.r0.min(r);
                    b.r1 = b.r1.max(r);
                    b.c0 = b.c0.min(c);
                    b.c1 = b.c1.max(c);
                })
                .or_insert(BBox {
                    r0: r,
                    r1: r,
                    c0: c,
                    c1: c,
                });
        }
    }
    boxes
}

/// Euclidean distance from each foreground pixel to the nearest pixel that
/// does not carry its label. Pixels outside the image count as not carrying
/// it. Background pixels get 0.
pub fn boundary_distance(labels: &LabelMap) -> Grid<f64> {
    let (h, w) = labels.shape();
    let boxes: Vec<(u32, BBox)> = instance_boxes(labels).into_iter().collect();
    // The nearest foreign pixel always lies inside the box grown by one,
    // since the ring around the box holds no pixel of the instance.
    let per_instance = par::map(&boxes, |&(id, b)| {
        let pr0 = b.r0 as i64 - 1;
        let pc0 = b.c0 as i64 - 1;
        let ph = b.r1 - b.r0 + 3;
        let pw = b.c1 - b.c0 + 3;
        let mut f = vec![0.0f64; ph * pw];
        for i in 0..ph {
            for j in 0..pw {
                let (r, c) = (pr0 + i as i64, pc0 + j as i64);
                if labels.in_bounds(r, c) && *labels.get(r as usize, c as usize) == id {
                    f[i * pw + j] = f64::INFINITY;
                }
            }
        }
        squared_edt(&mut f, ph, pw);
        let mut vals = Vec::new();
        for i in 1..ph - 1 {
            for j in 1..pw - 1 {
                let (r, c) = ((pr0 + i as i64) as usize, (pc0 + j as i64) as usize);
                if *labels.get(r, c) == id {
                    vals.push((r * w + c, f[i * pw + j].sqrt()));
                }
            }
        }
        vals
    });
    let mut out = vec![0.0f64; h * w];
    for vals in per_instance {
        for (idx, v) in vals {
            out[idx] = v;
        }
    }
    Grid::from_vec(h, w, 1, out).expect("sized above")
}

/// Separable squared EDT (Felzenszwalb–Huttenlocher) in place; zeros are sites.
fn squared_edt(f: &mut [f64], h: usize, w: usize) {
    let mut buf = vec![0.0; h.max(w)];
    let mut out = vec![0.0; h.max(w)];
    let mut v = vec![0usize; h.max(w)];
    let mut z = vec![0.0; h.max(w) + 1];
    for i in 0..h {
        buf[..w].copy_from_slice(&f[i * w..(i + 1) * w]);
        edt_1d(&buf[..w], &mut out[..w], &mut v, &mut z);
        f[i * w..(i + 1) * w].copy_from_slice(&out[..w]);
    }
    for j in 0..w {
        for i in 0..h {
            buf[i] = f[i * w + j];
        }
        edt_1d(&buf[..h], &mut out[..h], &mut v, &mut z);
        for i in 0..h {
            f[i * w + j] = out[i];
        }
    }
}

fn edt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    // Skip leading infinite cells for the envelope start.
    let Some(first) = f.iter().position(|x| x.is_finite()) else {
        d.iter_mut().for_each(|x| *x = f64::INFINITY);
        return;
    };
    let mut k = 0usize;
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in first + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        let qf = q as f64;
        loop {
            let p = v[k] as f64;
            let s = ((f[q] + qf * qf) - (f[v[k]] + p * p)) / (2.0 * qf - 2.0 * p);
            if s <= z[k] {
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let p = v[k] as f64;
        *out = (qf - p) * (qf - p) + f[v[k]];
    }
}

/// Boundary distance normalized so every instance peaks at 1.
pub fn object_probability(labels: &LabelMap) -> ProbMap {
    let raw = boundary_distance(labels);
    let mut peak: BTreeMap<u32, f64> = BTreeMap::new();
    for (id, v) in labels.as_slice().iter().zip(raw.as_slice()) {
        if *id != 0 {
            let e = peak.entry(*id).or_insert(0.0);
            *e = e.max(*v);
        }
    }
    let data = labels
        .as_slice()
        .iter()
        .zip(raw.as_slice())
        .map(|(id, v)| if *id == 0 { 0.0 } else { (v / peak[id]) as f32 })
        .collect();
    Grid::from_vec(labels.height(), labels.width(), 1, data).expect("same shape")
}

/// One-hot class scores with `n_classes` channels; class ids at or above
/// `n_classes` are an error.
pub fn one_hot_type_scores(classes: &ClassMap, n_classes: usize) -> Result<Grid<f32>> {
    let mut out = Grid::with_channels(classes.height(), classes.width(), n_classes, 0.0f32);
    for (i, &c) in classes.as_slice().iter().enumerate() {
        if c as usize >= n_classes {
            return Err(Error::invalid(format!("class id {c} but only {n_classes} classes")));
        }
        out.as_mut_slice()[i * n_classes + c as usize] = 1.0;
    }
    Ok(out)
}

/// Ideal prediction maps for a labeled scene: object probability, star
/// distances and one-hot types.
pub fn target_maps(labels: &LabelMap, classes: &ClassMap, fan: &RayFan) -> Result<PredictionMaps> {
    labels.check_same_shape(classes)?;
    PredictionMaps::new(
        object_probability(labels),
        star_distances(labels, fan),
        one_hot_type_scores(classes, PelletClass::COUNT)?,
    )
}

/// Grows labels into background up to `radius` pixels without merging
/// instances: each background pixel takes the label of its nearest labeled
/// pixel, ties going to the lower label id.
pub fn expand_labels(labels: &LabelMap, radius: f64) -> Result<LabelMap> {
    if !(radius >= 0.0) || !radius.is_finite() {
        return Err(Error::invalid(format!("expansion radius must be >= 0, got {radius}")));
    }
    let reach = radius.floor() as i64;
    let r2 = radius * radius;
    let mut offsets: Vec<(i64, i64, i64)> = Vec::new();
    for dr in -reach..=reach {
        for dc in -reach..=reach {
            let d2 = dr * dr + dc * dc;
            if d2 > 0 && d2 as f64 <= r2 {
                offsets.push((d2, dr, dc));
            }
        }
    }
    offsets.sort_unstable();

    let (h, w) = labels.shape();
    let mut out = labels.clone();
    par::for_each_row(out.as_mut_slice(), w, |r, row| {
        for (c, cell) in row.iter_mut().enumerate() {
            if *cell != 0 {
                continue;
            }
            let mut best: Option<(i64, u32)> = None;
            for &(d2, dr, dc) in &offsets {
                if let Some((bd, _)) = best {
                    if d2 > bd {
                        break;
                    }
                }
                let (pr, pc) = (r as i64 + dr, c as i64 + dc);
                if pr < 0 || pc < 0 || pr as usize >= h || pc as usize >= w {
                    continue;
                }
                let id = *labels.get(pr as usize, pc as usize);
                if id != 0 && best.is_none_or(|(_, b)| id < b) {
                    best = Some((d2, id));
                }
            }
            if let Some((_, id)) = best {
                *cell = id;
            }
        }
    });
    Ok(out)
}
