//! Seeded synthetic pellet scenes with exact ground truth.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::PelletClass;
use crate::error::{Error, Result};
use crate::grid::{ClassMap, Grid, LabelMap, RgbImage};

/// Placement attempts per requested object before giving up on it.
const MAX_ATTEMPTS: usize = 400;
/// Summed amplitude of the radial harmonics never exceeds this fraction of
/// the base radius.
pub const MAX_PERTURBATION: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub height: usize,
    pub width: usize,
    pub n_objects: usize,
    /// Probabilities of Nice, Ugly, Big, Joint.
    pub class_mix: [f64; 4],
    /// Base radius range in pixels, inclusive.
    pub radius_range: (f64, f64),
    /// Minimum Euclidean distance between pixels of different objects must
    /// exceed this.
    pub min_gap: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            height: 256,
            width: 256,
            n_objects: 12,
            class_mix: [0.55, 0.2, 0.1, 0.15],
            radius_range: (10.0, 20.0),
            min_gap: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthObject {
    pub id: u32,
    pub class: PelletClass,
    /// `(row, col)` center pixel.
    pub center: (i64, i64),
    pub base_radius: f64,
    /// `(amplitude, phase)` for harmonics 2 and 3.
    pub harmonics: [(f64, f64); 2],
    pub area_px: usize,
}

impl SynthObject {
    /// Boundary radius toward `angle` (same convention as ray angles).
    pub fn radius_at(&self, angle: f64) -> f64 {
        let mut s = 1.0;
        for (k, (amp, phase)) in self.harmonics.iter().enumerate() {
            s += amp * ((k as f64 + 2.0) * angle + phase).cos();
        }
        self.base_radius * s
    }

    fn contains(&self, r: i64, c: i64) -> bool {
        let (dr, dc) = ((r - self.center.0) as f64, (c - self.center.1) as f64);
        let d = dr.hypot(dc);
        d == 0.0 || d <= self.radius_at(dr.atan2(dc))
    }

    fn reach(&self) -> i64 {
        (self.base_radius * (1.0 + MAX_PERTURBATION)).ceil() as i64 + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub labels: LabelMap,
    pub classes: ClassMap,
    pub image: RgbImage,
    pub objects: Vec<SynthObject>,
    /// Set when fewer than the requested objects could be placed.
    pub incomplete: bool,
}

fn validate(p: &SynthParams) -> Result<()> {
    if p.height == 0 || p.width == 0 {
        return Err(Error::invalid("scene size must be positive"));
    }
    if p.class_mix.iter().any(|&x| !(x >= 0.0)) || (p.class_mix.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("class mix must be non-negative and sum to 1"));
    }
    let (lo, hi) = p.radius_range;
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::invalid(format!("radius range ({lo}, {hi}) must be positive and ordered")));
    }
    if !(p.min_gap >= 0.0) {
        return Err(Error::invalid("min_gap must be >= 0"));
    }
    Ok(())
}

fn sample_class(rng: &mut ChaCha8Rng, mix: &[f64; 4]) -> PelletClass {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &p) in mix.iter().enumerate() {
        acc += p;
        if u < acc {
            return PelletClass::FOREGROUND[k];
        }
    }
    // Rounding in the cumulative sum: last class with nonzero weight.
    let k = mix.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    PelletClass::FOREGROUND[k]
}

/// Places up to `n_objects` non-touching star-convex blobs by rejection
/// sampling and renders labels, classes and a shaded RGB image.
pub fn synth_scene(seed: u64, params: &SynthParams) -> Result<SynthScene> {
    validate(params)?;
    let (h, w) = (params.height, params.width);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = Grid::new(h, w, 0u32);
    let mut objects: Vec<SynthObject> = Vec::new();

    let gap2 = params.min_gap * params.min_gap;
    let gap_reach = params.min_gap.floor() as i64;
    let mut gap_offsets = Vec::new();
    for dr in -gap_reach..=gap_reach {
        for dc in -gap_reach..=gap_reach {
            if ((dr * dr + dc * dc) as f64) <= gap2 {
                gap_offsets.push((dr, dc));
            }
        }
    }

    for _ in 0..params.n_objects {
        let class = sample_class(&mut rng, &params.class_mix);
        let mut placed = false;
        for _ in 0..MAX_ATTEMPTS {
            let (lo, hi) = params.radius_range;
            let base_radius = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            let (a2_max, a3_max) = match class {
                PelletClass::Ugly => (0.2, 0.1),
                _ => (0.12, 0.08),
            };
            let harmonics = [
                (rng.random_range(0.0..=a2_max), rng.random_range(0.0..TAU)),
                (rng.random_range(0.0..=a3_max), rng.random_range(0.0..TAU)),
            ];
            let mut obj = SynthObject {
                id: objects.len() as u32 + 1,
                class,
                center: (0, 0),
                base_radius,
                harmonics,
                area_px: 0,
            };
            let reach = obj.reach();
            if 2 * reach >= h as i64 || 2 * reach >= w as i64 {
                continue;
            }
            obj.center = (
                rng.random_range(reach..h as i64 - reach),
                rng.random_range(reach..w as i64 - reach),
            );
            let pixels: Vec<(i64, i64)> = (obj.center.0 - reach..=obj.center.0 + reach)
                .flat_map(|r| (obj.center.1 - reach..=obj.center.1 + reach).map(move |c| (r, c)))
                .filter(|&(r, c)| obj.contains(r, c))
                .collect();
            let clear = pixels.iter().all(|&(r, c)| {
                gap_offsets.iter().all(|&(dr, dc)| {
                    let (pr, pc) = (r + dr, c + dc);
                    !labels.in_bounds(pr, pc) || *labels.get(pr as usize, pc as usize) == 0
                })
            });
            if !clear {
                continue;
            }
            for &(r, c) in &pixels {
                *labels.get_mut(r as usize, c as usize) = obj.id;
            }
            obj.area_px = pixels.len();
            objects.push(obj);
            placed = true;
            break;
        }
        if !placed {
            break;
        }
    }

    let classes = labels.map(|&id| if id == 0 { 0 } else { objects[id as usize - 1].class.id() });
    let image = render(&labels, &objects, &mut rng);
    Ok(SynthScene {
        labels,
        classes,
        image,
        incomplete: objects.len() < params.n_objects,
        objects,
    })
}

fn tint(class: PelletClass) -> [f64; 3] {
    match class {
        PelletClass::Nice => [0.55, 0.85, 0.5],
        PelletClass::Ugly => [0.9, 0.5, 0.45],
        PelletClass::Big => [0.75, 0.55, 0.9],
        PelletClass::Joint => [0.5, 0.6, 0.95],
        PelletClass::Background => [0.0; 3],
    }
}

fn render(labels: &LabelMap, objects: &[SynthObject], rng: &mut ChaCha8Rng) -> RgbImage {
    let (h, w) = labels.shape();
    let mut img = Grid::with_channels(h, w, 3, 0u8);
    for r in 0..h {
        for c in 0..w {
            let noise: f64 = rng.random_range(-4.0..4.0);
            let id = *labels.get(r, c);
            let rgb = if id == 0 {
                [28.0 + noise, 26.0 + noise, 24.0 + noise]
            } else {
                let o = &objects[id as usize - 1];
                let (dr, dc) = ((r as i64 - o.center.0) as f64, (c as i64 - o.center.1) as f64);
                let rel = (dr.hypot(dc) / o.radius_at(dr.atan2(dc))).min(1.0);
                let shade = 200.0 * (1.0 - 0.45 * rel * rel) + noise;
                tint(o.class).map(|t| t * shade)
            };
            img.pixel_mut(r, c)
                .iter_mut()
                .zip(rgb)
                .for_each(|(dst, v)| *dst = v.round().clamp(0.0, 255.0) as u8);
        }
    }
    img
}
