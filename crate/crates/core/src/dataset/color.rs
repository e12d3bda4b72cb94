//! sRGB ↔ CIELAB (D65) conversion and lightness normalization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, RgbImage};

const WHITE: [f64; 3] = [0.950_47, 1.0, 1.088_83];
const DELTA: f64 = 6.0 / 29.0;
/// Lower bound on the source standard deviation when rescaling lightness.
const MIN_STD: f64 = 1e-6;

/// Target lightness statistics in CIELAB L units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LuminanceStats {
    pub ref_mean: f64,
    pub ref_std: f64,
}

impl LuminanceStats {
    pub fn new(ref_mean: f64, ref_std: f64) -> Result<Self> {
        if !(0.0..=100.0).contains(&ref_mean) || !(ref_std >= 0.0) {
            return Err(Error::invalid(format!(
                "reference lightness mean {ref_mean} must be in [0, 100] and std {ref_std} >= 0"
            )));
        }
        Ok(LuminanceStats { ref_mean, ref_std })
    }
}

fn decode(c: u8) -> f64 {
    let c = c as f64 / 255.0;
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn encode(c: f64) -> f64 {
    let c = if c <= 0.003_130_8 {
        12.92 * c
    } else {
        1.055 * c.max(0.0).powf(1.0 / 2.4) - 0.055
    };
    c * 255.0
}

fn f(t: f64) -> f64 {
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

fn f_inv(t: f64) -> f64 {
    if t > DELTA {
        t * t * t
    } else {
        3.0 * DELTA * DELTA * (t - 4.0 / 29.0)
    }
}

/// `[L, a, b]` of an 8-bit sRGB pixel.
pub fn srgb_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    let [r, g, b] = rgb.map(decode);
    let x = 0.412_456_4 * r + 0.357_576_1 * g + 0.180_437_5 * b;
    let y = 0.212_672_9 * r + 0.715_152_2 * g + 0.072_175_0 * b;
    let z = 0.019_333_9 * r + 0.119_192_0 * g + 0.950_304_1 * b;
    let (fx, fy, fz) = (f(x / WHITE[0]), f(y / WHITE[1]), f(z / WHITE[2]));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Unclamped sRGB values on the 0–255 scale.
pub fn lab_to_srgb(lab: [f64; 3]) -> [f64; 3] {
    let fy = (lab[0] + 16.0) / 116.0;
    let fx = fy + lab[1] / 500.0;
    let fz = fy - lab[2] / 200.0;
    let (x, y, z) = (WHITE[0] * f_inv(fx), WHITE[1] * f_inv(fy), WHITE[2] * f_inv(fz));
    let r = 3.240_454_2 * x - 1.537_138_5 * y - 0.498_531_4 * z;
    let g = -0.969_266_0 * x + 1.876_010_8 * y + 0.041_556_0 * z;
    let b = 0.055_643_4 * x - 0.204_025_9 * y + 1.057_225_2 * z;
    [encode(r), encode(g), encode(b)]
}

fn check_rgb(image: &RgbImage) -> Result<()> {
    if image.channels() != 3 {
        return Err(Error::shape("3 channels", image.channels()));
    }
    Ok(())
}

/// Mean and population standard deviation of L over all pixels.
pub fn luminance_stats(image: &RgbImage) -> Result<LuminanceStats> {
    check_rgb(image)?;
    let n = image.len_pixels();
    if n == 0 {
        return Err(Error::EmptyInput("image has no pixels"));
    }
    let ls: Vec<f64> = image
        .as_slice()
        .chunks_exact(3)
        .map(|p| srgb_to_lab([p[0], p[1], p[2]])[0])
        .collect();
    let mean = ls.iter().sum::<f64>() / n as f64;
    let var = ls.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / n as f64;
    Ok(LuminanceStats {
        ref_mean: mean,
        ref_std: var.sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub image: RgbImage,
    /// Channel values that fell outside [0, 255] before clamping.
    pub clipped_channels: usize,
    /// Pixels whose rescaled L fell outside [0, 100].
    pub clipped_lightness: usize,
}

/// Affinely maps the L channel to the reference mean and spread, keeping a
/// and b.
pub fn normalize_luminance(image: &RgbImage, reference: &LuminanceStats) -> Result<RgbImage> {
    Ok(normalize_luminance_counted(image, reference)?.image)
}

pub fn normalize_luminance_counted(image: &RgbImage, reference: &LuminanceStats) -> Result<Normalized> {
    let src = luminance_stats(image)?;
    let gain = reference.ref_std / src.ref_std.max(MIN_STD);
    let (h, w) = image.shape();
    let rows = crate::par::map_range(h, |r| {
        let mut row = vec![0u8; w * 3];
        let (mut channels, mut lightness) = (0usize, 0usize);
        for c in 0..w {
            let p = image.pixel(r, c);
            let [l, a, b] = srgb_to_lab([p[0], p[1], p[2]]);
            let l2 = (l - src.ref_mean) * gain + reference.ref_mean;
            if !(0.0..=100.0).contains(&l2) {
                lightness += 1;
            }
            let rgb = lab_to_srgb([l2.clamp(0.0, 100.0), a, b]);
            for (k, v) in rgb.into_iter().enumerate() {
                if !(-0.5..255.5).contains(&v) {
                    channels += 1;
                }
                row[c * 3 + k] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
        (row, channels, lightness)
    });
    let mut data = Vec::with_capacity(h * w * 3);
    let (mut clipped_channels, mut clipped_lightness) = (0, 0);
    for (row, ch, li) in rows {
        data.extend_from_slice(&row);
        clipped_channels += ch;
        clipped_lightness += li;
    }
    let out = Grid::from_vec(h, w, 3, data)?;
    Ok(Normalized {
        image: out,
        clipped_channels,
        clipped_lightness,
    })
}
