//! Dataset utilities: class-fraction statistics, Wasserstein-stratified
//! splitting, CIELAB luminance normalization and synthetic scenes.

mod color;
mod split;
mod synth;
mod wasserstein;

pub use color::{
    lab_to_srgb, luminance_stats, normalize_luminance, normalize_luminance_counted, srgb_to_lab,
    LuminanceStats, Normalized,
};
pub use split::{split_dataset, split_objective, RestartTrace, SplitAssignment, DEFAULT_TEST_FRACTION};
pub use synth::{synth_scene, SynthObject, SynthParams, SynthScene};
pub use wasserstein::{wasserstein2_1d, ClassFractionSample};

use serde::{Deserialize, Serialize};

use crate::analysis::PelletClass;
use crate::error::Result;
use crate::grid::{ClassMap, RgbImage};

/// Fractions of all pixels per foreground class, in [`PelletClass::FOREGROUND`]
/// order.
pub type ClassFractions = [f64; 4];

/// Per-image statistics used for splitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageStats {
    pub id: String,
    pub fractions: ClassFractions,
    pub l_mean: f64,
    pub l_std: f64,
}

impl ImageStats {
    pub fn fraction(&self, class: PelletClass) -> f64 {
        match class {
            PelletClass::Background => 1.0 - self.fractions.iter().sum::<f64>(),
            c => self.fractions[c as usize - 1],
        }
    }
}

/// Pixels of each foreground class divided by the total pixel count.
pub fn class_pixel_fractions(classes: &ClassMap) -> ClassFractions {
    let mut counts = [0u64; 4];
    for &c in classes.as_slice() {
        if (1..=4).contains(&c) {
            counts[c as usize - 1] += 1;
        }
    }
    let total = classes.len_pixels().max(1) as f64;
    counts.map(|n| n as f64 / total)
}

pub fn image_stats(id: impl Into<String>, classes: &ClassMap, image: &RgbImage) -> Result<ImageStats> {
    classes.check_same_shape(image)?;
    let lum = luminance_stats(image)?;
    Ok(ImageStats {
        id: id.into(),
        fractions: class_pixel_fractions(classes),
        l_mean: lum.ref_mean,
        l_std: lum.ref_std,
    })
}
