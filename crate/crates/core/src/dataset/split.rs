//! Train/test splitting that keeps per-class pixel-fraction distributions
//! aligned between the two subsets.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{wasserstein2_1d, ImageStats};
use crate::analysis::PelletClass;
use crate::error::{Error, Result};

pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestartTrace {
    pub initial_objective: f64,
    pub final_objective: f64,
    pub swaps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub per_class_w2: BTreeMap<PelletClass, f64>,
    /// Worst-class W2, the quantity being minimized.
    pub objective: f64,
    /// Index into `restarts` of the returned partition.
    pub best_restart: usize,
    pub restarts: Vec<RestartTrace>,
}

fn per_class(stats: &[ImageStats], is_test: &[bool]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (k, slot) in out.iter_mut().enumerate() {
        let (mut tr, mut te) = (Vec::new(), Vec::new());
        for (s, &t) in stats.iter().zip(is_test) {
            if t {
                te.push(s.fractions[k]);
            } else {
                tr.push(s.fractions[k]);
            }
        }
        *slot = wasserstein2_1d(&tr, &te).expect("both sides non-empty");
    }
    out
}

/// Worst-class W2 between the train and test fraction samples.
pub fn split_objective(stats: &[ImageStats], is_test: &[bool]) -> Result<f64> {
    if stats.len() != is_test.len() {
        return Err(Error::shape(stats.len(), is_test.len()));
    }
    let n_test = is_test.iter().filter(|&&t| t).count();
    if n_test == 0 || n_test == stats.len() {
        return Err(Error::invalid("both subsets must be non-empty"));
    }
    Ok(per_class(stats, is_test).into_iter().fold(0.0, f64::max))
}

fn objective(stats: &[ImageStats], is_test: &[bool]) -> f64 {
    per_class(stats, is_test).into_iter().fold(0.0, f64::max)
}

/// Runs one restart: random partition, then best-improvement pair swaps until
/// no swap lowers the objective.
fn descend(stats: &[ImageStats], n_test: usize, seed: u64) -> (Vec<bool>, RestartTrace) {
    let n = stats.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_test = vec![false; n];
    for &i in &order[..n_test] {
        is_test[i] = true;
    }
    let initial = objective(stats, &is_test);
    let mut current = initial;
    let mut swaps = 0;
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            if is_test[i] {
                continue;
            }
            for j in 0..n {
                if !is_test[j] {
                    continue;
                }
                is_test[i] = true;
                is_test[j] = false;
                let v = objective(stats, &is_test);
                is_test[i] = false;
                is_test[j] = true;
                if v < current && best.is_none_or(|(b, _, _)| v < b) {
                    best = Some((v, i, j));
                }
            }
        }
        match best {
            Some((v, i, j)) => {
                is_test[i] = true;
                is_test[j] = false;
                current = v;
                swaps += 1;
            }
            None => break,
        }
    }
    (
        is_test,
        RestartTrace {
            initial_objective: initial,
            final_objective: current,
            swaps,
        },
    )
}

/// Number of test images for a requested fraction.
pub(crate) fn test_count(n: usize, test_fraction: f64) -> usize {
    ((test_fraction * n as f64).round() as usize).clamp(1, n - 1)
}

/// Splits `stats` into train and test subsets minimizing the worst-class W2
/// between their per-image class-fraction distributions.
///
/// `restarts` independent random partitions are each refined by greedy pair
/// swaps; the best result wins (ties to the earliest restart). The outcome is
/// a pure function of the inputs and `seed`.
pub fn split_dataset(stats: &[ImageStats], test_fraction: f64, restarts: usize, seed: u64) -> Result<SplitAssignment> {
    if stats.len() < 2 {
        return Err(Error::invalid(format!("need at least 2 images, got {}", stats.len())));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!("test fraction {test_fraction} outside (0, 1)")));
    }
    if restarts == 0 {
        return Err(Error::invalid("restarts must be >= 1"));
    }
    let n_test = test_count(stats.len(), test_fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..restarts).map(|_| rng.next_u64()).collect();
    let runs = crate::par::map(&seeds, |&s| descend(stats, n_test, s));

    let best_restart = (0..runs.len())
        .min_by(|&a, &b| runs[a].1.final_objective.total_cmp(&runs[b].1.final_objective).then(a.cmp(&b)))
        .expect("restarts >= 1");
    let is_test = &runs[best_restart].0;
    let w2 = per_class(stats, is_test);
    let (mut train_ids, mut test_ids) = (Vec::new(), Vec::new());
    for (s, &t) in stats.iter().zip(is_test) {
        if t {
            test_ids.push(s.id.clone());
        } else {
            train_ids.push(s.id.clone());
        }
    }
    Ok(SplitAssignment {
        train_ids,
        test_ids,
        per_class_w2: PelletClass::FOREGROUND.iter().copied().zip(w2).collect(),
        objective: runs[best_restart].1.final_objective,
        best_restart,
        restarts: runs.iter().map(|r| r.1).collect(),
    })
}
