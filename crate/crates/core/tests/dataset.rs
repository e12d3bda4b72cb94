mod common;

use pellet_core::dataset::{
    class_pixel_fractions, luminance_stats, normalize_luminance, normalize_luminance_counted, split_dataset,
    split_objective, synth_scene, wasserstein2_1d, ImageStats, LuminanceStats, SynthParams,
};
use pellet_core::geometry::RayFan;
use pellet_core::targets::star_distances;
use pellet_core::Grid;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sample(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.0..1.0)).collect()
}

#[test]
fn w2_matches_quantile_integral() {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    for case in 0..500 {
        let (n, m) = (rng.random_range(1..25), rng.random_range(1..25));
        let (a, b) = (sample(&mut rng, n), sample(&mut rng, m));
        let got = wasserstein2_1d(&a, &b).unwrap();
        let expect = common::w2_quantile_oracle(&a, &b);
        assert!((got - expect).abs() <= 1e-9, "case {case}: {got} vs {expect}");
    }
}

#[test]
fn w2_small_examples() {
    let got = wasserstein2_1d(&[0.0, 1.0], &[0.0, 2.0]).unwrap();
    assert!((got - 1.0 / 2f64.sqrt()).abs() <= 1e-12);
    assert!((wasserstein2_1d(&[0.2], &[0.5]).unwrap() - 0.3).abs() <= 1e-12);
    assert_eq!(wasserstein2_1d(&[0.1, 0.7, 0.3], &[0.3, 0.1, 0.7]).unwrap(), 0.0);
    assert!(wasserstein2_1d(&[], &[0.5]).is_err());
}

fn fractions(stats: &[ImageStats]) -> Vec<[f64; 4]> {
    stats.iter().map(|s| s.fractions).collect()
}

fn is_test_of(stats: &[ImageStats], test_ids: &[String]) -> Vec<bool> {
    stats.iter().map(|s| test_ids.contains(&s.id)).collect()
}

#[test]
fn split_beats_median_random_split() {
    let mut rng = ChaCha8Rng::seed_from_u64(72);
    let stats = common::fraction_corpus(&mut rng, 40);
    let out = split_dataset(&stats, 0.2, 16, 9).unwrap();
    let n_test = out.test_ids.len();
    let mut random: Vec<f64> = (0..100)
        .map(|_| {
            let mut is_test = vec![false; 40];
            is_test[..n_test].iter_mut().for_each(|t| *t = true);
            is_test.shuffle(&mut rng);
            common::split_objective_oracle(&fractions(&stats), &is_test)
        })
        .collect();
    random.sort_by(f64::total_cmp);
    let median = (random[49] + random[50]) / 2.0;
    assert!(out.objective <= median, "{} vs median {median}", out.objective);
    let direct = common::split_objective_oracle(&fractions(&stats), &is_test_of(&stats, &out.test_ids));
    assert!((out.objective - direct).abs() <= 1e-9);
}

#[test]
fn split_finds_exhaustive_optimum_on_small_corpora() {
    let mut rng = ChaCha8Rng::seed_from_u64(73);
    for case in 0..120 {
        let n = rng.random_range(2..=8);
        let stats = common::fraction_corpus(&mut rng, n);
        let fraction = [0.2, 0.25, 0.5, 0.3][case % 4];
        let out = split_dataset(&stats, fraction, 8, case as u64).unwrap();
        let best = common::exhaustive_split(&fractions(&stats), out.test_ids.len());
        assert!((out.objective - best).abs() <= 1e-9, "case {case} n {n}: {} vs {best}", out.objective);
    }
}

#[test]
fn duplicated_pairs_split_to_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(74);
    for case in 0..30 {
        let k = rng.random_range(1..=4);
        let half = common::fraction_corpus(&mut rng, k);
        let mut stats: Vec<ImageStats> = half
            .iter()
            .flat_map(|s| {
                let mut twin = s.clone();
                twin.id.push('b');
                [s.clone(), twin]
            })
            .collect();
        stats.shuffle(&mut rng);
        assert_eq!(common::exhaustive_split(&fractions(&stats), stats.len() / 2), 0.0);
        let out = split_dataset(&stats, 0.5, 4, case).unwrap();
        assert!(out.objective <= 1e-12, "case {case}: {}", out.objective);
    }
}

#[test]
fn split_partitions_every_id() {
    let mut rng = ChaCha8Rng::seed_from_u64(75);
    let stats = common::fraction_corpus(&mut rng, 23);
    let out = split_dataset(&stats, 0.3, 5, 1).unwrap();
    let mut all: Vec<String> = out.train_ids.iter().chain(&out.test_ids).cloned().collect();
    all.sort();
    let mut ids: Vec<String> = stats.iter().map(|s| s.id.clone()).collect();
    ids.sort();
    assert_eq!(all, ids);
    assert!((out.test_ids.len() as f64 - 0.3 * 23.0).abs() <= 1.0);
    assert_eq!(out, split_dataset(&stats, 0.3, 5, 1).unwrap());
    let worst = out.per_class_w2.values().copied().fold(0.0, f64::max);
    assert_eq!(worst, out.objective);
    assert_eq!(split_objective(&stats, &is_test_of(&stats, &out.test_ids)).unwrap(), out.objective);
}

#[test]
fn class_fractions_count_pixels() {
    let mut rng = ChaCha8Rng::seed_from_u64(76);
    for _ in 0..100 {
        let (h, w) = (rng.random_range(1..20), rng.random_range(1..20));
        let map = Grid::from_fn(h, w, |_, _| rng.random_range(0..5u8));
        let mut counts = [0usize; 4];
        for r in 0..h {
            for c in 0..w {
                let v = *map.get(r, c);
                if v > 0 {
                    counts[v as usize - 1] += 1;
                }
            }
        }
        let expect = counts.map(|k| k as f64 / (h * w) as f64);
        assert_eq!(class_pixel_fractions(&map), expect);
    }
    let mut ten = Grid::new(10, 10, 0u8);
    (0..25).for_each(|i| *ten.get_mut(i / 10, i % 10) = 1);
    assert_eq!(class_pixel_fractions(&ten), [0.25, 0.0, 0.0, 0.0]);
}

#[test]
fn normalized_lightness_hits_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..50 {
        let img = common::muted_image(&mut rng);
        let reference = LuminanceStats::new(rng.random_range(45.0..65.0), rng.random_range(3.0..10.0)).unwrap();
        let out = normalize_luminance_counted(&img, &reference).unwrap();
        assert_eq!(out.clipped_channels + out.clipped_lightness, 0, "case {case}");
        let (mean, std) = common::lightness_stats(&out.image);
        assert!((mean - reference.ref_mean).abs() <= 0.5, "case {case}: mean {mean}");
        assert!((std - reference.ref_std).abs() <= 0.5, "case {case}: std {std}");
        let lib = luminance_stats(&out.image).unwrap();
        assert!((lib.ref_mean - mean).abs() < 1e-6 && (lib.ref_std - std).abs() < 1e-6);
    }
}

#[test]
fn mid_gray_lifts_to_reference() {
    let img = Grid::with_channels(6, 6, 3, 119u8);
    let out = normalize_luminance(&img, &LuminanceStats::new(70.0, 5.0).unwrap()).unwrap();
    let first = out.pixel(0, 0).to_vec();
    assert!(first[0] > 119 && first[0] == first[1] && first[1] == first[2]);
    assert!(out.as_slice().chunks(3).all(|p| p == first.as_slice()));
    let (mean, _) = common::lightness_stats(&out);
    assert!((mean - 70.0).abs() <= 0.5, "{mean}");
}

#[test]
fn matching_stats_are_near_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(78);
    for _ in 0..20 {
        let img = common::muted_image(&mut rng);
        let own = luminance_stats(&img).unwrap();
        let out = normalize_luminance(&img, &own).unwrap();
        for (a, b) in img.as_slice().iter().zip(out.as_slice()) {
            assert!((*a as i32 - *b as i32).abs() <= 1);
        }
    }
}

fn scene_params(n: usize) -> SynthParams {
    SynthParams {
        height: 160,
        width: 160,
        n_objects: n,
        ..Default::default()
    }
}

#[test]
fn synth_is_deterministic() {
    for seed in [0, 1, 99] {
        assert_eq!(synth_scene(seed, &scene_params(10)).unwrap(), synth_scene(seed, &scene_params(10)).unwrap());
    }
    assert_ne!(
        synth_scene(1, &scene_params(10)).unwrap().labels,
        synth_scene(2, &scene_params(10)).unwrap().labels
    );
}

#[test]
fn synth_single_object_area() {
    for seed in 0..20 {
        let p = SynthParams {
            n_objects: 1,
            radius_range: (10.0, 10.0),
            ..scene_params(1)
        };
        let s = synth_scene(seed, &p).unwrap();
        let area = s.labels.as_slice().iter().filter(|&&v| v == 1).count() as f64;
        assert!(s.labels.as_slice().iter().all(|&v| v <= 1));
        let disk = std::f64::consts::PI * 100.0;
        assert!((area - disk).abs() <= 0.3 * disk, "seed {seed}: {area}");
    }
}

#[test]
fn synth_empty_scene() {
    let s = synth_scene(5, &scene_params(0)).unwrap();
    assert!(s.labels.as_slice().iter().all(|&v| v == 0));
    assert!(s.objects.is_empty() && !s.incomplete);
}

#[test]
fn synth_masks_keep_their_gap() {
    for seed in 0..10 {
        let s = synth_scene(seed, &scene_params(20)).unwrap();
        let (h, w) = s.labels.shape();
        let pixels: Vec<(i64, i64, u32)> = (0..h)
            .flat_map(|r| (0..w).map(move |c| (r, c)))
            .filter_map(|(r, c)| {
                let v = *s.labels.get(r, c);
                (v != 0).then_some((r as i64, c as i64, v))
            })
            .collect();
        for &(r, c, a) in &pixels {
            for &(r2, c2, b) in &pixels {
                if a != b {
                    assert!((((r - r2).pow(2) + (c - c2).pow(2)) as f64).sqrt() > 3.0);
                }
            }
        }
        for o in &s.objects {
            let count = s.labels.as_slice().iter().filter(|&&v| v == o.id).count();
            assert_eq!(count, o.area_px);
            assert!(s.labels.as_slice().iter().zip(s.classes.as_slice()).all(|(&l, &c)| l != o.id || c == o.class.id()));
        }
    }
}

#[test]
fn synth_objects_are_star_convex_about_their_centers() {
    let fan = RayFan::new(64).unwrap();
    for seed in 0..10 {
        let s = synth_scene(seed, &scene_params(20)).unwrap();
        let d = star_distances(&s.labels, &fan);
        for o in &s.objects {
            assert!((0..3600).all(|k| o.radius_at(k as f64 * std::f64::consts::TAU / 3600.0) > 0.0));
            // The mask is exactly the pixels inside the radial boundary, so
            // each ray from the center leaves it once.
            let (h, w) = s.labels.shape();
            for r in 0..h {
                for c in 0..w {
                    let (dr, dc) = (r as f64 - o.center.0 as f64, c as f64 - o.center.1 as f64);
                    let inside = dr.hypot(dc) <= o.radius_at(dr.atan2(dc));
                    assert_eq!(*s.labels.get(r, c) == o.id, inside, "seed {seed} obj {} at ({r}, {c})", o.id);
                }
            }
            let (r, c) = (o.center.0 as usize, o.center.1 as usize);
            for (k, &dir) in fan.directions().iter().enumerate() {
                let edge = o.radius_at(dir.0.atan2(dir.1));
                let fine = common::ray_march(&s.labels, r, c, dir, 0.1);
                assert!((fine - edge).abs() <= 1.0, "seed {seed} obj {} ray {k}: {fine} vs {edge}", o.id);
                let got = d.pixel(r, c)[k] as f64;
                assert!((got - fine).abs() <= 1.5, "seed {seed} obj {} ray {k}: {got} vs {fine}", o.id);
            }
        }
    }
}

proptest! {
    #[test]
    fn w2_is_a_metric(
        v in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0), 1..20),
        shift in -5.0f64..5.0,
    ) {
        let a: Vec<f64> = v.iter().map(|t| t.0).collect();
        let b: Vec<f64> = v.iter().map(|t| t.1).collect();
        let c: Vec<f64> = v.iter().map(|t| t.2).collect();
        let ab = wasserstein2_1d(&a, &b).unwrap();
        prop_assert_eq!(ab, wasserstein2_1d(&b, &a).unwrap());
        let ac = wasserstein2_1d(&a, &c).unwrap();
        let cb = wasserstein2_1d(&c, &b).unwrap();
        prop_assert!(ab <= ac + cb + 1e-9);
        let sa: Vec<f64> = a.iter().map(|x| x + shift).collect();
        let sb: Vec<f64> = b.iter().map(|x| x + shift).collect();
        prop_assert!((wasserstein2_1d(&sa, &sb).unwrap() - ab).abs() <= 1e-9);
    }

    #[test]
    fn w2_point_mass_shift(x in -10.0f64..10.0, c in -10.0f64..10.0) {
        prop_assert!((wasserstein2_1d(&[x], &[x + c]).unwrap() - c.abs()).abs() <= 1e-12);
    }

    #[test]
    fn split_restarts_never_worsen(seed in any::<u64>(), n in 4usize..14, fraction in 0.1f64..0.9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stats = common::fraction_corpus(&mut rng, n);
        let out = split_dataset(&stats, fraction, 3, seed).unwrap();
        for t in &out.restarts {
            prop_assert!(t.final_objective <= t.initial_objective);
        }
        prop_assert_eq!(out.objective, out.restarts[out.best_restart].final_objective);
    }

    #[test]
    fn normalize_twice_moves_channels_by_one(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = common::muted_image(&mut rng);
        let reference = LuminanceStats::new(55.0, 6.0).unwrap();
        let once = normalize_luminance(&img, &reference).unwrap();
        let twice = normalize_luminance(&once, &reference).unwrap();
        for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
            prop_assert!((*a as i32 - *b as i32).abs() <= 1);
        }
    }
}

