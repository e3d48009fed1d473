mod common;

use common::*;
use iris_core::imager::{expose, signal_scale, DEFAULT_READ_NOISE};
use iris_core::layout::{encode_reflectance, Region};
use iris_core::{inject_trojan, BlockKind, DieLayout, NoiseParams, OpticalConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pixels_inside(img: &iris_core::IrisImage, region: &Region) -> Vec<f64> {
    let mpp = img.microns_per_pixel();
    let mut out = Vec::new();
    for y in 0..img.height() {
        for x in 0..img.width() {
            let (x0, y0) = (x as f64 * mpp, y as f64 * mpp);
            if region.contains(x0, y0) && region.contains(x0 + mpp, y0 + mpp) {
                out.push(img.get(x, y));
            }
        }
    }
    out
}

#[test]
fn ram_and_standard_cells_are_distinguishable() {
    let layout = reference_layout(11);
    let img = signal(&layout, &OpticalConfig::default());
    let sc = pixels_inside(&img, layout.regions_of(BlockKind::StandardCell).next().unwrap());
    for ram in layout.regions_of(BlockKind::RamMacro) {
        let r = pixels_inside(&img, ram);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let pooled = ((std_dev(&sc).powi(2) + std_dev(&r).powi(2)) / 2.0).sqrt();
        let gap = (mean(&r) - mean(&sc)).abs();
        assert!(gap > 3.0 * pooled, "gap {gap} pooled std {pooled}");
    }
}

#[test]
fn default_exposure_fills_most_of_the_range() {
    let img = signal(&reference_layout(11), &OpticalConfig::default());
    let mut v = img.pixels().to_vec();
    v.sort_by(f64::total_cmp);
    let p99 = v[v.len() * 99 / 100] / 65535.0;
    assert!((0.7..0.9).contains(&p99), "p99 at {p99} of full scale");
}

/// Uniform border with random texture well inside it.
fn padded_layout(seed: u64) -> DieLayout {
    let (die, pitch) = (128.0, 0.25);
    let n = 512;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut codes = vec![encode_reflectance(0.4); n * n];
    for row in 64..n - 64 {
        for col in 64..n - 64 {
            codes[row * n + col] = rng.random();
        }
    }
    DieLayout::from_codes([die, die], pitch, codes, Vec::new(), "padded".into()).unwrap()
}

#[test]
fn rendering_preserves_the_mean() {
    let layout = padded_layout(1);
    let (a, s) = curves();
    for mpp in [1.0, 2.0, 1.6] {
        let cfg = OpticalConfig { microns_per_pixel: mpp, ..Default::default() };
        let img = signal(&layout, &cfg);
        let expected = signal_scale(&cfg, &a, &s).unwrap() * layout.mean_reflectance();
        let rel = (img.mean() - expected).abs() / expected;
        assert!(rel < 1e-6, "mpp {mpp}: relative error {rel}");
    }
}

#[test]
fn doubling_exposure_doubles_every_pixel() {
    let layout = padded_layout(2);
    let cfg = OpticalConfig { exposure_s: 0.75, ..Default::default() };
    let one = signal(&layout, &cfg);
    let two = signal(&layout, &OpticalConfig { exposure_s: 1.5, ..cfg });
    for (p, q) in one.pixels().iter().zip(two.pixels()) {
        assert_eq!(2.0 * p, *q);
    }
}

#[test]
fn pixel_sized_trojan_is_well_above_read_noise() {
    let layout = reference_layout(5);
    let cfg = OpticalConfig::default();
    let base = signal(&layout, &cfg);
    let side = 2.0 * cfg.microns_per_pixel;
    let sc = layout.regions_of(BlockKind::StandardCell).next().copied().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10 {
        let cx = rng.random_range(sc.origin_um[0] + 10.0..sc.origin_um[0] + sc.size_um[0] - 10.0);
        let cy = rng.random_range(sc.origin_um[1] + 10.0..sc.origin_um[1] + sc.size_um[1] - 10.0);
        let delta = if rng.random_bool(0.5) { 0.3 } else { -0.3 };
        let modified = signal(&inject_trojan(&layout, (cx, cy), side * side, delta).unwrap(), &cfg);
        let biggest = base
            .pixels()
            .iter()
            .zip(modified.pixels())
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        assert!(biggest >= 5.0 * DEFAULT_READ_NOISE, "largest change {biggest} at ({cx}, {cy})");
    }
}

#[test]
fn noise_has_the_requested_spread() {
    let layout = DieLayout::uniform([200.0, 200.0], 0.5, 0.5).unwrap();
    let cfg = OpticalConfig { microns_per_pixel: 1.0, ..Default::default() };
    let clean = signal(&layout, &cfg);
    let noisy = expose(&clean, &NoiseParams::read_only(500.0), 3).unwrap();
    let diff: Vec<f64> = clean.pixels().iter().zip(noisy.pixels()).map(|(p, q)| q - p).collect();
    let sd = std_dev(&diff);
    assert!((sd - 500.0).abs() < 15.0, "{sd}");
}
