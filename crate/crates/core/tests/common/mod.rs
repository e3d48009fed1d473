#![allow(dead_code)]

use iris_core::optics::SpectralCurve;
use iris_core::{fig12_like_plan, synthesize_layout, DieLayout, IrisImage, OpticalConfig};

/// 512 px across at 1.67 um/px.
pub const DIE_UM: f64 = 512.0 * 1.67;

pub fn curves() -> (SpectralCurve, SpectralCurve) {
    (SpectralCurve::default_absorption(), SpectralCurve::default_sensitivity())
}

pub fn reference_layout(seed: u64) -> DieLayout {
    synthesize_layout(&fig12_like_plan(DIE_UM, DIE_UM), seed).unwrap()
}

pub fn signal(layout: &DieLayout, config: &OpticalConfig) -> IrisImage {
    let (a, s) = curves();
    iris_core::render_signal(layout, config, &a, &s).unwrap()
}

/// Pearson correlation over paired samples, two-pass.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

/// Exhaustive registration: every shift in the window, scored on the
/// overlap, best score wins and ties go to the smallest `(|dx|+|dy|, dy, dx)`.
/// `sample(x, y) = reference(x - dx, y - dy)`.
pub fn oracle_register(reference: &IrisImage, sample: &IrisImage, radius: i64) -> (i64, i64, f64) {
    let mut best: Option<((i64, i64, i64), f64)> = None;
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let mut a = Vec::new();
            let mut b = Vec::new();
            for y in 0..sample.height() as i64 {
                for x in 0..sample.width() as i64 {
                    let (rx, ry) = (x - dx, y - dy);
                    if rx >= 0 && ry >= 0 && rx < reference.width() as i64 && ry < reference.height() as i64 {
                        a.push(reference.get(rx as usize, ry as usize));
                        b.push(sample.get(x as usize, y as usize));
                    }
                }
            }
            let score = pearson(&a, &b);
            let key = (dx.abs() + dy.abs(), dy, dx);
            let better = match best {
                None => true,
                Some((k, s)) => score > s || (score == s && key < k),
            };
            if better {
                best = Some((key, score));
            }
        }
    }
    let ((_, dy, dx), score) = best.unwrap();
    (dx, dy, score)
}

pub fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt()
}
