mod common;

use common::*;
use iris_core::imager::expose;
use iris_core::optics::FULL_SCALE;
use iris_core::{
    compare, confidence_summary, inject_trojan, register, required_state_bits, BlockKind, CompareParams,
    NodeTable, NoiseParams, OpticalConfig, Verdict,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noise() -> NoiseParams {
    NoiseParams::read_only(0.01 * FULL_SCALE)
}

#[test]
fn injected_patch_is_one_anomaly_around_its_center() {
    let layout = reference_layout(31);
    let cfg = OpticalConfig::default();
    let sc = layout.regions_of(BlockKind::StandardCell).next().copied().unwrap();
    let center = (sc.origin_um[0] + 0.4 * sc.size_um[0], sc.origin_um[1] + 0.6 * sc.size_um[1]);
    let reference = expose(&signal(&layout, &cfg), &noise(), 1).unwrap();
    let sample = expose(&signal(&inject_trojan(&layout, center, 25.0, -0.4).unwrap(), &cfg), &noise(), 2).unwrap();
    let shift = register(&reference, &sample, 8).unwrap();
    assert_eq!((shift.dx, shift.dy), (0, 0));
    let report = compare(&reference, &sample, &CompareParams::default()).unwrap();
    assert!(report.confidence < 1.0);
    assert_eq!(report.anomalies.len(), 1);
    let [x0, y0, x1, y1] = report.anomalies[0].bbox_um;
    assert!(x0 <= center.0 && center.0 <= x1 && y0 <= center.1 && center.1 <= y1);

    let summary = confidence_summary(&report);
    assert_eq!(summary.verdict, Verdict::Fail);
    assert!(summary.reasons[0].contains(&format!("x {x0:.1}..{x1:.1} um")), "{:?}", summary.reasons);
}

#[test]
fn noise_only_pairs_pass() {
    let layout = reference_layout(32);
    let clean = signal(&layout, &OpticalConfig::default());
    for k in 0..5 {
        let a = expose(&clean, &noise(), 100 + 2 * k).unwrap();
        let b = expose(&clean, &noise(), 101 + 2 * k).unwrap();
        let report = compare(&a, &b, &CompareParams::default()).unwrap();
        assert_eq!(report.confidence, 1.0);
        assert!(report.anomalies.is_empty());
        assert_eq!(confidence_summary(&report).verdict, Verdict::Pass);
    }
}

/// A bypass as large as the hardening budget demands is caught; one a tenth
/// of that size is not.
#[test]
fn hardening_budget_ties_to_detection() {
    let cfg = OpticalConfig::default();
    let node = NodeTable::bundled().find("28nm").unwrap().clone();
    let budget = required_state_bits(&node, &cfg, 4, 4).unwrap();
    let full = budget.bypass_area_at_required_um2;
    let tenth = full / 10.0;
    assert!(tenth < cfg.microns_per_pixel.powi(2));

    let layout = reference_layout(33);
    let clean = signal(&layout, &cfg);
    let sc = layout.regions_of(BlockKind::StandardCell).next().copied().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut caught, mut caught_small) = (0, 0);
    let trials = 20;
    for k in 0..trials {
        let cx = rng.random_range(sc.origin_um[0] + 30.0..sc.origin_um[0] + sc.size_um[0] - 30.0);
        let cy = rng.random_range(sc.origin_um[1] + 30.0..sc.origin_um[1] + sc.size_um[1] - 30.0);
        let delta = if k % 2 == 0 { 0.4 } else { -0.4 };
        let reference = expose(&clean, &noise(), 500 + k).unwrap();
        for (area, count) in [(full, &mut caught), (tenth, &mut caught_small)] {
            let modified = signal(&inject_trojan(&layout, (cx, cy), area, delta).unwrap(), &cfg);
            let sample = expose(&modified, &noise(), 900 + k).unwrap();
            let report = compare(&reference, &sample, &CompareParams::default()).unwrap();
            if !report.anomalies.is_empty() {
                *count += 1;
            }
        }
    }
    assert!(caught >= trials - 1, "caught {caught} of {trials} at {full} um2");
    assert!(caught_small <= 1, "caught {caught_small} of {trials} at {tenth} um2");
}
