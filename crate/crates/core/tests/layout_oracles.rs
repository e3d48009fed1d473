mod common;

use common::*;
use iris_core::layout::{LayoutPlan, Region};
use iris_core::{fig12_like_plan, inject_trojan, load_layout, save_layout, synthesize_layout, BlockKind};

#[test]
fn ram_rows_repeat_at_the_cell_pitch() {
    let pitch_um = 2.0;
    let plan = LayoutPlan::new([140.0, 140.0], vec![Region::new(BlockKind::RamMacro, [6.0, 6.0], [128.0, 128.0])]);
    let layout = synthesize_layout(&plan, 4).unwrap();
    let grid = layout.grid_pitch_um();
    let expected_lag = (pitch_um / grid).round() as usize;
    // rows well inside the bit-cell array, away from the sense-amp strip
    let (c0, c1) = ((6.0 / grid) as usize + 4, ((6.0 + 128.0) / grid) as usize - 4);
    let mut corr = vec![0.0; 2 * expected_lag];
    for row in ((10.0 / grid) as usize..(100.0 / grid) as usize).step_by(3) {
        let v: Vec<f64> = (c0..c1).map(|c| layout.reflectance(c, row)).collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        for (lag, acc) in corr.iter_mut().enumerate().skip(1) {
            *acc += (0..v.len() - lag).map(|i| (v[i] - m) * (v[i + lag] - m)).sum::<f64>() / (v.len() - lag) as f64;
        }
    }
    let peak = (2..corr.len()).max_by(|&a, &b| corr[a].total_cmp(&corr[b])).unwrap();
    assert_eq!(peak, expected_lag, "{corr:?}");
}

#[test]
fn trojan_shifts_the_mean_by_its_mass() {
    let layout = reference_layout(21);
    let sc = layout.regions_of(BlockKind::StandardCell).next().copied().unwrap();
    let (cx, cy) = sc.center();
    let modified = inject_trojan(&layout, (cx, cy), 25.0, -0.3).unwrap();
    let (w, h) = layout.grid_dims();
    let n = (w * h) as f64;
    // brute force over the grid, including clamping at zero
    let mut removed = 0.0;
    for row in 0..h {
        for col in 0..w {
            removed += layout.reflectance(col, row) - modified.reflectance(col, row);
        }
    }
    let [dw, dh] = layout.die_size_um();
    let ideal = 0.3 * 25.0 / (dw * dh);
    let measured = layout.mean_reflectance() - modified.mean_reflectance();
    assert!((measured - removed / n).abs() < 1e-9);
    // covered samples approximate the square to within one grid row/column
    let g = layout.grid_pitch_um();
    let tolerance = 0.3 * (4.0 * 5.0 * g + 4.0 * g * g) / (dw * dh);
    assert!((measured - ideal).abs() <= tolerance, "{measured} vs {ideal}");
}

#[test]
fn full_die_plan_round_trips() {
    let plan = LayoutPlan {
        grid_pitch_um: 1.0,
        ..fig12_like_plan(3900.0, 3900.0)
    };
    let layout = synthesize_layout(&plan, 8).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_layout(&layout, dir.path()).unwrap();
    let back = load_layout(dir.path()).unwrap();
    assert_eq!(back.regions(), plan.regions.as_slice());
    assert!(back == layout);
}
