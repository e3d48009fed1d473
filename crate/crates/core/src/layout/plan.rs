use super::{BlockKind, LayoutPlan, Region};

/// Block inventory of a mixed-signal controller die: a sea of standard
/// cells from the top left to the center, data converters along the top
/// right and right edge, non-volatile memory and RAM arrays along the lower
/// half, and I/O pads around the periphery. Coordinates scale with the die.
pub fn fig12_like_plan(die_width_um: f64, die_height_um: f64) -> LayoutPlan {
    use BlockKind::*;
    let (w, h) = (die_width_um, die_height_um);
    let rect = |kind, x: f64, y: f64, rw: f64, rh: f64| Region::new(kind, [x * w, y * h], [rw * w, rh * h]);
    let pad = 0.045 * w.min(h);
    let pad_at = |x: f64, y: f64| Region::new(IoPad, [x * w, y * h], [pad, pad]);

    let mut regions = vec![
        rect(StandardCell, 0.10, 0.10, 0.55, 0.45),
        rect(DataConverter, 0.70, 0.04, 0.26, 0.12),
        rect(DataConverter, 0.70, 0.18, 0.26, 0.12),
        rect(DataConverter, 0.84, 0.34, 0.12, 0.10),
        rect(DataConverter, 0.84, 0.46, 0.12, 0.10),
        rect(Filler, 0.68, 0.34, 0.14, 0.22),
        rect(Oscillator, 0.68, 0.58, 0.08, 0.06),
        rect(NonVolatileMemory, 0.08, 0.62, 0.26, 0.14),
        rect(NonVolatileMemory, 0.37, 0.62, 0.18, 0.14),
        rect(RamMacro, 0.08, 0.80, 0.20, 0.13),
        rect(RamMacro, 0.31, 0.80, 0.20, 0.13),
        rect(RamMacro, 0.58, 0.68, 0.24, 0.16),
        rect(Filler, 0.84, 0.60, 0.12, 0.30),
    ];
    for i in 0..6 {
        let t = 0.10 + 0.09 * i as f64;
        regions.push(pad_at(t, 0.01));
        regions.push(pad_at(0.01, t));
    }
    for i in 0..5 {
        regions.push(pad_at(0.56 + 0.08 * i as f64, 0.945));
    }
    LayoutPlan {
        provenance: format!("reference controller floorplan, {w} x {h} um"),
        ..LayoutPlan::new([w, h], regions)
    }
}
