//! Fixtures shared by the benchmarks.

use iris_core::imager::expose;
use iris_core::optics::{SpectralCurve, FULL_SCALE};
use iris_core::{fig12_like_plan, synthesize_layout, DieLayout, IrisImage, NoiseParams, OpticalConfig};

/// Side of the benchmark die: 512 px at 1.67 um/px.
pub const DIE_UM: f64 = 512.0 * 1.67;

pub fn curves() -> (SpectralCurve, SpectralCurve) {
    (SpectralCurve::default_absorption(), SpectralCurve::default_sensitivity())
}

pub fn layout(seed: u64) -> DieLayout {
    synthesize_layout(&fig12_like_plan(DIE_UM, DIE_UM), seed).expect("bundled plan is valid")
}

pub fn clean_render(layout: &DieLayout) -> IrisImage {
    let (a, s) = curves();
    iris_core::render_signal(layout, &OpticalConfig::default(), &a, &s).expect("default config renders")
}

/// Two independent exposures of the same signal at 1% full-scale noise.
pub fn noisy_pair(signal: &IrisImage) -> (IrisImage, IrisImage) {
    let noise = NoiseParams::read_only(0.01 * FULL_SCALE);
    (expose(signal, &noise, 1).unwrap(), expose(signal, &noise, 2).unwrap())
}
