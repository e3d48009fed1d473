//! Simulation and verification toolkit for infrared in-situ (backside)
//! chip inspection.
//!
//! - [`optics`]: silicon transmission, sensor sensitivity, signal budget and
//!   resolution arithmetic.
//! - [`layout`]: procedural die layouts with functional regions, trojan
//!   injection and the micro/meso/macro scale taxonomy.
//! - [`imager`]: forward renderer from layout to 16-bit backside image, plus
//!   overlapping tile capture.
//! - [`align`]: NCC registration and mosaic stitching.
//! - [`verify`]: tile-wise comparison, confidence and anomaly regions.
//! - [`hardening`]: checksum-state sizing so any bypass is large enough to
//!   image.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod align;
pub mod error;
pub mod fsio;
pub mod hardening;
pub mod imager;
pub mod layout;
pub mod optics;
pub mod pgm;
pub mod seed;
pub mod verify;

pub use align::{normalize_intensity, register, stitch, Offset, StitchReport, StitchTile, Stitched};
pub use error::{Error, Result};
pub use hardening::{bypass_area, min_detectable_area, required_state_bits, HardeningBudget, NodeTable, ProcessNode};
pub use imager::{capture_tiles, psf_kernel, render, render_signal, IrisImage, NoiseParams, Tile, TilingParams};
pub use layout::{
    classify_scale, fig12_like_plan, inject_trojan, load_layout, save_layout, synthesize_layout, BlockKind, DieLayout,
    LayoutPlan, Region, ScaleClass, ScaleThresholds,
};
pub use optics::{OpticalConfig, SignalBudget, SpectralCurve};
pub use verify::{compare, confidence_summary, CompareParams, ComparisonReport, Verdict};
