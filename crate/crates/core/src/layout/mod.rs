//! Die layouts: a reflectance grid standing in for M1 metal density, plus
//! the functional regions that produced it.
//!
//! Reflectance is held as 16-bit codes (`value × 65535`), the same precision
//! the layout file stores, so persistence is lossless by construction.

mod io;
mod plan;
mod synth;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{layout_paths, load_layout, save_layout, LayoutFile, LAYOUT_FORMAT, LAYOUT_JSON, REFLECTANCE_PGM};
pub use plan::fig12_like_plan;
pub use synth::synthesize_layout;

/// Default reflectance sample spacing.
pub const DEFAULT_GRID_PITCH_UM: f64 = 0.25;

const CODE_SCALE: f64 = 65535.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BlockKind {
    StandardCell,
    RamMacro,
    IoPad,
    DataConverter,
    NonVolatileMemory,
    Oscillator,
    Filler,
}

impl BlockKind {
    pub const ALL: [BlockKind; 7] = [
        BlockKind::StandardCell,
        BlockKind::RamMacro,
        BlockKind::IoPad,
        BlockKind::DataConverter,
        BlockKind::NonVolatileMemory,
        BlockKind::Oscillator,
        BlockKind::Filler,
    ];
}

/// Kind-specific texture knobs. Unset fields take per-kind defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextureParams {
    /// Standard-cell row height.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub row_pitch_um: Option<f64>,
    /// Bit-cell, capacitor or strap pitch, depending on the block kind.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cell_pitch_um: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pad_diameter_um: Option<f64>,
    /// Peak-to-peak reflectance swing of the fine texture.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contrast: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub kind: BlockKind,
    /// Top-left corner; x grows right, y grows down.
    pub origin_um: [f64; 2],
    pub size_um: [f64; 2],
    #[serde(default)]
    pub texture: TextureParams,
}

impl Region {
    pub fn new(kind: BlockKind, origin_um: [f64; 2], size_um: [f64; 2]) -> Self {
        Region {
            kind,
            origin_um,
            size_um,
            texture: TextureParams::default(),
        }
    }

    pub fn with_texture(mut self, texture: TextureParams) -> Self {
        self.texture = texture;
        self
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.origin_um[0]
            && x < self.origin_um[0] + self.size_um[0]
            && y >= self.origin_um[1]
            && y < self.origin_um[1] + self.size_um[1]
    }

    pub fn center(&self) -> (f64, f64) {
        (
            self.origin_um[0] + self.size_um[0] / 2.0,
            self.origin_um[1] + self.size_um[1] / 2.0,
        )
    }

    fn overlaps(&self, other: &Region) -> bool {
        let ix = (self.origin_um[0] + self.size_um[0]).min(other.origin_um[0] + other.size_um[0])
            - self.origin_um[0].max(other.origin_um[0]);
        let iy = (self.origin_um[1] + self.size_um[1]).min(other.origin_um[1] + other.size_um[1])
            - self.origin_um[1].max(other.origin_um[1]);
        ix > 1e-9 && iy > 1e-9
    }
}

/// Input to [`synthesize_layout`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutPlan {
    pub die_size_um: [f64; 2],
    #[serde(default = "default_grid_pitch")]
    pub grid_pitch_um: f64,
    pub regions: Vec<Region>,
    /// Reflectance of unpatterned silicon between blocks.
    #[serde(default = "default_background")]
    pub background_reflectance: f64,
    /// Amplitude of the diagonal wafer-processing texture; 0 disables it.
    #[serde(default)]
    pub diagonal_texture: f64,
    #[serde(default)]
    pub provenance: String,
}

fn default_grid_pitch() -> f64 {
    DEFAULT_GRID_PITCH_UM
}

fn default_background() -> f64 {
    0.2
}

impl LayoutPlan {
    pub fn new(die_size_um: [f64; 2], regions: Vec<Region>) -> Self {
        LayoutPlan {
            die_size_um,
            grid_pitch_um: DEFAULT_GRID_PITCH_UM,
            regions,
            background_reflectance: default_background(),
            diagonal_texture: 0.0,
            provenance: String::new(),
        }
    }

    /// Check die size, grid pitch, region bounds and pairwise overlap.
    /// All offenders are reported at once.
    pub fn validate(&self) -> Result<()> {
        let [w, h] = self.die_size_um;
        let mut problems = Vec::new();
        if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
            problems.push(format!("die size must be positive, got {w} x {h}"));
        }
        if !(self.grid_pitch_um > 0.0 && self.grid_pitch_um.is_finite()) {
            problems.push(format!("grid pitch must be positive, got {}", self.grid_pitch_um));
        }
        if !(0.0..=1.0).contains(&self.background_reflectance) {
            problems.push(format!(
                "background reflectance {} outside [0, 1]",
                self.background_reflectance
            ));
        }
        let eps = 1e-9 * w.max(h).max(1.0);
        for (i, r) in self.regions.iter().enumerate() {
            let [x, y] = r.origin_um;
            let [rw, rh] = r.size_um;
            if !(rw > 0.0 && rh > 0.0) {
                problems.push(format!("region {i} ({:?}) has non-positive size {rw} x {rh}", r.kind));
            } else if !(x >= -eps && y >= -eps && x + rw <= w + eps && y + rh <= h + eps) {
                problems.push(format!(
                    "region {i} ({:?}) at ({x}, {y}) size {rw} x {rh} exceeds die {w} x {h}",
                    r.kind
                ));
            }
        }
        for i in 0..self.regions.len() {
            for j in i + 1..self.regions.len() {
                if self.regions[i].overlaps(&self.regions[j]) {
                    problems.push(format!(
                        "regions {i} ({:?}) and {j} ({:?}) overlap",
                        self.regions[i].kind, self.regions[j].kind
                    ));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }
}

/// Number of grid samples needed to cover `extent` at `pitch`.
pub fn grid_len(extent_um: f64, pitch_um: f64) -> usize {
    ((extent_um / pitch_um) - 1e-9).ceil().max(1.0) as usize
}

/// Half-open index range of samples whose centers fall in `[lo, hi)`.
pub(crate) fn sample_range(lo: f64, hi: f64, pitch: f64, len: usize) -> std::ops::Range<usize> {
    let start = (lo / pitch - 0.5).ceil().max(0.0) as usize;
    let end = ((hi / pitch - 0.5).ceil().max(0.0) as usize).min(len);
    start.min(end)..end
}

pub fn encode_reflectance(value: f64) -> u16 {
    (value.clamp(0.0, 1.0) * CODE_SCALE).round() as u16
}

pub fn decode_reflectance(code: u16) -> f64 {
    f64::from(code) / CODE_SCALE
}

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct DieLayout {
    die_size_um: [f64; 2],
    grid_pitch_um: f64,
    width: usize,
    height: usize,
    #[serde(skip)]
    codes: Vec<u16>,
    regions: Vec<Region>,
    provenance: String,
}

impl std::fmt::Debug for DieLayout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DieLayout")
            .field("die_size_um", &self.die_size_um)
            .field("grid_pitch_um", &self.grid_pitch_um)
            .field("grid", &(self.width, self.height))
            .field("regions", &self.regions.len())
            .field("provenance", &self.provenance)
            .finish_non_exhaustive()
    }
}

impl DieLayout {
    /// Build from row-major reflectance codes. Regions are validated against
    /// the die.
    pub fn from_codes(
        die_size_um: [f64; 2],
        grid_pitch_um: f64,
        codes: Vec<u16>,
        regions: Vec<Region>,
        provenance: String,
    ) -> Result<Self> {
        let plan = LayoutPlan {
            grid_pitch_um,
            regions,
            provenance,
            ..LayoutPlan::new(die_size_um, Vec::new())
        };
        plan.validate()?;
        let width = grid_len(die_size_um[0], grid_pitch_um);
        let height = grid_len(die_size_um[1], grid_pitch_um);
        if codes.len() != width * height {
            return Err(Error::Validation(vec![format!(
                "reflectance grid has {} samples, expected {width} x {height}",
                codes.len()
            )]));
        }
        Ok(DieLayout {
            die_size_um,
            grid_pitch_um,
            width,
            height,
            codes,
            regions: plan.regions,
            provenance: plan.provenance,
        })
    }

    /// A die with constant reflectance and no regions.
    pub fn uniform(die_size_um: [f64; 2], grid_pitch_um: f64, reflectance: f64) -> Result<Self> {
        let w = grid_len(die_size_um[0], grid_pitch_um);
        let h = grid_len(die_size_um[1], grid_pitch_um);
        Self::from_codes(
            die_size_um,
            grid_pitch_um,
            vec![encode_reflectance(reflectance); w * h],
            Vec::new(),
            format!("uniform {reflectance}"),
        )
    }

    pub fn die_size_um(&self) -> [f64; 2] {
        self.die_size_um
    }

    pub fn grid_pitch_um(&self) -> f64 {
        self.grid_pitch_um
    }

    /// Grid dimensions `(columns, rows)`.
    pub fn grid_dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn codes(&self) -> &[u16] {
        &self.codes
    }

    pub fn reflectance(&self, col: usize, row: usize) -> f64 {
        decode_reflectance(self.codes[row * self.width + col])
    }

    pub fn row(&self, row: usize) -> &[u16] {
        &self.codes[row * self.width..(row + 1) * self.width]
    }

    pub fn mean_reflectance(&self) -> f64 {
        self.codes.iter().map(|&c| f64::from(c)).sum::<f64>() / (self.codes.len() as f64 * CODE_SCALE)
    }

    /// Regions of a given kind.
    pub fn regions_of(&self, kind: BlockKind) -> impl Iterator<Item = &Region> {
        self.regions.iter().filter(move |r| r.kind == kind)
    }

    /// Region whose interior contains the point, if any.
    pub fn region_at(&self, x_um: f64, y_um: f64) -> Option<&Region> {
        self.regions.iter().find(|r| r.contains(x_um, y_um))
    }
}

/// Ground truth for an injected modification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrojanSite {
    pub center_um: (f64, f64),
    pub area_um2: f64,
    pub reflectance_delta: f64,
}

impl TrojanSite {
    pub fn side_um(&self) -> f64 {
        self.area_um2.sqrt()
    }

    /// `(x0, y0, x1, y1)` of the affected square.
    pub fn bounds_um(&self) -> (f64, f64, f64, f64) {
        let h = self.side_um() / 2.0;
        (self.center_um.0 - h, self.center_um.1 - h, self.center_um.0 + h, self.center_um.1 + h)
    }
}

/// Add `reflectance_delta` to every sample whose center lies in the square
/// of side `sqrt(area)` centered on `center`, clamping to `[0, 1]`. Parts of
/// the square beyond the die edge are ignored.
pub fn inject_trojan(
    layout: &DieLayout,
    center_um: (f64, f64),
    area_um2: f64,
    reflectance_delta: f64,
) -> Result<DieLayout> {
    let [w, h] = layout.die_size_um;
    let (cx, cy) = center_um;
    if !(cx >= 0.0 && cx <= w && cy >= 0.0 && cy <= h) {
        return Err(Error::Bounds(format!(
            "trojan center ({cx}, {cy}) outside die {w} x {h} um"
        )));
    }
    if !(area_um2 >= 0.0 && area_um2.is_finite()) {
        return Err(Error::Domain(format!("trojan area must be >= 0, got {area_um2}")));
    }
    if !reflectance_delta.is_finite() {
        return Err(Error::Domain("reflectance delta must be finite".into()));
    }
    let mut out = layout.clone();
    let site = TrojanSite {
        center_um,
        area_um2,
        reflectance_delta,
    };
    let (x0, y0, x1, y1) = site.bounds_um();
    let cols = sample_range(x0, x1, layout.grid_pitch_um, layout.width);
    let rows = sample_range(y0, y1, layout.grid_pitch_um, layout.height);
    for row in rows {
        for col in cols.clone() {
            let i = row * layout.width + col;
            out.codes[i] = encode_reflectance(decode_reflectance(out.codes[i]) + reflectance_delta);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScaleClass {
    Micro,
    Meso,
    Macro,
}

/// Pixel-count boundaries between the three scale classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleThresholds {
    pub micro_px: f64,
    pub macro_px: f64,
}

impl Default for ScaleThresholds {
    fn default() -> Self {
        ScaleThresholds {
            micro_px: 2.0,
            macro_px: 50.0,
        }
    }
}

/// Micro below `micro_px` pixels, Macro at or above `macro_px`, Meso between
/// (lower bound inclusive).
pub fn classify_scale(
    feature_size_um: f64,
    microns_per_pixel: f64,
    thresholds: ScaleThresholds,
) -> Result<ScaleClass> {
    let ScaleThresholds { micro_px, macro_px } = thresholds;
    for (v, what) in [
        (feature_size_um, "feature size"),
        (microns_per_pixel, "microns per pixel"),
        (micro_px, "micro threshold"),
        (macro_px, "macro threshold"),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!("{what} must be positive, got {v}")));
        }
    }
    if micro_px >= macro_px {
        return Err(Error::Domain(format!(
            "micro threshold {micro_px} px must be below macro threshold {macro_px} px"
        )));
    }
    Ok(if feature_size_um < micro_px * microns_per_pixel {
        ScaleClass::Micro
    } else if feature_size_um >= macro_px * microns_per_pixel {
        ScaleClass::Macro
    } else {
        ScaleClass::Meso
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn plan_validation_lists_every_offender() {
        let plan = LayoutPlan::new(
            [100.0, 100.0],
            vec![
                Region::new(BlockKind::StandardCell, [0.0, 0.0], [50.0, 50.0]),
                Region::new(BlockKind::RamMacro, [40.0, 40.0], [20.0, 20.0]),
                Region::new(BlockKind::IoPad, [90.0, 90.0], [20.0, 5.0]),
                Region::new(BlockKind::Filler, [50.0, 0.0], [50.0, 40.0]),
            ],
        );
        match plan.validate() {
            Err(Error::Validation(list)) => {
                assert_eq!(list.len(), 2, "{list:?}");
                assert!(list[0].contains("region 2"));
                assert!(list[1].contains("regions 0") && list[1].contains("and 1"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn grid_dims_are_ceiling() {
        assert_eq!(grid_len(10.0, 0.25), 40);
        assert_eq!(grid_len(10.1, 0.25), 41);
        assert_eq!(grid_len(855.04, 0.25), 3421);
        let l = DieLayout::uniform([10.1, 3.0], 0.25, 0.5).unwrap();
        assert_eq!(l.grid_dims(), (41, 12));
    }

    #[test]
    fn zero_area_trojan_is_identity() {
        let l = DieLayout::uniform([20.0, 20.0], 0.25, 0.3).unwrap();
        assert_eq!(inject_trojan(&l, (10.0, 10.0), 0.0, 0.5).unwrap(), l);
    }

    #[test]
    fn trojan_changes_exactly_the_covered_samples() {
        let l = DieLayout::uniform([20.0, 20.0], 0.25, 0.5).unwrap();
        let t = inject_trojan(&l, (10.0, 10.0), 9.0, 0.4).unwrap();
        let (w, h) = l.grid_dims();
        let mut changed = 0;
        for row in 0..h {
            for col in 0..w {
                let (x, y) = ((col as f64 + 0.5) * 0.25, (row as f64 + 0.5) * 0.25);
                let inside = (8.5..11.5).contains(&x) && (8.5..11.5).contains(&y);
                if inside {
                    changed += 1;
                    assert!((t.reflectance(col, row) - 0.9).abs() <= 1.0 / 65535.0);
                } else {
                    assert_eq!(t.reflectance(col, row), l.reflectance(col, row));
                }
            }
        }
        // 3 um side at 0.25 um pitch
        assert_eq!(changed, 144);
        assert!((l.reflectance(0, 0) - 0.5).abs() <= 0.5 / 65535.0);
    }

    #[test]
    fn trojan_center_outside_die_is_rejected() {
        let l = DieLayout::uniform([20.0, 20.0], 0.25, 0.5).unwrap();
        assert!(matches!(inject_trojan(&l, (25.0, 1.0), 4.0, 0.1), Err(Error::Bounds(_))));
        // square hanging over the edge is clipped, not rejected
        let t = inject_trojan(&l, (0.0, 0.0), 4.0, 0.1).unwrap();
        assert!(t.reflectance(0, 0) > l.reflectance(0, 0));
    }

    #[test]
    fn trojan_clamps() {
        let l = DieLayout::uniform([4.0, 4.0], 0.25, 0.9).unwrap();
        let t = inject_trojan(&l, (2.0, 2.0), 1.0, 0.5).unwrap();
        assert_eq!(t.reflectance(8, 8), 1.0);
        let t = inject_trojan(&l, (2.0, 2.0), 1.0, -2.0).unwrap();
        assert_eq!(t.reflectance(8, 8), 0.0);
    }

    #[test]
    fn scale_examples() {
        let d = ScaleThresholds::default();
        assert_eq!(classify_scale(0.8, 1.67, d).unwrap(), ScaleClass::Micro);
        assert_eq!(classify_scale(2.0 * 1.5, 1.5, d).unwrap(), ScaleClass::Meso);
        assert_eq!(classify_scale(50.0 * 1.5, 1.5, d).unwrap(), ScaleClass::Macro);
        // 200 / 1.86 = 107.5 px
        assert_eq!(classify_scale(200.0, 1.86, d).unwrap(), ScaleClass::Macro);
        assert_eq!(classify_scale(20.0, 1.86, d).unwrap(), ScaleClass::Meso);
        assert!(classify_scale(0.0, 1.0, d).is_err());
        assert!(classify_scale(1.0, -1.0, d).is_err());
        let swapped = ScaleThresholds { micro_px: 60.0, macro_px: 50.0 };
        assert!(classify_scale(1.0, 1.0, swapped).is_err());
    }

    proptest! {
        #[test]
        fn scale_is_monotone_in_feature_size(a in 0.01f64..500.0, b in 0.01f64..500.0, mpp in 0.1f64..5.0) {
            let d = ScaleThresholds::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(classify_scale(lo, mpp, d).unwrap() <= classify_scale(hi, mpp, d).unwrap());
        }

        #[test]
        fn trojan_diff_is_confined(cx in 0.0f64..6.0, cy in 0.0f64..6.0, area in 0.0f64..9.0, delta in -0.6f64..0.6) {
            let l = DieLayout::uniform([6.0, 6.0], 0.25, 0.5).unwrap();
            let t = inject_trojan(&l, (cx, cy), area, delta).unwrap();
            let half = area.sqrt() / 2.0;
            let (w, h) = l.grid_dims();
            for row in 0..h {
                for col in 0..w {
                    let (x, y) = ((col as f64 + 0.5) * 0.25, (row as f64 + 0.5) * 0.25);
                    let inside = x >= cx - half && x < cx + half && y >= cy - half && y < cy + half;
                    let expected = if inside {
                        encode_reflectance(l.reflectance(col, row) + delta)
                    } else {
                        l.codes()[row * w + col]
                    };
                    prop_assert_eq!(t.codes()[row * w + col], expected);
                }
            }
        }
    }
}
