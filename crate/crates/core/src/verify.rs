//! Reference-versus-sample comparison: per-tile scores, a global
//! confidence figure, and anomaly regions built from failing tiles.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::align::ncc;
use crate::error::{Error, Result};
use crate::imager::IrisImage;
use crate::optics::FULL_SCALE;
use crate::pgm::Greymap;

/// How `confidence` is defined; recorded in every report.
pub const CONFIDENCE_DEFINITION: &str = "fraction of scored tiles that pass";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompareParams {
    pub tile_size_px: usize,
    /// A textured tile fails when its NCC falls below this.
    pub ncc_threshold: f64,
    /// Connected groups of failing tiles smaller than this are not anomalies.
    pub min_anomaly_area_um2: f64,
    /// Tiles whose variance (in either image) is below this fraction of
    /// full scale squared are treated as flat.
    pub variance_floor: f64,
    /// Flat tiles fail when their mean absolute difference exceeds this
    /// fraction of full scale.
    pub flat_tolerance: f64,
}

impl Default for CompareParams {
    fn default() -> Self {
        CompareParams {
            tile_size_px: 16,
            ncc_threshold: 0.85,
            min_anomaly_area_um2: 9.0,
            variance_floor: 1e-3,
            flat_tolerance: 0.03,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileRecord {
    pub row: usize,
    pub col: usize,
    /// Top-left pixel and size.
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
    /// `None` for flat tiles, which are judged by `mean_abs_diff` instead.
    pub ncc_score: Option<f64>,
    pub mean_abs_diff: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyRegion {
    /// `[x0, y0, x1, y1]`, exclusive upper bounds.
    pub bbox_px: [usize; 4],
    pub bbox_um: [f64; 4],
    pub area_um2: f64,
    pub tile_count: usize,
    /// Lowest NCC among member tiles; `None` if all members are flat tiles.
    pub worst_ncc_score: Option<f64>,
    pub tiles: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub tile_size: usize,
    pub tiles_x: usize,
    pub tiles_y: usize,
    pub microns_per_pixel: f64,
    /// Row-major tile records.
    pub tiles: Vec<TileRecord>,
    pub confidence: f64,
    pub confidence_definition: String,
    pub anomalies: Vec<AnomalyRegion>,
    pub params: CompareParams,
}

impl ComparisonReport {
    pub fn failing_tiles(&self) -> impl Iterator<Item = &TileRecord> {
        self.tiles.iter().filter(|t| !t.passed)
    }

    pub fn tile(&self, row: usize, col: usize) -> &TileRecord {
        &self.tiles[row * self.tiles_x + col]
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n
}

fn score_tile(a: &[f64], b: &[f64], params: &CompareParams) -> (Option<f64>, f64, bool) {
    let mad = a.iter().zip(b).map(|(p, q)| (p - q).abs()).sum::<f64>() / a.len() as f64;
    let floor = params.variance_floor * FULL_SCALE * FULL_SCALE;
    if variance(a).max(variance(b)) < floor {
        (None, mad, mad <= params.flat_tolerance * FULL_SCALE)
    } else {
        let s = ncc(a, b);
        (Some(s), mad, s >= params.ncc_threshold)
    }
}

/// Compare a pre-registered sample against a reference tile by tile.
pub fn compare(reference: &IrisImage, sample: &IrisImage, params: &CompareParams) -> Result<ComparisonReport> {
    if (reference.width(), reference.height()) != (sample.width(), sample.height()) {
        return Err(Error::Unit(format!(
            "image sizes differ: {}x{} vs {}x{}",
            reference.width(),
            reference.height(),
            sample.width(),
            sample.height()
        )));
    }
    let mpp = reference.microns_per_pixel();
    if (mpp - sample.microns_per_pixel()).abs() > 0.01 * mpp {
        return Err(Error::Unit(format!(
            "pixel scales differ: {mpp} vs {} um/px",
            sample.microns_per_pixel()
        )));
    }
    let ts = params.tile_size_px;
    if ts < 2 || ts > reference.width() || ts > reference.height() {
        return Err(Error::Config(format!(
            "tile size {ts} px must be at least 2 and fit in the {}x{} image",
            reference.width(),
            reference.height()
        )));
    }
    if !(-1.0..=1.0).contains(&params.ncc_threshold) {
        return Err(Error::Config(format!("NCC threshold {} outside [-1, 1]", params.ncc_threshold)));
    }
    let tiles_x = reference.width().div_ceil(ts);
    let tiles_y = reference.height().div_ceil(ts);
    let mut tiles = Vec::with_capacity(tiles_x * tiles_y);
    let mut a = Vec::with_capacity(ts * ts);
    let mut b = Vec::with_capacity(ts * ts);
    for row in 0..tiles_y {
        for col in 0..tiles_x {
            let (x, y) = (col * ts, row * ts);
            let w = ts.min(reference.width() - x);
            let h = ts.min(reference.height() - y);
            a.clear();
            b.clear();
            for yy in y..y + h {
                a.extend_from_slice(&reference.row(yy)[x..x + w]);
                b.extend_from_slice(&sample.row(yy)[x..x + w]);
            }
            let (ncc_score, mean_abs_diff, passed) = score_tile(&a, &b, params);
            tiles.push(TileRecord {
                row,
                col,
                x,
                y,
                width: w,
                height: h,
                ncc_score,
                mean_abs_diff,
                passed,
            });
        }
    }
    let passing = tiles.iter().filter(|t| t.passed).count();
    let confidence = passing as f64 / tiles.len() as f64;
    let anomalies = find_anomalies(&tiles, tiles_x, tiles_y, ts, mpp, params.min_anomaly_area_um2);
    Ok(ComparisonReport {
        tile_size: ts,
        tiles_x,
        tiles_y,
        microns_per_pixel: mpp,
        tiles,
        confidence,
        confidence_definition: CONFIDENCE_DEFINITION.to_string(),
        anomalies,
        params: *params,
    })
}

/// 4-connected components of failing tiles, scanned row-major, keeping
/// those with area at least `min_area_um2`.
fn find_anomalies(
    tiles: &[TileRecord],
    tiles_x: usize,
    tiles_y: usize,
    tile_size: usize,
    mpp: f64,
    min_area_um2: f64,
) -> Vec<AnomalyRegion> {
    let tile_area = (tile_size as f64 * mpp).powi(2);
    let mut seen = vec![false; tiles.len()];
    let mut out = Vec::new();
    for start in 0..tiles.len() {
        if seen[start] || tiles[start].passed {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut members = Vec::new();
        while let Some(i) = queue.pop_front() {
            members.push(i);
            let (r, c) = (i / tiles_x, i % tiles_x);
            let mut visit = |j: usize| {
                if !seen[j] && !tiles[j].passed {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < tiles_x {
                visit(i + 1);
            }
            if r > 0 {
                visit(i - tiles_x);
            }
            if r + 1 < tiles_y {
                visit(i + tiles_x);
            }
        }
        members.sort_unstable();
        let area = members.len() as f64 * tile_area;
        if area < min_area_um2 {
            continue;
        }
        let x0 = members.iter().map(|&i| tiles[i].x).min().unwrap();
        let y0 = members.iter().map(|&i| tiles[i].y).min().unwrap();
        let x1 = members.iter().map(|&i| tiles[i].x + tiles[i].width).max().unwrap();
        let y1 = members.iter().map(|&i| tiles[i].y + tiles[i].height).max().unwrap();
        let worst = members
            .iter()
            .filter_map(|&i| tiles[i].ncc_score)
            .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.min(s))));
        out.push(AnomalyRegion {
            bbox_px: [x0, y0, x1, y1],
            bbox_um: [x0 as f64 * mpp, y0 as f64 * mpp, x1 as f64 * mpp, y1 as f64 * mpp],
            area_um2: area,
            tile_count: members.len(),
            worst_ncc_score: worst,
            tiles: members.iter().map(|&i| (tiles[i].row, tiles[i].col)).collect(),
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Inspect,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub verdict: Verdict,
    pub confidence: f64,
    pub reasons: Vec<String>,
}

impl std::fmt::Display for Summary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let v = match self.verdict {
            Verdict::Pass => "PASS",
            Verdict::Inspect => "INSPECT",
            Verdict::Fail => "FAIL",
        };
        writeln!(f, "verdict: {v} (confidence {:.4})", self.confidence)?;
        for r in &self.reasons {
            writeln!(f, "  - {r}")?;
        }
        Ok(())
    }
}

/// Pass when every tile passes, fail when any anomaly region exists,
/// inspect otherwise (failing tiles that never reach the minimum area).
pub fn confidence_summary(report: &ComparisonReport) -> Summary {
    let failing = report.failing_tiles().count();
    let total = report.tiles.len();
    let mut reasons = Vec::new();
    let verdict = if failing == 0 {
        reasons.push(format!("all {total} tiles match the reference"));
        Verdict::Pass
    } else if !report.anomalies.is_empty() {
        for a in &report.anomalies {
            let [x0, y0, x1, y1] = a.bbox_um;
            reasons.push(format!(
                "anomaly of {:.1} um2 ({} tiles) at x {x0:.1}..{x1:.1} um, y {y0:.1}..{y1:.1} um{}",
                a.area_um2,
                a.tile_count,
                a.worst_ncc_score.map(|s| format!(", worst NCC {s:.3}")).unwrap_or_default()
            ));
        }
        Verdict::Fail
    } else {
        reasons.push(format!(
            "{failing} of {total} tiles fail but no connected region reaches {} um2",
            report.params.min_anomaly_area_um2
        ));
        Verdict::Inspect
    };
    Summary {
        verdict,
        confidence: report.confidence,
        reasons,
    }
}

/// 8-bit overlay: the reference at half brightness, failing tiles lifted
/// into the upper half of the range.
pub fn failing_tile_heatmap(report: &ComparisonReport, reference: &IrisImage) -> Greymap {
    let (w, h) = (reference.width(), reference.height());
    let (lo, hi) = reference.min_max();
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut samples = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let base = ((reference.get(x, y) - lo) / span * 127.0).round() as u16;
            let t = report.tile(y / report.tile_size, x / report.tile_size);
            samples.push(if t.passed { base } else { 128 + base });
        }
    }
    Greymap {
        width: w,
        height: h,
        maxval: 255,
        samples,
    }
}
