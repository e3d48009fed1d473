use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "iris", version, about = "Infrared backside die imaging: simulate, align, compare")]
pub struct Cli {
    /// Where to write the run manifest (default: next to the main output,
    /// or standard error when the command writes no files)
    #[arg(long, global = true, value_name = "PATH")]
    pub manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Signal budget: silicon transmission, sensor sensitivity and exposure
    Budget(BudgetArgs),
    /// Write the bundled controller floorplan as a layout plan
    Plan(PlanArgs),
    /// Synthesize a die layout from a plan
    Synth(SynthArgs),
    /// Render a layout to a 16-bit image
    Render(RenderArgs),
    /// Add a reflectance change to a square patch of a layout
    Inject(InjectArgs),
    /// Render a layout and capture it as overlapping jittered tiles
    Capture(CaptureArgs),
    /// Find the integer shift of one image against another
    Register(RegisterArgs),
    /// Assemble captured tiles into one image
    Stitch(StitchArgs),
    /// Tile-wise comparison of a sample image against a reference
    Compare(CompareArgs),
    /// Checksum state needed so a bypass is large enough to image
    Bits(BitsArgs),
    /// Re-run the command recorded in a manifest
    Replay(ReplayArgs),
}

fn wavelength(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    let (lo, hi) = iris_core::optics::WAVELENGTH_RANGE_NM;
    if (lo..=hi).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} nm is outside the {lo}..{hi} nm model range"))
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be >= 0"))
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be positive"))
    }
}

fn point(s: &str) -> Result<(f64, f64), String> {
    let (x, y) = s.split_once(',').ok_or("expected X,Y")?;
    let p = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
    Ok((p(x)?, p(y)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sweep {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Sweep {
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.start + i as f64 * self.step).collect()
    }
}

fn sweep(s: &str) -> Result<Sweep, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, c] = parts[..] else {
        return Err("expected START:STOP:STEP".into());
    };
    let sweep = Sweep {
        start: non_negative(a)?,
        stop: non_negative(b)?,
        step: positive(c)?,
    };
    if sweep.stop < sweep.start {
        return Err("STOP must not be below START".into());
    }
    Ok(sweep)
}

#[derive(Debug, Args, Serialize)]
pub struct BudgetArgs {
    /// Illumination wavelength
    #[arg(long, default_value_t = 1070.0, value_parser = wavelength)]
    pub wavelength_nm: f64,
    /// Remaining silicon thickness
    #[arg(long, default_value_t = 300.0, value_parser = non_negative)]
    pub thickness_um: f64,
    /// 1 = illumination path only, 2 = in and back out
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub passes: u8,
    /// Exposure that saturates nicely with no attenuation
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub base_exposure_s: f64,
    /// Directory holding absorption_depth.csv and sensor_sensitivity.csv
    #[arg(long)]
    pub curves_dir: Option<PathBuf>,
    /// Evaluate a thickness range START:STOP:STEP and emit CSV
    #[arg(long, alias = "sweep-thickness", value_parser = sweep, value_name = "START:STOP:STEP")]
    pub sweep_thickness_um: Option<Sweep>,
    /// Also write the result as CSV to this file
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct PlanArgs {
    #[arg(long, default_value_t = 855.04, value_parser = positive)]
    pub die_width_um: f64,
    #[arg(long, default_value_t = 855.04, value_parser = positive)]
    pub die_height_um: f64,
    /// Layout sample pitch
    #[arg(long, default_value_t = iris_core::layout::DEFAULT_GRID_PITCH_UM, value_parser = positive)]
    pub grid_pitch_um: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Layout plan JSON (default: bundled controller floorplan, 855.04 um square)
    #[arg(long)]
    pub plan: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (or a .json path)
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct OpticsArgs {
    /// Optical configuration JSON (default: built-in defaults)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configuration's noise seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Illumination wavelength
    #[arg(long, value_parser = wavelength)]
    pub wavelength_nm: Option<f64>,
    /// Remaining silicon thickness
    #[arg(long, value_parser = non_negative)]
    pub thickness_um: Option<f64>,
    /// Object-side pixel pitch
    #[arg(long, value_parser = positive)]
    pub um_per_px: Option<f64>,
    #[arg(long, value_parser = positive)]
    pub exposure_s: Option<f64>,
    /// Gaussian read noise in digital numbers
    #[arg(long, value_parser = non_negative)]
    pub read_noise_dn: Option<f64>,
    /// Render without sensor noise
    #[arg(long)]
    pub no_noise: bool,
    /// Directory holding absorption_depth.csv and sensor_sensitivity.csv
    #[arg(long)]
    pub curves_dir: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct RenderArgs {
    /// Layout directory or layout JSON
    #[arg(long)]
    pub layout: PathBuf,
    #[command(flatten)]
    pub optics: OpticsArgs,
    /// Output PGM; a JSON sidecar is written next to it
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct InjectArgs {
    #[arg(long)]
    pub layout: PathBuf,
    /// Center of the patch, X,Y from the die's top-left corner
    #[arg(long, value_parser = point, value_name = "X,Y", allow_hyphen_values = true)]
    pub center_um: (f64, f64),
    #[arg(long, value_parser = non_negative)]
    pub area_um2: f64,
    /// Reflectance change, clamped to [0, 1] per sample
    #[arg(long, allow_hyphen_values = true)]
    pub delta: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CaptureArgs {
    #[arg(long)]
    pub layout: PathBuf,
    #[command(flatten)]
    pub optics: OpticsArgs,
    /// Square tile side
    #[arg(long, default_value_t = 192)]
    pub tile_px: usize,
    #[arg(long, default_value_t = 32)]
    pub overlap_px: usize,
    /// Maximum stage positioning error per axis
    #[arg(long, default_value_t = 3)]
    pub jitter_px: usize,
    /// Output directory for tiles and tiles.json
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct RegisterArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub sample: PathBuf,
    #[arg(long, alias = "radius", default_value_t = 8)]
    pub radius_px: usize,
    /// Write the offset as JSON
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct StitchArgs {
    /// Directory written by `capture` (reads tiles.json)
    #[arg(long)]
    pub tiles: PathBuf,
    /// Overlap between neighbours (default: from tiles.json)
    #[arg(long, alias = "overlap")]
    pub overlap_px: Option<usize>,
    #[arg(long, alias = "radius", default_value_t = 8)]
    pub radius_px: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Pairwise offsets and placements as JSON
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct CompareArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub sample: PathBuf,
    #[arg(long, alias = "tile", default_value_t = 16)]
    pub tile_px: usize,
    /// Minimum tile NCC
    #[arg(long, default_value_t = 0.85, allow_hyphen_values = true)]
    pub threshold: f64,
    #[arg(long, default_value_t = 9.0, value_parser = non_negative)]
    pub min_area_um2: f64,
    /// Flat-tile variance floor as a fraction of full scale squared
    #[arg(long, value_parser = non_negative)]
    pub variance_floor: Option<f64>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// 8-bit PGM with failing tiles highlighted
    #[arg(long)]
    pub heatmap: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct BitsArgs {
    #[arg(long, default_value = "28nm")]
    pub node: String,
    #[arg(long, default_value_t = 1.67, value_parser = positive)]
    pub um_per_px: f64,
    /// NAND2-equivalent gates of bypass logic per checksum bit
    #[arg(long, default_value_t = iris_core::hardening::DEFAULT_GATES_PER_BIT)]
    pub gates_per_bit: u32,
    /// Pixels a bypass must cover to be seen
    #[arg(long, default_value_t = iris_core::hardening::DEFAULT_PIXELS_REQUIRED,
          value_parser = clap::value_parser!(u32).range(1..))]
    pub pixels: u32,
    /// Multiply every cell area of the node by this factor
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub area_scale: f64,
    /// Node table CSV (default: bundled)
    #[arg(long)]
    pub nodes_csv: Option<PathBuf>,
    /// Print JSON instead of a table
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run
    pub run_manifest: PathBuf,
    /// Fail unless every output matches the digests recorded in the manifest
    #[arg(long)]
    pub verify: bool,
}
