use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use iris_core::fsio::write_atomic;
use iris_core::imager::{self, tile_signal, TilingParams};
use iris_core::layout::{layout_paths, LayoutPlan};
use iris_core::optics::{self, load_curves, SignalBudget};
use iris_core::verify::failing_tile_heatmap;
use iris_core::{
    compare, confidence_summary, fig12_like_plan, inject_trojan, load_layout, register, required_state_bits,
    save_layout, stitch, synthesize_layout, CompareParams, IrisImage, NodeTable, NoiseParams, OpticalConfig,
    StitchTile, Verdict,
};

use crate::args::*;

/// What a command did, for the manifest and the exit status.
#[derive(Debug, Default)]
pub struct Outcome {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Main output, used to place the manifest.
    pub primary: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Effective settings after defaults, config files and overrides.
    pub resolved: Option<serde_json::Value>,
    pub exit_code: u8,
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

fn save_image(img: &IrisImage, path: &Path, outcome: &mut Outcome) -> Result<()> {
    ensure_parent(path)?;
    img.save(path)?;
    outcome.outputs.push(path.to_path_buf());
    outcome.outputs.push(imager::sidecar_path(path));
    Ok(())
}

pub fn budget(args: &BudgetArgs) -> Result<Outcome> {
    let (absorption, sensitivity) = load_curves(args.curves_dir.as_deref())?;
    let eval = |thickness: f64| -> Result<SignalBudget> {
        let cfg = OpticalConfig {
            wavelength_nm: args.wavelength_nm,
            silicon_thickness_um: thickness,
            passes: args.passes,
            ..Default::default()
        };
        Ok(optics::signal_budget(&cfg, &absorption, &sensitivity, args.base_exposure_s)?)
    };
    let depth = optics::absorption_depth(&absorption, args.wavelength_nm)?;
    let thicknesses = match &args.sweep_thickness_um {
        Some(sweep) => sweep.values(),
        None => vec![args.thickness_um],
    };
    let mut csv = String::from(
        "wavelength_nm,thickness_um,passes,absorption_depth_um,transmission,sensitivity,combined,reduction_factor,suggested_exposure_s\n",
    );
    let mut rows = Vec::new();
    for &t in &thicknesses {
        let b = eval(t)?;
        let _ = writeln!(
            csv,
            "{},{},{},{:.6},{:.6e},{:.6},{:.6e},{:.6},{:.6}",
            args.wavelength_nm,
            t,
            args.passes,
            depth,
            b.transmission,
            b.sensitivity,
            b.combined,
            b.reduction_factor,
            b.suggested_exposure_s
        );
        rows.push(b);
    }
    if args.sweep_thickness_um.is_some() {
        print!("{csv}");
    } else {
        let b = rows[0];
        println!("wavelength_nm        {:>12}", args.wavelength_nm);
        println!("thickness_um         {:>12}", args.thickness_um);
        println!("passes               {:>12}", args.passes);
        println!("absorption_depth_um  {depth:>12.4}");
        println!();
        println!("{:<20} {:>12} {:>12}", "factor", "value", "reduction");
        println!("{:<20} {:>12.6} {:>12.4}", "transmission", b.transmission, 1.0 / b.transmission);
        println!("{:<20} {:>12.6} {:>12.4}", "sensitivity", b.sensitivity, 1.0 / b.sensitivity);
        println!("{:<20} {:>12.6} {:>12.4}", "combined", b.combined, b.reduction_factor);
        println!();
        println!(
            "suggested_exposure_s {:>12.4}  (base {} s)",
            b.suggested_exposure_s, args.base_exposure_s
        );
    }
    let mut outcome = Outcome::default();
    if let Some(dir) = &args.curves_dir {
        outcome.inputs.push(dir.clone());
    }
    if let Some(path) = &args.csv {
        write_text(path, &csv)?;
        outcome.outputs.push(path.clone());
        outcome.primary = Some(path.clone());
    }
    Ok(outcome)
}

pub fn plan(args: &PlanArgs) -> Result<Outcome> {
    let plan = LayoutPlan {
        grid_pitch_um: args.grid_pitch_um,
        ..fig12_like_plan(args.die_width_um, args.die_height_um)
    };
    plan.validate()?;
    write_text(&args.out, &pretty(&plan))?;
    println!(
        "wrote {} ({} regions, {} x {} um)",
        args.out.display(),
        plan.regions.len(),
        args.die_width_um,
        args.die_height_um
    );
    Ok(Outcome {
        outputs: vec![args.out.clone()],
        primary: Some(args.out.clone()),
        ..Default::default()
    })
}

fn load_plan(path: Option<&Path>) -> Result<LayoutPlan> {
    match path {
        None => Ok(fig12_like_plan(855.04, 855.04)),
        Some(p) => {
            let text = iris_core::fsio::read_string(p)?;
            let plan: LayoutPlan =
                serde_json::from_str(&text).with_context(|| format!("parsing plan {}", p.display()))?;
            plan.validate()?;
            Ok(plan)
        }
    }
}

fn save_layout_outputs(layout: &iris_core::DieLayout, out: &Path, outcome: &mut Outcome) -> Result<()> {
    save_layout(layout, out)?;
    let (json, pgm) = layout_paths(out);
    outcome.outputs.push(json);
    outcome.outputs.push(pgm);
    outcome.primary = Some(out.to_path_buf());
    Ok(())
}

pub fn synth(args: &SynthArgs) -> Result<Outcome> {
    let plan = load_plan(args.plan.as_deref())?;
    let layout = synthesize_layout(&plan, args.seed)?;
    let mut outcome = Outcome {
        inputs: args.plan.iter().cloned().collect(),
        seed: Some(args.seed),
        ..Default::default()
    };
    save_layout_outputs(&layout, &args.out, &mut outcome)?;
    let (w, h) = layout.grid_dims();
    println!("wrote {} ({w} x {h} samples at {} um)", args.out.display(), layout.grid_pitch_um());
    Ok(outcome)
}

fn resolve_optics(args: &OpticsArgs) -> Result<OpticalConfig> {
    let mut cfg = match &args.config {
        Some(p) => OpticalConfig::load(p)?,
        None => OpticalConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(v) = args.wavelength_nm {
        cfg.wavelength_nm = v;
    }
    if let Some(v) = args.thickness_um {
        cfg.silicon_thickness_um = v;
    }
    if let Some(v) = args.um_per_px {
        cfg.microns_per_pixel = v;
    }
    if let Some(v) = args.exposure_s {
        cfg.exposure_s = v;
    }
    if let Some(v) = args.read_noise_dn {
        cfg.noise.read_noise_sigma = v;
    }
    if args.no_noise {
        cfg.noise = NoiseParams::off();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn optics_inputs(args: &OpticsArgs, layout: &Path) -> Vec<PathBuf> {
    let mut v = vec![layout.to_path_buf()];
    v.extend(args.config.iter().cloned());
    v.extend(args.curves_dir.iter().cloned());
    v
}

pub fn render(args: &RenderArgs) -> Result<Outcome> {
    let cfg = resolve_optics(&args.optics)?;
    let (absorption, sensitivity) = load_curves(args.optics.curves_dir.as_deref())?;
    let layout = load_layout(&args.layout)?;
    let img = iris_core::render(&layout, &cfg, &absorption, &sensitivity)?;
    let mut outcome = Outcome {
        inputs: optics_inputs(&args.optics, &args.layout),
        seed: Some(cfg.seed),
        resolved: Some(serde_json::to_value(&cfg)?),
        primary: Some(args.out.clone()),
        ..Default::default()
    };
    save_image(&img, &args.out, &mut outcome)?;
    println!(
        "wrote {} ({} x {} px, {:.4} um/px)",
        args.out.display(),
        img.width(),
        img.height(),
        img.microns_per_pixel()
    );
    Ok(outcome)
}

pub fn inject(args: &InjectArgs) -> Result<Outcome> {
    let layout = load_layout(&args.layout)?;
    let modified = inject_trojan(&layout, args.center_um, args.area_um2, args.delta)?;
    let mut outcome = Outcome {
        inputs: vec![args.layout.clone()],
        ..Default::default()
    };
    save_layout_outputs(&modified, &args.out, &mut outcome)?;
    println!(
        "wrote {} (patch of {} um2 at {:?} um, delta {})",
        args.out.display(),
        args.area_um2,
        args.center_um,
        args.delta
    );
    Ok(outcome)
}

pub const TILE_INDEX: &str = "tiles.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TileEntry {
    pub file: String,
    pub grid_pos: (usize, usize),
    pub nominal_offset: (usize, usize),
    /// Where the tile really came from; not used by `stitch`.
    pub true_offset: (usize, usize),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TileIndex {
    pub frame_px: (usize, usize),
    pub microns_per_pixel: f64,
    pub tiling: TilingParams,
    pub tiles: Vec<TileEntry>,
}

pub fn capture(args: &CaptureArgs) -> Result<Outcome> {
    let cfg = resolve_optics(&args.optics)?;
    let (absorption, sensitivity) = load_curves(args.optics.curves_dir.as_deref())?;
    let layout = load_layout(&args.layout)?;
    let signal = imager::render_signal(&layout, &cfg, &absorption, &sensitivity)?;
    let tiling = TilingParams {
        tile_px: (args.tile_px, args.tile_px),
        overlap_px: args.overlap_px,
        jitter_px: args.jitter_px,
        seed: cfg.seed,
    };
    let tiles = tile_signal(&signal, &cfg.noise, &tiling)?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut outcome = Outcome {
        inputs: optics_inputs(&args.optics, &args.layout),
        seed: Some(cfg.seed),
        resolved: Some(serde_json::json!({ "optics": cfg, "tiling": tiling })),
        primary: Some(args.out.clone()),
        ..Default::default()
    };
    let mut entries = Vec::with_capacity(tiles.len());
    for t in &tiles {
        let file = format!("tile_r{:02}_c{:02}.pgm", t.grid_pos.0, t.grid_pos.1);
        save_image(&t.image, &args.out.join(&file), &mut outcome)?;
        entries.push(TileEntry {
            file,
            grid_pos: t.grid_pos,
            nominal_offset: t.nominal_offset,
            true_offset: t.true_offset,
        });
    }
    let index = TileIndex {
        frame_px: (signal.width(), signal.height()),
        microns_per_pixel: signal.microns_per_pixel(),
        tiling,
        tiles: entries,
    };
    let index_path = args.out.join(TILE_INDEX);
    write_text(&index_path, &pretty(&index))?;
    outcome.outputs.push(index_path);
    println!(
        "wrote {} tiles of {} px from a {} x {} px frame to {}",
        tiles.len(),
        args.tile_px,
        signal.width(),
        signal.height(),
        args.out.display()
    );
    Ok(outcome)
}

pub fn register_cmd(args: &RegisterArgs) -> Result<Outcome> {
    let reference = IrisImage::load(&args.reference)?;
    let sample = IrisImage::load(&args.sample)?;
    let offset = register(&reference, &sample, args.radius_px)?;
    println!("dx={} dy={} score={:.3}", offset.dx, offset.dy, offset.score);
    let mut outcome = Outcome {
        inputs: vec![args.reference.clone(), args.sample.clone()],
        ..Default::default()
    };
    if let Some(path) = &args.report {
        write_text(path, &pretty(&offset))?;
        outcome.outputs.push(path.clone());
        outcome.primary = Some(path.clone());
    }
    Ok(outcome)
}

pub fn stitch_cmd(args: &StitchArgs) -> Result<Outcome> {
    let index_path = args.tiles.join(TILE_INDEX);
    let text = iris_core::fsio::read_string(&index_path)?;
    let index: TileIndex =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", index_path.display()))?;
    let tiles = index
        .tiles
        .iter()
        .map(|e| {
            Ok(StitchTile {
                image: IrisImage::load(&args.tiles.join(&e.file))?,
                nominal_offset: e.nominal_offset,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let overlap = args.overlap_px.unwrap_or(index.tiling.overlap_px);
    let stitched = stitch(&tiles, overlap, args.radius_px)?;
    let mut outcome = Outcome {
        inputs: vec![args.tiles.clone()],
        primary: Some(args.out.clone()),
        ..Default::default()
    };
    save_image(&stitched.mosaic, &args.out, &mut outcome)?;
    if let Some(path) = &args.report {
        write_text(path, &pretty(&stitched.report))?;
        outcome.outputs.push(path.clone());
    }
    let worst = stitched.report.pairs.iter().map(|p| p.score).fold(f64::INFINITY, f64::min);
    let (w, h) = stitched.report.mosaic_size;
    println!(
        "stitched {} x {} tiles into {w} x {h} px, {} pairs, lowest pair score {:.3}",
        stitched.report.rows,
        stitched.report.cols,
        stitched.report.pairs.len(),
        if worst.is_finite() { worst } else { 1.0 }
    );
    Ok(outcome)
}

pub const EXIT_COMPARE_FAIL: u8 = 3;
pub const EXIT_COMPARE_INSPECT: u8 = 4;

pub fn compare_cmd(args: &CompareArgs) -> Result<Outcome> {
    let reference = IrisImage::load(&args.reference)?;
    let sample = IrisImage::load(&args.sample)?;
    let defaults = CompareParams::default();
    let params = CompareParams {
        tile_size_px: args.tile_px,
        ncc_threshold: args.threshold,
        min_anomaly_area_um2: args.min_area_um2,
        variance_floor: args.variance_floor.unwrap_or(defaults.variance_floor),
        ..defaults
    };
    let report = compare(&reference, &sample, &params)?;
    let summary = confidence_summary(&report);
    print!("{summary}");
    let mut outcome = Outcome {
        inputs: vec![args.reference.clone(), args.sample.clone()],
        resolved: Some(serde_json::to_value(params)?),
        exit_code: match summary.verdict {
            Verdict::Pass => 0,
            Verdict::Fail => EXIT_COMPARE_FAIL,
            Verdict::Inspect => EXIT_COMPARE_INSPECT,
        },
        ..Default::default()
    };
    if let Some(path) = &args.report {
        let mut doc = serde_json::to_value(&report).expect("report serializes");
        doc["verdict"] = serde_json::to_value(summary.verdict).expect("verdict serializes");
        doc["reasons"] = serde_json::to_value(&summary.reasons).expect("reasons serialize");
        write_text(path, &pretty(&doc))?;
        outcome.outputs.push(path.clone());
        outcome.primary = Some(path.clone());
    }
    if let Some(path) = &args.heatmap {
        ensure_parent(path)?;
        write_atomic(path, &failing_tile_heatmap(&report, &reference).encode())?;
        outcome.outputs.push(path.clone());
        outcome.primary.get_or_insert(path.clone());
    }
    Ok(outcome)
}

pub fn bits(args: &BitsArgs) -> Result<Outcome> {
    let table = match &args.nodes_csv {
        Some(p) => NodeTable::load(p)?,
        None => NodeTable::bundled(),
    };
    let mut node = table.find(&args.node)?.clone();
    if args.area_scale != 1.0 {
        node = node.scaled(args.area_scale);
    }
    let cfg = OpticalConfig {
        microns_per_pixel: args.um_per_px,
        ..Default::default()
    };
    let budget = required_state_bits(&node, &cfg, args.gates_per_bit, args.pixels)?;
    if args.json {
        print!("{}", budget.to_json());
    } else {
        print!("{}", budget.to_table());
    }
    Ok(Outcome {
        inputs: args.nodes_csv.iter().cloned().collect(),
        resolved: Some(serde_json::to_value(&budget)?),
        ..Default::default()
    })
}
