//! Procedural textures for each block kind.

use rand::Rng;

use super::{encode_reflectance, grid_len, sample_range, BlockKind, DieLayout, LayoutPlan, Region};
use crate::error::Result;
use crate::seed;

/// Render a plan into a reflectance grid. Pure in `(plan, seed)`.
pub fn synthesize_layout(plan: &LayoutPlan, seed: u64) -> Result<DieLayout> {
    plan.validate()?;
    let pitch = plan.grid_pitch_um;
    let width = grid_len(plan.die_size_um[0], pitch);
    let height = grid_len(plan.die_size_um[1], pitch);
    let mut grid = vec![plan.background_reflectance; width * height];

    for (index, region) in plan.regions.iter().enumerate() {
        let region_seed = seed::derive_indexed(seed, "layout.region", index as u64);
        let texture = Texture::new(region, region_seed);
        let [x0, y0] = region.origin_um;
        let [w, h] = region.size_um;
        let cols = sample_range(x0, x0 + w, pitch, width);
        for row in sample_range(y0, y0 + h, pitch, height) {
            let v = (row as f64 + 0.5) * pitch - y0;
            for col in cols.clone() {
                let u = (col as f64 + 0.5) * pitch - x0;
                grid[row * width + col] = texture.sample(u, v);
            }
        }
    }

    if plan.diagonal_texture != 0.0 {
        // slight periodic surface relief running at 45 degrees
        let period = 40.0;
        let k = std::f64::consts::TAU / (period * std::f64::consts::SQRT_2);
        for row in 0..height {
            let y = (row as f64 + 0.5) * pitch;
            for col in 0..width {
                let x = (col as f64 + 0.5) * pitch;
                grid[row * width + col] += plan.diagonal_texture * (k * (x + y)).sin();
            }
        }
    }

    let codes = grid.into_iter().map(encode_reflectance).collect();
    let provenance = if plan.provenance.is_empty() {
        format!("synthesized, seed {seed}")
    } else {
        format!("{}; synthesized, seed {seed}", plan.provenance)
    };
    DieLayout::from_codes(plan.die_size_um, pitch, codes, plan.regions.clone(), provenance)
}

/// Bilinearly interpolated lattice noise in `[-1, 1]`.
struct ValueNoise {
    cell_um: f64,
    cols: usize,
    values: Vec<f64>,
}

impl ValueNoise {
    fn new(rng: &mut impl Rng, extent: [f64; 2], cell_um: f64) -> Self {
        let cols = (extent[0] / cell_um).ceil() as usize + 2;
        let rows = (extent[1] / cell_um).ceil() as usize + 2;
        let values = (0..cols * rows).map(|_| rng.random_range(-1.0..=1.0)).collect();
        ValueNoise { cell_um, cols, values }
    }

    fn at(&self, u: f64, v: f64) -> f64 {
        let (fu, fv) = (u / self.cell_um, v / self.cell_um);
        let (iu, iv) = (fu.floor() as usize, fv.floor() as usize);
        let (tu, tv) = (smooth(fu - iu as f64), smooth(fv - iv as f64));
        let g = |c: usize, r: usize| self.values[r * self.cols + c];
        let top = g(iu, iv) * (1.0 - tu) + g(iu + 1, iv) * tu;
        let bottom = g(iu, iv + 1) * (1.0 - tu) + g(iu + 1, iv + 1) * tu;
        top * (1.0 - tv) + bottom * tv
    }
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn frac(x: f64, pitch: f64) -> f64 {
    (x / pitch).fract()
}

/// One standard-cell row: cell boundaries (µm from row start) and the
/// metal density of each cell.
struct CellRow {
    edges: Vec<f64>,
    density: Vec<f64>,
}

enum Texture {
    StandardCell {
        row_pitch: f64,
        contrast: f64,
        rows: Vec<CellRow>,
        routing: ValueNoise,
    },
    RamMacro {
        pitch: f64,
        array_height: f64,
    },
    IoPad {
        center: (f64, f64),
        radius: f64,
    },
    DataConverter {
        pitch: f64,
    },
    NonVolatileMemory {
        pitch: f64,
        decoder_width: f64,
        decoder: ValueNoise,
    },
    Oscillator {
        pitch: f64,
        center: (f64, f64),
    },
    Filler {
        pitch: f64,
    },
}

/// Mean reflectance of standard-cell logic.
const CELL_LEVEL: f64 = 0.45;
/// Default peak-to-peak swing of per-cell metal density.
const CELL_CONTRAST: f64 = 0.30;
/// Amplitude of the slowly varying routing-density field over logic.
const ROUTING_AMPLITUDE: f64 = 0.06;

impl Texture {
    fn new(region: &Region, region_seed: u64) -> Self {
        let mut rng = seed::rng(region_seed);
        let p = region.texture;
        let [w, h] = region.size_um;
        match region.kind {
            BlockKind::StandardCell => {
                let row_pitch = p.row_pitch_um.unwrap_or(0.8);
                let n_rows = (h / row_pitch).ceil() as usize + 1;
                let rows = (0..n_rows)
                    .map(|_| {
                        let row_bias = rng.random_range(-0.15..=0.15);
                        let mut edges = vec![0.0];
                        let mut density = Vec::new();
                        while *edges.last().unwrap() < w {
                            let cell_w = rng.random_range(0.4..=3.2);
                            edges.push(edges.last().unwrap() + cell_w);
                            density.push((rng.random_range(0.0..=1.0f64) + row_bias).clamp(0.0, 1.0));
                        }
                        CellRow { edges, density }
                    })
                    .collect();
                Texture::StandardCell {
                    row_pitch,
                    contrast: p.contrast.unwrap_or(CELL_CONTRAST),
                    rows,
                    routing: ValueNoise::new(&mut rng, region.size_um, 25.0),
                }
            }
            BlockKind::RamMacro => {
                let pitch = p.cell_pitch_um.unwrap_or(2.0);
                let strip = ram_strip_height(pitch).min(h / 4.0);
                Texture::RamMacro {
                    pitch,
                    array_height: h - strip,
                }
            }
            BlockKind::IoPad => {
                let diameter = p.pad_diameter_um.unwrap_or(0.7 * w.min(h)).min(w.min(h));
                Texture::IoPad {
                    center: (w / 2.0, h / 2.0),
                    radius: diameter / 2.0,
                }
            }
            BlockKind::DataConverter => Texture::DataConverter {
                pitch: p.cell_pitch_um.unwrap_or(8.0),
            },
            BlockKind::NonVolatileMemory => Texture::NonVolatileMemory {
                pitch: p.cell_pitch_um.unwrap_or(1.2),
                decoder_width: (w * 0.08).clamp(2.0, 12.0),
                decoder: ValueNoise::new(&mut rng, region.size_um, 1.5),
            },
            BlockKind::Oscillator => Texture::Oscillator {
                pitch: p.cell_pitch_um.unwrap_or(4.0),
                center: (w / 2.0, h / 2.0),
            },
            BlockKind::Filler => Texture::Filler {
                pitch: p.cell_pitch_um.unwrap_or(10.0),
            },
        }
    }

    /// Reflectance at local coordinates `(u, v)` µm from the region origin.
    fn sample(&self, u: f64, v: f64) -> f64 {
        match self {
            Texture::StandardCell {
                row_pitch,
                contrast,
                rows,
                routing,
            } => {
                let r = ((v / row_pitch) as usize).min(rows.len() - 1);
                let within = frac(v, *row_pitch);
                // supply rails along each row boundary
                if within < 0.12 {
                    return 0.8;
                }
                let row = &rows[r];
                let c = row.edges.partition_point(|&e| e <= u).saturating_sub(1).min(row.density.len() - 1);
                CELL_LEVEL + contrast * (row.density[c] - 0.5) + ROUTING_AMPLITUDE * routing.at(u, v)
            }
            Texture::RamMacro { pitch, array_height } => {
                if v < *array_height {
                    let (fu, fv) = (frac(u, *pitch), frac(v, *pitch));
                    if fu < 0.6 && fv < 0.5 {
                        0.9
                    } else {
                        0.65
                    }
                } else if frac(u, 2.0 * pitch) < 0.3 {
                    0.9
                } else {
                    0.35
                }
            }
            Texture::IoPad { center, radius } => {
                let (du, dv) = (u - center.0, v - center.1);
                if du * du + dv * dv <= radius * radius {
                    0.92
                } else if frac(u, 3.0) < 0.5 {
                    0.55
                } else {
                    0.3
                }
            }
            Texture::DataConverter { pitch } => {
                let col = (u / pitch) as usize;
                // routing channel every fourth column
                if col % 4 == 3 {
                    if frac(v, 1.0) < 0.4 {
                        0.7
                    } else {
                        0.35
                    }
                } else if frac(u, *pitch) < 0.75 && frac(v, *pitch) < 0.75 {
                    0.8
                } else {
                    0.4
                }
            }
            Texture::NonVolatileMemory {
                pitch,
                decoder_width,
                decoder,
            } => {
                if u < *decoder_width {
                    0.5 + 0.15 * decoder.at(u, v)
                } else if frac(v, *pitch) < 0.5 {
                    0.72
                } else {
                    0.5
                }
            }
            Texture::Oscillator { pitch, center } => {
                let ring = (u - center.0).abs().max((v - center.1).abs());
                if frac(ring, *pitch) < 0.5 {
                    0.85
                } else {
                    0.25
                }
            }
            Texture::Filler { pitch } => {
                let strap = 0.2 * pitch;
                if frac(u, *pitch) * pitch < strap || frac(v, *pitch) * pitch < strap {
                    0.85
                } else {
                    0.3
                }
            }
        }
    }
}

/// Height of the sense-amplifier strip along the bottom edge of a RAM macro.
pub(crate) fn ram_strip_height(cell_pitch_um: f64) -> f64 {
    (4.0 * cell_pitch_um).max(6.0)
}
