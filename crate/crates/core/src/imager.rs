//! Forward model: die layout + optics → simulated backside IR image.
//!
//! The chain is illumination × reflectance, blurred by a Gaussian PSF whose
//! FWHM equals the Rayleigh limit, area-averaged from the layout grid down
//! to the pixel grid, scaled by gain × exposure × signal budget, then noise
//! and 16-bit quantization. Blur and area-averaging are both separable, so
//! each axis is handled by one precomputed sparse operator.

use std::path::{Path, PathBuf};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio;
use crate::layout::DieLayout;
use crate::optics::{self, OpticalConfig, SpectralCurve, FULL_SCALE};
use crate::pgm::Greymap;
use crate::seed;

/// Sensor noise. Intensities are in output digital numbers (0–65535).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseParams {
    pub read_noise_sigma: f64,
    /// Adds signal-proportional variance (one DN² per DN of signal).
    pub shot_noise: bool,
    pub enabled: bool,
}

/// Default read noise: 0.5% of full scale.
pub const DEFAULT_READ_NOISE: f64 = 0.005 * FULL_SCALE;

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams {
            read_noise_sigma: DEFAULT_READ_NOISE,
            shot_noise: false,
            enabled: true,
        }
    }
}

impl NoiseParams {
    pub fn off() -> Self {
        NoiseParams {
            enabled: false,
            ..Default::default()
        }
    }

    pub fn read_only(sigma: f64) -> Self {
        NoiseParams {
            read_noise_sigma: sigma,
            shot_noise: false,
            enabled: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.read_noise_sigma >= 0.0 && self.read_noise_sigma.is_finite()) {
            return Err(Error::Domain(format!(
                "read noise sigma must be >= 0, got {}",
                self.read_noise_sigma
            )));
        }
        Ok(())
    }

    fn is_active(&self) -> bool {
        self.enabled && (self.read_noise_sigma > 0.0 || self.shot_noise)
    }
}

/// Provenance carried alongside an image.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImageMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<OpticalConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub source: String,
}

/// A 2-D intensity raster, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct IrisImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
    microns_per_pixel: f64,
    pub metadata: ImageMetadata,
}

impl IrisImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>, microns_per_pixel: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Domain(format!("image must be at least 1x1, got {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::Domain(format!(
                "{} pixels do not fill a {width}x{height} image",
                pixels.len()
            )));
        }
        if !(microns_per_pixel > 0.0 && microns_per_pixel.is_finite()) {
            return Err(Error::Domain(format!(
                "microns per pixel must be positive, got {microns_per_pixel}"
            )));
        }
        Ok(IrisImage {
            width,
            height,
            pixels,
            microns_per_pixel,
            metadata: ImageMetadata::default(),
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        microns_per_pixel: f64,
        f: impl Fn(usize, usize) -> f64,
    ) -> Result<Self> {
        let pixels = (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        Self::new(width, height, pixels, microns_per_pixel)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn microns_per_pixel(&self) -> f64 {
        self.microns_per_pixel
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> IrisImage {
        IrisImage {
            pixels: self.pixels.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.pixels
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn crop(&self, x: usize, y: usize, width: usize, height: usize) -> Result<IrisImage> {
        if width == 0 || height == 0 || x + width > self.width || y + height > self.height {
            return Err(Error::Bounds(format!(
                "crop {width}x{height} at ({x}, {y}) exceeds {}x{} image",
                self.width, self.height
            )));
        }
        let mut pixels = Vec::with_capacity(width * height);
        for row in y..y + height {
            pixels.extend_from_slice(&self.row(row)[x..x + width]);
        }
        Ok(IrisImage {
            width,
            height,
            pixels,
            microns_per_pixel: self.microns_per_pixel,
            metadata: self.metadata.clone(),
        })
    }

    /// Round to the nearest integer and clamp to `[0, 65535]`; never wraps.
    pub fn quantized(&self) -> IrisImage {
        self.map(quantize)
    }

    pub fn to_u16(&self) -> Vec<u16> {
        self.pixels.iter().map(|&v| quantize(v) as u16).collect()
    }

    /// Save as a 16-bit PGM with a JSON sidecar (same stem, `.json`).
    pub fn save(&self, path: &Path) -> Result<()> {
        let pgm = Greymap {
            width: self.width,
            height: self.height,
            maxval: 65535,
            samples: self.to_u16(),
        };
        fsio::write_atomic(path, &pgm.encode())?;
        let sidecar = ImageSidecar {
            width: self.width,
            height: self.height,
            microns_per_pixel: self.microns_per_pixel,
            metadata: self.metadata.clone(),
        };
        let mut text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
        text.push('\n');
        fsio::write_atomic(&sidecar_path(path), text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<IrisImage> {
        let pgm = Greymap::decode(&fsio::read(path)?, &path.display().to_string())?;
        let side_path = sidecar_path(path);
        let text = fsio::read_string(&side_path)?;
        let side: ImageSidecar = fsio::parse_json(&text, &side_path.display().to_string())?;
        if (side.width, side.height) != (pgm.width, pgm.height) {
            return Err(Error::Unit(format!(
                "{} describes a {}x{} image but the PGM is {}x{}",
                side_path.display(),
                side.width,
                side.height,
                pgm.width,
                pgm.height
            )));
        }
        let scale = 65535.0 / f64::from(pgm.maxval);
        let pixels = pgm.samples.iter().map(|&s| (f64::from(s) * scale).round()).collect();
        let mut img = IrisImage::new(pgm.width, pgm.height, pixels, side.microns_per_pixel)?;
        img.metadata = side.metadata;
        Ok(img)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ImageSidecar {
    width: usize,
    height: usize,
    microns_per_pixel: f64,
    #[serde(flatten)]
    metadata: ImageMetadata,
}

/// `img.pgm` → `img.json`.
pub fn sidecar_path(pgm_path: &Path) -> PathBuf {
    pgm_path.with_extension("json")
}

pub fn quantize(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.round().clamp(0.0, FULL_SCALE)
    }
}

/// A normalized square convolution kernel, row-major, odd side length.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel2D {
    pub radius: usize,
    pub weights: Vec<f64>,
}

impl Kernel2D {
    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn at(&self, dx: isize, dy: isize) -> f64 {
        let r = self.radius as isize;
        self.weights[((dy + r) * (2 * r + 1) + dx + r) as usize]
    }

    /// Full width at half maximum along the central row, in samples, by
    /// linear interpolation between the samples straddling half maximum.
    pub fn measured_fwhm(&self) -> f64 {
        let r = self.radius as isize;
        let peak = self.at(0, 0);
        let half = peak / 2.0;
        let mut dx = 0;
        while dx < r && self.at(dx + 1, 0) >= half {
            dx += 1;
        }
        if dx == r {
            return self.side() as f64;
        }
        let (a, b) = (self.at(dx, 0), self.at(dx + 1, 0));
        2.0 * (dx as f64 + (a - half) / (a - b))
    }
}

fn gaussian_1d(fwhm_samples: f64) -> Vec<f64> {
    let sigma = fwhm_samples / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
    let radius = (3.0 * sigma).ceil().max(0.0) as usize;
    let mut w: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-0.5 * d * d / (sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= sum);
    w
}

/// Isotropic Gaussian PSF sampled on the layout grid, FWHM equal to the
/// Rayleigh limit, truncated at ±3σ and normalized to unit sum.
pub fn psf_kernel(config: &OpticalConfig, grid_pitch_um: f64) -> Result<Kernel2D> {
    config.validate()?;
    let line = psf_line(config, grid_pitch_um)?;
    let radius = line.len() / 2;
    let mut weights: Vec<f64> = line.iter().flat_map(|&a| line.iter().map(move |&b| a * b)).collect();
    let sum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|v| *v /= sum);
    Ok(Kernel2D { radius, weights })
}

fn psf_line(config: &OpticalConfig, grid_pitch_um: f64) -> Result<Vec<f64>> {
    if !(grid_pitch_um > 0.0) {
        return Err(Error::Domain(format!("grid pitch must be positive, got {grid_pitch_um}")));
    }
    let fwhm = optics::diffraction_limit(config.wavelength_nm, config.numerical_aperture)?;
    Ok(gaussian_1d(fwhm / grid_pitch_um))
}

/// Gradient gain per unit tan(elevation).
pub const ILLUMINATION_GRADIENT_GAIN: f64 = 0.5;
/// Floor applied to the illumination field.
pub const ILLUMINATION_FLOOR: f64 = 0.05;

/// Oblique illumination: `1 + g·p`, where `p ∈ [-1, 1]` is the position
/// projected onto the azimuth direction (normalized by the die's extreme
/// corner) and `g = tan(elevation) × 0.5`; floored at 0.05.
#[derive(Debug, Clone, Copy)]
pub struct Illumination {
    center: (f64, f64),
    dir: (f64, f64),
    scale: f64,
}

impl Illumination {
    pub fn new(config: &OpticalConfig, die_size_um: [f64; 2]) -> Result<Self> {
        let elev = config.illumination_elevation_deg;
        if !(0.0..=60.0).contains(&elev) {
            return Err(Error::Domain(format!(
                "illumination elevation must be in [0, 60] degrees, got {elev}"
            )));
        }
        let gain = elev.to_radians().tan() * ILLUMINATION_GRADIENT_GAIN;
        let az = config.illumination_azimuth_deg.to_radians();
        // image rows grow downward, so "up" is -y
        let dir = (az.cos(), -az.sin());
        let half = (die_size_um[0] / 2.0, die_size_um[1] / 2.0);
        let extent = dir.0.abs() * half.0 + dir.1.abs() * half.1;
        let scale = if extent > 0.0 { gain / extent } else { 0.0 };
        Ok(Illumination {
            center: half,
            dir,
            scale,
        })
    }

    pub fn is_uniform(&self) -> bool {
        self.scale == 0.0
    }

    pub fn at(&self, x_um: f64, y_um: f64) -> f64 {
        if self.scale == 0.0 {
            return 1.0;
        }
        let p = (x_um - self.center.0) * self.dir.0 + (y_um - self.center.1) * self.dir.1;
        (1.0 + self.scale * p).max(ILLUMINATION_FLOOR)
    }
}

/// A scalar field sampled on the layout grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl Field {
    pub fn at(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.width + col]
    }
}

/// Illumination sampled at grid-sample centers.
pub fn illumination_field(config: &OpticalConfig, die_size_um: [f64; 2], grid_pitch_um: f64) -> Result<Field> {
    let illum = Illumination::new(config, die_size_um)?;
    let width = crate::layout::grid_len(die_size_um[0], grid_pitch_um);
    let height = crate::layout::grid_len(die_size_um[1], grid_pitch_um);
    let mut values = Vec::with_capacity(width * height);
    for row in 0..height {
        let y = (row as f64 + 0.5) * grid_pitch_um;
        for col in 0..width {
            values.push(illum.at((col as f64 + 0.5) * grid_pitch_um, y));
        }
    }
    Ok(Field { width, height, values })
}

/// Sparse operator mapping `n_in` grid samples to `n_out` pixels along one
/// axis: PSF convolution (edge-replicated) followed by area averaging.
struct AxisOperator {
    rows: Vec<(usize, Vec<f64>)>,
}

impl AxisOperator {
    fn new(n_in: usize, pitch: f64, n_out: usize, pixel: f64, psf: &[f64]) -> Self {
        let radius = psf.len() / 2;
        let extent = n_in as f64 * pitch;
        let rows = (0..n_out)
            .map(|j| {
                let lo = j as f64 * pixel;
                let hi = ((j + 1) as f64 * pixel).min(extent);
                // area-averaging weights over grid samples
                let first = ((lo / pitch).floor() as usize).min(n_in - 1);
                let last = (((hi / pitch).ceil() as usize).max(first + 1)).min(n_in);
                let mut avg: Vec<(usize, f64)> = (first..last)
                    .map(|i| {
                        let a = (i as f64 * pitch).max(lo);
                        let b = ((i + 1) as f64 * pitch).min(hi);
                        (i, (b - a).max(0.0))
                    })
                    .filter(|&(_, w)| w > 0.0)
                    .collect();
                let total: f64 = avg.iter().map(|&(_, w)| w).sum();
                if total > 0.0 {
                    avg.iter_mut().for_each(|(_, w)| *w /= total);
                } else {
                    avg = vec![(first, 1.0)];
                }
                let start = avg[0].0.saturating_sub(radius);
                let end = (avg[avg.len() - 1].0 + radius + 1).min(n_in);
                let mut w = vec![0.0; end - start];
                for &(i, d) in &avg {
                    for (k, &kw) in psf.iter().enumerate() {
                        let m = (i + k).saturating_sub(radius).min(n_in - 1);
                        w[m - start] += d * kw;
                    }
                }
                (start, w)
            })
            .collect();
        AxisOperator { rows }
    }

    fn apply(&self, input: &[f64], out: &mut [f64]) {
        for (o, (start, w)) in out.iter_mut().zip(&self.rows) {
            *o = w.iter().zip(&input[*start..]).map(|(a, b)| a * b).sum();
        }
    }
}

/// Pixel grid for a die: the pixel count is the die width divided by the
/// requested pitch, rounded; the effective pitch is then exactly
/// `die width / pixel count`.
pub fn pixel_grid(die_size_um: [f64; 2], requested_mpp: f64) -> Result<(usize, usize, f64)> {
    let nx = (die_size_um[0] / requested_mpp).round().max(1.0) as usize;
    let mpp = optics::microns_per_pixel(die_size_um[0], nx)?;
    let ny = (die_size_um[1] / mpp).round().max(1.0) as usize;
    Ok((nx, ny, mpp))
}

/// Scale from reflectance units to digital numbers: gain × exposure × combined.
pub fn signal_scale(config: &OpticalConfig, absorption: &SpectralCurve, sensitivity: &SpectralCurve) -> Result<f64> {
    let budget = optics::signal_budget(config, absorption, sensitivity, config.exposure_s)?;
    Ok(config.gain * config.exposure_s * budget.combined)
}

/// Noiseless pre-quantization render.
pub fn render_signal(
    layout: &DieLayout,
    config: &OpticalConfig,
    absorption: &SpectralCurve,
    sensitivity: &SpectralCurve,
) -> Result<IrisImage> {
    config.validate()?;
    let pitch = layout.grid_pitch_um();
    if config.microns_per_pixel < pitch {
        return Err(Error::Config(format!(
            "pixel pitch {} um is finer than the layout grid {} um",
            config.microns_per_pixel, pitch
        )));
    }
    let scale = signal_scale(config, absorption, sensitivity)?;
    let die = layout.die_size_um();
    let (nx, ny, mpp) = pixel_grid(die, config.microns_per_pixel)?;
    let (gw, gh) = layout.grid_dims();
    let psf = psf_line(config, pitch)?;
    let op_x = AxisOperator::new(gw, pitch, nx, mpp, &psf);
    let op_y = AxisOperator::new(gh, pitch, ny, mpp, &psf);
    let illum = Illumination::new(config, die)?;

    // horizontal pass: gh rows of nx
    let mut partial = vec![0.0; gh * nx];
    let mut line = vec![0.0; gw];
    for row in 0..gh {
        let y = (row as f64 + 0.5) * pitch;
        for (col, (v, &code)) in line.iter_mut().zip(layout.row(row)).enumerate() {
            let r = crate::layout::decode_reflectance(code);
            *v = if illum.is_uniform() {
                r
            } else {
                r * illum.at((col as f64 + 0.5) * pitch, y)
            };
        }
        op_x.apply(&line, &mut partial[row * nx..(row + 1) * nx]);
    }
    // vertical pass
    let mut pixels = vec![0.0; ny * nx];
    for (q, (start, w)) in op_y.rows.iter().enumerate() {
        let out = &mut pixels[q * nx..(q + 1) * nx];
        for (k, &wk) in w.iter().enumerate() {
            let src = &partial[(start + k) * nx..(start + k + 1) * nx];
            out.iter_mut().zip(src).for_each(|(o, &s)| *o += wk * s);
        }
        out.iter_mut().for_each(|o| *o *= scale);
    }
    let mut img = IrisImage::new(nx, ny, pixels, mpp)?;
    img.metadata = ImageMetadata {
        config: Some(config.clone()),
        seed: config.seed,
        source: format!("render of {}", layout.provenance()),
    };
    Ok(img)
}

/// Add sensor noise (seeded) and quantize.
pub fn expose(signal: &IrisImage, noise: &NoiseParams, noise_seed: u64) -> Result<IrisImage> {
    noise.validate()?;
    if !noise.is_active() {
        return Ok(signal.quantized());
    }
    let mut rng = seed::rng(noise_seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    Ok(signal.map(|v| {
        let mut var = noise.read_noise_sigma * noise.read_noise_sigma;
        if noise.shot_noise {
            var += v.max(0.0);
        }
        quantize(v + var.sqrt() * unit.sample(&mut rng))
    }))
}

/// Full render: signal, then noise seeded from `config.seed`, then 16-bit
/// quantization.
pub fn render(
    layout: &DieLayout,
    config: &OpticalConfig,
    absorption: &SpectralCurve,
    sensitivity: &SpectralCurve,
) -> Result<IrisImage> {
    let signal = render_signal(layout, config, absorption, sensitivity)?;
    expose(&signal, &config.noise, seed::derive_seed(config.seed, "render.noise"))
}

/// One captured tile with its placement in full-frame pixel coordinates.
#[derive(Debug, Clone)]
pub struct Tile {
    pub image: IrisImage,
    /// `(row, column)` in the tile grid.
    pub grid_pos: (usize, usize),
    pub nominal_offset: (usize, usize),
    pub true_offset: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilingParams {
    pub tile_px: (usize, usize),
    pub overlap_px: usize,
    pub jitter_px: usize,
    pub seed: u64,
}

/// Nominal tile origins along one axis of length `n`.
pub fn tile_origins(n: usize, tile: usize, overlap: usize) -> Result<Vec<usize>> {
    if tile > n {
        return Err(Error::Config(format!("tile of {tile} px larger than the {n} px frame")));
    }
    if tile <= overlap {
        return Err(Error::Config(format!("tile of {tile} px must exceed overlap {overlap} px")));
    }
    if tile == n {
        return Ok(vec![0]);
    }
    let step = tile - overlap;
    let count = (n - tile).div_ceil(step) + 1;
    Ok((0..count).map(|k| (k * step).min(n - tile)).collect())
}

/// Split a full-frame signal into overlapping tiles with seeded positional
/// jitter and independent per-tile noise. Tiles on the frame edge keep their
/// edge-side coordinate so the union still covers every pixel.
pub fn tile_signal(signal: &IrisImage, noise: &NoiseParams, params: &TilingParams) -> Result<Vec<Tile>> {
    let TilingParams {
        tile_px: (tw, th),
        overlap_px,
        jitter_px,
        seed: tiling_seed,
    } = *params;
    if overlap_px < 8 {
        return Err(Error::Config(format!("overlap must be at least 8 px, got {overlap_px}")));
    }
    if 2 * jitter_px >= overlap_px {
        return Err(Error::Config(format!(
            "jitter {jitter_px} px must be below half the overlap ({overlap_px} px)"
        )));
    }
    let xs = tile_origins(signal.width(), tw, overlap_px)?;
    let ys = tile_origins(signal.height(), th, overlap_px)?;
    let mut rng = seed::rng(seed::derive_seed(tiling_seed, "capture.jitter"));
    let j = jitter_px as i64;
    let mut jittered = |origins: &[usize], k: usize, limit: usize| -> usize {
        let delta = if j > 0 { rand::Rng::random_range(&mut rng, -j..=j) } else { 0 };
        if k == 0 || k + 1 == origins.len() {
            origins[k]
        } else {
            (origins[k] as i64 + delta).clamp(0, limit as i64) as usize
        }
    };
    let mut tiles = Vec::with_capacity(xs.len() * ys.len());
    for (r, &ny) in ys.iter().enumerate() {
        for (c, &nx) in xs.iter().enumerate() {
            let tx = jittered(&xs, c, signal.width() - tw);
            let ty = jittered(&ys, r, signal.height() - th);
            let index = (r * xs.len() + c) as u64;
            let crop = signal.crop(tx, ty, tw, th)?;
            let mut image = expose(&crop, noise, seed::derive_indexed(tiling_seed, "capture.tile", index))?;
            image.metadata.seed = tiling_seed;
            image.metadata.source = format!("tile r{r} c{c}");
            tiles.push(Tile {
                image,
                grid_pos: (r, c),
                nominal_offset: (nx, ny),
                true_offset: (tx, ty),
            });
        }
    }
    Ok(tiles)
}

/// Render the die once and capture it as a grid of overlapping tiles.
pub fn capture_tiles(
    layout: &DieLayout,
    config: &OpticalConfig,
    absorption: &SpectralCurve,
    sensitivity: &SpectralCurve,
    params: &TilingParams,
) -> Result<Vec<Tile>> {
    let signal = render_signal(layout, config, absorption, sensitivity)?;
    tile_signal(&signal, &config.noise, params)
}
