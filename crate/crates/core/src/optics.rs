//! Optical budget for backside infrared imaging.
//!
//! Silicon becomes transparent between roughly 1000 and 1100 nm while
//! silicon image sensors lose most of their sensitivity over the same band.
//! This module evaluates both curves, combines them into a signal budget
//! and exposure suggestion, and provides the resolution arithmetic used by
//! the renderer.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio;
use crate::imager::NoiseParams;

/// Bundled absorption-depth curve (µm vs nm).
pub const DEFAULT_ABSORPTION_CSV: &str = include_str!("../data/absorption_depth_si.csv");
/// Bundled sensor response curve (fraction of peak vs nm).
pub const DEFAULT_SENSITIVITY_CSV: &str = include_str!("../data/sensor_sensitivity_cmos.csv");

/// File names looked up inside a curves directory.
pub const ABSORPTION_FILE: &str = "absorption_depth.csv";
pub const SENSITIVITY_FILE: &str = "sensor_sensitivity.csv";

/// Numerical aperture that puts the Rayleigh limit at ~1.13 µm for 1070 nm.
pub const DEFAULT_NUMERICAL_APERTURE: f64 = 0.58;

/// Illumination wavelengths a config may use.
pub const WAVELENGTH_RANGE_NM: (f64, f64) = (900.0, 1200.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Linear,
    /// Linear in `ln(value)`; for curves spanning orders of magnitude.
    LogLinear,
}

/// A sampled wavelength → value function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralCurve {
    samples: Vec<(f64, f64)>,
    interpolation: Interpolation,
}

impl SpectralCurve {
    pub fn new(samples: Vec<(f64, f64)>, interpolation: Interpolation) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Domain("a spectral curve needs at least 2 samples".into()));
        }
        for (i, &(wl, v)) in samples.iter().enumerate() {
            if !wl.is_finite() || !v.is_finite() {
                return Err(Error::Domain(format!("sample {i} is not finite")));
            }
            if i > 0 && wl <= samples[i - 1].0 {
                return Err(Error::Domain(format!(
                    "wavelengths must be strictly increasing (sample {i}: {wl} nm)"
                )));
            }
            if interpolation == Interpolation::LogLinear && v <= 0.0 {
                return Err(Error::Domain(format!(
                    "log-linear curve needs positive values (sample {i}: {v})"
                )));
            }
        }
        Ok(SpectralCurve {
            samples,
            interpolation,
        })
    }

    /// Absorption depth in µm; values must be positive, log-linear interpolation.
    pub fn absorption_depth(samples: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(samples, Interpolation::LogLinear)
    }

    /// Relative sensor response; values in `[0, 1]`, linear interpolation.
    pub fn sensitivity(samples: Vec<(f64, f64)>) -> Result<Self> {
        if let Some(&(wl, v)) = samples.iter().find(|(_, v)| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain(format!(
                "sensitivity at {wl} nm is {v}, expected a fraction in [0, 1]"
            )));
        }
        Self::new(samples, Interpolation::Linear)
    }

    pub fn default_absorption() -> Self {
        Self::parse_csv(DEFAULT_ABSORPTION_CSV, "bundled absorption curve", Interpolation::LogLinear)
            .expect("bundled absorption curve is valid")
    }

    pub fn default_sensitivity() -> Self {
        Self::parse_csv(DEFAULT_SENSITIVITY_CSV, "bundled sensitivity curve", Interpolation::Linear)
            .and_then(|c| Self::sensitivity(c.samples))
            .expect("bundled sensitivity curve is valid")
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn span(&self) -> (f64, f64) {
        (self.samples[0].0, self.samples[self.samples.len() - 1].0)
    }

    /// Sample with the largest value (first one on ties).
    pub fn peak(&self) -> (f64, f64) {
        self.samples
            .iter()
            .copied()
            .fold(self.samples[0], |best, s| if s.1 > best.1 { s } else { best })
    }

    pub fn eval(&self, wavelength: f64) -> Result<f64> {
        let (lo, hi) = self.span();
        if !(lo..=hi).contains(&wavelength) {
            return Err(Error::Range {
                what: "wavelength (nm)",
                value: wavelength,
                lo,
                hi,
            });
        }
        // first knot with wl >= wavelength
        let i = self.samples.partition_point(|&(wl, _)| wl < wavelength);
        let (w1, v1) = self.samples[i];
        if w1 == wavelength {
            return Ok(v1);
        }
        let (w0, v0) = self.samples[i - 1];
        let t = (wavelength - w0) / (w1 - w0);
        let v = match self.interpolation {
            Interpolation::Linear => v0 + t * (v1 - v0),
            Interpolation::LogLinear => (v0.ln() + t * (v1.ln() - v0.ln())).exp(),
        };
        // keep the result inside the bracketing knots despite rounding in exp/ln
        Ok(v.clamp(v0.min(v1), v0.max(v1)))
    }

    /// Parse the `wavelength_nm,value` CSV format. Lines starting with `#`
    /// and blank lines are ignored; the first other line must be the header.
    pub fn parse_csv(text: &str, source_name: &str, interpolation: Interpolation) -> Result<Self> {
        let err = |line: usize, message: String| Error::ParseLine {
            source_name: source_name.to_string(),
            line,
            message,
        };
        let mut header_seen = false;
        let mut samples: Vec<(f64, f64)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !header_seen {
                if line != "wavelength_nm,value" {
                    return Err(err(line_no, format!("expected header `wavelength_nm,value`, found `{line}`")));
                }
                header_seen = true;
                continue;
            }
            let mut cols = line.split(',');
            let (Some(a), Some(b), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(err(line_no, format!("expected 2 columns, found `{line}`")));
            };
            let parse = |s: &str, what: &str| {
                s.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(line_no, format!("non-numeric {what} `{}`", s.trim())))
            };
            let wl = parse(a, "wavelength")?;
            let v = parse(b, "value")?;
            if let Some(&(prev, _)) = samples.last() {
                if wl <= prev {
                    return Err(err(line_no, format!("wavelength {wl} not above previous {prev}; rows must be sorted ascending")));
                }
            }
            samples.push((wl, v));
        }
        if !header_seen {
            return Err(err(1, "missing header".into()));
        }
        Self::new(samples, interpolation).map_err(|e| err(text.lines().count(), e.to_string()))
    }

    pub fn load(path: &Path, interpolation: Interpolation) -> Result<Self> {
        let text = fsio::read_string(path)?;
        Self::parse_csv(&text, &path.display().to_string(), interpolation)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("wavelength_nm,value\n");
        for (wl, v) in &self.samples {
            s.push_str(&format!("{wl},{v}\n"));
        }
        s
    }
}

/// Load both curves from a directory, or fall back to the bundled defaults.
pub fn load_curves(dir: Option<&Path>) -> Result<(SpectralCurve, SpectralCurve)> {
    match dir {
        None => Ok((SpectralCurve::default_absorption(), SpectralCurve::default_sensitivity())),
        Some(dir) => {
            let abs = SpectralCurve::load(&dir.join(ABSORPTION_FILE), Interpolation::LogLinear)?;
            let sens = SpectralCurve::load(&dir.join(SENSITIVITY_FILE), Interpolation::Linear)?;
            let sens = SpectralCurve::sensitivity(sens.samples)?;
            Ok((abs, sens))
        }
    }
}

/// Everything the imaging chain needs to know about the optics and sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OpticalConfig {
    pub wavelength_nm: f64,
    pub silicon_thickness_um: f64,
    /// 1 = illumination path only; 2 = in and back out through the bulk.
    pub passes: u8,
    pub numerical_aperture: f64,
    pub microns_per_pixel: f64,
    /// Degrees from vertical.
    pub illumination_elevation_deg: f64,
    /// Degrees counter-clockwise from the +x (right) axis; 90 points up.
    pub illumination_azimuth_deg: f64,
    pub exposure_s: f64,
    /// Digital numbers per unit of (exposure × combined signal × reflectance).
    pub gain: f64,
    pub noise: NoiseParams,
    pub seed: u64,
}

/// Full-scale output of the 16-bit quantizer.
pub const FULL_SCALE: f64 = 65535.0;

/// Gain that puts the 99th percentile of the reference die render near 80%
/// of full scale at the default wavelength, thickness and exposure.
pub const DEFAULT_GAIN: f64 = 2.4e6;

impl Default for OpticalConfig {
    fn default() -> Self {
        OpticalConfig {
            wavelength_nm: 1070.0,
            silicon_thickness_um: 300.0,
            passes: 1,
            numerical_aperture: DEFAULT_NUMERICAL_APERTURE,
            microns_per_pixel: 1.67,
            illumination_elevation_deg: 0.0,
            illumination_azimuth_deg: 45.0,
            exposure_s: 1.0,
            gain: DEFAULT_GAIN,
            noise: NoiseParams::default(),
            seed: 0,
        }
    }
}

impl OpticalConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = WAVELENGTH_RANGE_NM;
        if !(lo..=hi).contains(&self.wavelength_nm) {
            return Err(Error::Range {
                what: "illumination wavelength (nm)",
                value: self.wavelength_nm,
                lo,
                hi,
            });
        }
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Domain(format!("{what} must be positive, got {v}")))
            }
        };
        if !(self.silicon_thickness_um >= 0.0 && self.silicon_thickness_um.is_finite()) {
            return Err(Error::Domain(format!(
                "silicon thickness must be >= 0, got {}",
                self.silicon_thickness_um
            )));
        }
        if !matches!(self.passes, 1 | 2) {
            return Err(Error::Domain(format!("passes must be 1 or 2, got {}", self.passes)));
        }
        if !(self.numerical_aperture > 0.0 && self.numerical_aperture <= 1.0) {
            return Err(Error::Domain(format!(
                "numerical aperture must be in (0, 1], got {}",
                self.numerical_aperture
            )));
        }
        positive(self.microns_per_pixel, "microns per pixel")?;
        positive(self.exposure_s, "exposure")?;
        positive(self.gain, "gain")?;
        if !(0.0..=60.0).contains(&self.illumination_elevation_deg) {
            return Err(Error::Domain(format!(
                "illumination elevation must be in [0, 60] degrees, got {}",
                self.illumination_elevation_deg
            )));
        }
        if !self.illumination_azimuth_deg.is_finite() {
            return Err(Error::Domain("illumination azimuth must be finite".into()));
        }
        self.noise.validate()
    }

    pub fn from_json(text: &str, source_name: &str) -> Result<Self> {
        let cfg: OpticalConfig = fsio::parse_json(text, source_name)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fsio::read_string(path)?, &path.display().to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalBudget {
    pub transmission: f64,
    pub sensitivity: f64,
    pub combined: f64,
    pub reduction_factor: f64,
    pub suggested_exposure_s: f64,
}

pub fn absorption_depth(curve: &SpectralCurve, wavelength_nm: f64) -> Result<f64> {
    curve.eval(wavelength_nm)
}

/// Beer–Lambert transmission through `thickness` of silicon, `passes` times.
pub fn transmission(depth_um: f64, thickness_um: f64, passes: u8) -> Result<f64> {
    if !(depth_um > 0.0) {
        return Err(Error::Domain(format!("absorption depth must be positive, got {depth_um}")));
    }
    if !(thickness_um >= 0.0) {
        return Err(Error::Domain(format!("thickness must be >= 0, got {thickness_um}")));
    }
    if !matches!(passes, 1 | 2) {
        return Err(Error::Domain(format!("passes must be 1 or 2, got {passes}")));
    }
    Ok((-f64::from(passes) * thickness_um / depth_um).exp())
}

pub fn sensor_sensitivity(curve: &SpectralCurve, wavelength_nm: f64) -> Result<f64> {
    curve.eval(wavelength_nm)
}

pub fn signal_budget(
    config: &OpticalConfig,
    absorption: &SpectralCurve,
    sensitivity: &SpectralCurve,
    base_exposure_s: f64,
) -> Result<SignalBudget> {
    config.validate()?;
    if !(base_exposure_s > 0.0) {
        return Err(Error::Domain(format!("base exposure must be positive, got {base_exposure_s}")));
    }
    let depth = absorption_depth(absorption, config.wavelength_nm)?;
    let transmission = transmission(depth, config.silicon_thickness_um, config.passes)?;
    let sensitivity = sensor_sensitivity(sensitivity, config.wavelength_nm)?;
    let combined = transmission * sensitivity;
    if !(combined > 0.0) {
        return Err(Error::Domain(format!(
            "no signal reaches the sensor at {} nm",
            config.wavelength_nm
        )));
    }
    Ok(SignalBudget {
        transmission,
        sensitivity,
        combined,
        reduction_factor: 1.0 / combined,
        suggested_exposure_s: base_exposure_s / combined,
    })
}

/// Rayleigh resolution `0.61 λ / NA`, in µm.
pub fn diffraction_limit(wavelength_nm: f64, numerical_aperture: f64) -> Result<f64> {
    if !(numerical_aperture > 0.0 && numerical_aperture <= 1.0) {
        return Err(Error::Domain(format!(
            "numerical aperture must be in (0, 1], got {numerical_aperture}"
        )));
    }
    if !(wavelength_nm > 0.0) {
        return Err(Error::Domain(format!("wavelength must be positive, got {wavelength_nm}")));
    }
    Ok(0.61 * (wavelength_nm / 1000.0) / numerical_aperture)
}

pub fn microns_per_pixel(die_width_um: f64, pixels_across: usize) -> Result<f64> {
    if pixels_across == 0 {
        return Err(Error::Domain("pixel count must be positive".into()));
    }
    if !(die_width_um > 0.0) {
        return Err(Error::Domain(format!("die width must be positive, got {die_width_um}")));
    }
    Ok(die_width_um / pixels_across as f64)
}
