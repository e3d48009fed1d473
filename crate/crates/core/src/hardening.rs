//! Sizing self-test checksum state so that any logic able to spoof the
//! test is physically large enough to show up in a backside image.
//!
//! Each extra checksum bit is assumed to cost a bypass one flip-flop plus a
//! handful of NAND2-equivalent gates. The smallest modification the imager
//! reliably sees is `pixels_required` pixels of die area.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio;
use crate::optics::OpticalConfig;

/// Bundled process-node table.
pub const DEFAULT_NODES_CSV: &str = include_str!("../data/nodes.csv");
pub const DEFAULT_GATES_PER_BIT: u32 = 4;
pub const DEFAULT_PIXELS_REQUIRED: u32 = 4;
/// Flip-flop area as a multiple of NAND2 area, used when a node row is
/// derived rather than tabulated.
pub const FLIPFLOP_TO_NAND2: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessNode {
    pub name: String,
    pub feature_nm: f64,
    /// 9-track standard-cell height.
    pub cell_height_um: f64,
    pub nand2_area_um2: f64,
    pub flipflop_area_um2: f64,
}

impl ProcessNode {
    pub fn validate(&self) -> Result<()> {
        if !(self.nand2_area_um2 > 0.0 && self.flipflop_area_um2 > 0.0 && self.cell_height_um > 0.0) {
            return Err(Error::Domain(format!("node {}: areas and cell height must be positive", self.name)));
        }
        if self.flipflop_area_um2 <= self.nand2_area_um2 {
            return Err(Error::Domain(format!(
                "node {}: flip-flop area {} must exceed NAND2 area {}",
                self.name, self.flipflop_area_um2, self.nand2_area_um2
            )));
        }
        Ok(())
    }

    /// Same node with both cell areas multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> ProcessNode {
        ProcessNode {
            name: format!("{}x{factor}", self.name),
            nand2_area_um2: self.nand2_area_um2 * factor,
            flipflop_area_um2: self.flipflop_area_um2 * factor,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeTable {
    pub nodes: Vec<ProcessNode>,
}

impl NodeTable {
    pub fn bundled() -> Self {
        Self::parse_csv(DEFAULT_NODES_CSV, "bundled node table").expect("bundled node table is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse_csv(&fsio::read_string(path)?, &path.display().to_string())
    }

    /// `name,feature_nm,cell_height_um,nand2_area_um2,flipflop_area_um2`;
    /// `#` lines and blank lines are ignored.
    pub fn parse_csv(text: &str, source_name: &str) -> Result<Self> {
        const HEADER: &str = "name,feature_nm,cell_height_um,nand2_area_um2,flipflop_area_um2";
        let err = |line: usize, message: String| Error::ParseLine {
            source_name: source_name.to_string(),
            line,
            message,
        };
        let mut header_seen = false;
        let mut nodes: Vec<ProcessNode> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !header_seen {
                if line != HEADER {
                    return Err(err(line_no, format!("expected header `{HEADER}`")));
                }
                header_seen = true;
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 5 {
                return Err(err(line_no, format!("expected 5 columns, found {}", cols.len())));
            }
            let num = |i: usize| {
                cols[i]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(line_no, format!("non-numeric value `{}`", cols[i])))
            };
            let node = ProcessNode {
                name: cols[0].to_string(),
                feature_nm: num(1)?,
                cell_height_um: num(2)?,
                nand2_area_um2: num(3)?,
                flipflop_area_um2: num(4)?,
            };
            node.validate().map_err(|e| err(line_no, e.to_string()))?;
            if nodes.iter().any(|n| n.name == node.name) {
                return Err(err(line_no, format!("duplicate node `{}`", node.name)));
            }
            nodes.push(node);
        }
        if !header_seen {
            return Err(err(1, "missing header".into()));
        }
        Ok(NodeTable { nodes })
    }

    pub fn names(&self) -> Vec<&str> {
        self.nodes.iter().map(|n| n.name.as_str()).collect()
    }

    pub fn find(&self, name: &str) -> Result<&ProcessNode> {
        self.nodes.iter().find(|n| n.name == name).ok_or_else(|| {
            Error::Config(format!("unknown node `{name}`; available: {}", self.names().join(", ")))
        })
    }
}

/// Area a bypass needs to spoof `bits` of checksum state.
pub fn bypass_area(bits: u64, node: &ProcessNode, gates_per_bit: u32) -> f64 {
    bits as f64 * (node.flipflop_area_um2 + f64::from(gates_per_bit) * node.nand2_area_um2)
}

/// `pixels_required × (µm per pixel)²`.
pub fn min_detectable_area(config: &OpticalConfig, pixels_required: u32) -> Result<f64> {
    if pixels_required == 0 {
        return Err(Error::Domain("at least one pixel is required".into()));
    }
    if !(config.microns_per_pixel > 0.0) {
        return Err(Error::Domain(format!(
            "microns per pixel must be positive, got {}",
            config.microns_per_pixel
        )));
    }
    Ok(f64::from(pixels_required) * config.microns_per_pixel * config.microns_per_pixel)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardeningBudget {
    pub node: ProcessNode,
    pub microns_per_pixel: f64,
    pub pixels_required: u32,
    pub min_detectable_area_um2: f64,
    pub gates_per_bit: u32,
    pub per_bit_area_um2: f64,
    pub required_bits: u64,
    pub bypass_area_at_required_um2: f64,
}

impl HardeningBudget {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("budget serializes");
        s.push('\n');
        s
    }

    pub fn to_table(&self) -> String {
        let rows = [
            ("node", self.node.name.clone()),
            ("um_per_px", format!("{:.4}", self.microns_per_pixel)),
            ("pixels_required", self.pixels_required.to_string()),
            ("min_detectable_area_um2", format!("{:.4}", self.min_detectable_area_um2)),
            ("gates_per_bit", self.gates_per_bit.to_string()),
            ("per_bit_area_um2", format!("{:.4}", self.per_bit_area_um2)),
            ("required_bits", self.required_bits.to_string()),
            ("bypass_area_um2", format!("{:.4}", self.bypass_area_at_required_um2)),
        ];
        let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v:>12}");
        }
        out
    }
}

/// Smallest number of checksum bits whose bypass covers at least the
/// minimum detectable area.
pub fn required_state_bits(
    node: &ProcessNode,
    config: &OpticalConfig,
    gates_per_bit: u32,
    pixels_required: u32,
) -> Result<HardeningBudget> {
    let min_area = min_detectable_area(config, pixels_required)?;
    let per_bit = bypass_area(1, node, gates_per_bit);
    if !(per_bit > 0.0) || !per_bit.is_finite() {
        return Err(Error::Divergence(format!(
            "node {} gives {per_bit} um2 per bit; no amount of state reaches {min_area} um2",
            node.name
        )));
    }
    let mut bits = ((min_area / per_bit).ceil() as u64).max(1);
    while bypass_area(bits, node, gates_per_bit) < min_area {
        bits += 1;
    }
    while bits > 1 && bypass_area(bits - 1, node, gates_per_bit) >= min_area {
        bits -= 1;
    }
    Ok(HardeningBudget {
        node: node.clone(),
        microns_per_pixel: config.microns_per_pixel,
        pixels_required,
        min_detectable_area_um2: min_area,
        gates_per_bit,
        per_bit_area_um2: per_bit,
        required_bits: bits,
        bypass_area_at_required_um2: bypass_area(bits, node, gates_per_bit),
    })
}
