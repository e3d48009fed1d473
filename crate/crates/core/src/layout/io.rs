//! Layout persistence: a JSON document plus a 16-bit PGM sidecar holding
//! reflectance scaled by 65535.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{grid_len, DieLayout, Region};
use crate::error::{Error, Result};
use crate::fsio;
use crate::pgm::Greymap;

pub const LAYOUT_FORMAT: &str = "iris-layout/1";
pub const LAYOUT_JSON: &str = "layout.json";
pub const REFLECTANCE_PGM: &str = "reflectance.pgm";

/// The JSON half of a saved layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutFile {
    pub format: String,
    pub die_size_um: [f64; 2],
    pub grid_pitch_um: f64,
    /// `[columns, rows]` of the reflectance grid.
    pub grid: [usize; 2],
    pub regions: Vec<Region>,
    pub provenance: String,
    /// Sidecar file name, relative to the JSON document.
    pub reflectance_file: String,
}

fn json_path(path: &Path) -> PathBuf {
    if path.extension().is_some_and(|e| e == "json") {
        path.to_path_buf()
    } else {
        path.join(LAYOUT_JSON)
    }
}

/// The JSON document and reflectance sidecar a layout path refers to.
pub fn layout_paths(path: &Path) -> (PathBuf, PathBuf) {
    let json = json_path(path);
    let pgm = json.parent().unwrap_or(Path::new("")).join(REFLECTANCE_PGM);
    (json, pgm)
}

/// Save into a directory (`layout.json` + `reflectance.pgm`), or next to an
/// explicit `*.json` path.
pub fn save_layout(layout: &DieLayout, path: &Path) -> Result<()> {
    let (json, sidecar) = layout_paths(path);
    let dir = json.parent().unwrap_or(Path::new("."));
    if !dir.as_os_str().is_empty() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let (w, h) = layout.grid_dims();
    let doc = LayoutFile {
        format: LAYOUT_FORMAT.to_string(),
        die_size_um: layout.die_size_um(),
        grid_pitch_um: layout.grid_pitch_um(),
        grid: [w, h],
        regions: layout.regions().to_vec(),
        provenance: layout.provenance().to_string(),
        reflectance_file: REFLECTANCE_PGM.to_string(),
    };
    let pgm = Greymap {
        width: w,
        height: h,
        maxval: 65535,
        samples: layout.codes().to_vec(),
    };
    fsio::write_atomic(&sidecar, &pgm.encode())?;
    let mut text = serde_json::to_string_pretty(&doc).expect("layout document serializes");
    text.push('\n');
    fsio::write_atomic(&json, text.as_bytes())
}

pub fn load_layout(path: &Path) -> Result<DieLayout> {
    let json = json_path(path);
    let text = fsio::read_string(&json)?;
    let name = json.display().to_string();
    let doc: LayoutFile = fsio::parse_json(&text, &name)?;
    let bad = |message: String| Error::ParseOffset {
        source_name: name.clone(),
        offset: 0,
        message,
    };
    if doc.format != LAYOUT_FORMAT {
        return Err(bad(format!("unsupported format `{}`", doc.format)));
    }
    if !(doc.grid_pitch_um > 0.0) {
        return Err(bad(format!("grid pitch must be positive, got {}", doc.grid_pitch_um)));
    }
    let expected = [
        grid_len(doc.die_size_um[0], doc.grid_pitch_um),
        grid_len(doc.die_size_um[1], doc.grid_pitch_um),
    ];
    if doc.grid != expected {
        return Err(bad(format!("grid {:?} inconsistent with die size and pitch (expected {expected:?})", doc.grid)));
    }
    let sidecar = json.parent().unwrap_or(Path::new(".")).join(&doc.reflectance_file);
    let pgm = Greymap::decode(&fsio::read(&sidecar)?, &sidecar.display().to_string())?;
    if [pgm.width, pgm.height] != doc.grid || pgm.maxval != 65535 {
        return Err(Error::ParseOffset {
            source_name: sidecar.display().to_string(),
            offset: 0,
            message: format!(
                "expected a {}x{} image with maxval 65535, found {}x{} maxval {}",
                doc.grid[0], doc.grid[1], pgm.width, pgm.height, pgm.maxval
            ),
        });
    }
    DieLayout::from_codes(doc.die_size_um, doc.grid_pitch_um, pgm.samples, doc.regions, doc.provenance)
}
