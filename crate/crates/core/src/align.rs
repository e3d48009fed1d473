//! Translation-only registration by normalized cross-correlation, and
//! stitching of overlapping tiles into a mosaic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imager::IrisImage;

/// Integer shift of a sample relative to a reference, with its NCC score.
///
/// `sample(x, y) ≈ reference(x - dx, y - dy)`: content that sits at `(x, y)`
/// in the reference appears at `(x + dx, y + dy)` in the sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Offset {
    pub dx: i64,
    pub dy: i64,
    pub score: f64,
}

/// Rescale to zero mean and unit (population) variance.
pub fn normalize_intensity(image: &IrisImage) -> Result<IrisImage> {
    let n = image.pixels().len() as f64;
    let mean = image.mean();
    let var = image.pixels().iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if !(var > 0.0) {
        return Err(Error::Degenerate("image has a single intensity value; cannot normalize".into()));
    }
    let inv = 1.0 / var.sqrt();
    Ok(image.map(|v| (v - mean) * inv))
}

/// Pearson correlation of two equally long sequences; 0 when either is flat.
pub fn ncc(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let (sa, sb) = a.iter().zip(b).fold((0.0, 0.0), |(x, y), (&p, &q)| (x + p, y + q));
    let (ma, mb) = (sa / n, sb / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&p, &q) in a.iter().zip(b) {
        let (p, q) = (p - ma, q - mb);
        sab += p * q;
        saa += p * p;
        sbb += q * q;
    }
    if saa > 0.0 && sbb > 0.0 {
        (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
    } else {
        0.0
    }
}

fn check_units(reference: &IrisImage, sample: &IrisImage) -> Result<()> {
    let (a, b) = (reference.microns_per_pixel(), sample.microns_per_pixel());
    if (a - b).abs() > 0.01 * a {
        return Err(Error::Unit(format!("pixel scales differ: {a} vs {b} um/px")));
    }
    Ok(())
}

/// Overlap of the sample with the reference at a shift, in sample
/// coordinates: `(x0, y0, x1, y1)`.
fn overlap(reference: &IrisImage, sample: &IrisImage, dx: i64, dy: i64) -> (i64, i64, i64, i64) {
    let x0 = dx.max(0);
    let y0 = dy.max(0);
    let x1 = (sample.width() as i64).min(reference.width() as i64 + dx);
    let y1 = (sample.height() as i64).min(reference.height() as i64 + dy);
    (x0, y0, x1, y1)
}

/// Candidate shifts in tie-break order: smallest |dx|+|dy|, then dy, then dx.
pub fn search_order(radius: i64) -> Vec<(i64, i64)> {
    let mut shifts: Vec<(i64, i64)> = (-radius..=radius)
        .flat_map(|dy| (-radius..=radius).map(move |dx| (dx, dy)))
        .collect();
    shifts.sort_by_key(|&(dx, dy)| (dx.abs() + dy.abs(), dy, dx));
    shifts
}

fn score_at(reference: &IrisImage, sample: &IrisImage, dx: i64, dy: i64) -> f64 {
    let (x0, y0, x1, y1) = overlap(reference, sample, dx, dy);
    let n = ((x1 - x0) * (y1 - y0)) as f64;
    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for y in y0..y1 {
        let srow = &sample.row(y as usize)[x0 as usize..x1 as usize];
        let rrow = &reference.row((y - dy) as usize)[(x0 - dx) as usize..(x1 - dx) as usize];
        for (&b, &a) in srow.iter().zip(rrow) {
            sa += a;
            sb += b;
            saa += a * a;
            sbb += b * b;
            sab += a * b;
        }
    }
    let cov = sab - sa * sb / n;
    let va = saa - sa * sa / n;
    let vb = sbb - sb * sb / n;
    if va > 0.0 && vb > 0.0 {
        (cov / (va * vb).sqrt()).clamp(-1.0, 1.0)
    } else {
        0.0
    }
}

/// Integer shift within `search_radius` maximizing NCC over the overlap.
pub fn register(reference: &IrisImage, sample: &IrisImage, search_radius: usize) -> Result<Offset> {
    check_units(reference, sample)?;
    let radius = search_radius as i64;
    let order = search_order(radius);
    let min_area = 0.25 * (sample.width() * sample.height()) as f64;
    for &(dx, dy) in &order {
        let (x0, y0, x1, y1) = overlap(reference, sample, dx, dy);
        let area = ((x1 - x0).max(0) * (y1 - y0).max(0)) as f64;
        if area < min_area {
            return Err(Error::Coverage(format!(
                "shift ({dx}, {dy}) leaves {area} px of overlap, below 25% of the sample"
            )));
        }
    }
    // Intensities are normalized first so the running sums stay well
    // conditioned for 16-bit data.
    let reference = normalize_or_flat(reference);
    let sample = normalize_or_flat(sample);
    let mut best = Offset { dx: 0, dy: 0, score: f64::NEG_INFINITY };
    for (dx, dy) in order {
        let score = score_at(&reference, &sample, dx, dy);
        if score > best.score {
            best = Offset { dx, dy, score };
        }
    }
    Ok(best)
}

fn normalize_or_flat(image: &IrisImage) -> IrisImage {
    normalize_intensity(image).unwrap_or_else(|_| image.map(|_| 0.0))
}

/// Tile input to [`stitch`]: an image and its nominal position in mosaic
/// pixel coordinates.
#[derive(Debug, Clone)]
pub struct StitchTile {
    pub image: IrisImage,
    pub nominal_offset: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    /// `(row, column)` of the two tiles.
    pub a: (usize, usize),
    pub b: (usize, usize),
    /// Position of `b` relative to `a`.
    pub nominal_delta: (i64, i64),
    pub refined_delta: (i64, i64),
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TilePlacement {
    pub grid_pos: (usize, usize),
    pub nominal_offset: (usize, usize),
    /// Refined top-left corner in mosaic pixels.
    pub position: (i64, i64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StitchReport {
    pub rows: usize,
    pub cols: usize,
    pub overlap_px: usize,
    pub search_radius_px: usize,
    pub pairs: Vec<PairReport>,
    pub tiles: Vec<TilePlacement>,
    pub mosaic_size: (usize, usize),
}

#[derive(Debug, Clone)]
pub struct Stitched {
    pub mosaic: IrisImage,
    pub report: StitchReport,
}

/// Minimum pairwise NCC accepted when stitching.
pub const MIN_PAIR_SCORE: f64 = 0.5;

/// Assemble tiles into one image.
///
/// Tiles are arranged into a grid by their distinct nominal x and y
/// offsets. Each horizontally or vertically adjacent pair is registered on
/// its nominal overlap strip; tile (0, 0) is anchored at the origin and the
/// others are placed by accumulating refined offsets row-major (down the
/// first column, then along each row). Overlaps are blended with weights
/// that ramp linearly from each tile's edge.
pub fn stitch(tiles: &[StitchTile], overlap_px: usize, search_radius: usize) -> Result<Stitched> {
    if tiles.is_empty() {
        return Err(Error::Config("no tiles to stitch".into()));
    }
    let mpp = tiles[0].image.microns_per_pixel();
    for t in tiles {
        check_units(&tiles[0].image, &t.image)?;
    }
    let mut xs: Vec<usize> = tiles.iter().map(|t| t.nominal_offset.0).collect();
    let mut ys: Vec<usize> = tiles.iter().map(|t| t.nominal_offset.1).collect();
    xs.sort_unstable();
    xs.dedup();
    ys.sort_unstable();
    ys.dedup();
    let (rows, cols) = (ys.len(), xs.len());
    let mut grid: Vec<Option<usize>> = vec![None; rows * cols];
    for (i, t) in tiles.iter().enumerate() {
        let c = xs.binary_search(&t.nominal_offset.0).unwrap();
        let r = ys.binary_search(&t.nominal_offset.1).unwrap();
        if grid[r * cols + c].replace(i).is_some() {
            return Err(Error::Config(format!("two tiles share nominal offset {:?}", t.nominal_offset)));
        }
    }
    if let Some(missing) = grid.iter().position(Option::is_none) {
        return Err(Error::Config(format!(
            "tile grid is incomplete: no tile at row {} column {}",
            missing / cols,
            missing % cols
        )));
    }
    let at = |r: usize, c: usize| &tiles[grid[r * cols + c].unwrap()];

    if tiles.len() == 1 {
        let t = &tiles[0];
        return Ok(Stitched {
            mosaic: t.image.clone(),
            report: StitchReport {
                rows,
                cols,
                overlap_px,
                search_radius_px: search_radius,
                pairs: Vec::new(),
                tiles: vec![TilePlacement {
                    grid_pos: (0, 0),
                    nominal_offset: t.nominal_offset,
                    position: (0, 0),
                }],
                mosaic_size: (t.image.width(), t.image.height()),
            },
        });
    }

    let mut pairs = Vec::new();
    let mut right = vec![(0i64, 0i64); rows * cols];
    let mut down = vec![(0i64, 0i64); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let neighbours = [(r, c + 1, true), (r + 1, c, false)];
            for (rb, cb, horizontal) in neighbours {
                if rb >= rows || cb >= cols {
                    continue;
                }
                let pair = refine_pair(at(r, c), at(rb, cb), search_radius)
                    .map_err(|e| match e {
                        Error::Coverage(m) => Error::Coverage(format!("tiles {:?} -> {:?}: {m}", (r, c), (rb, cb))),
                        other => other,
                    })?;
                let report = PairReport {
                    a: (r, c),
                    b: (rb, cb),
                    nominal_delta: pair.0,
                    refined_delta: pair.1,
                    score: pair.2,
                };
                if report.score < MIN_PAIR_SCORE {
                    return Err(Error::StitchQuality {
                        a: report.a,
                        b: report.b,
                        score: report.score,
                    });
                }
                if horizontal {
                    right[r * cols + c] = report.refined_delta;
                } else {
                    down[r * cols + c] = report.refined_delta;
                }
                pairs.push(report);
            }
        }
    }

    let mut pos = vec![(0i64, 0i64); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            pos[r * cols + c] = match (r, c) {
                (0, 0) => (0, 0),
                (_, 0) => add(pos[(r - 1) * cols], down[(r - 1) * cols]),
                _ => add(pos[r * cols + c - 1], right[r * cols + c - 1]),
            };
        }
    }
    let min_x = pos.iter().map(|p| p.0).min().unwrap();
    let min_y = pos.iter().map(|p| p.1).min().unwrap();
    pos.iter_mut().for_each(|p| *p = (p.0 - min_x, p.1 - min_y));
    let mut width = 0usize;
    let mut height = 0usize;
    for r in 0..rows {
        for c in 0..cols {
            let (x, y) = pos[r * cols + c];
            let img = &at(r, c).image;
            width = width.max(x as usize + img.width());
            height = height.max(y as usize + img.height());
        }
    }

    let mut acc = vec![0.0; width * height];
    let mut wsum = vec![0.0; width * height];
    for r in 0..rows {
        for c in 0..cols {
            let (ox, oy) = pos[r * cols + c];
            let img = &at(r, c).image;
            let (w, h) = (img.width(), img.height());
            for y in 0..h {
                let wy = y.min(h - 1 - y) + 1;
                let row = img.row(y);
                let base = (oy as usize + y) * width + ox as usize;
                for (x, &v) in row.iter().enumerate() {
                    let weight = (x.min(w - 1 - x) + 1).min(wy) as f64;
                    acc[base + x] += weight * v;
                    wsum[base + x] += weight;
                }
            }
        }
    }
    let pixels = acc
        .iter()
        .zip(&wsum)
        .map(|(&a, &w)| if w > 0.0 { a / w } else { 0.0 })
        .collect();
    let mut mosaic = IrisImage::new(width, height, pixels, mpp)?;
    mosaic.metadata = tiles[0].image.metadata.clone();
    mosaic.metadata.source = format!("mosaic of {} tiles", tiles.len());

    let placements = (0..rows * cols)
        .map(|i| TilePlacement {
            grid_pos: (i / cols, i % cols),
            nominal_offset: at(i / cols, i % cols).nominal_offset,
            position: pos[i],
        })
        .collect();
    Ok(Stitched {
        mosaic,
        report: StitchReport {
            rows,
            cols,
            overlap_px,
            search_radius_px: search_radius,
            pairs,
            tiles: placements,
            mosaic_size: (width, height),
        },
    })
}

type Delta = (i64, i64);

fn add(a: (i64, i64), b: (i64, i64)) -> (i64, i64) {
    (a.0 + b.0, a.1 + b.1)
}

/// Register `b` against `a` on their nominal overlap. Returns
/// `(nominal delta, refined delta, score)` where delta is b's position
/// minus a's.
fn refine_pair(a: &StitchTile, b: &StitchTile, radius: usize) -> Result<(Delta, Delta, f64)> {
    let n = (
        b.nominal_offset.0 as i64 - a.nominal_offset.0 as i64,
        b.nominal_offset.1 as i64 - a.nominal_offset.1 as i64,
    );
    let (aw, ah) = (a.image.width() as i64, a.image.height() as i64);
    let (bw, bh) = (b.image.width() as i64, b.image.height() as i64);
    let x0 = n.0.max(0);
    let y0 = n.1.max(0);
    let x1 = aw.min(n.0 + bw);
    let y1 = ah.min(n.1 + bh);
    if x1 - x0 < 8 || y1 - y0 < 8 {
        return Err(Error::Coverage(format!(
            "nominal overlap {}x{} px is too small to register",
            (x1 - x0).max(0),
            (y1 - y0).max(0)
        )));
    }
    let (w, h) = ((x1 - x0) as usize, (y1 - y0) as usize);
    let strip_a = a.image.crop(x0 as usize, y0 as usize, w, h)?;
    let strip_b = b.image.crop((x0 - n.0) as usize, (y0 - n.1) as usize, w, h)?;
    let shift = register(&strip_a, &strip_b, radius)?;
    Ok((n, (n.0 - shift.dx, n.1 - shift.dy), shift.score))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(w: usize, h: usize, seed: u64) -> IrisImage {
        use rand::Rng;
        let mut rng = crate::seed::rng(seed);
        let px: Vec<f64> = (0..w * h).map(|_| rng.random_range(0.0..1000.0)).collect();
        IrisImage::new(w, h, px, 1.67).unwrap()
    }

    #[test]
    fn normalization_moments() {
        let img = textured(20, 10, 1);
        let n = normalize_intensity(&img).unwrap();
        let mean = n.mean();
        let var = n.pixels().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 200.0;
        assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-9);
        let affine = normalize_intensity(&img.map(|v| 2.0 * v + 7.0)).unwrap();
        for (a, b) in n.pixels().iter().zip(affine.pixels()) {
            assert!((a - b).abs() < 1e-9);
        }
        let flat = IrisImage::new(3, 3, vec![5.0; 9], 1.0).unwrap();
        assert!(matches!(normalize_intensity(&flat), Err(Error::Degenerate(_))));
    }

    #[test]
    fn self_registration() {
        let img = textured(32, 32, 2);
        let o = register(&img, &img, 8).unwrap();
        assert_eq!((o.dx, o.dy), (0, 0));
        assert!((o.score - 1.0).abs() < 1e-6);
    }

    #[test]
    fn known_shift_is_recovered() {
        let big = textured(64, 64, 3);
        let reference = big.crop(16, 16, 32, 32).unwrap();
        // sample(x, y) = reference(x - 3, y + 2)
        let sample = big.crop(13, 18, 32, 32).unwrap();
        let o = register(&reference, &sample, 8).unwrap();
        assert_eq!((o.dx, o.dy), (3, -2));
    }

    #[test]
    fn search_order_breaks_ties() {
        let order = search_order(1);
        assert_eq!(order[0], (0, 0));
        assert_eq!(&order[1..5], &[(0, -1), (-1, 0), (1, 0), (0, 1)]);
        // a flat pair ties everywhere; (0, 0) wins
        let flat = IrisImage::new(16, 16, vec![3.0; 256], 1.0).unwrap();
        let o = register(&flat, &flat, 2).unwrap();
        assert_eq!((o.dx, o.dy, o.score), (0, 0, 0.0));
    }

    #[test]
    fn unit_and_coverage_errors() {
        let a = textured(32, 32, 4);
        let b = IrisImage::new(32, 32, a.pixels().to_vec(), 1.8).unwrap();
        assert!(matches!(register(&a, &b, 4), Err(Error::Unit(_))));
        assert!(matches!(register(&a, &a, 20), Err(Error::Coverage(_))));
    }

    #[test]
    fn single_tile_stitch_is_identity() {
        let img = textured(40, 30, 5);
        let s = stitch(&[StitchTile { image: img.clone(), nominal_offset: (0, 0) }], 16, 4).unwrap();
        assert_eq!(s.mosaic, img);
    }

    #[test]
    fn exact_tiles_reassemble() {
        let full = textured(100, 80, 6).quantized();
        let mut tiles = Vec::new();
        for &y in &[0usize, 30] {
            for &x in &[0usize, 30, 60] {
                tiles.push(StitchTile { image: full.crop(x, y, 40, 50).unwrap(), nominal_offset: (x, y) });
            }
        }
        let s = stitch(&tiles, 10, 3).unwrap();
        assert_eq!(s.mosaic.pixels(), full.pixels());
        assert_eq!(s.report.pairs.len(), 7);
        assert!(s.report.pairs.iter().all(|p| p.refined_delta == p.nominal_delta));
    }

    #[test]
    fn incomplete_grid_is_rejected() {
        let full = textured(60, 60, 7);
        let tiles = vec![
            StitchTile { image: full.crop(0, 0, 40, 40).unwrap(), nominal_offset: (0, 0) },
            StitchTile { image: full.crop(20, 20, 40, 40).unwrap(), nominal_offset: (20, 20) },
        ];
        assert!(matches!(stitch(&tiles, 20, 3), Err(Error::Config(_))));
    }

    #[test]
    fn unrelated_tiles_fail_quality() {
        let tiles = vec![
            StitchTile { image: textured(40, 40, 8), nominal_offset: (0, 0) },
            StitchTile { image: textured(40, 40, 9), nominal_offset: (24, 0) },
        ];
        assert!(matches!(stitch(&tiles, 16, 3), Err(Error::StitchQuality { .. })));
    }
}
