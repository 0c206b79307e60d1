use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// Each cell stretched to its own min/max.
    PerCell,
    /// All cells share one min/max.
    Global,
    /// Values are images in `[-1, 1]`.
    Fixed,
}

/// Cells `[w, h, 1 | 3]` laid out row-major with white padding between and around them.
#[derive(Debug, Clone)]
pub struct ImageGrid {
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<Tensor>,
    pub pad: usize,
    pub normalization: Normalization,
}

impl ImageGrid {
    /// A near-square grid, or `cols` columns when given.
    pub fn new(
        cells: Vec<Tensor>,
        cols: Option<usize>,
        pad: usize,
        normalization: Normalization,
    ) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::Config("image grid needs at least one cell".into()));
        }
        let n = cells.len();
        let cols = cols
            .unwrap_or_else(|| (n as f64).sqrt().ceil() as usize)
            .clamp(1, n);
        Ok(ImageGrid {
            rows: n.div_ceil(cols),
            cols,
            cells,
            pad,
            normalization,
        })
    }
}

fn to_unit(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        (v - lo) / (hi - lo)
    } else {
        // A constant cell keeps its place on the image scale.
        (v + 1.0) / 2.0
    }
}

fn to_byte(u: f64) -> u8 {
    (u.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Rasterizes a grid to packed RGB bytes; returns `(width, height, rgb)`.
pub fn rasterize(grid: &ImageGrid) -> Result<(usize, usize, Vec<u8>)> {
    if grid.cells.is_empty() || grid.rows * grid.cols < grid.cells.len() {
        return Err(Error::Config(format!(
            "{} cells do not fit a {}×{} grid",
            grid.cells.len(),
            grid.rows,
            grid.cols
        )));
    }
    let shape = grid.cells[0].shape().to_vec();
    if shape.len() != 3 || !(shape[2] == 1 || shape[2] == 3) {
        return Err(Error::Config(format!(
            "grid cells must be [w, h, 1|3], got {shape:?}"
        )));
    }
    if let Some(bad) = grid.cells.iter().find(|c| c.shape() != shape.as_slice()) {
        return Err(Error::Config(format!(
            "grid cells differ in shape: {:?} vs {shape:?}",
            bad.shape()
        )));
    }
    let (cw, ch, cc) = (shape[0], shape[1], shape[2]);
    let p = grid.pad;
    let width = grid.cols * cw + (grid.cols + 1) * p;
    let height = grid.rows * ch + (grid.rows + 1) * p;
    let mut rgb = vec![255u8; width * height * 3];

    let global = grid
        .cells
        .iter()
        .map(Tensor::min_max)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (c, d)| {
            (a.min(c), b.max(d))
        });
    for (i, cell) in grid.cells.iter().enumerate() {
        let (lo, hi) = match grid.normalization {
            Normalization::PerCell => cell.min_max(),
            Normalization::Global => global,
            Normalization::Fixed => (-1.0, 1.0),
        };
        let (gr, gc) = (i / grid.cols, i % grid.cols);
        let (ox, oy) = (p + gc * (cw + p), p + gr * (ch + p));
        for x in 0..cw {
            for y in 0..ch {
                let px = ((oy + y) * width + ox + x) * 3;
                for c in 0..3 {
                    let v = cell.get(&[x, y, if cc == 1 { 0 } else { c }]);
                    rgb[px + c] = to_byte(to_unit(v, lo, hi));
                }
            }
        }
    }
    Ok((width, height, rgb))
}

pub fn encode_ppm(width: usize, height: usize, rgb: &[u8]) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    out
}

/// Writes a grid as binary PPM, or PNG when `path` ends in `.png`.
pub fn render_grid(grid: &ImageGrid, path: &Path) -> Result<()> {
    let (w, h, rgb) = rasterize(grid)?;
    let is_png = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    if is_png {
        image::save_buffer(
            path,
            &rgb,
            w as u32,
            h as u32,
            image::ExtendedColorType::Rgb8,
        )
        .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))
    } else {
        std::fs::write(path, encode_ppm(w, h, &rgb)).map_err(|e| Error::io(path, e))
    }
}

/// Writes one `[-1, 1]` image without padding.
pub fn write_image(tensor: &Tensor, path: &Path) -> Result<()> {
    render_grid(
        &ImageGrid::new(vec![tensor.clone()], Some(1), 0, Normalization::Fixed)?,
        path,
    )
}
