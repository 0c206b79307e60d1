use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Training images `[size, size, 3]` in `[-1, 1]` and the files they came from.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Vec<Tensor>,
    pub paths: Vec<PathBuf>,
}

/// Decodes an image file (PPM/PGM/PNG) into `[w, h, 3]` with values in `[0, 255]`.
pub fn read_image(path: &Path) -> Result<Tensor> {
    let img = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut t = Tensor::zeros(&[w, h, 3]);
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            t.set(&[x as usize, y as usize, c], px[c] as f64);
        }
    }
    Ok(t)
}

/// Largest centered square.
pub fn center_crop(img: &Tensor) -> Tensor {
    let s = img.shape();
    let (w, h, c) = (s[0], s[1], s[2]);
    let side = w.min(h);
    let (x0, y0) = ((w - side) / 2, (h - side) / 2);
    let mut out = Tensor::zeros(&[side, side, c]);
    for x in 0..side {
        for y in 0..side {
            for ch in 0..c {
                out.set(&[x, y, ch], img.get(&[x0 + x, y0 + y, ch]));
            }
        }
    }
    out
}

/// Source coordinates and weights for one output axis: half-pixel centers, clamped.
fn bilinear_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

pub fn resize_bilinear(img: &Tensor, width: usize, height: usize) -> Tensor {
    let s = img.shape();
    let c = s[2];
    let tx = bilinear_taps(s[0], width);
    let ty = bilinear_taps(s[1], height);
    let mut out = Tensor::zeros(&[width, height, c]);
    for (x, &(x0, x1, fx)) in tx.iter().enumerate() {
        for (y, &(y0, y1, fy)) in ty.iter().enumerate() {
            for ch in 0..c {
                let top = img.get(&[x0, y0, ch]) * (1.0 - fx) + img.get(&[x1, y0, ch]) * fx;
                let bottom = img.get(&[x0, y1, ch]) * (1.0 - fx) + img.get(&[x1, y1, ch]) * fx;
                out.set(&[x, y, ch], top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    out
}

/// Crop, resize to `size × size`, and map `[0, 255]` onto `[-1, 1]`.
pub fn prepare_image(raw: &Tensor, size: usize) -> Tensor {
    let sq = center_crop(raw);
    let r = if sq.shape()[0] == size {
        sq
    } else {
        resize_bilinear(&sq, size, size)
    };
    r.map(|v| (v / 127.5 - 1.0).clamp(-1.0, 1.0))
}

/// Loads images from `dir` in lexicographic file-name order. Files that fail to decode
/// are skipped with a warning; `limit` caps the number of loaded images.
pub fn load_dataset(dir: &Path, size: usize, limit: Option<usize>) -> Result<Dataset> {
    if size == 0 {
        return Err(Error::Config("image size must be positive".into()));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Dataset(format!(
            "{} contains no files",
            dir.display()
        )));
    }
    let cap = limit.unwrap_or(usize::MAX);
    let mut ds = Dataset {
        images: Vec::new(),
        paths: Vec::new(),
    };
    for path in files {
        if ds.images.len() >= cap {
            break;
        }
        match read_image(&path) {
            Ok(raw) => {
                ds.images.push(prepare_image(&raw, size));
                ds.paths.push(path);
            }
            Err(e) => log::warn!("skipping {}: {e}", path.display()),
        }
    }
    if ds.images.is_empty() {
        return Err(Error::Dataset(format!(
            "no decodable images in {}",
            dir.display()
        )));
    }
    Ok(ds)
}
