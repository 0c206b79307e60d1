//! A procedural corpus of colored rectangles and oriented Gabor-like strokes.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io::grid::write_image;
use crate::rng::{derive_seed, Stream};
use crate::tensor::Tensor;

fn color(s: &mut Stream) -> [f64; 3] {
    [
        s.uniform() * 2.0 - 1.0,
        s.uniform() * 2.0 - 1.0,
        s.uniform() * 2.0 - 1.0,
    ]
}

/// One `[size, size, 3]` image in `[-1, 1]`: a flat background, one to three rectangles,
/// and one or two strokes blended on top.
pub fn synthetic_image(size: usize, seed: u64) -> Tensor {
    let mut s = Stream::new(seed);
    let n = size as f64;
    let bg = color(&mut s).map(|c| 0.5 * c);
    let mut img = Tensor::zeros(&[size, size, 3]);
    for x in 0..size {
        for y in 0..size {
            for c in 0..3 {
                img.set(&[x, y, c], bg[c]);
            }
        }
    }
    for _ in 0..1 + s.below(3) {
        let (w, h) = (2 + s.below(size / 2), 2 + s.below(size / 2));
        let (x0, y0) = (s.below(size - w + 1), s.below(size - h + 1));
        let col = color(&mut s);
        for x in x0..x0 + w {
            for y in y0..y0 + h {
                for c in 0..3 {
                    img.set(&[x, y, c], col[c]);
                }
            }
        }
    }
    for _ in 0..1 + s.below(2) {
        let theta = s.uniform() * PI;
        let (cx, cy) = (s.uniform() * n, s.uniform() * n);
        let wavelength = n * (0.25 + 0.25 * s.uniform());
        let (sigma_along, sigma_across) = (n * 0.25, n * 0.08);
        let col = color(&mut s);
        let (ct, st) = (theta.cos(), theta.sin());
        for x in 0..size {
            for y in 0..size {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                let along = dx * ct + dy * st;
                let across = -dx * st + dy * ct;
                let env = (-(along * along) / (2.0 * sigma_along * sigma_along)
                    - (across * across) / (2.0 * sigma_across * sigma_across))
                    .exp();
                let alpha = env * (2.0 * PI * across / wavelength).cos().max(0.0);
                for c in 0..3 {
                    let v = img.get(&[x, y, c]);
                    img.set(&[x, y, c], (1.0 - alpha) * v + alpha * col[c]);
                }
            }
        }
    }
    img.map(|v| v.clamp(-1.0, 1.0))
}

/// `n` images; image `i` depends only on `(seed, i)`.
pub fn synthetic_corpus(n: usize, size: usize, seed: u64) -> Vec<Tensor> {
    (0..n)
        .map(|i| synthetic_image(size, derive_seed(seed, i as u64)))
        .collect()
}

/// Writes images as `img_00000.ppm`, `img_00001.ppm`, … and returns the paths.
pub fn write_corpus(dir: &Path, images: &[Tensor]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    images
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let p = dir.join(format!("img_{i:05}.ppm"));
            write_image(img, &p)?;
            Ok(p)
        })
        .collect()
}
