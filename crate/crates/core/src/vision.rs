//! Image branch: fixed-width 2560-d image vectors.
//!
//! The baseline featurizer summarizes an image on a 16×16 cell grid at two
//! scales, the whole frame and its central half-size window. Each cell
//! contributes five statistics:
//!
//! | plane | statistic                                            |
//! |-------|------------------------------------------------------|
//! | 0–2   | mean R, G, B                                         |
//! | 3     | standard deviation of luminance inside the cell      |
//! | 4     | mean luminance gradient magnitude (central differences) |
//!
//! Cells are area-weighted: a pixel straddling a cell boundary contributes
//! to both cells in proportion to its overlap. Each of the ten 16×16 planes
//! is then z-scored within the image. Output layout is
//! `scale * 1280 + plane * 256 + row * 16 + col`.

use std::path::Path;

use image::RgbImage;
use thiserror::Error;

use crate::embedding::{EmbeddingError, EmbeddingTable};
use crate::rng::SeededRng;

pub const IMAGE_DIM: usize = 2560;
pub const GRID: usize = 16;
pub const PLANES: usize = 5;
pub const SCALES: usize = 2;
pub const CELLS: usize = GRID * GRID;
pub const NOISE_SIZE: u32 = 64;

#[derive(Debug, Error)]
pub enum VisionError {
    #[error("cannot decode image: {0}")]
    Decode(String),
    #[error("image {height}x{width} is smaller than 2x2")]
    TooSmall { height: u32, width: u32 },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageSource {
    BaselineStats,
    Precomputed,
    NoisePlaceholder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageVector {
    pub values: Vec<f64>,
    pub source: ImageSource,
}

/// Decode PNG or BMP (anything the `image` crate was built with).
pub fn decode_image(bytes: &[u8]) -> Result<RgbImage, VisionError> {
    image::load_from_memory(bytes)
        .map(|img| img.to_rgb8())
        .map_err(|e| VisionError::Decode(e.to_string()))
}

pub fn read_image(path: &Path) -> Result<RgbImage, VisionError> {
    let bytes = std::fs::read(path)
        .map_err(|e| VisionError::Io { path: path.display().to_string(), source: e })?;
    decode_image(&bytes)
}

/// Rec. 601 luma of an RGB triple in [0, 1].
pub fn luminance(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

/// Per-pixel maps the cell statistics are integrated from.
struct PixelMaps {
    width: usize,
    height: usize,
    rgb: [Vec<f64>; 3],
    lum: Vec<f64>,
    grad: Vec<f64>,
}

/// Derivative along one axis: central inside, one-sided at the edges.
fn diff(at: impl Fn(usize) -> f64, i: usize, n: usize) -> f64 {
    if i == 0 {
        at(1) - at(0)
    } else if i == n - 1 {
        at(n - 1) - at(n - 2)
    } else {
        (at(i + 1) - at(i - 1)) / 2.0
    }
}

impl PixelMaps {
    fn new(img: &RgbImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut rgb = [vec![0.0; w * h], vec![0.0; w * h], vec![0.0; w * h]];
        let mut lum = vec![0.0; w * h];
        for (x, y, p) in img.enumerate_pixels() {
            let i = y as usize * w + x as usize;
            let [r, g, b] = p.0.map(|c| c as f64 / 255.0);
            rgb[0][i] = r;
            rgb[1][i] = g;
            rgb[2][i] = b;
            lum[i] = luminance(r, g, b);
        }
        let mut grad = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let gx = diff(|k| lum[y * w + k], x, w);
                let gy = diff(|k| lum[k * w + x], y, h);
                grad[y * w + x] = (gx * gx + gy * gy).sqrt();
            }
        }
        Self { width: w, height: h, rgb, lum, grad }
    }
}

/// Overlap of pixels `[k, k+1)` with the interval `[lo, hi)`, for the pixel
/// range that touches it.
fn overlaps(lo: f64, hi: f64, n: usize) -> Vec<(usize, f64)> {
    let first = lo.floor().max(0.0) as usize;
    let last = (hi.ceil() as usize).min(n);
    (first..last)
        .filter_map(|k| {
            let w = (hi.min(k as f64 + 1.0) - lo.max(k as f64)).max(0.0);
            (w > 0.0).then_some((k, w))
        })
        .collect()
}

/// Raw (unstandardized) planes for one window `[x0, x0+ww) × [y0, y0+wh)`.
fn window_planes(m: &PixelMaps, x0: f64, y0: f64, ww: f64, wh: f64) -> [[f64; CELLS]; PLANES] {
    let mut planes = [[0.0; CELLS]; PLANES];
    let cw = ww / GRID as f64;
    let ch = wh / GRID as f64;
    let col_weights: Vec<_> = (0..GRID)
        .map(|c| overlaps(x0 + c as f64 * cw, x0 + (c + 1) as f64 * cw, m.width))
        .collect();
    for row in 0..GRID {
        let rows = overlaps(y0 + row as f64 * ch, y0 + (row + 1) as f64 * ch, m.height);
        for (col, cols) in col_weights.iter().enumerate() {
            let mut area = 0.0;
            let mut sums = [0.0; 5];
            for &(y, wy) in &rows {
                for &(x, wx) in cols {
                    let w = wy * wx;
                    let i = y * m.width + x;
                    area += w;
                    sums[0] += w * m.rgb[0][i];
                    sums[1] += w * m.rgb[1][i];
                    sums[2] += w * m.rgb[2][i];
                    sums[3] += w * m.lum[i];
                    sums[4] += w * m.grad[i];
                }
            }
            let mean_lum = sums[3] / area;
            let mut var = 0.0;
            for &(y, wy) in &rows {
                for &(x, wx) in cols {
                    let d = m.lum[y * m.width + x] - mean_lum;
                    var += wy * wx * d * d;
                }
            }
            let cell = row * GRID + col;
            planes[0][cell] = sums[0] / area;
            planes[1][cell] = sums[1] / area;
            planes[2][cell] = sums[2] / area;
            planes[3][cell] = (var / area).sqrt();
            planes[4][cell] = sums[4] / area;
        }
    }
    planes
}

fn check_size(img: &RgbImage) -> Result<(), VisionError> {
    if img.width() < 2 || img.height() < 2 {
        return Err(VisionError::TooSmall { height: img.height(), width: img.width() });
    }
    Ok(())
}

/// The ten raw planes (two scales × five statistics) before z-scoring.
pub fn cell_statistics(img: &RgbImage) -> Result<Vec<[f64; CELLS]>, VisionError> {
    check_size(img)?;
    let m = PixelMaps::new(img);
    let (w, h) = (m.width as f64, m.height as f64);
    let mut out = Vec::with_capacity(SCALES * PLANES);
    out.extend(window_planes(&m, 0.0, 0.0, w, h));
    out.extend(window_planes(&m, w / 4.0, h / 4.0, w / 2.0, h / 2.0));
    Ok(out)
}

/// Z-score a plane in place; a (numerically) constant plane becomes zeros.
pub fn standardize(plane: &mut [f64]) {
    let n = plane.len() as f64;
    let mean = plane.iter().sum::<f64>() / n;
    let var = plane.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var <= 1e-12 * mean * mean + 1e-24 {
        plane.iter_mut().for_each(|v| *v = 0.0);
    } else {
        let sd = var.sqrt();
        plane.iter_mut().for_each(|v| *v = (*v - mean) / sd);
    }
}

/// Baseline 2560-d image vector.
pub fn image_to_features(img: &RgbImage) -> Result<ImageVector, VisionError> {
    let planes = cell_statistics(img)?;
    let mut values = Vec::with_capacity(IMAGE_DIM);
    for plane in planes {
        let mut p = plane.to_vec();
        standardize(&mut p);
        values.extend(p);
    }
    Ok(ImageVector { values, source: ImageSource::BaselineStats })
}

/// Seeded uniform RGB noise, the stand-in frame for video posts.
pub fn noise_image(seed: u64, size: u32) -> RgbImage {
    let mut rng = SeededRng::new(seed);
    RgbImage::from_fn(size, size, |_, _| {
        let v = rng.next_u64();
        image::Rgb([v as u8, (v >> 8) as u8, (v >> 16) as u8])
    })
}

pub fn video_placeholder_features(seed: u64) -> ImageVector {
    let img = noise_image(seed, NOISE_SIZE);
    let mut v = image_to_features(&img).expect("noise frame is 64x64");
    v.source = ImageSource::NoisePlaceholder;
    v
}

pub fn image_vector_from_table(table: &EmbeddingTable, post_id: &str) -> Result<ImageVector, EmbeddingError> {
    let row = table.get(post_id, IMAGE_DIM)?;
    Ok(ImageVector { values: row.to_vec(), source: ImageSource::Precomputed })
}

/// One-shot lookup in a 2560-d sidecar file.
pub fn load_image_embedding(path: &Path, post_id: &str) -> Result<ImageVector, EmbeddingError> {
    image_vector_from_table(&EmbeddingTable::load(path)?, post_id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{ImageFormat, Rgb};
    use proptest::prelude::*;
    use std::io::Cursor;

    fn plane(v: &ImageVector, scale: usize, p: usize) -> &[f64] {
        let start = scale * PLANES * CELLS + p * CELLS;
        &v.values[start..start + CELLS]
    }

    #[test]
    fn uniform_gray() {
        let img = RgbImage::from_pixel(40, 30, Rgb([128, 128, 128]));
        let raw = cell_statistics(&img).unwrap();
        for s in 0..SCALES {
            for p in 0..3 {
                let pl = &raw[s * PLANES + p];
                assert!(pl.iter().all(|v| (v - 128.0 / 255.0).abs() < 1e-12));
            }
            assert!(raw[s * PLANES + 3].iter().all(|&v| v.abs() < 1e-12));
            assert!(raw[s * PLANES + 4].iter().all(|&v| v == 0.0));
        }
        let v = image_to_features(&img).unwrap();
        assert_eq!(v.values.len(), IMAGE_DIM);
        assert!(v.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn too_small_rejected() {
        let img = RgbImage::new(1, 5);
        assert!(matches!(image_to_features(&img), Err(VisionError::TooSmall { height: 5, width: 1 })));
        assert!(image_to_features(&RgbImage::new(2, 2)).is_ok());
    }

    #[test]
    fn decodes_png_and_bmp() {
        let img = noise_image(4, 20);
        for fmt in [ImageFormat::Png, ImageFormat::Bmp] {
            let mut buf = Cursor::new(Vec::new());
            img.write_to(&mut buf, fmt).unwrap();
            assert_eq!(decode_image(buf.get_ref()).unwrap(), img);
        }
        assert!(matches!(decode_image(b"not an image"), Err(VisionError::Decode(_))));
    }

    fn checkerboard32() -> RgbImage {
        RgbImage::from_fn(32, 32, |x, y| {
            if (x / 16 + y / 16) % 2 == 0 {
                Rgb([0, 0, 0])
            } else {
                Rgb([255, 255, 255])
            }
        })
    }

    /// Brute force: every pixel against every cell, overlap computed from
    /// rectangle intersection; gradient from its own neighbour loop.
    fn pixel_loop_planes(img: &RgbImage) -> Vec<Vec<f64>> {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let px = |x: usize, y: usize| {
            let p = img.get_pixel(x as u32, y as u32).0;
            [p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0]
        };
        let lum = |x: usize, y: usize| {
            let [r, g, b] = px(x, y);
            0.299 * r + 0.587 * g + 0.114 * b
        };
        let grad = |x: usize, y: usize| {
            let gx = if x == 0 {
                lum(1, y) - lum(0, y)
            } else if x == w - 1 {
                lum(w - 1, y) - lum(w - 2, y)
            } else {
                (lum(x + 1, y) - lum(x - 1, y)) / 2.0
            };
            let gy = if y == 0 {
                lum(x, 1) - lum(x, 0)
            } else if y == h - 1 {
                lum(x, h - 1) - lum(x, h - 2)
            } else {
                (lum(x, y + 1) - lum(x, y - 1)) / 2.0
            };
            (gx * gx + gy * gy).sqrt()
        };
        let mut out = Vec::new();
        let windows = [
            (0.0, 0.0, w as f64, h as f64),
            (w as f64 / 4.0, h as f64 / 4.0, w as f64 / 2.0, h as f64 / 2.0),
        ];
        for (x0, y0, ww, wh) in windows {
            let mut planes = vec![vec![0.0; CELLS]; PLANES];
            for cell in 0..CELLS {
                let (r, c) = (cell / GRID, cell % GRID);
                let (cx0, cx1) = (x0 + c as f64 * ww / 16.0, x0 + (c + 1) as f64 * ww / 16.0);
                let (cy0, cy1) = (y0 + r as f64 * wh / 16.0, y0 + (r + 1) as f64 * wh / 16.0);
                let mut weights = Vec::new();
                for y in 0..h {
                    for x in 0..w {
                        let ox = (cx1.min(x as f64 + 1.0) - cx0.max(x as f64)).max(0.0);
                        let oy = (cy1.min(y as f64 + 1.0) - cy0.max(y as f64)).max(0.0);
                        if ox * oy > 0.0 {
                            weights.push((x, y, ox * oy));
                        }
                    }
                }
                let area: f64 = weights.iter().map(|t| t.2).sum();
                let mean = |f: &dyn Fn(usize, usize) -> f64| {
                    weights.iter().map(|&(x, y, a)| a * f(x, y)).sum::<f64>() / area
                };
                for ch in 0..3 {
                    planes[ch][cell] = mean(&|x, y| px(x, y)[ch]);
                }
                let ml = mean(&|x, y| lum(x, y));
                planes[3][cell] = mean(&|x, y| (lum(x, y) - ml).powi(2)).sqrt();
                planes[4][cell] = mean(&|x, y| grad(x, y));
            }
            out.extend(planes);
        }
        out
    }

    #[test]
    fn checkerboard_gradient_peaks_on_seams() {
        let img = checkerboard32();
        let fast = cell_statistics(&img).unwrap();
        let slow = pixel_loop_planes(&img);
        for (f, s) in fast.iter().zip(&slow) {
            for (a, b) in f.iter().zip(s) {
                assert!((a - b).abs() < 1e-6);
            }
        }
        let g = &fast[4];
        let max = g.iter().cloned().fold(f64::MIN, f64::max);
        assert!(max > 0.0);
        for cell in 0..CELLS {
            let (r, c) = (cell / GRID, cell % GRID);
            let on_seam = r == 7 || r == 8 || c == 7 || c == 8;
            if !on_seam {
                assert_eq!(g[cell], 0.0);
            }
            if (r == 7 || r == 8) && (c == 7 || c == 8) {
                assert!((g[cell] - max).abs() < 1e-12);
            }
        }
        let v = image_to_features(&img).unwrap();
        let z = plane(&v, 0, 4);
        let zmax = z.iter().cloned().fold(f64::MIN, f64::max);
        assert!((z[7 * GRID + 7] - zmax).abs() < 1e-12);
    }

    #[test]
    fn oracle_agrees_on_odd_sizes() {
        for (w, h, seed) in [(2, 2, 1), (3, 5, 2), (17, 9, 3), (33, 20, 4)] {
            let img = RgbImage::from_fn(w, h, |x, y| {
                let v = (x * 37 + y * 91 + seed * 13) as u8;
                Rgb([v, v.wrapping_mul(3), 255 - v])
            });
            let fast = cell_statistics(&img).unwrap();
            let slow = pixel_loop_planes(&img);
            for (f, s) in fast.iter().zip(&slow) {
                for (a, b) in f.iter().zip(s) {
                    assert!((a - b).abs() < 1e-6, "{w}x{h}");
                }
            }
        }
    }

    #[test]
    fn placeholder_seeded() {
        let a = video_placeholder_features(1);
        assert_eq!(a, video_placeholder_features(1));
        assert_eq!(a.source, ImageSource::NoisePlaceholder);
        assert_eq!(a.values.len(), IMAGE_DIM);
        let b = video_placeholder_features(2);
        let dist: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        assert!(dist > 0.0);
    }

    #[test]
    fn sidecar_lookup() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("i.tsv");
        let mut t = EmbeddingTable::new(IMAGE_DIM);
        t.insert("p", vec![1.0; IMAGE_DIM]);
        t.insert("q", vec![1.0; 2048]);
        t.save(&path).unwrap();
        assert_eq!(load_image_embedding(&path, "p").unwrap().source, ImageSource::Precomputed);
        assert!(matches!(load_image_embedding(&path, "q"), Err(EmbeddingError::Dimension { found: 2048, .. })));
        assert!(matches!(load_image_embedding(&path, "r"), Err(EmbeddingError::MissingEmbedding(_))));
    }

    fn arb_image() -> impl Strategy<Value = RgbImage> {
        (2u32..24, 2u32..24, any::<u64>()).prop_map(|(w, h, seed)| {
            let mut rng = SeededRng::new(seed);
            RgbImage::from_fn(w, h, |_, _| Rgb([rng.below(128) as u8, rng.below(128) as u8, rng.below(128) as u8]))
        })
    }

    fn sorted(v: &[f64]) -> Vec<f64> {
        let mut s = v.to_vec();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        s
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn brightness_scale_invariant(img in arb_image()) {
            let doubled = RgbImage::from_fn(img.width(), img.height(), |x, y| {
                Rgb(img.get_pixel(x, y).0.map(|c| c * 2))
            });
            let a = image_to_features(&img).unwrap();
            let b = image_to_features(&doubled).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() < 1e-6);
            }
        }

        #[test]
        fn flip_permutes_cells(img in arb_image()) {
            let flipped = image::imageops::flip_horizontal(&img);
            let a = image_to_features(&img).unwrap();
            let b = image_to_features(&flipped).unwrap();
            for s in 0..SCALES {
                for p in 0..PLANES {
                    let (pa, pb) = (sorted(plane(&a, s, p)), sorted(plane(&b, s, p)));
                    for (x, y) in pa.iter().zip(&pb) {
                        prop_assert!((x - y).abs() < 1e-6);
                    }
                }
            }
        }

        #[test]
        fn always_finite(w in 2u32..40, h in 2u32..40, seed in any::<u64>()) {
            let mut rng = SeededRng::new(seed);
            let img = RgbImage::from_fn(w, h, |_, _| Rgb([rng.next_u64() as u8, 0, 255]));
            let v = image_to_features(&img).unwrap();
            prop_assert_eq!(v.values.len(), IMAGE_DIM);
            prop_assert!(v.values.iter().all(|x| x.is_finite()));
        }
    }
}
