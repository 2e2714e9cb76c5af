//! Patch-based image denoising: overlapping patches, truncated EM training,
//! posterior-mean reconstruction and overlap-averaged reassembly.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::exact_em::EmTrace;
use crate::init::random_init;
use crate::model::{Dataset, ModelParams, NoiseMode};
use crate::truncated_em::{run_truncated_em_with, truncated_posterior_means, TruncatedOptions, TruncationConfig};

/// Grayscale image with `f64` pixels, nominally in `[0, 255]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pixels: DMatrix<f64>,
}

impl GrayImage {
    pub fn new(pixels: DMatrix<f64>) -> Result<Self> {
        if pixels.is_empty() {
            return Err(Error::InvalidInput("empty image".into()));
        }
        if pixels.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite pixel".into()));
        }
        Ok(GrayImage { pixels })
    }

    pub fn rows(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn cols(&self) -> usize {
        self.pixels.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.pixels.shape()
    }

    pub fn pixels(&self) -> &DMatrix<f64> {
        &self.pixels
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.pixels[(r, c)]
    }

    pub fn clipped(&self) -> GrayImage {
        GrayImage {
            pixels: self.pixels.map(|v| v.clamp(0.0, 255.0)),
        }
    }

    /// Sub-image of `rows × cols` starting at `(r0, c0)`.
    pub fn crop(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Result<GrayImage> {
        if r0 + rows > self.rows() || c0 + cols > self.cols() || rows == 0 || cols == 0 {
            return Err(Error::InvalidInput(format!(
                "crop {rows}x{cols} at ({r0},{c0}) outside {}x{} image",
                self.rows(),
                self.cols()
            )));
        }
        GrayImage::new(self.pixels.view((r0, c0), (rows, cols)).into_owned())
    }

    fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for r in 0..self.rows() {
            for c in 0..self.cols() {
                out.push(self.pixels[(r, c)].round().clamp(0.0, 255.0) as u8);
            }
        }
        out
    }

    fn from_bytes(rows: usize, cols: usize, bytes: &[u8]) -> Result<GrayImage> {
        GrayImage::new(DMatrix::from_fn(rows, cols, |r, c| f64::from(bytes[r * cols + c])))
    }
}

/// Overlapping patches of one image with their top-left anchors.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchGrid {
    pub patches: Dataset,
    pub positions: Vec<(usize, usize)>,
    pub p: usize,
}

/// Every `p × p` patch at shift 1, anchors in row-major order, each patch
/// flattened row-major.
pub fn extract_patches(img: &GrayImage, p: usize) -> Result<PatchGrid> {
    let (rows, cols) = img.shape();
    if p == 0 || p > rows || p > cols {
        return Err(Error::InvalidInput(format!("patch size {p} does not fit a {rows}x{cols} image")));
    }
    let positions: Vec<(usize, usize)> = (0..=rows - p).flat_map(|r| (0..=cols - p).map(move |c| (r, c))).collect();
    let mut data = DMatrix::zeros(p * p, positions.len());
    for (n, &(r0, c0)) in positions.iter().enumerate() {
        let mut col = data.column_mut(n);
        for i in 0..p {
            for j in 0..p {
                col[i * p + j] = img.get(r0 + i, c0 + j);
            }
        }
    }
    Ok(PatchGrid {
        patches: Dataset::from_columns(data)?,
        positions,
        p,
    })
}

/// Averages all patches covering each pixel; the result is clipped to
/// `[0, 255]`.
pub fn reassemble(grid: &PatchGrid, rows: usize, cols: usize) -> Result<GrayImage> {
    let p = grid.p;
    if grid.patches.d() != p * p || grid.patches.n() != grid.positions.len() {
        return Err(Error::dims("patch grid", format!("D = {}", p * p), grid.patches.d()));
    }
    let mut sum = DMatrix::<f64>::zeros(rows, cols);
    let mut count = DMatrix::<u32>::zeros(rows, cols);
    for (n, &(r0, c0)) in grid.positions.iter().enumerate() {
        if r0 + p > rows || c0 + p > cols {
            return Err(Error::InvalidInput(format!("patch anchor ({r0},{c0}) outside {rows}x{cols}")));
        }
        let y = grid.patches.point_slice(n);
        for i in 0..p {
            for j in 0..p {
                sum[(r0 + i, c0 + j)] += y[i * p + j];
                count[(r0 + i, c0 + j)] += 1;
            }
        }
    }
    if count.iter().any(|&c| c == 0) {
        return Err(Error::InvalidInput("patch grid leaves pixels uncovered".into()));
    }
    GrayImage::new(sum.zip_map(&count, |s, c| (s / f64::from(c)).clamp(0.0, 255.0)))
}

/// Replaces every patch by its posterior-mean reconstruction `W⟨s⊙z⟩`.
pub fn denoise_patches(
    params: &ModelParams,
    grid: &PatchGrid,
    cfg: &TruncationConfig,
    workers: usize,
) -> Result<PatchGrid> {
    let esz = truncated_posterior_means(params, &grid.patches, cfg, &Default::default(), workers)?;
    Ok(PatchGrid {
        patches: Dataset::from_columns(&params.w * esz)?,
        positions: grid.positions.clone(),
        p: grid.p,
    })
}

#[derive(Clone, Debug)]
pub struct DenoiseOptions {
    pub h: usize,
    pub patch: usize,
    pub cfg: TruncationConfig,
    pub em: TruncatedOptions,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct DenoiseResult {
    pub image: GrayImage,
    pub params: ModelParams,
    pub trace: Vec<EmTrace>,
    /// Learned activation probabilities in descending order.
    pub sorted_pi: Vec<f64>,
}

/// Trains truncated EM with homoscedastic noise on all patches of the
/// noisy image, then reconstructs and reassembles it.
pub fn run_denoise(noisy: &GrayImage, opts: &DenoiseOptions) -> Result<DenoiseResult> {
    let grid = extract_patches(noisy, opts.patch)?;
    let init = random_init(&grid.patches, opts.h, NoiseMode::Homoscedastic, opts.seed)?;
    let run = run_truncated_em_with(&grid.patches, &init, &opts.cfg, &opts.em)?;
    let denoised = denoise_patches(&run.params, &grid, &opts.cfg, opts.em.em.workers)?;
    let image = reassemble(&denoised, noisy.rows(), noisy.cols())?;
    let mut sorted_pi: Vec<f64> = run.params.pi.iter().copied().collect();
    sorted_pi.sort_by(|a, b| b.total_cmp(a));
    Ok(DenoiseResult {
        image,
        params: run.params,
        trace: run.trace,
        sorted_pi,
    })
}

/// `img + N(0, sigma²)` per pixel, clipped to `[0, 255]`.
pub fn add_gaussian_noise(img: &GrayImage, sigma: f64, seed: u64) -> Result<GrayImage> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidConfig(format!("noise sigma must be finite and non-negative, got {sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    // row-major draw order
    let mut pixels = img.pixels.clone();
    for r in 0..img.rows() {
        for c in 0..img.cols() {
            pixels[(r, c)] = (pixels[(r, c)] + normal.sample(&mut rng)).clamp(0.0, 255.0);
        }
    }
    GrayImage::new(pixels)
}

/// Basis columns as `p × p` tiles in a grid with one-pixel gaps, each tile
/// scaled to the full gray range.
pub fn basis_mosaic(w: &DMatrix<f64>, p: usize) -> Result<GrayImage> {
    if w.nrows() != p * p {
        return Err(Error::dims("basis mosaic", p * p, w.nrows()));
    }
    let h = w.ncols();
    let per_row = (h as f64).sqrt().ceil().max(1.0) as usize;
    let tile_rows = h.div_ceil(per_row).max(1);
    let side = |k: usize| k * (p + 1) + 1;
    let mut pixels = DMatrix::from_element(side(tile_rows), side(per_row), 255.0);
    for k in 0..h {
        let col = w.column(k);
        let (lo, hi) = (col.min(), col.max());
        let span = if hi > lo { hi - lo } else { 1.0 };
        let (tr, tc) = (k / per_row, k % per_row);
        for i in 0..p {
            for j in 0..p {
                pixels[(tr * (p + 1) + 1 + i, tc * (p + 1) + 1 + j)] = 255.0 * (col[i * p + j] - lo) / span;
            }
        }
    }
    GrayImage::new(pixels)
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads an 8-bit binary PGM (`P5`).
pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    parse_pgm(&fs::read(path).map_err(|e| io_err(path, e))?)
}

pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Parse("truncated PGM header".into()));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|e| Error::Parse(e.to_string()))?);
    }
    if fields[0] != "P5" {
        return Err(Error::Parse(format!("expected PGM magic P5, got {}", fields[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(format!("PGM header field {s:?}: {e}")));
    let (cols, rows, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(Error::Parse(format!("only 8-bit PGM is supported, maxval {maxval}")));
    }
    // single whitespace byte after maxval
    pos += 1;
    let body = bytes.get(pos..pos + rows * cols).ok_or_else(|| Error::Parse("truncated PGM raster".into()))?;
    GrayImage::from_bytes(rows, cols, body)
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    let mut out = format!("P5\n{} {}\n255\n", img.cols(), img.rows()).into_bytes();
    out.extend(img.to_bytes());
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn read_png(path: &Path) -> Result<GrayImage> {
    let img = image::open(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?.into_luma8();
    let (cols, rows) = img.dimensions();
    GrayImage::from_bytes(rows as usize, cols as usize, img.as_raw())
}

pub fn write_png(path: &Path, img: &GrayImage) -> Result<()> {
    let buf = image::GrayImage::from_raw(img.cols() as u32, img.rows() as u32, img.to_bytes())
        .ok_or_else(|| Error::InvalidInput("image buffer size".into()))?;
    buf.save(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Reads a PGM or PNG image, chosen by extension.
pub fn read_image(path: &Path) -> Result<GrayImage> {
    if !path.exists() {
        return Err(io_err(path, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file")));
    }
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => read_png(path),
        _ => read_pgm(path),
    }
}

pub fn write_image(path: &Path, img: &GrayImage) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => write_png(path, img),
        _ => write_pgm(path, img),
    }
}
