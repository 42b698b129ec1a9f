//! Datasets on disk and synthetic generators.
//!
//! A dataset is a directory with `manifest.json` and one file per map.
//! `.pgm` files (8-bit binary graymaps) are normalized from 0..255 to
//! [-1, 1]; `.raw` files hold exact `f64` values:
//!
//! ```text
//! u64 LE rows | u64 LE cols | rows*cols f64 LE, row-major
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::{self, FilterType};
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, GrayImage, ImageEncoder, ImageReader, Luma};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::backprop::Sample;
use crate::error::{OnnError, Result};
use crate::metrics::{denormalize, is_binary_mask, normalize, variance};
use crate::tensor::Map2D;

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Denoise,
    Synth,
    Segment,
    Transform,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Denoise => "denoise",
            TaskKind::Synth => "synth",
            TaskKind::Segment => "segment",
            TaskKind::Transform => "transform",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetPair {
    pub id: String,
    pub input: Map2D,
    pub target: Map2D,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub task: TaskKind,
    pub pairs: Vec<DatasetPair>,
}

impl Dataset {
    pub fn dims(&self) -> Option<(usize, usize)> {
        self.pairs.first().map(|p| p.input.dims())
    }

    pub fn samples(&self) -> Vec<Sample> {
        self.pairs
            .iter()
            .map(|p| Sample::single(p.input.clone(), p.target.clone()))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let Some(dims) = self.dims() else {
            return Err(OnnError::invalid("dataset has no items"));
        };
        for p in &self.pairs {
            if p.input.dims() != dims || p.target.dims() != dims {
                return Err(OnnError::dims(format!("item {}: all maps must be {}x{}", p.id, dims.0, dims.1)));
            }
            if !p.input.is_finite() || !p.target.is_finite() {
                return Err(OnnError::NonFinite(format!("item {}", p.id)));
            }
            if self.task == TaskKind::Segment && !is_binary_mask(&p.target) {
                return Err(OnnError::invalid(format!("item {}: mask is not {{-1, +1}}", p.id)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub task: TaskKind,
    pub rows: usize,
    pub cols: usize,
    pub items: Vec<ManifestItem>,
    /// Free-form provenance: generator and seed, or resize method for
    /// ingested images.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestItem {
    pub id: String,
    pub input: String,
    pub target: String,
}

// ---- files ---------------------------------------------------------------

/// Pixel values 0..255 as read; see [`load_map`] for normalized loading.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<Map2D> {
    let img = decode_gray(path.as_ref())?;
    Ok(gray_to_map(&img))
}

fn decode_gray(path: &Path) -> Result<GrayImage> {
    let reader = ImageReader::open(path).map_err(|e| OnnError::io(path, e))?;
    let img = reader
        .with_guessed_format()
        .map_err(|e| OnnError::io(path, e))?
        .decode()
        .map_err(|e| OnnError::format(path, e.to_string()))?;
    Ok(img.to_luma8())
}

fn gray_to_map(img: &GrayImage) -> Map2D {
    let (w, h) = img.dimensions();
    Map2D::from_fn(h as usize, w as usize, |r, c| img.get_pixel(c as u32, r as u32)[0] as f64)
}

/// Writes a [-1, 1] map as an 8-bit binary graymap, clamping out-of-range values.
pub fn write_pgm(path: impl AsRef<Path>, map: &Map2D) -> Result<()> {
    let path = path.as_ref();
    let px = denormalize(map, 0.0, 255.0)?;
    let img = GrayImage::from_fn(map.cols() as u32, map.rows() as u32, |x, y| {
        Luma([px.get(y as usize, x as usize).round().clamp(0.0, 255.0) as u8])
    });
    let file = fs::File::create(path).map_err(|e| OnnError::io(path, e))?;
    PnmEncoder::new(std::io::BufWriter::new(file))
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(img.as_raw(), img.width(), img.height(), ExtendedColorType::L8)
        .map_err(|e| OnnError::format(path, e.to_string()))
}

pub fn write_raw(path: impl AsRef<Path>, map: &Map2D) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(16 + 8 * map.len());
    bytes.extend_from_slice(&(map.rows() as u64).to_le_bytes());
    bytes.extend_from_slice(&(map.cols() as u64).to_le_bytes());
    for v in map.as_slice() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| OnnError::io(path, e))
}

pub fn read_raw(path: impl AsRef<Path>) -> Result<Map2D> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| OnnError::io(path, e))?;
    let word = |i: usize| -> [u8; 8] { bytes[i * 8..i * 8 + 8].try_into().expect("8 bytes") };
    if bytes.len() < 16 {
        return Err(OnnError::format(path, "truncated header"));
    }
    let rows = u64::from_le_bytes(word(0)) as usize;
    let cols = u64::from_le_bytes(word(1)) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(16));
    if expected != Some(bytes.len()) {
        return Err(OnnError::format(path, format!("size does not match a {rows}x{cols} map")));
    }
    let data = (0..rows * cols).map(|i| f64::from_le_bytes(word(i + 2))).collect();
    Map2D::from_vec(rows, cols, data)
}

/// A map in network units: `.pgm` normalized from 0..255, `.raw` as stored.
pub fn load_map(path: impl AsRef<Path>) -> Result<Map2D> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("raw") => read_raw(path),
        Some("pgm") => normalize(&read_pgm(path)?, 0.0, 255.0),
        _ => Err(OnnError::format(path, "expected a .pgm or .raw file")),
    }
}

pub fn save_map(path: impl AsRef<Path>, map: &Map2D) -> Result<()> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("raw") => write_raw(path, map),
        Some("pgm") => write_pgm(path, map),
        _ => Err(OnnError::format(path, "expected a .pgm or .raw file")),
    }
}

/// Any decodable image, converted to gray, resized bilinearly to
/// `rows × cols` and normalized to [-1, 1].
pub fn ingest_image(path: impl AsRef<Path>, rows: usize, cols: usize) -> Result<Map2D> {
    let img = decode_gray(path.as_ref())?;
    let resized = imageops::resize(&img, cols as u32, rows as u32, FilterType::Triangle);
    normalize(&gray_to_map(&resized), 0.0, 255.0)
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST);
    let text = fs::read_to_string(&manifest_path).map_err(|e| OnnError::io(&manifest_path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| OnnError::format(&manifest_path, e.to_string()))?;
    let pairs = manifest
        .items
        .iter()
        .map(|item| {
            Ok(DatasetPair {
                id: item.id.clone(),
                input: load_map(dir.join(&item.input))?,
                target: load_map(dir.join(&item.target))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ds = Dataset {
        task: manifest.task,
        pairs,
    };
    ds.validate()?;
    if ds.dims() != Some((manifest.rows, manifest.cols)) {
        return Err(OnnError::format(&manifest_path, "maps do not match the declared size"));
    }
    Ok(ds)
}

/// Writes every map as `.raw` (exact) plus a `.pgm` preview, and the manifest.
pub fn save_dataset(dir: impl AsRef<Path>, ds: &Dataset, metadata: Option<serde_json::Value>) -> Result<()> {
    let dir = dir.as_ref();
    ds.validate()?;
    fs::create_dir_all(dir).map_err(|e| OnnError::io(dir, e))?;
    let (rows, cols) = ds.dims().expect("validated");
    let mut items = Vec::with_capacity(ds.pairs.len());
    for p in &ds.pairs {
        let input = format!("{}_input.raw", p.id);
        let target = format!("{}_target.raw", p.id);
        write_raw(dir.join(&input), &p.input)?;
        write_raw(dir.join(&target), &p.target)?;
        write_pgm(dir.join(format!("{}_input.pgm", p.id)), &p.input)?;
        write_pgm(dir.join(format!("{}_target.pgm", p.id)), &p.target)?;
        items.push(ManifestItem {
            id: p.id.clone(),
            input,
            target,
        });
    }
    let manifest = Manifest {
        task: ds.task,
        rows,
        cols,
        items,
        metadata,
    };
    let path: PathBuf = dir.join(MANIFEST);
    let text = crate::model_io::to_json_exact(&manifest)?;
    fs::write(&path, text).map_err(|e| OnnError::io(&path, e))
}

// ---- generators ------------------------------------------------------------

/// `±amplitude` checkerboard with square cells of `cell` pixels.
pub fn checkerboard(rows: usize, cols: usize, cell: usize, amplitude: f64) -> Map2D {
    let cell = cell.max(1);
    Map2D::from_fn(rows, cols, |r, c| if (r / cell + c / cell).is_multiple_of(2) { amplitude } else { -amplitude })
}

/// Zero-mean Gaussian white noise.
pub fn white_noise(rng: &mut ChaCha8Rng, rows: usize, cols: usize, sigma: f64) -> Map2D {
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    Map2D::from_fn(rows, cols, |_, _| normal.sample(rng))
}

/// A smooth structured image in roughly [-0.8, 0.8]: oriented gratings
/// plus a soft disc, different for every draw.
pub fn pattern(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Map2D {
    let tau = std::f64::consts::TAU;
    let (fx, fy) = (rng.random_range(0.5..2.5), rng.random_range(0.5..2.5));
    let phase = rng.random_range(0.0..tau);
    let (cr, cc) = (rng.random_range(0.25..0.75) * rows as f64, rng.random_range(0.25..0.75) * cols as f64);
    let radius = rng.random_range(0.15..0.35) * rows.min(cols) as f64;
    Map2D::from_fn(rows, cols, |r, c| {
        let u = r as f64 / rows as f64;
        let v = c as f64 / cols as f64;
        let grating = (tau * (fx * u + fy * v) + phase).sin();
        let d = ((r as f64 - cr).powi(2) + (c as f64 - cc).powi(2)).sqrt();
        let disc = 1.0 / (1.0 + ((d - radius) / 1.5).exp());
        0.4 * grating + 0.8 * disc - 0.4
    })
}

/// Adds Gaussian noise whose variance equals the clean image's, so the
/// noisy image measures exactly 0 dB against it.
pub fn add_noise_at_zero_db(rng: &mut ChaCha8Rng, clean: &Map2D) -> Result<Map2D> {
    let signal = variance(clean.as_slice());
    if signal == 0.0 {
        return Err(OnnError::invalid("clean image has zero variance"));
    }
    let noise = white_noise(rng, clean.rows(), clean.cols(), 1.0);
    let scale = (signal / variance(noise.as_slice())).sqrt();
    clean.zip_map(&noise, |s, n| s + scale * n)
}

fn shapes_mask(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Map2D {
    let mut mask = Map2D::filled(rows, cols, -1.0);
    let count = rng.random_range(1..=3);
    for _ in 0..count {
        let (cr, cc) = (rng.random_range(0..rows) as f64, rng.random_range(0..cols) as f64);
        let size = rng.random_range(0.2..0.35) * rows.min(cols) as f64;
        let disc = rng.random_bool(0.5);
        for r in 0..rows {
            for c in 0..cols {
                let (dr, dc) = (r as f64 - cr, c as f64 - cc);
                let inside = if disc {
                    dr * dr + dc * dc <= size * size
                } else {
                    dr.abs() <= size && dc.abs() <= size * 0.7
                };
                if inside {
                    mask.set(r, c, 1.0);
                }
            }
        }
    }
    if mask.as_slice().iter().all(|&v| v == -1.0) {
        mask.set(rows / 2, cols / 2, 1.0);
    }
    mask
}

/// Local transform used for the transformation task: contrast inversion
/// of a 3×3 box blur (edges replicate). Its inverse, a sharpening, is the
/// paired problem.
fn blur_invert(map: &Map2D) -> Map2D {
    let (rows, cols) = map.dims();
    Map2D::from_fn(rows, cols, |r, c| {
        let mut sum = 0.0;
        for dr in -1isize..=1 {
            for dc in -1isize..=1 {
                let rr = (r as isize + dr).clamp(0, rows as isize - 1) as usize;
                let cc = (c as isize + dc).clamp(0, cols as isize - 1) as usize;
                sum += map.get(rr, cc);
            }
        }
        -sum / 9.0
    })
}

/// A synthetic dataset of `count` items of `size × size` pixels.
///
/// * denoise: pattern + white noise at exactly 0 dB → pattern
/// * synth: white noise → pattern (one fixed noise image per target)
/// * segment: textured shapes with noise → `{-1, +1}` mask
/// * transform: `a → b` and `b → a` pairs, so inverse problems appear together
pub fn generate(kind: TaskKind, seed: u64, count: usize, size: usize) -> Result<Dataset> {
    if count == 0 || size < 4 {
        return Err(OnnError::invalid(format!("need at least 1 item of at least 4x4, got {count} of {size}x{size}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(count);
    let id = |i: usize| format!("{}_{i:03}", kind.name());
    match kind {
        TaskKind::Denoise => {
            for i in 0..count {
                let clean = pattern(&mut rng, size, size);
                let noisy = add_noise_at_zero_db(&mut rng, &clean)?;
                pairs.push(DatasetPair {
                    id: id(i),
                    input: noisy,
                    target: clean,
                });
            }
        }
        TaskKind::Synth => {
            for i in 0..count {
                let target = if i == 0 {
                    checkerboard(size, size, 2, 0.8)
                } else {
                    pattern(&mut rng, size, size)
                };
                pairs.push(DatasetPair {
                    id: id(i),
                    input: white_noise(&mut rng, size, size, 0.5),
                    target,
                });
            }
        }
        TaskKind::Segment => {
            for i in 0..count {
                let mask = shapes_mask(&mut rng, size, size);
                let texture = pattern(&mut rng, size, size);
                let noise = white_noise(&mut rng, size, size, 0.1);
                let input = Map2D::from_fn(size, size, |r, c| {
                    let fg = if mask.get(r, c) > 0.0 { 0.5 } else { -0.5 };
                    (fg + 0.15 * texture.get(r, c) + noise.get(r, c)).clamp(-1.0, 1.0)
                });
                pairs.push(DatasetPair {
                    id: id(i),
                    input,
                    target: mask,
                });
            }
        }
        TaskKind::Transform => {
            let mut i = 0;
            while pairs.len() < count {
                let a = pattern(&mut rng, size, size);
                let b = blur_invert(&a);
                pairs.push(DatasetPair {
                    id: id(i),
                    input: a.clone(),
                    target: b.clone(),
                });
                i += 1;
                if pairs.len() < count {
                    pairs.push(DatasetPair {
                        id: id(i),
                        input: b,
                        target: a,
                    });
                    i += 1;
                }
            }
        }
    }
    Ok(Dataset { task: kind, pairs })
}
