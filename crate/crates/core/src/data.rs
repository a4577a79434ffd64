//! Datasets: the synthetic ring of Gaussians and IDX image files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Environment variable naming the dataset cache directory.
pub const DATA_DIR_ENV: &str = "OTASSIGN_DATA_DIR";

/// `$OTASSIGN_DATA_DIR`, else `$HOME/.cache/otassign`.
pub fn data_dir() -> PathBuf {
    if let Some(dir) = std::env::var_os(DATA_DIR_ENV) {
        return PathBuf::from(dir);
    }
    let home = std::env::var_os("HOME").unwrap_or_else(|| ".".into());
    PathBuf::from(home).join(".cache").join("otassign")
}

/// An immutable set of real points, one per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub points: Tensor,
    pub labels: Option<Vec<u8>>,
    /// `(height, width)` for image data.
    pub image_shape: Option<(usize, usize)>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, points: Tensor) -> Result<Self> {
        if points.shape().len() != 2 {
            return Err(Error::Shape(format!(
                "dataset points must be a matrix, got shape {:?}",
                points.shape()
            )));
        }
        if points.rows() == 0 {
            return Err(Error::Empty("dataset"));
        }
        Ok(Self {
            name: name.into(),
            points,
            labels: None,
            image_shape: None,
        })
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }
}

/// `n_modes` isotropic Gaussians centred evenly on a circle of `radius`;
/// point `i` comes from mode `i mod n_modes`.
pub fn ring_of_gaussians(
    n_modes: usize,
    n_points: usize,
    radius: f64,
    sigma: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_modes == 0 || n_points == 0 {
        return Err(Error::Invalid("ring needs at least one mode and one point".into()));
    }
    if !(sigma >= 0.0) || !radius.is_finite() || !sigma.is_finite() {
        return Err(Error::Invalid(format!(
            "ring radius {radius} and sigma {sigma} must be finite, sigma nonnegative"
        )));
    }
    let centers = ring_centers(n_modes, radius);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(2 * n_points);
    for i in 0..n_points {
        let c = centers[i % n_modes];
        let dx: f64 = StandardNormal.sample(&mut rng);
        let dy: f64 = StandardNormal.sample(&mut rng);
        data.push(c[0] + sigma * dx);
        data.push(c[1] + sigma * dy);
    }
    let mut ds = Dataset::new("ring", Tensor::matrix(n_points, 2, data)?)?;
    ds.labels = Some((0..n_points).map(|i| (i % n_modes) as u8).collect());
    Ok(ds)
}

/// Mode centres of [`ring_of_gaussians`]; the first sits on the positive x-axis.
pub fn ring_centers(n_modes: usize, radius: f64) -> Vec<[f64; 2]> {
    (0..n_modes)
        .map(|k| {
            // quarter turns land exactly on the axes
            let (s, c) = match (4 * k) % n_modes {
                0 => exact_quarter(4 * k / n_modes),
                _ => (2.0 * std::f64::consts::PI * k as f64 / n_modes as f64).sin_cos(),
            };
            [radius * c, radius * s]
        })
        .collect()
}

fn exact_quarter(q: usize) -> (f64, f64) {
    match q % 4 {
        0 => (0.0, 1.0),
        1 => (1.0, 0.0),
        2 => (0.0, -1.0),
        _ => (-1.0, 0.0),
    }
}

fn open_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let file = File::open(path)?;
    let mut buf = Vec::new();
    if path.extension().is_some_and(|e| e == "gz") {
        GzDecoder::new(BufReader::new(file)).read_to_end(&mut buf)?;
    } else {
        BufReader::new(file).read_to_end(&mut buf)?;
    }
    Ok(buf)
}

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Idx(format!("{what}: file truncated in header")))
}

/// Raw IDX image payload: `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    let magic = be_u32(bytes, 0, "images")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::BadMagic {
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    let n = be_u32(bytes, 4, "images")? as usize;
    let rows = be_u32(bytes, 8, "images")? as usize;
    let cols = be_u32(bytes, 12, "images")? as usize;
    let want = n * rows * cols;
    let body = &bytes[16..];
    if body.len() < want {
        return Err(Error::Idx(format!(
            "images: expected {want} pixel bytes, file has {}",
            body.len()
        )));
    }
    Ok((n, rows, cols, body[..want].to_vec()))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, "labels")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::BadMagic {
            expected: IDX_LABELS_MAGIC,
            found: magic,
        });
    }
    let n = be_u32(bytes, 4, "labels")? as usize;
    let body = &bytes[8..];
    if body.len() < n {
        return Err(Error::Idx(format!(
            "labels: expected {n} bytes, file has {}",
            body.len()
        )));
    }
    Ok(body[..n].to_vec())
}

/// Loads an IDX image file (optionally gzip-compressed, by `.gz` extension)
/// and scales pixels to `[0, 1]`.
pub fn load_idx(images: &Path, labels: Option<&Path>) -> Result<Dataset> {
    let (n, rows, cols, pixels) = parse_idx_images(&open_maybe_gz(images)?)?;
    if n == 0 {
        return Err(Error::Empty("IDX image file"));
    }
    let labels = match labels {
        Some(p) => {
            let l = parse_idx_labels(&open_maybe_gz(p)?)?;
            if l.len() != n {
                return Err(Error::Idx(format!(
                    "{} images but {} labels",
                    n,
                    l.len()
                )));
            }
            Some(l)
        }
        None => None,
    };
    let data = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let name = images
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "idx".into());
    let mut ds = Dataset::new(name, Tensor::matrix(n, rows * cols, data)?)?;
    ds.labels = labels;
    ds.image_shape = Some((rows, cols));
    Ok(ds)
}

/// Writes `ds` as IDX, quantizing pixels with `round(255·v)`. The labels file
/// is written only when both a path and labels are present.
pub fn write_idx(ds: &Dataset, images: &Path, labels: Option<&Path>) -> Result<()> {
    let (h, w) = ds
        .image_shape
        .ok_or(Error::MissingImageShape("write_idx"))?;
    let mut out = BufWriter::new(File::create(images)?);
    out.write_all(&IDX_IMAGES_MAGIC.to_be_bytes())?;
    for v in [ds.len(), h, w] {
        out.write_all(&(v as u32).to_be_bytes())?;
    }
    let bytes: Vec<u8> = ds
        .points
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    out.write_all(&bytes)?;
    out.flush()?;
    if let (Some(path), Some(l)) = (labels, &ds.labels) {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(&IDX_LABELS_MAGIC.to_be_bytes())?;
        out.write_all(&(l.len() as u32).to_be_bytes())?;
        out.write_all(l)?;
        out.flush()?;
    }
    Ok(())
}

/// Looks for the standard MNIST-style training files inside `dir`, plain or
/// gzipped.
pub fn find_idx_pair(dir: &Path, prefix: &str) -> Option<(PathBuf, Option<PathBuf>)> {
    let pick = |stem: &str| {
        [stem.to_string(), format!("{stem}.gz")]
            .into_iter()
            .map(|f| dir.join(f))
            .find(|p| p.is_file())
    };
    let images = pick(&format!("{prefix}-images-idx3-ubyte"))?;
    Some((images, pick(&format!("{prefix}-labels-idx1-ubyte"))))
}

/// Options for [`preprocess`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Preprocess {
    pub subset: usize,
    /// Target `(height, width)`; `None` keeps the source size.
    pub target: Option<(usize, usize)>,
    /// Shuffle seed; `None` keeps file order.
    pub shuffle_seed: Option<u64>,
}

impl Default for Preprocess {
    fn default() -> Self {
        Self {
            subset: 5000,
            target: Some((32, 32)),
            shuffle_seed: Some(0),
        }
    }
}

/// Keeps `subset` images (after an optional seeded shuffle) and resizes each
/// bilinearly to `target`.
pub fn preprocess(ds: &Dataset, opts: Preprocess) -> Result<Dataset> {
    let (h, w) = ds.image_shape.ok_or(Error::MissingImageShape("preprocess"))?;
    if opts.subset == 0 || opts.subset > ds.len() {
        return Err(Error::Invalid(format!(
            "subset {} out of range for {} images",
            opts.subset,
            ds.len()
        )));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    if let Some(seed) = opts.shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    order.truncate(opts.subset);
    let picked = ds.points.select_rows(&order);
    let (th, tw) = opts.target.unwrap_or((h, w));
    let points = if (th, tw) == (h, w) {
        picked
    } else {
        let data: Vec<f64> = picked
            .row_iter()
            .flat_map(|img| resize_bilinear(img, (h, w), (th, tw)))
            .collect();
        Tensor::matrix(opts.subset, th * tw, data)?
    };
    Ok(Dataset {
        name: ds.name.clone(),
        points,
        labels: ds.labels.as_ref().map(|l| order.iter().map(|&i| l[i]).collect()),
        image_shape: Some((th, tw)),
    })
}

/// Bilinear resampling with half-pixel centres and edge clamping. Outputs are
/// convex combinations of inputs, so constants and value ranges are kept.
pub fn resize_bilinear(img: &[f64], from: (usize, usize), to: (usize, usize)) -> Vec<f64> {
    let (h, w) = from;
    let (th, tw) = to;
    let coord = |o: usize, src: usize, dst: usize| -> (usize, usize, f64) {
        let s = ((o as f64 + 0.5) * src as f64 / dst as f64 - 0.5).clamp(0.0, (src - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(src - 1);
        (i0, i1, s - i0 as f64)
    };
    let cols: Vec<_> = (0..tw).map(|c| coord(c, w, tw)).collect();
    let mut out = Vec::with_capacity(th * tw);
    for r in 0..th {
        let (r0, r1, fr) = coord(r, h, th);
        for &(c0, c1, fc) in &cols {
            let top = img[r0 * w + c0] * (1.0 - fc) + img[r0 * w + c1] * fc;
            let bot = img[r1 * w + c0] * (1.0 - fc) + img[r1 * w + c1] * fc;
            out.push(top * (1.0 - fr) + bot * fr);
        }
    }
    out
}
