//! Scan ingestion: per-scan slice stacks, normalization, resizing, and the
//! on-disk mask and manifest formats.

use std::cmp::Ordering;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma};
use thiserror::Error;

use crate::mask::Mask;

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("no readable slices in {0}")]
    NoSlices(PathBuf),
    #[error("bad slice {path}: {reason}")]
    BadSlice { path: PathBuf, reason: String },
    #[error("invalid image data: {0}")]
    InvalidImage(String),
    #[error("invalid resize target {0}x{1}")]
    InvalidTarget(usize, usize),
    #[error("bad manifest {path}: {reason}")]
    BadManifest { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> VolumeError {
    VolumeError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Scan classification label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassLabel {
    Covid,
    NonCovid,
}

impl ClassLabel {
    /// Class index used by the classifier head and the metrics report.
    pub fn index(self) -> usize {
        match self {
            ClassLabel::Covid => 0,
            ClassLabel::NonCovid => 1,
        }
    }

    pub fn from_index(idx: usize) -> Option<Self> {
        match idx {
            0 => Some(ClassLabel::Covid),
            1 => Some(ClassLabel::NonCovid),
            _ => None,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "covid" => Some(ClassLabel::Covid),
            "non_covid" => Some(ClassLabel::NonCovid),
            _ => None,
        }
    }

    /// Names in class-index order.
    pub fn names() -> [&'static str; 2] {
        ["covid", "non_covid"]
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassLabel::Covid => write!(f, "covid"),
            ClassLabel::NonCovid => write!(f, "non_covid"),
        }
    }
}

/// Single-channel slice with intensities in `[0, 1]`.
///
/// Slices stay single-channel end to end; replication to three channels, when
/// a backend needs it, happens at the backend boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceImage {
    height: usize,
    width: usize,
    pixels: Vec<f32>,
    source_size: (usize, usize),
}

impl SliceImage {
    /// Build from row-major pixels, validating the `[0, 1]` bound.
    pub fn from_pixels(height: usize, width: usize, pixels: Vec<f32>) -> Result<Self, VolumeError> {
        if height < 1 || width < 1 {
            return Err(VolumeError::InvalidImage(format!(
                "dimensions {height}x{width} must be >= 1"
            )));
        }
        if pixels.len() != height * width {
            return Err(VolumeError::InvalidImage(format!(
                "pixel count {} != {height}x{width}",
                pixels.len()
            )));
        }
        if let Some(p) = pixels.iter().find(|p| !p.is_finite() || **p < 0.0 || **p > 1.0) {
            return Err(VolumeError::InvalidImage(format!(
                "pixel value {p} outside [0, 1]"
            )));
        }
        Ok(SliceImage {
            height,
            width,
            pixels,
            source_size: (height, width),
        })
    }

    pub fn from_fn<F: Fn(usize, usize) -> f32>(
        height: usize,
        width: usize,
        f: F,
    ) -> Result<Self, VolumeError> {
        let mut pixels = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        SliceImage::from_pixels(height, width, pixels)
    }

    pub fn constant(height: usize, width: usize, value: f32) -> Result<Self, VolumeError> {
        SliceImage::from_pixels(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// (height, width)
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Dimensions the pixel data originally came from, carried through
    /// resizing and cropping.
    pub fn source_size(&self) -> (usize, usize) {
        self.source_size
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub(crate) fn with_source_size(mut self, source_size: (usize, usize)) -> Self {
        self.source_size = source_size;
        self
    }

    /// Element-wise product with a binary mask; dimensions must match.
    pub fn masked(&self, mask: &Mask) -> Result<SliceImage, VolumeError> {
        if self.dims() != mask.dims() {
            return Err(VolumeError::InvalidImage(format!(
                "mask dims {:?} != slice dims {:?}",
                mask.dims(),
                self.dims()
            )));
        }
        let pixels = self
            .pixels
            .iter()
            .zip(mask.bits())
            .map(|(&p, &b)| if b { p } else { 0.0 })
            .collect();
        Ok(SliceImage {
            height: self.height,
            width: self.width,
            pixels,
            source_size: self.source_size,
        })
    }
}

/// Ordered slice stack of one CT scan. The true length `l` is the number of
/// slices held; any `l >= 1` is accepted.
#[derive(Debug, Clone)]
pub struct ScanVolume {
    pub scan_id: String,
    slices: Vec<SliceImage>,
    pub label: Option<ClassLabel>,
}

impl ScanVolume {
    pub fn new(
        scan_id: impl Into<String>,
        slices: Vec<SliceImage>,
        label: Option<ClassLabel>,
    ) -> Result<Self, VolumeError> {
        if slices.is_empty() {
            return Err(VolumeError::InvalidImage("scan with zero slices".into()));
        }
        Ok(ScanVolume {
            scan_id: scan_id.into(),
            slices,
            label,
        })
    }

    /// True (pre-padding) slice count `l`.
    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        false // invariant: at least one slice
    }

    pub fn slices(&self) -> &[SliceImage] {
        &self.slices
    }
}

/// Numeric-aware filename ordering: digit runs compare as integers, other
/// runs compare lexically, full-string comparison breaks ties.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    let ab = a.as_bytes();
    let bb = b.as_bytes();
    let (mut i, mut j) = (0, 0);
    while i < ab.len() && j < bb.len() {
        let a_digit = ab[i].is_ascii_digit();
        let b_digit = bb[j].is_ascii_digit();
        match (a_digit, b_digit) {
            (true, true) => {
                let si = i;
                while i < ab.len() && ab[i].is_ascii_digit() {
                    i += 1;
                }
                let sj = j;
                while j < bb.len() && bb[j].is_ascii_digit() {
                    j += 1;
                }
                let da = a[si..i].trim_start_matches('0');
                let db = b[sj..j].trim_start_matches('0');
                let ord = da.len().cmp(&db.len()).then_with(|| da.cmp(db));
                if ord != Ordering::Equal {
                    return ord;
                }
            }
            (true, false) => return Ordering::Less,
            (false, true) => return Ordering::Greater,
            (false, false) => {
                let ord = ab[i].cmp(&bb[j]);
                if ord != Ordering::Equal {
                    return ord;
                }
                i += 1;
                j += 1;
            }
        }
    }
    a.len().cmp(&b.len()).then_with(|| a.cmp(b))
}

fn decode_slice(path: &Path) -> Result<SliceImage, VolumeError> {
    let img = image::open(path).map_err(|e| VolumeError::BadSlice {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let (pixels, w, h): (Vec<f32>, u32, u32) = match img {
        DynamicImage::ImageLuma8(buf) => {
            let (w, h) = buf.dimensions();
            (buf.pixels().map(|p| p.0[0] as f32 / 255.0).collect(), w, h)
        }
        DynamicImage::ImageLuma16(buf) => {
            let (w, h) = buf.dimensions();
            (
                buf.pixels().map(|p| p.0[0] as f32 / 65535.0).collect(),
                w,
                h,
            )
        }
        other => {
            return Err(VolumeError::BadSlice {
                path: path.to_path_buf(),
                reason: format!("expected 8/16-bit grayscale, got {other:?}"),
            })
        }
    };
    SliceImage::from_pixels(h as usize, w as usize, pixels).map_err(|e| VolumeError::BadSlice {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

const SLICE_EXTENSIONS: [&str; 1] = ["png"];

/// Slice files of a scan directory in natural filename order.
pub fn list_slice_files(dir: &Path) -> Result<Vec<PathBuf>, VolumeError> {
    let entries = fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    let mut files: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| io_err(dir, e))?;
        let path = entry.path();
        let is_slice = path.is_file()
            && path
                .extension()
                .and_then(|e| e.to_str())
                .map(|e| SLICE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
                .unwrap_or(false);
        if is_slice {
            files.push(path);
        }
    }
    files.sort_by(|a, b| {
        let na = a.file_name().and_then(|n| n.to_str()).unwrap_or("");
        let nb = b.file_name().and_then(|n| n.to_str()).unwrap_or("");
        natural_cmp(na, nb)
    });
    Ok(files)
}

/// Load a scan from a directory of grayscale PNG slices.
///
/// Slices are ordered by natural filename sort and intensities rescaled from
/// the stored integer range to `[0, 1]`. The scan id is the directory name.
pub fn load_scan(dir: &Path, label: Option<ClassLabel>) -> Result<ScanVolume, VolumeError> {
    let files = list_slice_files(dir)?;
    if files.is_empty() {
        return Err(VolumeError::NoSlices(dir.to_path_buf()));
    }
    let mut slices = Vec::with_capacity(files.len());
    for path in &files {
        slices.push(decode_slice(path)?);
    }
    let scan_id = dir
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("scan")
        .to_string();
    ScanVolume::new(scan_id, slices, label)
}

/// Bilinear resize with half-pixel sampling. Interpolated values are clamped
/// to the range spanned by the four source neighbors, so output bounds never
/// exceed input bounds.
pub fn resize_slice(s: &SliceImage, target: (usize, usize)) -> Result<SliceImage, VolumeError> {
    let (th, tw) = target;
    if th < 1 || tw < 1 {
        return Err(VolumeError::InvalidTarget(th, tw));
    }
    let (sh, sw) = s.dims();
    if (sh, sw) == (th, tw) {
        return Ok(s.clone());
    }
    let scale_y = sh as f64 / th as f64;
    let scale_x = sw as f64 / tw as f64;
    let mut pixels = Vec::with_capacity(th * tw);
    for ty in 0..th {
        let src_y = ((ty as f64 + 0.5) * scale_y - 0.5).clamp(0.0, (sh - 1) as f64);
        let y0 = src_y.floor() as usize;
        let y1 = (y0 + 1).min(sh - 1);
        let wy = src_y - y0 as f64;
        for tx in 0..tw {
            let src_x = ((tx as f64 + 0.5) * scale_x - 0.5).clamp(0.0, (sw - 1) as f64);
            let x0 = src_x.floor() as usize;
            let x1 = (x0 + 1).min(sw - 1);
            let wx = src_x - x0 as f64;
            let (a, b) = (s.get(x0, y0) as f64, s.get(x1, y0) as f64);
            let (c, d) = (s.get(x0, y1) as f64, s.get(x1, y1) as f64);
            let top = a + (b - a) * wx;
            let bottom = c + (d - c) * wx;
            let v = top + (bottom - top) * wy;
            let lo = a.min(b).min(c).min(d);
            let hi = a.max(b).max(c).max(d);
            pixels.push(v.clamp(lo, hi) as f32);
        }
    }
    Ok(SliceImage::from_pixels(th, tw, pixels)?.with_source_size(s.source_size()))
}

/// Write a mask as an 8-bit single-channel PNG, foreground 255, background 0.
pub fn save_mask(mask: &Mask, path: &Path) -> Result<(), VolumeError> {
    let (h, w) = mask.dims();
    let buf = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        Luma([if mask.get(x as usize, y as usize) { 255u8 } else { 0 }])
    });
    buf.save(path).map_err(|e| VolumeError::BadSlice {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Read a mask written by [`save_mask`]. Any nonzero pixel is foreground.
pub fn load_mask(path: &Path) -> Result<Mask, VolumeError> {
    let img = image::open(path).map_err(|e| VolumeError::BadSlice {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let buf = match img {
        DynamicImage::ImageLuma8(buf) => buf,
        other => {
            return Err(VolumeError::BadSlice {
                path: path.to_path_buf(),
                reason: format!("expected 8-bit grayscale mask, got {other:?}"),
            })
        }
    };
    let (w, h) = buf.dimensions();
    let bits = buf.pixels().map(|p| p.0[0] != 0).collect();
    Ok(Mask::from_bits(h as usize, w as usize, bits))
}

/// On-disk record of a scan's slice files, in load order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VolumeManifest {
    pub scan_id: String,
    pub slice_paths: Vec<PathBuf>,
    pub label: Option<ClassLabel>,
}

impl VolumeManifest {
    /// Build for a scan directory; slices listed in load (natural) order.
    pub fn for_dir(dir: &Path, label: Option<ClassLabel>) -> Result<Self, VolumeError> {
        let slice_paths = list_slice_files(dir)?;
        if slice_paths.is_empty() {
            return Err(VolumeError::NoSlices(dir.to_path_buf()));
        }
        let scan_id = dir
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("scan")
            .to_string();
        Ok(VolumeManifest {
            scan_id,
            slice_paths,
            label,
        })
    }

    pub fn l(&self) -> usize {
        self.slice_paths.len()
    }

    /// Line-oriented form: `scan_id`, optional `label`, one `slice` record
    /// per slice (`slice <index> <path>`), tab-separated.
    pub fn save(&self, path: &Path) -> Result<(), VolumeError> {
        let mut out = String::new();
        out.push_str(&format!("scan_id\t{}\n", self.scan_id));
        if let Some(label) = self.label {
            out.push_str(&format!("label\t{label}\n"));
        }
        for (idx, p) in self.slice_paths.iter().enumerate() {
            out.push_str(&format!("slice\t{idx}\t{}\n", p.display()));
        }
        let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| io_err(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, VolumeError> {
        let bad = |reason: String| VolumeError::BadManifest {
            path: path.to_path_buf(),
            reason,
        };
        let f = fs::File::open(path).map_err(|e| io_err(path, e))?;
        let mut scan_id = None;
        let mut label = None;
        let mut slice_paths: Vec<PathBuf> = Vec::new();
        for (lineno, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| io_err(path, e))?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            match fields[0] {
                "scan_id" if fields.len() == 2 => scan_id = Some(fields[1].to_string()),
                "label" if fields.len() == 2 => {
                    label = Some(
                        ClassLabel::parse(fields[1])
                            .ok_or_else(|| bad(format!("unknown label {:?}", fields[1])))?,
                    )
                }
                "slice" if fields.len() == 3 => {
                    let idx: usize = fields[1]
                        .parse()
                        .map_err(|_| bad(format!("bad slice index on line {}", lineno + 1)))?;
                    if idx != slice_paths.len() {
                        return Err(bad(format!(
                            "slice index {idx} out of order on line {}",
                            lineno + 1
                        )));
                    }
                    slice_paths.push(PathBuf::from(fields[2]));
                }
                other => return Err(bad(format!("unknown record {other:?}"))),
            }
        }
        let scan_id = scan_id.ok_or_else(|| bad("missing scan_id".into()))?;
        if slice_paths.is_empty() {
            return Err(bad("no slice records".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for p in &slice_paths {
            if !seen.insert(p.clone()) {
                return Err(bad(format!("duplicate slice path {}", p.display())));
            }
            if !p.exists() {
                return Err(bad(format!("slice path missing: {}", p.display())));
            }
        }
        Ok(VolumeManifest {
            scan_id,
            slice_paths,
            label,
        })
    }
}
