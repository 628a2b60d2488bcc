use std::path::{Path, PathBuf};

use crate::{Error, Result};

/// One grayscale frame with intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayFrame {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("frame dimensions must be positive"));
        }
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "frame has {} intensities, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if let Some(v) = data.iter().find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v))) {
            return Err(Error::invalid(format!("intensity {v} outside [0, 1]")));
        }
        Ok(Self { width, height, data })
    }

    /// Builds a frame by evaluating `f(x, y)` at every pixel; values are
    /// clamped into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self { width, height, data }
    }

    /// Unchecked constructor for derived images (blurred, differenced, gradients)
    /// whose values need not lie in `[0, 1]`.
    pub(crate) fn raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Pixel access with coordinates clamped to the frame.
    #[inline]
    pub(crate) fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y)
    }

    /// Bilinear interpolation; `None` outside `[0, w-1] x [0, h-1]`.
    #[inline]
    pub fn bilinear(&self, x: f64, y: f64) -> Option<f64> {
        let maxx = (self.width - 1) as f64;
        let maxy = (self.height - 1) as f64;
        if !(x >= 0.0 && y >= 0.0 && x <= maxx && y <= maxy) {
            return None;
        }
        let x0 = (x.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (y.floor() as usize).min(self.height.saturating_sub(2));
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let top = self.get(x0, y0) + (self.get(x1, y0) - self.get(x0, y0)) * fx;
        let bot = self.get(x0, y1) + (self.get(x1, y1) - self.get(x0, y1)) * fx;
        Some(top + (bot - top) * fy)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
            .to_luma8();
        let (w, h) = img.dimensions();
        let data = img.into_raw().into_iter().map(|v| v as f64 / 255.0).collect();
        Self::new(w as usize, h as usize, data)
    }

    /// Writes the frame as 8-bit binary PGM.
    pub fn save_pgm(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self
            .data
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        let img = image::GrayImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer matches dimensions");
        img.save_with_format(path, image::ImageFormat::Pnm)
            .map_err(|e| Error::Io(std::io::Error::other(e)))
    }
}

fn frame_index(path: &Path) -> Option<usize> {
    let name = path.file_name()?.to_str()?;
    let stem = name.strip_suffix(".pgm").or_else(|| name.strip_suffix(".png"))?;
    let digits = stem.strip_prefix("frame_")?;
    if digits.len() != 6 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

/// Loads `frame_%06d.pgm` / `frame_%06d.png` files from `dir` in index order.
/// Indices must be contiguous.
pub fn load_frames(dir: &Path) -> Result<Vec<GrayFrame>> {
    let mut entries: Vec<(usize, PathBuf)> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter_map(|p| frame_index(&p).map(|i| (i, p)))
        .collect();
    if entries.is_empty() {
        return Err(Error::invalid(format!(
            "no frame_%06d.pgm/png files in {}",
            dir.display()
        )));
    }
    entries.sort();
    for (w, pair) in entries.windows(2).enumerate() {
        if pair[1].0 != pair[0].0 + 1 {
            return Err(Error::invalid(format!(
                "frame sequence has a gap after index {} (entry {w})",
                pair[0].0
            )));
        }
    }
    let frames = entries
        .iter()
        .map(|(_, p)| GrayFrame::load(p))
        .collect::<Result<Vec<_>>>()?;
    let (w, h) = (frames[0].width, frames[0].height);
    if frames.iter().any(|f| f.width != w || f.height != h) {
        return Err(Error::invalid("frames differ in size"));
    }
    Ok(frames)
}
