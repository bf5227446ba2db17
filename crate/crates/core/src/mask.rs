//! Raster types shared by every stage: label masks, binary masks and
//! 8-bit grayscale images. All buffers are row-major.

use std::collections::BTreeSet;
use std::path::Path;

use thiserror::Error;

use crate::taxonomy::SegmentClass;

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("shape mismatch: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(u32, u32, u32, u32),
    #[error("buffer of length {len} does not match {width}x{height}")]
    BadBuffer { width: u32, height: u32, len: usize },
    #[error("pixel value {0} is not a class id or background")]
    BadLabel(u8),
    #[error("png error for {path}: {source}")]
    Png {
        path: String,
        #[source]
        source: image::ImageError,
    },
}

pub(crate) fn check_len(width: u32, height: u32, len: usize) -> Result<(), MaskError> {
    if width as usize * height as usize != len || width == 0 || height == 0 {
        return Err(MaskError::BadBuffer { width, height, len });
    }
    Ok(())
}

/// Per-pixel background (0) or class id (1..=25).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelMask {
    width: u32,
    height: u32,
    cells: Vec<u8>,
}

impl LabelMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            cells: vec![0; width as usize * height as usize],
        }
    }

    pub fn from_cells(width: u32, height: u32, cells: Vec<u8>) -> Result<Self, MaskError> {
        check_len(width, height, cells.len())?;
        if let Some(&bad) = cells.iter().find(|&&v| v as usize > SegmentClass::COUNT) {
            return Err(MaskError::BadLabel(bad));
        }
        Ok(Self { width, height, cells })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn get(&self, x: u32, y: u32) -> Option<SegmentClass> {
        let v = self.cells[(y * self.width + x) as usize];
        (v != 0).then(|| SegmentClass::from_id(v as u32).expect("validated label"))
    }

    pub fn set(&mut self, x: u32, y: u32, label: Option<SegmentClass>) {
        self.cells[(y * self.width + x) as usize] = label.map_or(0, SegmentClass::id);
    }

    pub(crate) fn cells_mut(&mut self) -> &mut [u8] {
        &mut self.cells
    }

    pub fn same_shape<T: Shaped>(&self, other: &T) -> Result<(), MaskError> {
        check_shape(self.width, self.height, other.width(), other.height())
    }

    /// Classes with at least one pixel, ascending.
    pub fn classes(&self) -> BTreeSet<SegmentClass> {
        let mut seen = [false; SegmentClass::COUNT + 1];
        for &v in &self.cells {
            seen[v as usize] = true;
        }
        SegmentClass::all().filter(|c| seen[c.id() as usize]).collect()
    }

    pub fn class_indicator(&self, class: SegmentClass) -> BinaryMask {
        let id = class.id();
        BinaryMask {
            width: self.width,
            height: self.height,
            cells: self.cells.iter().map(|&v| v == id).collect(),
        }
    }

    pub fn foreground(&self) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            cells: self.cells.iter().map(|&v| v != 0).collect(),
        }
    }

    /// Paints every set pixel of `region` with `label`.
    pub fn paint(&mut self, region: &BinaryMask, label: Option<SegmentClass>) {
        let v = label.map_or(0, SegmentClass::id);
        for (cell, &on) in self.cells.iter_mut().zip(region.cells()) {
            if on {
                *cell = v;
            }
        }
    }

    pub fn count(&self, class: SegmentClass) -> usize {
        self.cells.iter().filter(|&&v| v == class.id()).count()
    }

    pub fn foreground_count(&self) -> usize {
        self.cells.iter().filter(|&&v| v != 0).count()
    }

    /// Sets to background every pixel whose class fails `keep`.
    pub fn retain(&mut self, mut keep: impl FnMut(SegmentClass) -> bool) {
        for cell in &mut self.cells {
            if *cell != 0 && !keep(SegmentClass::from_id(*cell as u32).expect("validated label")) {
                *cell = 0;
            }
        }
    }

    pub fn write_png(&self, path: &Path) -> Result<(), MaskError> {
        write_gray_png(path, self.width, self.height, &self.cells)
    }

    pub fn read_png(path: &Path) -> Result<Self, MaskError> {
        let (w, h, data) = read_gray_png(path)?;
        Self::from_cells(w, h, data)
    }
}

/// Per-pixel boolean.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    cells: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            cells: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_cells(width: u32, height: u32, cells: Vec<bool>) -> Result<Self, MaskError> {
        check_len(width, height, cells.len())?;
        Ok(Self { width, height, cells })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.cells[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, on: bool) {
        self.cells[(y * self.width + x) as usize] = on;
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.cells.iter().any(|&b| b)
    }

    pub fn xor_assign(&mut self, other: &BinaryMask) {
        for (a, &b) in self.cells.iter_mut().zip(&other.cells) {
            *a ^= b;
        }
    }

    pub fn same_shape<T: Shaped>(&self, other: &T) -> Result<(), MaskError> {
        check_shape(self.width, self.height, other.width(), other.height())
    }

    pub(crate) fn cells_mut(&mut self) -> &mut [bool] {
        &mut self.cells
    }
}

/// 8-bit single-channel image.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GrayImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0; width as usize * height as usize],
        }
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self, MaskError> {
        check_len(width, height, data.len())?;
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[(y * self.width + x) as usize]
    }

    pub fn write_png(&self, path: &Path) -> Result<(), MaskError> {
        write_gray_png(path, self.width, self.height, &self.data)
    }

    pub fn read_png(path: &Path) -> Result<Self, MaskError> {
        let (width, height, data) = read_gray_png(path)?;
        Ok(Self { width, height, data })
    }
}

pub trait Shaped {
    fn width(&self) -> u32;
    fn height(&self) -> u32;
}

macro_rules! shaped {
    ($($t:ty),*) => {$(
        impl Shaped for $t {
            fn width(&self) -> u32 { self.width }
            fn height(&self) -> u32 { self.height }
        }
    )*};
}
shaped!(LabelMask, BinaryMask, GrayImage);

fn check_shape(w0: u32, h0: u32, w1: u32, h1: u32) -> Result<(), MaskError> {
    if (w0, h0) != (w1, h1) {
        return Err(MaskError::ShapeMismatch(w0, h0, w1, h1));
    }
    Ok(())
}

fn write_gray_png(path: &Path, width: u32, height: u32, data: &[u8]) -> Result<(), MaskError> {
    image::save_buffer_with_format(
        path,
        data,
        width,
        height,
        image::ExtendedColorType::L8,
        image::ImageFormat::Png,
    )
    .map_err(|source| MaskError::Png {
        path: path.display().to_string(),
        source,
    })
}

fn read_gray_png(path: &Path) -> Result<(u32, u32, Vec<u8>), MaskError> {
    let img = image::open(path).map_err(|source| MaskError::Png {
        path: path.display().to_string(),
        source,
    })?;
    let gray = img.into_luma8();
    let (w, h) = gray.dimensions();
    Ok((w, h, gray.into_raw()))
}
