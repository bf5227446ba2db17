//! Dataset ingestion: COCO-style polygon annotations, label-mask
//! construction, statistics and k-fold splitting.

mod coco;
mod raster;
mod split;
mod stats;

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::sync::OnceLock;

use thiserror::Error;

use crate::mask::{BinaryMask, GrayImage, LabelMask, MaskError};
use crate::taxonomy::{SegmentClass, TaxonomyError};

pub use coco::{CocoAnnotation, CocoCategory, CocoDocument, CocoImage};
pub use raster::{rasterize_polygon, rasterize_rings};
pub use split::{kfold_split, Fold};
pub use stats::{class_histogram, vessel_ratio, VesselRatio};

/// Default challenge frame size.
pub const DEFAULT_CANVAS: u32 = 512;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("malformed annotation file: {0}")]
    MalformedFile(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error("annotation {annotation_id} references missing image {image_id}")]
    DanglingImageRef { annotation_id: u64, image_id: u64 },
    #[error("annotation {annotation_id} has a polygon with fewer than 3 vertices")]
    DegeneratePolygon { annotation_id: u64 },
    #[error("unknown image {0}")]
    UnknownImage(u64),
    #[error("fold count {k} invalid for {n} images (need 2 <= k <= n)")]
    BadFoldCount { k: usize, n: usize },
    #[error("image {image_id}: {source}")]
    Pixels {
        image_id: u64,
        #[source]
        source: MaskError,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub image_id: u64,
    pub width: u32,
    pub height: u32,
    pub file_name: String,
    pub pixels: Option<GrayImage>,
}

impl ImageRecord {
    pub fn new(image_id: u64, width: u32, height: u32, file_name: impl Into<String>) -> Self {
        Self {
            image_id,
            width,
            height,
            file_name: file_name.into(),
            pixels: None,
        }
    }
}

/// One annotated segment. Multiple rings combine under the even-odd rule,
/// so an inner ring cuts a hole.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonAnnotation {
    pub annotation_id: u64,
    pub image_id: u64,
    pub class: SegmentClass,
    pub rings: Vec<Vec<Point>>,
}

impl PolygonAnnotation {
    pub fn single(annotation_id: u64, image_id: u64, class: SegmentClass, ring: Vec<Point>) -> Self {
        Self {
            annotation_id,
            image_id,
            class,
            rings: vec![ring],
        }
    }
}

/// Result of painting an image's annotations into one label mask.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelBuild {
    pub mask: LabelMask,
    /// Pixels painted by more than one annotation.
    pub overlap_pixels: usize,
}

/// Validated images and annotations. Immutable after construction, apart
/// from a lazily filled per-image label cache.
#[derive(Debug, Clone)]
pub struct DatasetIndex {
    images: Vec<ImageRecord>,
    annotations: Vec<PolygonAnnotation>,
    image_pos: HashMap<u64, usize>,
    /// Annotation indices per image, ascending annotation_id.
    per_image: Vec<Vec<usize>>,
    label_cache: Vec<OnceLock<LabelBuild>>,
}

impl DatasetIndex {
    /// Validates references and clamps every vertex into its image frame.
    pub fn new(
        images: Vec<ImageRecord>,
        mut annotations: Vec<PolygonAnnotation>,
    ) -> Result<Self, DatasetError> {
        let mut image_pos = HashMap::with_capacity(images.len());
        for (i, img) in images.iter().enumerate() {
            if img.width == 0 || img.height == 0 {
                return Err(DatasetError::SchemaViolation(format!(
                    "image {} has zero size",
                    img.image_id
                )));
            }
            if image_pos.insert(img.image_id, i).is_some() {
                return Err(DatasetError::SchemaViolation(format!(
                    "duplicate image id {}",
                    img.image_id
                )));
            }
        }
        let mut seen_ann = BTreeSet::new();
        let mut per_image = vec![Vec::new(); images.len()];
        annotations.sort_by_key(|a| a.annotation_id);
        for (ai, ann) in annotations.iter_mut().enumerate() {
            if !seen_ann.insert(ann.annotation_id) {
                return Err(DatasetError::SchemaViolation(format!(
                    "duplicate annotation id {}",
                    ann.annotation_id
                )));
            }
            let &pos = image_pos
                .get(&ann.image_id)
                .ok_or(DatasetError::DanglingImageRef {
                    annotation_id: ann.annotation_id,
                    image_id: ann.image_id,
                })?;
            if ann.rings.is_empty() || ann.rings.iter().any(|r| r.len() < 3) {
                return Err(DatasetError::DegeneratePolygon {
                    annotation_id: ann.annotation_id,
                });
            }
            let (w, h) = (images[pos].width as f64, images[pos].height as f64);
            for p in ann.rings.iter_mut().flatten() {
                if !p.x.is_finite() || !p.y.is_finite() {
                    return Err(DatasetError::SchemaViolation(format!(
                        "annotation {} has a non-finite vertex",
                        ann.annotation_id
                    )));
                }
                p.x = p.x.clamp(0.0, w);
                p.y = p.y.clamp(0.0, h);
            }
            per_image[pos].push(ai);
        }
        let label_cache = (0..images.len()).map(|_| OnceLock::new()).collect();
        Ok(Self {
            images,
            annotations,
            image_pos,
            per_image,
            label_cache,
        })
    }

    pub fn images(&self) -> &[ImageRecord] {
        &self.images
    }

    /// Annotations in ascending annotation_id order.
    pub fn annotations(&self) -> &[PolygonAnnotation] {
        &self.annotations
    }

    pub fn image(&self, image_id: u64) -> Result<&ImageRecord, DatasetError> {
        self.image_pos
            .get(&image_id)
            .map(|&i| &self.images[i])
            .ok_or(DatasetError::UnknownImage(image_id))
    }

    pub fn image_annotations(
        &self,
        image_id: u64,
    ) -> Result<impl Iterator<Item = &PolygonAnnotation>, DatasetError> {
        let &pos = self
            .image_pos
            .get(&image_id)
            .ok_or(DatasetError::UnknownImage(image_id))?;
        Ok(self.per_image[pos].iter().map(|&ai| &self.annotations[ai]))
    }

    /// Classes annotated on an image (from annotations, not rasterized pixels).
    pub fn image_classes(&self, image_id: u64) -> Result<BTreeSet<SegmentClass>, DatasetError> {
        Ok(self.image_annotations(image_id)?.map(|a| a.class).collect())
    }

    /// Paints the image's annotations in ascending annotation_id order; later
    /// annotations overwrite earlier ones. Cached per image.
    pub fn build_label_mask(&self, image_id: u64) -> Result<&LabelBuild, DatasetError> {
        let &pos = self
            .image_pos
            .get(&image_id)
            .ok_or(DatasetError::UnknownImage(image_id))?;
        if let Some(b) = self.label_cache[pos].get() {
            return Ok(b);
        }
        let built = self.paint_image(pos)?;
        if built.overlap_pixels > 0 {
            log::warn!(
                "image {image_id}: {} pixels painted by more than one annotation",
                built.overlap_pixels
            );
        }
        Ok(self.label_cache[pos].get_or_init(|| built))
    }

    pub fn label_mask(&self, image_id: u64) -> Result<&LabelMask, DatasetError> {
        self.build_label_mask(image_id).map(|b| &b.mask)
    }

    fn paint_image(&self, pos: usize) -> Result<LabelBuild, DatasetError> {
        let img = &self.images[pos];
        let mut mask = LabelMask::new(img.width, img.height);
        let mut painted = vec![false; img.width as usize * img.height as usize];
        let mut overlap_pixels = 0;
        for &ai in &self.per_image[pos] {
            let ann = &self.annotations[ai];
            let region = rasterize_polygon(ann, img.width, img.height)?;
            let id = ann.class.id();
            for ((cell, seen), &on) in mask
                .cells_mut()
                .iter_mut()
                .zip(painted.iter_mut())
                .zip(region.cells())
            {
                if on {
                    if *seen {
                        overlap_pixels += 1;
                    }
                    *seen = true;
                    *cell = id;
                }
            }
        }
        Ok(LabelBuild {
            mask,
            overlap_pixels,
        })
    }

    pub fn parse_file(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse_str(&text)
    }

    pub fn parse_str(text: &str) -> Result<Self, DatasetError> {
        CocoDocument::from_json(text)?.into_index()
    }

    pub fn to_coco(&self) -> CocoDocument {
        CocoDocument::from_index(self)
    }

    /// Loads `<dir>/<file_name>` as grayscale pixels for every image.
    pub fn load_pixels(&mut self, dir: &Path) -> Result<(), DatasetError> {
        for img in &mut self.images {
            let px = GrayImage::read_png(&dir.join(&img.file_name)).map_err(|source| {
                DatasetError::Pixels {
                    image_id: img.image_id,
                    source,
                }
            })?;
            if (px.width(), px.height()) != (img.width, img.height) {
                return Err(DatasetError::Pixels {
                    image_id: img.image_id,
                    source: MaskError::ShapeMismatch(img.width, img.height, px.width(), px.height()),
                });
            }
            img.pixels = Some(px);
        }
        Ok(())
    }
}

/// Per-class indicator masks of a label mask, ascending class id.
pub fn split_classes(mask: &LabelMask) -> Vec<(SegmentClass, BinaryMask)> {
    mask.classes()
        .into_iter()
        .map(|c| (c, mask.class_indicator(c)))
        .collect()
}

/// Re-unions per-class indicator masks into a label mask.
pub fn union_classes(width: u32, height: u32, parts: &[(SegmentClass, BinaryMask)]) -> LabelMask {
    let mut mask = LabelMask::new(width, height);
    for (c, region) in parts {
        mask.paint(region, Some(*c));
    }
    mask
}
