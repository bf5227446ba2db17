//! Synthetic vessel-tree datasets: a trunk plus side branches drawn as thick
//! polylines, dark on a bright noisy background. Every branch is one
//! annotation with a distinct class from the image's vessel group, and
//! branches keep a margin from each other so label masks never overlap.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{rasterize_rings, DatasetError, DatasetIndex, ImageRecord, Point, PolygonAnnotation};
use crate::mask::{BinaryMask, GrayImage, MaskError};
use crate::rng::{self, tag};
use crate::taxonomy::{SegmentClass, VesselGroup};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("bad synth config: {0}")]
    BadConfig(String),
    #[error("could not place the trunk of image {0}")]
    Placement(u64),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_images: usize,
    pub rca_fraction: f64,
    pub canvas: u32,
    /// Labeled segments per image, trunk included (inclusive bounds).
    pub branch_count_range: (u32, u32),
    /// Vessel width in pixels (inclusive bounds).
    pub branch_width_range: (u32, u32),
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_images: 50,
            rca_fraction: 1.0 / 3.0,
            canvas: crate::dataset::DEFAULT_CANVAS,
            branch_count_range: (3, 6),
            branch_width_range: (6, 12),
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Defaults with vessel widths scaled from the 512 px reference canvas.
    pub fn for_canvas(canvas: u32) -> Self {
        let scale = |w: u32| ((w * canvas) as f64 / 512.0).round().max(1.0) as u32;
        let d = Self::default();
        Self {
            canvas,
            branch_width_range: (scale(d.branch_width_range.0), scale(d.branch_width_range.1)),
            ..d
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::BadConfig(m));
        if !(0.0..=1.0).contains(&self.rca_fraction) {
            return bad(format!("rca_fraction {} outside [0, 1]", self.rca_fraction));
        }
        if self.canvas < 64 {
            return bad(format!("canvas {} below 64", self.canvas));
        }
        let (cmin, cmax) = self.branch_count_range;
        if cmin == 0 || cmin > cmax || cmax > 8 {
            return bad(format!("branch_count_range ({cmin}, {cmax}) must satisfy 1 <= min <= max <= 8"));
        }
        let (wmin, wmax) = self.branch_width_range;
        if wmin == 0 || wmin > wmax || wmax > self.canvas / 16 {
            return bad(format!(
                "branch_width_range ({wmin}, {wmax}) must satisfy 1 <= min <= max <= canvas/16"
            ));
        }
        Ok(())
    }

    /// Exact allocation: image `i` (0-based) is RCA iff
    /// `floor((i+1) f) > floor(i f)`, giving `floor(n f)` RCA images.
    pub fn group_of(&self, i: usize) -> VesselGroup {
        let f = self.rca_fraction;
        if ((i + 1) as f64 * f).floor() > (i as f64 * f).floor() {
            VesselGroup::Rca
        } else {
            VesselGroup::Lca
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthImage {
    pub image_id: u64,
    pub group: VesselGroup,
    pub classes: Vec<SegmentClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub seed: u64,
    pub n_images: usize,
    pub canvas: u32,
    /// Emitted annotations per class, all 25 classes listed.
    pub class_counts: BTreeMap<SegmentClass, usize>,
    pub images: Vec<SynthImage>,
}

#[derive(Debug, Clone, Copy)]
struct V2 {
    x: f64,
    y: f64,
}

impl V2 {
    fn add(self, o: V2, s: f64) -> V2 {
        V2 {
            x: self.x + o.x * s,
            y: self.y + o.y * s,
        }
    }

    fn dir(angle: f64) -> V2 {
        V2 {
            x: angle.cos(),
            y: angle.sin(),
        }
    }
}

struct Vessel {
    path: Vec<V2>,
    headings: Vec<f64>,
    half_width: f64,
}

/// Outline of a polyline thickened by `hw` with mitered joints.
fn outline(path: &[V2], headings: &[f64], hw: f64) -> Vec<Point> {
    let m = path.len();
    let mut left = Vec::with_capacity(m);
    let mut right = Vec::with_capacity(m);
    for (i, p) in path.iter().enumerate() {
        let (a, b) = (headings[i.saturating_sub(1).min(m - 2)], headings[i.min(m - 2)]);
        let mid = (a + b) / 2.0;
        let scale = hw / ((b - a) / 2.0).cos();
        let n = V2::dir(mid + PI / 2.0);
        left.push(p.add(n, scale));
        right.push(p.add(n, -scale));
    }
    left.into_iter()
        .chain(right.into_iter().rev())
        .map(|v| Point::new(v.x, v.y))
        .collect()
}

fn walk(r: &mut ChaCha8Rng, start: V2, heading: f64, steps: usize, length: f64, max_turn: f64) -> (Vec<V2>, Vec<f64>) {
    let step = length / steps as f64;
    let mut path = vec![start];
    let mut headings = Vec::with_capacity(steps);
    let mut h = heading;
    for _ in 0..steps {
        h += r.random_range(-max_turn..=max_turn);
        let last = *path.last().expect("non-empty");
        path.push(last.add(V2::dir(h), step));
        headings.push(h);
    }
    (path, headings)
}

struct Canvas {
    size: u32,
    margin: i64,
    blocked: Vec<bool>,
    vessels: BinaryMask,
}

impl Canvas {
    fn new(size: u32) -> Self {
        Self {
            size,
            margin: (size as i64 / 128).max(2),
            blocked: vec![false; (size * size) as usize],
            vessels: BinaryMask::new(size, size),
        }
    }

    /// Rasterizes the candidate and accepts it if it stays inside the frame
    /// and clear of every accepted vessel's margin.
    fn try_place(&mut self, ring: &[Point]) -> bool {
        let s = self.size as f64;
        if ring.iter().any(|p| p.x < 1.0 || p.y < 1.0 || p.x > s - 1.0 || p.y > s - 1.0) {
            return false;
        }
        let region = rasterize_rings(std::slice::from_ref(&ring.to_vec()), self.size, self.size);
        if region.is_empty() || region.cells().iter().zip(&self.blocked).any(|(&on, &b)| on && b) {
            return false;
        }
        let n = self.size as i64;
        for (i, _) in region.cells().iter().enumerate().filter(|(_, &on)| on) {
            let (x, y) = (i as i64 % n, i as i64 / n);
            for dy in -self.margin..=self.margin {
                for dx in -self.margin..=self.margin {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx >= 0 && ny >= 0 && nx < n && ny < n {
                        self.blocked[(ny * n + nx) as usize] = true;
                    }
                }
            }
        }
        let mut cells = self.vessels.cells().to_vec();
        for (c, &on) in cells.iter_mut().zip(region.cells()) {
            *c |= on;
        }
        self.vessels = BinaryMask::from_cells(self.size, self.size, cells).expect("same size");
        true
    }
}

const TRUNK_ATTEMPTS: usize = 200;
const BRANCH_ATTEMPTS: usize = 60;

struct Drawn {
    rings: Vec<(SegmentClass, Vec<Point>)>,
    pixels: GrayImage,
}

fn draw_image(cfg: &SynthConfig, image_id: u64, group: VesselGroup) -> Result<Drawn, SynthError> {
    let mut r = rng::stream(cfg.seed, &[tag::SYNTH, image_id]);
    let c = cfg.canvas as f64;
    let pool = group.classes();
    let (cmin, cmax) = cfg.branch_count_range;
    let k = (r.random_range(cmin..=cmax) as usize).min(pool.len());
    let classes: Vec<SegmentClass> = sample(&mut r, pool.len(), k).into_iter().map(|i| pool[i]).collect();
    let (wmin, wmax) = cfg.branch_width_range;

    let mut canvas = Canvas::new(cfg.canvas);
    let mut vessels: Vec<Vessel> = Vec::new();
    let mut rings = Vec::new();

    let hw = r.random_range(wmin..=wmax) as f64 / 2.0;
    let mut placed = false;
    for _ in 0..TRUNK_ATTEMPTS {
        let inset = 0.12 * c;
        let side = r.random_range(0..4);
        let t = r.random_range(inset..=c - inset);
        let start = match side {
            0 => V2 { x: t, y: inset },
            1 => V2 { x: c - inset, y: t },
            2 => V2 { x: t, y: c - inset },
            _ => V2 { x: inset, y: t },
        };
        let to_center = (c / 2.0 - start.y).atan2(c / 2.0 - start.x);
        let heading = to_center + r.random_range(-PI / 6.0..=PI / 6.0);
        let length = r.random_range(0.45 * c..=0.7 * c);
        let (path, headings) = walk(&mut r, start, heading, 6, length, PI / 12.0);
        let ring = outline(&path, &headings, hw);
        if canvas.try_place(&ring) {
            rings.push((classes[0], ring));
            vessels.push(Vessel {
                path,
                headings,
                half_width: hw,
            });
            placed = true;
            break;
        }
    }
    if !placed {
        return Err(SynthError::Placement(image_id));
    }

    for &class in &classes[1..] {
        let hw = r.random_range(wmin..=wmax) as f64 / 2.0;
        for _ in 0..BRANCH_ATTEMPTS {
            let parent = &vessels[r.random_range(0..vessels.len())];
            let at = r.random_range(1..parent.path.len() - 1);
            let side = if r.random_bool(0.5) { 1.0 } else { -1.0 };
            let heading = parent.headings[at] + side * r.random_range(PI / 5.0..=PI / 2.5);
            let gap = parent.half_width + hw + canvas.margin as f64 + 2.0;
            let start = parent.path[at].add(V2::dir(heading), gap / (heading - parent.headings[at]).sin().abs());
            let length = r.random_range(0.12 * c..=0.3 * c);
            let (path, headings) = walk(&mut r, start, heading, 4, length, PI / 15.0);
            let ring = outline(&path, &headings, hw);
            if canvas.try_place(&ring) {
                rings.push((class, ring));
                vessels.push(Vessel {
                    path,
                    headings,
                    half_width: hw,
                });
                break;
            }
        }
    }

    let background = Normal::new(0.0, 6.0).expect("positive sigma");
    let n = cfg.canvas as usize;
    let mut data = Vec::with_capacity(n * n);
    for (i, &on) in canvas.vessels.cells().iter().enumerate() {
        let (x, y) = ((i % n) as f64 / c, (i / n) as f64 / c);
        let base = if on { 75.0 } else { 170.0 + 30.0 * (x + y) / 2.0 };
        data.push((base + background.sample(&mut r)).round().clamp(0.0, 255.0) as u8);
    }
    Ok(Drawn {
        rings,
        pixels: GrayImage::from_raw(cfg.canvas, cfg.canvas, data)?,
    })
}

/// Builds a dataset with ids `1..=n_images`. Images are generated in
/// parallel from per-image streams; annotation ids are then assigned in image
/// order.
pub fn generate(cfg: &SynthConfig) -> Result<(DatasetIndex, SynthManifest), SynthError> {
    cfg.validate()?;
    let drawn: Vec<Drawn> = (0..cfg.n_images)
        .into_par_iter()
        .map(|i| draw_image(cfg, i as u64 + 1, cfg.group_of(i)))
        .collect::<Result<_, _>>()?;

    let mut images = Vec::with_capacity(drawn.len());
    let mut annotations = Vec::new();
    let mut entries = Vec::with_capacity(drawn.len());
    let mut class_counts: BTreeMap<SegmentClass, usize> = SegmentClass::all().map(|c| (c, 0)).collect();
    for (i, d) in drawn.into_iter().enumerate() {
        let image_id = i as u64 + 1;
        let mut record = ImageRecord::new(image_id, cfg.canvas, cfg.canvas, format!("{image_id}.png"));
        record.pixels = Some(d.pixels);
        images.push(record);
        let mut classes = Vec::with_capacity(d.rings.len());
        for (class, ring) in d.rings {
            *class_counts.entry(class).or_default() += 1;
            classes.push(class);
            annotations.push(PolygonAnnotation::single(annotations.len() as u64 + 1, image_id, class, ring));
        }
        entries.push(SynthImage {
            image_id,
            group: cfg.group_of(i),
            classes,
        });
    }
    let index = DatasetIndex::new(images, annotations)?;
    Ok((
        index,
        SynthManifest {
            seed: cfg.seed,
            n_images: cfg.n_images,
            canvas: cfg.canvas,
            class_counts,
            images: entries,
        },
    ))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SynthError + '_ {
    move |source| SynthError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `images/<id>.png`, `annotations.json` and `manifest.json` under
/// `dir`.
pub fn write_dataset(dir: &Path, index: &DatasetIndex, manifest: &SynthManifest) -> Result<(), SynthError> {
    let img_dir = dir.join("images");
    std::fs::create_dir_all(&img_dir).map_err(io_err(&img_dir))?;
    for img in index.images() {
        if let Some(px) = &img.pixels {
            px.write_png(&img_dir.join(&img.file_name))?;
        }
    }
    let ann = dir.join("annotations.json");
    std::fs::write(&ann, index.to_coco().to_json()).map_err(io_err(&ann))?;
    let man = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(&man, text).map_err(io_err(&man))?;
    Ok(())
}
