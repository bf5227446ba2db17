use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use serde_json::json;

use mpseg::augment::{apply, sample_spec, AugmentRanges, AugmentSpec};
use mpseg::dataset::{class_histogram, kfold_split, vessel_ratio, DatasetIndex};
use mpseg::mask::LabelMask;
use mpseg::metrics::evaluate;
use mpseg::pipeline::{run_dataset, Pipeline, PipelineConfig, RunOptions};
use mpseg::rng::derive_seed;
use mpseg::synth::{generate, write_dataset, SynthConfig};
use mpseg::taxonomy::{SegmentClass, VesselGroup};

use crate::report::{CliError, Outcome};

type CmdResult = Result<Outcome, CliError>;

fn load_index(path: &Path, images: Option<&Path>) -> Result<DatasetIndex, CliError> {
    let mut index = DatasetIndex::parse_file(path)?;
    if let Some(dir) = images {
        index.load_pixels(dir)?;
    }
    Ok(index)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

/// Builds every label mask, turning overlaps into warnings.
fn label_masks(index: &DatasetIndex) -> Result<(Vec<&LabelMask>, Vec<String>), CliError> {
    let mut masks = Vec::with_capacity(index.images().len());
    let mut warnings = Vec::new();
    for img in index.images() {
        let build = index.build_label_mask(img.image_id)?;
        if build.overlap_pixels > 0 {
            warnings.push(format!(
                "image {}: {} pixels painted by more than one annotation",
                img.image_id, build.overlap_pixels
            ));
        }
        masks.push(&build.mask);
    }
    Ok((masks, warnings))
}

pub fn taxonomy() -> CmdResult {
    let classes: Vec<_> = SegmentClass::all()
        .map(|c| json!({ "id": c.id(), "name": c.name(), "group": c.group() }))
        .collect();
    let rca = VesselGroup::Rca.classes().len();
    let lca = VesselGroup::Lca.classes().len();
    let mut text = String::new();
    for c in SegmentClass::all() {
        text.push_str(&format!("{:>2}  {:<4} {}\n", c.id(), c.name(), c.group().as_str()));
    }
    text.push_str(&format!("{} classes: {rca} RCA, {lca} LCA", classes.len()));
    Ok(Outcome::new(
        json!({ "classes": classes, "count": classes.len(), "rca_count": rca, "lca_count": lca }),
        text,
    ))
}

pub fn validate(dataset: &Path, images: Option<&Path>) -> CmdResult {
    let index = load_index(dataset, images)?;
    let (_, warnings) = label_masks(&index)?;
    let payload = json!({
        "images": index.images().len(),
        "annotations": index.annotations().len(),
        "images_with_overlap": warnings.len(),
    });
    let text = format!(
        "{}: {} images, {} annotations, valid",
        dataset.display(),
        index.images().len(),
        index.annotations().len()
    );
    Ok(Outcome::new(payload, text).warn(warnings))
}

pub fn stats(dataset: &Path) -> CmdResult {
    let index = load_index(dataset, None)?;
    let hist = class_histogram(&index);
    let ratio = vessel_ratio(&index);
    let mut text = String::new();
    for (c, n) in &hist {
        text.push_str(&format!("{:<4} {n}\n", c.name()));
    }
    text.push_str(&format!("RCA images {}, LCA images {}", ratio.rca_images, ratio.lca_images));
    let warnings = ratio
        .images_without_labels
        .iter()
        .map(|id| format!("image {id} has no annotations"))
        .collect();
    Ok(Outcome::new(json!({ "histogram": hist, "vessel_ratio": ratio }), text).warn(warnings))
}

pub fn rasterize(dataset: &Path, out: &Path) -> CmdResult {
    let index = load_index(dataset, None)?;
    create_dir(out)?;
    let (masks, warnings) = label_masks(&index)?;
    for (img, mask) in index.images().iter().zip(masks) {
        mask.write_png(&out.join(format!("{}.png", img.image_id)))?;
    }
    let n = index.images().len();
    Ok(Outcome::new(
        json!({ "masks_written": n, "out": out }),
        format!("wrote {n} masks to {}", out.display()),
    )
    .warn(warnings))
}

pub fn split(dataset: &Path, folds: usize, seed: u64, out: Option<&Path>) -> CmdResult {
    let index = load_index(dataset, None)?;
    let split = kfold_split(&index, folds, seed)?;
    if let Some(path) = out {
        write_json(path, &split)?;
    }
    let text = split
        .iter()
        .enumerate()
        .map(|(i, f)| format!("fold {i}: {} train, {} val", f.train.len(), f.val.len()))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Outcome::new(json!({ "k": folds, "seed": seed, "folds": split }), text))
}

/// Predictions come from a COCO file (rasterized like the ground truth) or a
/// directory of `<image_id>.png` label masks.
pub fn eval(gt: &Path, pred: &Path, per_class: bool, out: Option<&Path>) -> CmdResult {
    let gt_index = load_index(gt, None)?;
    let (gt_masks, mut warnings) = label_masks(&gt_index)?;
    let mut preds = Vec::with_capacity(gt_masks.len());
    if pred.is_dir() {
        for (img, g) in gt_index.images().iter().zip(&gt_masks) {
            let path = pred.join(format!("{}.png", img.image_id));
            if path.exists() {
                preds.push(LabelMask::read_png(&path)?);
            } else {
                warnings.push(format!("image {}: no prediction, scored as empty", img.image_id));
                preds.push(LabelMask::new(g.width(), g.height()));
            }
        }
    } else {
        let pred_index = load_index(pred, None)?;
        for (img, g) in gt_index.images().iter().zip(&gt_masks) {
            match pred_index.label_mask(img.image_id) {
                Ok(m) => preds.push(m.clone()),
                Err(_) => {
                    warnings.push(format!("image {}: no prediction, scored as empty", img.image_id));
                    preds.push(LabelMask::new(g.width(), g.height()));
                }
            }
        }
    }
    let pairs: Vec<(u64, &LabelMask, &LabelMask)> = gt_index
        .images()
        .iter()
        .zip(&gt_masks)
        .zip(&preds)
        .map(|((img, g), p)| (img.image_id, *g, p))
        .collect();
    let report = evaluate(&pairs)?;
    for id in &report.skipped_image_ids {
        warnings.push(format!("image {id}: no ground-truth classes, skipped"));
    }
    if let Some(path) = out {
        write_json(path, &report)?;
    }
    let mut text = format!(
        "dataset_mean_f1 {:.6} over {} images ({} skipped)",
        report.dataset_mean_f1,
        report.per_image.len(),
        report.skipped_images
    );
    if per_class {
        for (c, f1) in &report.per_class_aggregate {
            text.push_str(&format!("\n{:<4} {f1:.6}", c.name()));
        }
    }
    let payload = if per_class {
        serde_json::to_value(&report).expect("report serializes")
    } else {
        json!({
            "dataset_mean_f1": report.dataset_mean_f1,
            "images": report.per_image.len(),
            "skipped_images": report.skipped_images,
            "skipped_image_ids": report.skipped_image_ids,
        })
    };
    Ok(Outcome::new(payload, text).warn(warnings))
}

pub struct RunArgs<'a> {
    pub config: &'a Path,
    pub dataset: &'a Path,
    pub images: Option<&'a Path>,
    pub image_ids: Option<&'a [u64]>,
    pub out: &'a Path,
    pub evaluate: bool,
    pub workers: usize,
}

pub fn run(args: RunArgs<'_>) -> CmdResult {
    let text = std::fs::read_to_string(args.config)
        .map_err(|e| CliError::io(format!("{}: {e}", args.config.display())))?;
    let cfg = PipelineConfig::from_toml(&text)?;
    let index = Arc::new(load_index(args.dataset, args.images)?);
    let base = args.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let pipeline = Pipeline::build(cfg, index.clone(), &base)?;
    let selected: Vec<_> = match args.image_ids {
        Some(ids) => ids
            .iter()
            .map(|&id| index.image(id).cloned())
            .collect::<Result<_, _>>()?,
        None => index.images().to_vec(),
    };
    let summary = run_dataset(
        &index,
        &selected,
        &pipeline,
        &RunOptions {
            out: args.out.to_path_buf(),
            workers: args.workers,
            evaluate: args.evaluate,
        },
    )?;
    let mut text = format!(
        "{} of {} images written to {}",
        summary.succeeded,
        summary.n_images,
        args.out.join("masks").display()
    );
    if let Some(r) = &summary.eval {
        text.push_str(&format!("\ndataset_mean_f1 {:.6}", r.dataset_mean_f1));
    }
    let warnings = summary
        .failed_image_ids
        .iter()
        .map(|id| format!("image {id} failed"))
        .collect();
    let payload = json!({
        "n_images": summary.n_images,
        "succeeded": summary.succeeded,
        "failed_image_ids": summary.failed_image_ids,
        "dataset_mean_f1": summary.eval.as_ref().map(|r| r.dataset_mean_f1),
        "config_hash": pipeline.config.hash(),
    });
    let mut outcome = Outcome::new(payload, text).warn(warnings);
    outcome.partial = summary.is_partial();
    Ok(outcome)
}

#[derive(Serialize)]
struct AugmentRecord {
    source_image_id: u64,
    index: usize,
    image: String,
    mask: String,
    spec: AugmentSpec,
}

pub fn augment(dataset: &Path, images: &Path, out: &Path, per_image: usize, seed: u64) -> CmdResult {
    let index = load_index(dataset, Some(images))?;
    let (masks, warnings) = label_masks(&index)?;
    let ranges = AugmentRanges::default();
    let (img_dir, mask_dir) = (out.join("images"), out.join("masks"));
    create_dir(&img_dir)?;
    create_dir(&mask_dir)?;
    let mut records = Vec::new();
    for (img, mask) in index.images().iter().zip(masks) {
        let pixels = img.pixels.as_ref().expect("pixels loaded");
        for k in 0..per_image {
            let spec = sample_spec(derive_seed(seed, &[img.image_id, k as u64]), &ranges)?;
            let (ai, am) = apply(pixels, mask, &spec)?;
            let name = format!("{}_{k}.png", img.image_id);
            ai.write_png(&img_dir.join(&name))?;
            am.write_png(&mask_dir.join(&name))?;
            records.push(AugmentRecord {
                source_image_id: img.image_id,
                index: k,
                image: format!("images/{name}"),
                mask: format!("masks/{name}"),
                spec,
            });
        }
    }
    let manifest = json!({ "seed": seed, "n_per_image": per_image, "ranges": ranges, "outputs": records });
    write_json(&out.join("manifest.json"), &manifest)?;
    let n = records.len();
    Ok(Outcome::new(
        json!({ "seed": seed, "outputs": n }),
        format!("wrote {n} augmented pairs to {}", out.display()),
    )
    .warn(warnings))
}

pub fn synth(cfg: SynthConfig, out: &Path) -> CmdResult {
    let (index, manifest) = generate(&cfg)?;
    create_dir(out)?;
    write_dataset(out, &index, &manifest)?;
    let counts: BTreeMap<_, _> = manifest.class_counts.iter().filter(|(_, &n)| n > 0).collect();
    Ok(Outcome::new(
        json!({
            "n_images": manifest.n_images,
            "annotations": index.annotations().len(),
            "class_counts": manifest.class_counts,
            "out": PathBuf::from(out),
        }),
        format!(
            "wrote {} images with {} annotations over {} classes to {}",
            manifest.n_images,
            index.annotations().len(),
            counts.len(),
            out.display()
        ),
    ))
}
