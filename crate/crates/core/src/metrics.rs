//! Challenge scoring: per-class pixel F1, per-image mean over ground-truth
//! classes, dataset mean over images, plus binary IoU.
//!
//! Vanishing denominators score 0 (precision, recall and F1 alike), so every
//! score stays in `[0, 1]` and an empty prediction scores 0. Classes that
//! appear only in the prediction are ignored. Images without any
//! ground-truth pixel are skipped and counted.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{BinaryMask, LabelMask, MaskError};
use crate::taxonomy::SegmentClass;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error(transparent)]
    ShapeMismatch(#[from] MaskError),
    #[error("ground truth has no labeled pixels")]
    NoGroundTruthClasses,
    #[error("{gt} ground-truth masks vs {pred} predictions")]
    LengthMismatch { gt: usize, pred: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PixelCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl PixelCounts {
    fn ratio(num: u64, den: u64) -> f64 {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    }

    pub fn precision(&self) -> f64 {
        Self::ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        Self::ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    fn iou(&self) -> f64 {
        let union = self.tp + self.fp + self.fn_;
        if union == 0 {
            1.0
        } else {
            self.tp as f64 / union as f64
        }
    }
}

pub fn binary_counts(gt: &BinaryMask, pred: &BinaryMask) -> Result<PixelCounts, MetricsError> {
    gt.same_shape(pred)?;
    let mut c = PixelCounts::default();
    for (&g, &p) in gt.cells().iter().zip(pred.cells()) {
        match (g, p) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(c)
}

pub fn binary_f1(gt: &BinaryMask, pred: &BinaryMask) -> Result<f64, MetricsError> {
    binary_counts(gt, pred).map(|c| c.f1())
}

/// `|gt ∩ pred| / |gt ∪ pred|`; 1 when both are empty.
pub fn binary_iou(gt: &BinaryMask, pred: &BinaryMask) -> Result<f64, MetricsError> {
    binary_counts(gt, pred).map(|c| c.iou())
}

/// Per-class counts for every class present in `gt`, one pass over pixels.
pub fn class_counts(
    gt: &LabelMask,
    pred: &LabelMask,
) -> Result<BTreeMap<SegmentClass, PixelCounts>, MetricsError> {
    gt.same_shape(pred)?;
    let mut counts = [PixelCounts::default(); SegmentClass::COUNT + 1];
    for (&g, &p) in gt.cells().iter().zip(pred.cells()) {
        if g == p {
            counts[g as usize].tp += 1;
        } else {
            counts[g as usize].fn_ += 1;
            counts[p as usize].fp += 1;
        }
    }
    Ok(SegmentClass::all()
        .map(|c| (c, counts[c.id() as usize]))
        .filter(|(_, k)| k.tp + k.fn_ > 0)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub image_id: u64,
    pub per_class: BTreeMap<SegmentClass, f64>,
    pub image_mean: f64,
}

pub fn image_mean_f1(gt: &LabelMask, pred: &LabelMask) -> Result<(BTreeMap<SegmentClass, f64>, f64), MetricsError> {
    let counts = class_counts(gt, pred)?;
    if counts.is_empty() {
        return Err(MetricsError::NoGroundTruthClasses);
    }
    let per_class: BTreeMap<SegmentClass, f64> = counts.into_iter().map(|(c, k)| (c, k.f1())).collect();
    let mean = per_class.values().sum::<f64>() / per_class.len() as f64;
    Ok((per_class, mean))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_image: Vec<ImageScore>,
    pub dataset_mean_f1: f64,
    /// Mean F1 of each class over the images whose ground truth contains it.
    pub per_class_aggregate: BTreeMap<SegmentClass, f64>,
    pub skipped_images: usize,
    pub skipped_image_ids: Vec<u64>,
}

/// Evaluates aligned lists, using list positions as image ids.
pub fn dataset_mean_f1(gt: &[LabelMask], pred: &[LabelMask]) -> Result<EvalReport, MetricsError> {
    if gt.len() != pred.len() {
        return Err(MetricsError::LengthMismatch {
            gt: gt.len(),
            pred: pred.len(),
        });
    }
    let pairs: Vec<(u64, &LabelMask, &LabelMask)> = gt
        .iter()
        .zip(pred)
        .enumerate()
        .map(|(i, (g, p))| (i as u64, g, p))
        .collect();
    evaluate(&pairs)
}

/// Per-image scoring runs in parallel; the reduction runs in list order so
/// the report does not depend on the worker count.
pub fn evaluate(pairs: &[(u64, &LabelMask, &LabelMask)]) -> Result<EvalReport, MetricsError> {
    let scored: Vec<Result<Option<ImageScore>, MetricsError>> = pairs
        .par_iter()
        .map(|&(image_id, g, p)| match image_mean_f1(g, p) {
            Ok((per_class, image_mean)) => Ok(Some(ImageScore {
                image_id,
                per_class,
                image_mean,
            })),
            Err(MetricsError::NoGroundTruthClasses) => Ok(None),
            Err(e) => Err(e),
        })
        .collect();

    let mut per_image = Vec::new();
    let mut skipped_image_ids = Vec::new();
    for ((image_id, _, _), s) in pairs.iter().zip(scored) {
        match s? {
            Some(score) => per_image.push(score),
            None => skipped_image_ids.push(*image_id),
        }
    }

    let dataset_mean_f1 = if per_image.is_empty() {
        0.0
    } else {
        per_image.iter().map(|s| s.image_mean).sum::<f64>() / per_image.len() as f64
    };
    let mut sums: BTreeMap<SegmentClass, (f64, usize)> = BTreeMap::new();
    for s in &per_image {
        for (&c, &f) in &s.per_class {
            let e = sums.entry(c).or_default();
            e.0 += f;
            e.1 += 1;
        }
    }
    Ok(EvalReport {
        per_image,
        dataset_mean_f1,
        per_class_aggregate: sums.into_iter().map(|(c, (s, n))| (c, s / n as f64)).collect(),
        skipped_images: skipped_image_ids.len(),
        skipped_image_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::class_from_name;

    fn bin(w: u32, on: &[usize]) -> BinaryMask {
        let mut cells = vec![false; (w * w) as usize];
        for &i in on {
            cells[i] = true;
        }
        BinaryMask::from_cells(w, w, cells).unwrap()
    }

    #[test]
    fn f1_examples() {
        let gt = bin(4, &[0, 1, 2, 3]);
        assert_eq!(binary_f1(&gt, &gt).unwrap(), 1.0);
        assert_eq!(binary_f1(&gt, &bin(4, &[8, 9])).unwrap(), 0.0);
        // 2 shared + 2 extra: TP 2, FP 2, FN 2.
        let pred = bin(4, &[0, 1, 8, 9]);
        let c = binary_counts(&gt, &pred).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_), (2, 2, 2));
        assert_eq!(c.precision(), 0.5);
        assert_eq!(c.recall(), 0.5);
        assert_eq!(binary_f1(&gt, &pred).unwrap(), 0.5);
        assert!((binary_iou(&gt, &pred).unwrap() - 2.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn iou_conventions() {
        let empty = bin(4, &[]);
        let some = bin(4, &[3]);
        assert_eq!(binary_iou(&empty, &empty).unwrap(), 1.0);
        assert_eq!(binary_iou(&empty, &some).unwrap(), 0.0);
        assert_eq!(binary_iou(&some, &empty).unwrap(), 0.0);
        assert_eq!(binary_iou(&some, &some).unwrap(), 1.0);
        assert_eq!(binary_f1(&empty, &empty).unwrap(), 0.0);
    }

    #[test]
    fn shape_mismatch() {
        assert!(matches!(binary_f1(&bin(4, &[]), &bin(3, &[])), Err(MetricsError::ShapeMismatch(_))));
    }

    fn labels(w: u32, cells: &[(usize, &str)]) -> LabelMask {
        let mut v = vec![0u8; (w * w) as usize];
        for &(i, n) in cells {
            v[i] = class_from_name(n).unwrap().id();
        }
        LabelMask::from_cells(w, w, v).unwrap()
    }

    #[test]
    fn image_mean_examples() {
        let gt = labels(4, &[(0, "5"), (1, "5"), (5, "6"), (10, "16c")]);
        let (pc, mean) = image_mean_f1(&gt, &gt).unwrap();
        assert_eq!(pc.len(), 3);
        assert_eq!(mean, 1.0);

        let spurious = labels(4, &[(0, "5"), (1, "5"), (5, "6"), (10, "16c"), (15, "9a")]);
        assert_eq!(image_mean_f1(&gt, &spurious).unwrap().1, 1.0);

        let gt56 = labels(4, &[(0, "5"), (1, "5"), (5, "6"), (6, "6")]);
        let only5 = labels(4, &[(0, "5"), (1, "5")]);
        assert_eq!(image_mean_f1(&gt56, &only5).unwrap().1, 0.5);

        assert!(matches!(
            image_mean_f1(&labels(4, &[]), &gt),
            Err(MetricsError::NoGroundTruthClasses)
        ));
    }

    #[test]
    fn dataset_mean_examples() {
        let gt56 = labels(4, &[(0, "5"), (5, "6")]);
        let only5 = labels(4, &[(0, "5")]);
        let r = dataset_mean_f1(&[gt56.clone(), gt56.clone()], &[gt56.clone(), only5]).unwrap();
        assert_eq!(r.dataset_mean_f1, 0.75);
        assert_eq!(r.per_class_aggregate[&class_from_name("6").unwrap()], 0.5);

        let empty = labels(4, &[]);
        let r = dataset_mean_f1(&[gt56.clone(), empty.clone()], &[empty.clone(), empty.clone()]).unwrap();
        assert_eq!(r.dataset_mean_f1, 0.0);
        assert_eq!(r.skipped_images, 1);
        assert_eq!(r.skipped_image_ids, vec![1]);

        assert!(matches!(
            dataset_mean_f1(&[gt56], &[]),
            Err(MetricsError::LengthMismatch { gt: 1, pred: 0 })
        ));
    }
}
