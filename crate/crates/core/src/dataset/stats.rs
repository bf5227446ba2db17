use std::collections::BTreeMap;

use serde::Serialize;

use super::DatasetIndex;
use crate::taxonomy::{group_of_labels, SegmentClass, VesselGroup};

/// Annotation instances per class; every class is present, zero if unseen.
pub fn class_histogram(index: &DatasetIndex) -> BTreeMap<SegmentClass, usize> {
    let mut hist: BTreeMap<SegmentClass, usize> = SegmentClass::all().map(|c| (c, 0)).collect();
    for ann in index.annotations() {
        *hist.entry(ann.class).or_default() += 1;
    }
    hist
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VesselRatio {
    pub rca_images: usize,
    pub lca_images: usize,
    /// Images without any annotation; excluded from both tallies.
    pub images_without_labels: Vec<u64>,
}

/// Routes every annotated image by its class set and tallies the groups.
pub fn vessel_ratio(index: &DatasetIndex) -> VesselRatio {
    let mut out = VesselRatio {
        rca_images: 0,
        lca_images: 0,
        images_without_labels: Vec::new(),
    };
    for img in index.images() {
        let labels = index
            .image_classes(img.image_id)
            .expect("image ids come from the index");
        match group_of_labels(&labels) {
            Ok(VesselGroup::Rca) => out.rca_images += 1,
            Ok(VesselGroup::Lca) => out.lca_images += 1,
            Err(_) => {
                log::warn!("image {} has no labels; skipped", img.image_id);
                out.images_without_labels.push(img.image_id);
            }
        }
    }
    out
}
