//! Ground-truth test doubles. Each draws from RNG streams keyed by its seed
//! and the image id (plus a mask fingerprint for refiner queries), so answers
//! never depend on call order or thread count.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{
    check_prob, erode_labels, BackendError, Classification, CorruptionConfig, RefinementBackend,
    SegmentationBackend, VesselClassifierBackend,
};
use crate::dataset::{DatasetIndex, ImageRecord};
use crate::fusion::{encode_onehot, ProbabilityStack};
use crate::mask::BinaryMask;
use crate::rng::{self, tag};
use crate::taxonomy::{group_of_labels, SegmentClass, VesselGroup};

/// Routes by the image's ground-truth labels, flipping the answer with
/// probability `flip_prob`.
#[derive(Debug, Clone)]
pub struct OracleVesselClassifier {
    index: Arc<DatasetIndex>,
    flip_prob: f64,
    seed: u64,
}

pub fn oracle_vessel_classifier(
    index: Arc<DatasetIndex>,
    flip_prob: f64,
    seed: u64,
) -> Result<OracleVesselClassifier, BackendError> {
    check_prob("flip_prob", flip_prob)?;
    Ok(OracleVesselClassifier { index, flip_prob, seed })
}

impl VesselClassifierBackend for OracleVesselClassifier {
    fn classify(&self, image: &ImageRecord) -> Result<Classification, BackendError> {
        let labels = self.index.image_classes(image.image_id)?;
        let truth = group_of_labels(&labels).map_err(|_| BackendError::NoGroundTruth(image.image_id))?;
        let u: f64 = rng::stream(self.seed, &[tag::CLASSIFIER, image.image_id]).random();
        let group = if u < self.flip_prob { truth.other() } else { truth };
        Ok(Classification {
            group,
            confidence: 1.0 - self.flip_prob,
        })
    }
}

/// Serves the one-hot ground truth of the requested group, damaged per
/// [`CorruptionConfig`]: erosion, then class drops, then within-group
/// relabeling, then clamped Gaussian noise on the probabilities.
///
/// Drop and relabel draws are made for every class of the group whether or
/// not it is present, so raising a probability only adds damage on top of
/// what a lower probability already did.
#[derive(Debug, Clone)]
pub struct OracleSegmentation {
    index: Arc<DatasetIndex>,
    cfg: CorruptionConfig,
}

pub fn oracle_segmentation(
    index: Arc<DatasetIndex>,
    cfg: CorruptionConfig,
) -> Result<OracleSegmentation, BackendError> {
    cfg.validate()?;
    Ok(OracleSegmentation { index, cfg })
}

impl OracleSegmentation {
    fn relabel_table(&self, image_id: u64, group: VesselGroup) -> [u8; SegmentClass::COUNT + 1] {
        let classes = group.classes();
        let mut table = [0u8; SegmentClass::COUNT + 1];
        let mut drop_rng = rng::stream(self.cfg.seed, &[tag::SEG_DROP, image_id]);
        let mut perm_rng = rng::stream(self.cfg.seed, &[tag::SEG_PERMUTE, image_id]);
        for (k, c) in classes.iter().enumerate() {
            let dropped = drop_rng.random::<f64>() < self.cfg.drop_class_prob;
            let permute = perm_rng.random::<f64>() < self.cfg.label_permute_prob;
            let mut other = perm_rng.random_range(0..classes.len() - 1);
            if other >= k {
                other += 1;
            }
            table[c.id() as usize] = if dropped {
                0
            } else if permute {
                classes[other].id()
            } else {
                c.id()
            };
        }
        table
    }
}

impl SegmentationBackend for OracleSegmentation {
    fn segment(&self, image: &ImageRecord, group: VesselGroup) -> Result<ProbabilityStack, BackendError> {
        let gt = self.index.label_mask(image.image_id)?;
        let mut mask = gt.clone();
        mask.retain(|c| c.group() == group);
        let mut mask = erode_labels(&mask, self.cfg.erosion_radius);
        let table = self.relabel_table(image.image_id, group);
        for cell in mask.cells_mut() {
            *cell = table[*cell as usize];
        }
        let mut stack = encode_onehot(&mask, &group.classes())?;
        if self.cfg.prob_noise_sigma > 0.0 {
            let normal = Normal::new(0.0f64, self.cfg.prob_noise_sigma)
                .map_err(|e| BackendError::Config(e.to_string()))?;
            let mut noise_rng = rng::stream(self.cfg.seed, &[tag::SEG_NOISE, image.image_id]);
            stack.map_clamped(|v| (v as f64 + normal.sample(&mut noise_rng)) as f32);
        }
        Ok(stack)
    }
}

/// Answers one-hot on the majority ground-truth LCA class under the query
/// mask, swapped for a uniformly drawn other LCA class with probability
/// `error_prob`. A mask covering no LCA ground truth gets a uniform vector.
#[derive(Debug, Clone)]
pub struct OracleRefiner {
    index: Arc<DatasetIndex>,
    error_prob: f64,
    seed: u64,
}

pub fn oracle_refiner(index: Arc<DatasetIndex>, error_prob: f64, seed: u64) -> Result<OracleRefiner, BackendError> {
    check_prob("error_prob", error_prob)?;
    Ok(OracleRefiner { index, error_prob, seed })
}

/// FNV-1a over the indices of set pixels.
fn mask_fingerprint(mask: &BinaryMask) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for (i, _) in mask.cells().iter().enumerate().filter(|(_, &on)| on) {
        for b in (i as u64).to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

impl RefinementBackend for OracleRefiner {
    fn classify_segment(&self, image: &ImageRecord, mask: &BinaryMask) -> Result<Vec<f64>, BackendError> {
        let id = image.image_id;
        let gt = self.index.label_mask(id)?;
        if gt.same_shape(mask).is_err() {
            return Err(BackendError::MaskOutsideImage(id));
        }
        if mask.is_empty() {
            return Err(BackendError::EmptyMask(id));
        }
        let lca = VesselGroup::Lca.classes();
        let mut tally = [0usize; SegmentClass::COUNT + 1];
        for (&g, &on) in gt.cells().iter().zip(mask.cells()) {
            if on {
                tally[g as usize] += 1;
            }
        }
        // Ties resolve to the lowest id via strict comparison in id order.
        let mut best: Option<(usize, usize)> = None;
        for (k, c) in lca.iter().enumerate() {
            let n = tally[c.id() as usize];
            if n > 0 && best.is_none_or(|(_, b)| n > b) {
                best = Some((k, n));
            }
        }
        let Some((mut k, _)) = best else {
            return Ok(vec![1.0 / lca.len() as f64; lca.len()]);
        };
        let mut r = rng::stream(self.seed, &[tag::REFINER, id, mask_fingerprint(mask)]);
        if r.random::<f64>() < self.error_prob {
            let mut other = r.random_range(0..lca.len() - 1);
            if other >= k {
                other += 1;
            }
            k = other;
        }
        let mut out = vec![0.0; lca.len()];
        out[k] = 1.0;
        Ok(out)
    }
}
