//! Predictor contracts for the three pipeline stages, plus deterministic
//! built-in implementations that need no trained network.
//!
//! Real models run out of process and reach the pipeline through
//! [`FileSegmentation`], which serves `PSTK` stacks from a directory.

mod file;
mod morphology;
mod oracle;

use thiserror::Error;

use crate::dataset::{DatasetError, ImageRecord};
use crate::fusion::{FusionError, ProbabilityStack, PstkError};
use crate::mask::BinaryMask;
use crate::taxonomy::VesselGroup;

pub use file::FileSegmentation;
pub use morphology::{disc_offsets, erode_labels};
pub use oracle::{
    oracle_refiner, oracle_segmentation, oracle_vessel_classifier, OracleRefiner, OracleSegmentation,
    OracleVesselClassifier,
};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("unknown image {0}")]
    UnknownImage(u64),
    #[error("image {0} has no ground-truth labels")]
    NoGroundTruth(u64),
    #[error("no stack for image {image_id} at {path}")]
    MissingStack { image_id: u64, path: String },
    #[error("corrupt stack for image {image_id}: {source}")]
    CorruptStack {
        image_id: u64,
        #[source]
        source: PstkError,
    },
    #[error("image {image_id}: stack holds {found} classes but {expected} was requested")]
    ClassListMismatch {
        image_id: u64,
        expected: VesselGroup,
        found: VesselGroup,
    },
    #[error("image {image_id}: stack is {found_w}x{found_h}, image is {width}x{height}")]
    ShapeMismatch {
        image_id: u64,
        width: u32,
        height: u32,
        found_w: u32,
        found_h: u32,
    },
    #[error("query mask does not fit image {0}")]
    MaskOutsideImage(u64),
    #[error("query mask for image {0} is empty")]
    EmptyMask(u64),
    #[error("invalid backend configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Dataset(DatasetError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
}

impl From<DatasetError> for BackendError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::UnknownImage(id) => BackendError::UnknownImage(id),
            other => BackendError::Dataset(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub group: VesselGroup,
    pub confidence: f64,
}

/// Routes an image to RCA or LCA.
pub trait VesselClassifierBackend: Send + Sync {
    fn classify(&self, image: &ImageRecord) -> Result<Classification, BackendError>;
}

/// Produces per-class probabilities for the requested group's classes.
pub trait SegmentationBackend: Send + Sync {
    fn segment(&self, image: &ImageRecord, group: VesselGroup) -> Result<ProbabilityStack, BackendError>;
}

/// Classifies one segmented region; returns a distribution over the 17 LCA
/// classes in ascending id order.
pub trait RefinementBackend: Send + Sync {
    fn classify_segment(&self, image: &ImageRecord, mask: &BinaryMask) -> Result<Vec<f64>, BackendError>;
}

/// Always answers the same group.
#[derive(Debug, Clone, Copy)]
pub struct ConstantClassifier {
    pub group: VesselGroup,
}

impl VesselClassifierBackend for ConstantClassifier {
    fn classify(&self, _image: &ImageRecord) -> Result<Classification, BackendError> {
        Ok(Classification {
            group: self.group,
            confidence: 1.0,
        })
    }
}

/// Fills every plane with one value.
#[derive(Debug, Clone, Copy)]
pub struct ConstantSegmentation {
    pub value: f32,
}

impl ConstantSegmentation {
    pub fn new(value: f32) -> Result<Self, BackendError> {
        if !(0.0..=1.0).contains(&value) {
            return Err(BackendError::Config(format!("constant value {value} outside [0, 1]")));
        }
        Ok(Self { value })
    }
}

impl SegmentationBackend for ConstantSegmentation {
    fn segment(&self, image: &ImageRecord, group: VesselGroup) -> Result<ProbabilityStack, BackendError> {
        let mut stack = ProbabilityStack::zeros(image.width, image.height, group);
        let v = self.value;
        stack.map_clamped(|_| v);
        Ok(stack)
    }
}

/// Controlled, seeded damage applied by [`OracleSegmentation`].
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorruptionConfig {
    /// Chance that a class is relabeled to another class of its group.
    pub label_permute_prob: f64,
    /// Radius of the Euclidean disc each class region is eroded by.
    pub erosion_radius: u32,
    /// Chance that a class is removed entirely.
    pub drop_class_prob: f64,
    /// Std-dev of Gaussian noise added to every probability.
    pub prob_noise_sigma: f64,
    pub seed: u64,
}

impl CorruptionConfig {
    pub fn none(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        check_prob("label_permute_prob", self.label_permute_prob)?;
        check_prob("drop_class_prob", self.drop_class_prob)?;
        if !(self.prob_noise_sigma >= 0.0 && self.prob_noise_sigma.is_finite()) {
            return Err(BackendError::Config(format!(
                "prob_noise_sigma {} must be finite and >= 0",
                self.prob_noise_sigma
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_prob(name: &str, p: f64) -> Result<(), BackendError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(BackendError::Config(format!("{name} = {p} outside [0, 1]")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corruption_validation() {
        assert!(CorruptionConfig::none(0).validate().is_ok());
        let bad = CorruptionConfig {
            drop_class_prob: 1.5,
            ..CorruptionConfig::none(0)
        };
        assert!(matches!(bad.validate(), Err(BackendError::Config(_))));
        let bad = CorruptionConfig {
            prob_noise_sigma: -0.1,
            ..CorruptionConfig::none(0)
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn constant_backends() {
        let img = ImageRecord::new(1, 3, 2, "x");
        let s = ConstantSegmentation::new(0.25).unwrap().segment(&img, VesselGroup::Lca).unwrap();
        assert_eq!(s.classes().len(), 17);
        assert!(s.data().iter().all(|&v| v == 0.25));
        assert!(ConstantSegmentation::new(2.0).is_err());
        let c = ConstantClassifier { group: VesselGroup::Rca }.classify(&img).unwrap();
        assert_eq!(c.group, VesselGroup::Rca);
    }
}
