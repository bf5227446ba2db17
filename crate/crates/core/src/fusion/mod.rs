//! Probability stacks: per-class planes produced by segmentation backends,
//! fused across ensemble members and decoded into label masks.

mod pstk;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{LabelMask, MaskError};
use crate::taxonomy::{SegmentClass, VesselGroup};

pub use pstk::{read_pstk, read_pstk_file, write_pstk, write_pstk_file, PstkError, PSTK_MAGIC, PSTK_VERSION};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("ensemble has no members")]
    EmptyEnsemble,
    #[error("stack shape {0}x{1} does not match {2}x{3}")]
    ShapeMismatch(u32, u32, u32, u32),
    #[error("stacks cover different class lists")]
    ClassListMismatch,
    #[error("class list is not the complete RCA or LCA class set in id order")]
    InvalidClassList,
    #[error("class {0} is not in the stack's class list")]
    ClassOutsideList(SegmentClass),
    #[error("probability {0} outside [0, 1]")]
    ValueOutOfRange(f32),
    #[error(transparent)]
    Buffer(#[from] MaskError),
}

/// How ensemble members are combined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// Per-pixel, per-class arithmetic mean of probabilities.
    #[default]
    Mean,
    /// Fraction of members whose decoded label is the class.
    Vote,
}

/// `K` class planes over `H x W`, class-major then row-major.
///
/// The class list is always one vessel group's full class set in ascending
/// id order (8 planes for RCA, 17 for LCA), so plane order is id order.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityStack {
    width: u32,
    height: u32,
    group: VesselGroup,
    classes: Vec<SegmentClass>,
    data: Vec<f32>,
}

fn group_of_class_list(classes: &[SegmentClass]) -> Option<VesselGroup> {
    [VesselGroup::Rca, VesselGroup::Lca]
        .into_iter()
        .find(|g| g.classes() == classes)
}

impl ProbabilityStack {
    pub fn new(width: u32, height: u32, classes: Vec<SegmentClass>, data: Vec<f32>) -> Result<Self, FusionError> {
        let group = group_of_class_list(&classes).ok_or(FusionError::InvalidClassList)?;
        if width == 0 || height == 0 || data.len() != classes.len() * width as usize * height as usize {
            return Err(MaskError::BadBuffer { width, height, len: data.len() }.into());
        }
        if let Some(&bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(FusionError::ValueOutOfRange(bad));
        }
        Ok(Self { width, height, group, classes, data })
    }

    pub fn zeros(width: u32, height: u32, group: VesselGroup) -> Self {
        let classes = group.classes();
        let data = vec![0.0; classes.len() * width as usize * height as usize];
        Self { width, height, group, classes, data }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn group(&self) -> VesselGroup {
        self.group
    }

    pub fn classes(&self) -> &[SegmentClass] {
        &self.classes
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    fn plane_len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn plane(&self, k: usize) -> &[f32] {
        let n = self.plane_len();
        &self.data[k * n..(k + 1) * n]
    }

    pub fn plane_mut(&mut self, k: usize) -> &mut [f32] {
        let n = self.plane_len();
        &mut self.data[k * n..(k + 1) * n]
    }

    pub fn class_index(&self, class: SegmentClass) -> Option<usize> {
        self.classes.iter().position(|&c| c == class)
    }

    /// Applies `f` to every value and clamps the result into `[0, 1]`.
    pub fn map_clamped(&mut self, mut f: impl FnMut(f32) -> f32) {
        for v in &mut self.data {
            *v = f(*v).clamp(0.0, 1.0);
        }
    }

    fn check_compatible(&self, other: &Self) -> Result<(), FusionError> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(FusionError::ShapeMismatch(self.width, self.height, other.width, other.height));
        }
        if self.classes != other.classes {
            return Err(FusionError::ClassListMismatch);
        }
        Ok(())
    }
}

fn check_members(members: &[ProbabilityStack]) -> Result<&ProbabilityStack, FusionError> {
    let first = members.first().ok_or(FusionError::EmptyEnsemble)?;
    for m in &members[1..] {
        first.check_compatible(m)?;
    }
    Ok(first)
}

/// Element-wise mean of the members, accumulated in `f64`.
pub fn fuse_mean(members: &[ProbabilityStack]) -> Result<ProbabilityStack, FusionError> {
    let first = check_members(members)?;
    let n = members.len() as f64;
    let mut acc = vec![0.0f64; first.data.len()];
    for m in members {
        for (a, &v) in acc.iter_mut().zip(&m.data) {
            *a += v as f64;
        }
    }
    Ok(ProbabilityStack {
        data: acc.into_iter().map(|s| (s / n) as f32).collect(),
        ..first.clone()
    })
}

/// Decodes every member with `threshold` and returns, per class plane, the
/// fraction of members that voted for the class.
pub fn fuse_vote(members: &[ProbabilityStack], threshold: f64) -> Result<ProbabilityStack, FusionError> {
    let first = check_members(members)?;
    let n = members.len() as u32;
    let mut votes = vec![0u32; first.data.len()];
    let plane = first.plane_len();
    for m in members {
        let labels = decode(m, threshold);
        for (px, &v) in labels.cells().iter().enumerate() {
            if v != 0 {
                let k = m.class_index(SegmentClass::from_id(v as u32).expect("decoded label")).expect("own class");
                votes[k * plane + px] += 1;
            }
        }
    }
    Ok(ProbabilityStack {
        data: votes.into_iter().map(|c| (c as f64 / n as f64) as f32).collect(),
        ..first.clone()
    })
}

pub fn fuse(members: &[ProbabilityStack], mode: FusionMode, threshold: f64) -> Result<ProbabilityStack, FusionError> {
    match mode {
        FusionMode::Mean => fuse_mean(members),
        FusionMode::Vote => fuse_vote(members, threshold),
    }
}

/// Argmax decoding: a pixel is background when its highest class probability
/// is below `threshold`, otherwise the argmax class. Ties go to the lowest
/// class id.
pub fn decode(stack: &ProbabilityStack, threshold: f64) -> LabelMask {
    let n = stack.plane_len();
    let mut best = vec![f32::NEG_INFINITY; n];
    let mut best_k = vec![0usize; n];
    for k in 0..stack.classes.len() {
        for ((b, bk), &v) in best.iter_mut().zip(best_k.iter_mut()).zip(stack.plane(k)) {
            // Strict: an equal later plane (higher id) never wins.
            if v > *b {
                *b = v;
                *bk = k;
            }
        }
    }
    let cells = best
        .iter()
        .zip(&best_k)
        .map(|(&m, &k)| {
            if (m as f64) < threshold {
                0
            } else {
                stack.classes[k].id()
            }
        })
        .collect();
    LabelMask::from_cells(stack.width, stack.height, cells).expect("decoded ids are valid")
}

/// One-hot planes for `mask`; `classes` must be a full group class list.
pub fn encode_onehot(mask: &LabelMask, classes: &[SegmentClass]) -> Result<ProbabilityStack, FusionError> {
    let group = group_of_class_list(classes).ok_or(FusionError::InvalidClassList)?;
    let mut stack = ProbabilityStack::zeros(mask.width(), mask.height(), group);
    let n = stack.plane_len();
    let mut index_of = [usize::MAX; SegmentClass::COUNT + 1];
    for (k, c) in stack.classes.iter().enumerate() {
        index_of[c.id() as usize] = k;
    }
    for (px, &v) in mask.cells().iter().enumerate() {
        if v == 0 {
            continue;
        }
        let k = index_of[v as usize];
        if k == usize::MAX {
            return Err(FusionError::ClassOutsideList(SegmentClass::from_id(v as u32).expect("valid label")));
        }
        stack.data[k * n + px] = 1.0;
    }
    Ok(stack)
}
