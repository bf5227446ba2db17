//! LCA refinement: every segmented LCA region is re-classified by an
//! ensemble of mask-conditioned classifiers and relabeled with the winning
//! class. The foreground/background partition never changes.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, RefinementBackend};
use crate::dataset::ImageRecord;
use crate::mask::{BinaryMask, LabelMask};
use crate::taxonomy::{SegmentClass, VesselGroup};

#[derive(Debug, Error)]
pub enum RefinementError {
    #[error("mask contains non-LCA class {0}")]
    NonLcaClassInMask(SegmentClass),
    #[error("no refiners configured")]
    NoRefiners,
    #[error("refiner returned an invalid distribution: {0}")]
    BadRefinerOutput(String),
    #[error("refiner failed: {0}")]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionMode {
    /// One query per predicted class.
    #[default]
    PerClassMask,
    /// One query per 8-connected component of each predicted class.
    PerConnectedComponent,
}

/// What happens when regions of different source classes win the same
/// target class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConflictPolicy {
    /// All of them take the target class.
    #[default]
    MergeUnion,
    /// Only the most confident source class takes it; the others keep their
    /// original label.
    KeepHigherConfidence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefinementConfig {
    pub mode: RegionMode,
    pub min_region_pixels: usize,
    pub conflict_policy: ConflictPolicy,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self {
            mode: RegionMode::PerClassMask,
            min_region_pixels: 1,
            conflict_policy: ConflictPolicy::MergeUnion,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionDecision {
    pub source: SegmentClass,
    pub pixels: usize,
    pub target: SegmentClass,
    pub confidence: f64,
    pub applied: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementOutcome {
    pub mask: LabelMask,
    pub regions: Vec<RegionDecision>,
    /// Target classes claimed by more than one source class.
    pub conflicts: usize,
}

/// 8-connected components, ordered by their first pixel in raster order
/// (top-most row, then left-most column).
pub fn connected_components(mask: &BinaryMask) -> Vec<BinaryMask> {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let cells = mask.cells();
    let mut seen = vec![false; cells.len()];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..cells.len() {
        if !cells[start] || seen[start] {
            continue;
        }
        let mut comp = BinaryMask::new(mask.width(), mask.height());
        seen[start] = true;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            comp.cells_mut()[i] = true;
            let (x, y) = (i as i64 % w, i as i64 / w);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w || ny >= h {
                        continue;
                    }
                    let j = (ny * w + nx) as usize;
                    if cells[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        out.push(comp);
    }
    out
}

fn regions(mask: &LabelMask, mode: RegionMode) -> Vec<(SegmentClass, BinaryMask)> {
    let mut out = Vec::new();
    for class in mask.classes() {
        let indicator = mask.class_indicator(class);
        match mode {
            RegionMode::PerClassMask => out.push((class, indicator)),
            RegionMode::PerConnectedComponent => {
                out.extend(connected_components(&indicator).into_iter().map(|c| (class, c)))
            }
        }
    }
    out
}

fn check_distribution(p: &[f64], k: usize) -> Result<(), RefinementError> {
    if p.len() != k {
        return Err(RefinementError::BadRefinerOutput(format!("{} entries, expected {k}", p.len())));
    }
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(RefinementError::BadRefinerOutput("negative or non-finite entry".into()));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(RefinementError::BadRefinerOutput(format!("entries sum to {sum}")));
    }
    Ok(())
}

pub fn refine_lca(
    image: &ImageRecord,
    mask: &LabelMask,
    refiners: &[Arc<dyn RefinementBackend>],
    cfg: &RefinementConfig,
) -> Result<RefinementOutcome, RefinementError> {
    if refiners.is_empty() {
        return Err(RefinementError::NoRefiners);
    }
    if let Some(c) = mask.classes().into_iter().find(|c| c.group() != VesselGroup::Lca) {
        return Err(RefinementError::NonLcaClassInMask(c));
    }
    let lca = VesselGroup::Lca.classes();
    let regions = regions(mask, cfg.mode);

    let mut decisions = Vec::with_capacity(regions.len());
    for (source, region) in &regions {
        let pixels = region.count();
        if pixels < cfg.min_region_pixels.max(1) {
            decisions.push(RegionDecision {
                source: *source,
                pixels,
                target: *source,
                confidence: 0.0,
                applied: false,
            });
            continue;
        }
        let mut mean = vec![0.0; lca.len()];
        for r in refiners {
            let p = r.classify_segment(image, region)?;
            check_distribution(&p, lca.len())?;
            for (m, v) in mean.iter_mut().zip(p) {
                *m += v;
            }
        }
        let mut best = 0;
        for k in 1..mean.len() {
            if mean[k] > mean[best] {
                best = k;
            }
        }
        decisions.push(RegionDecision {
            source: *source,
            pixels,
            target: lca[best],
            confidence: mean[best] / refiners.len() as f64,
            applied: true,
        });
    }

    // target -> (source -> (best confidence, first region index))
    let mut claims: BTreeMap<SegmentClass, BTreeMap<SegmentClass, (f64, usize)>> = BTreeMap::new();
    for (i, d) in decisions.iter().enumerate().filter(|(_, d)| d.applied) {
        let e = claims.entry(d.target).or_default().entry(d.source).or_insert((d.confidence, i));
        if d.confidence > e.0 {
            e.0 = d.confidence;
        }
    }
    let mut conflicts = 0;
    for (target, sources) in &claims {
        if sources.len() < 2 {
            continue;
        }
        conflicts += 1;
        log::warn!(
            "image {}: {} source classes refined to {target}",
            image.image_id,
            sources.len()
        );
        if cfg.conflict_policy == ConflictPolicy::KeepHigherConfidence {
            let winner = sources
                .iter()
                .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
                .map(|(s, _)| *s)
                .expect("non-empty");
            for d in decisions.iter_mut() {
                if d.applied && d.target == *target && d.source != winner {
                    d.applied = false;
                }
            }
        }
    }

    let mut out = mask.clone();
    for ((_, region), d) in regions.iter().zip(&decisions) {
        if d.applied && d.target != d.source {
            out.paint(region, Some(d.target));
        }
    }
    Ok(RefinementOutcome {
        mask: out,
        regions: decisions,
        conflicts,
    })
}
