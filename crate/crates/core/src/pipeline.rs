//! Per-image flow: route to a vessel group, run that group's ensemble, fuse,
//! decode, and refine LCA outputs. RCA outputs are returned as decoded.
//!
//! [`run_dataset`] drives a whole index over a bounded worker pool and
//! writes `masks/<id>.png`, `manifest.json`, `timings.json` and optionally
//! `eval.json`. Everything but `timings.json` is a pure function of the
//! config and the dataset.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backends::{
    oracle_refiner, oracle_segmentation, oracle_vessel_classifier, BackendError, ConstantClassifier,
    ConstantSegmentation, CorruptionConfig, FileSegmentation, RefinementBackend, SegmentationBackend,
    VesselClassifierBackend,
};
use crate::dataset::{DatasetIndex, ImageRecord};
use crate::fusion::{decode, fuse, FusionMode, DEFAULT_THRESHOLD};
use crate::mask::LabelMask;
use crate::metrics::{evaluate, EvalReport};
use crate::refinement::{refine_lca, RefinementConfig, RegionDecision};
use crate::rng::{derive_seed, tag};
use crate::taxonomy::VesselGroup;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error("cannot parse pipeline config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("image {image_id}: {stage} failed: {source}")]
    Stage {
        image_id: u64,
        stage: Stage,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Classify,
    Segment,
    Fuse,
    Refine,
    Write,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Classify => "classify",
            Stage::Segment => "segment",
            Stage::Fuse => "fuse",
            Stage::Refine => "refine",
            Stage::Write => "write",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClassifierSpec {
    Oracle {
        #[serde(default)]
        flip_prob: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    Constant {
        group: VesselGroup,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SegmenterSpec {
    Oracle {
        #[serde(default)]
        label_permute_prob: f64,
        #[serde(default)]
        erosion_radius: u32,
        #[serde(default)]
        drop_class_prob: f64,
        #[serde(default)]
        prob_noise_sigma: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    Constant {
        value: f32,
    },
    /// Relative paths resolve against the config file's directory.
    File {
        dir: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RefinerSpec {
    Oracle {
        #[serde(default)]
        error_prob: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub fusion_mode: FusionMode,
    #[serde(default)]
    pub refinement_enabled: bool,
    pub classifier: ClassifierSpec,
    #[serde(default)]
    pub rca_ensemble: Vec<SegmenterSpec>,
    #[serde(default)]
    pub lca_ensemble: Vec<SegmenterSpec>,
    #[serde(default)]
    pub refiners: Vec<RefinerSpec>,
    #[serde(default)]
    pub refinement: RefinementConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!("threshold {} outside [0, 1]", self.threshold));
        }
        let used: &[VesselGroup] = match self.classifier {
            ClassifierSpec::Constant { group } => match group {
                VesselGroup::Rca => &[VesselGroup::Rca],
                VesselGroup::Lca => &[VesselGroup::Lca],
            },
            ClassifierSpec::Oracle { .. } => &[VesselGroup::Rca, VesselGroup::Lca],
        };
        for g in used {
            if self.ensemble(*g).is_empty() {
                return bad(format!("{} ensemble is empty", g.as_str()));
            }
        }
        if self.refinement_enabled && self.refiners.is_empty() {
            return bad("refinement_enabled requires at least one refiner".into());
        }
        Ok(())
    }

    pub fn ensemble(&self, group: VesselGroup) -> &[SegmenterSpec] {
        match group {
            VesselGroup::Rca => &self.rca_ensemble,
            VesselGroup::Lca => &self.lca_ensemble,
        }
    }

    /// SHA-256 of the canonical JSON form; insensitive to TOML layout.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Seed of a member without an explicit one.
fn member_seed(base: u64, role: u64, i: usize) -> u64 {
    derive_seed(base, &[tag::MEMBER, role, i as u64])
}

const ROLE_CLASSIFIER: u64 = 0;
const ROLE_RCA: u64 = 1;
const ROLE_LCA: u64 = 2;
const ROLE_REFINER: u64 = 3;

/// Instantiated backends for one config.
pub struct Pipeline {
    pub config: PipelineConfig,
    pub classifier: Box<dyn VesselClassifierBackend>,
    pub rca_ensemble: Vec<Box<dyn SegmentationBackend>>,
    pub lca_ensemble: Vec<Box<dyn SegmentationBackend>>,
    pub refiners: Vec<Arc<dyn RefinementBackend>>,
}

impl Pipeline {
    /// Builds the configured backends. Oracles read `index`; file backends
    /// resolve relative directories against `base_dir`.
    pub fn build(config: PipelineConfig, index: Arc<DatasetIndex>, base_dir: &Path) -> Result<Self, PipelineError> {
        config.validate()?;
        let seed = config.seed;
        let classifier: Box<dyn VesselClassifierBackend> = match config.classifier {
            ClassifierSpec::Oracle { flip_prob, seed: s } => Box::new(oracle_vessel_classifier(
                index.clone(),
                flip_prob,
                s.unwrap_or_else(|| member_seed(seed, ROLE_CLASSIFIER, 0)),
            )?),
            ClassifierSpec::Constant { group } => Box::new(ConstantClassifier { group }),
        };
        let segmenters = |specs: &[SegmenterSpec], role| -> Result<Vec<Box<dyn SegmentationBackend>>, PipelineError> {
            specs
                .iter()
                .enumerate()
                .map(|(i, spec)| -> Result<Box<dyn SegmentationBackend>, PipelineError> {
                    Ok(match spec {
                        SegmenterSpec::Oracle {
                            label_permute_prob,
                            erosion_radius,
                            drop_class_prob,
                            prob_noise_sigma,
                            seed: s,
                        } => Box::new(oracle_segmentation(
                            index.clone(),
                            CorruptionConfig {
                                label_permute_prob: *label_permute_prob,
                                erosion_radius: *erosion_radius,
                                drop_class_prob: *drop_class_prob,
                                prob_noise_sigma: *prob_noise_sigma,
                                seed: s.unwrap_or_else(|| member_seed(seed, role, i)),
                            },
                        )?),
                        SegmenterSpec::Constant { value } => Box::new(ConstantSegmentation::new(*value)?),
                        SegmenterSpec::File { dir } => Box::new(FileSegmentation::new(base_dir.join(dir))),
                    })
                })
                .collect()
        };
        let rca_ensemble = segmenters(&config.rca_ensemble, ROLE_RCA)?;
        let lca_ensemble = segmenters(&config.lca_ensemble, ROLE_LCA)?;
        let refiners = config
            .refiners
            .iter()
            .enumerate()
            .map(|(i, spec)| -> Result<Arc<dyn RefinementBackend>, PipelineError> {
                match spec {
                    RefinerSpec::Oracle { error_prob, seed: s } => Ok(Arc::new(oracle_refiner(
                        index.clone(),
                        *error_prob,
                        s.unwrap_or_else(|| member_seed(seed, ROLE_REFINER, i)),
                    )?)),
                }
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            config,
            classifier,
            rca_ensemble,
            lca_ensemble,
            refiners,
        })
    }

    fn ensemble(&self, group: VesselGroup) -> &[Box<dyn SegmentationBackend>] {
        match group {
            VesselGroup::Rca => &self.rca_ensemble,
            VesselGroup::Lca => &self.lca_ensemble,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementTrace {
    pub regions: Vec<RegionDecision>,
    pub conflicts: usize,
}

/// Deterministic per-image record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageTrace {
    pub image_id: u64,
    pub group: VesselGroup,
    pub confidence: f64,
    pub members: usize,
    pub foreground_pixels: usize,
    pub refinement: Option<RefinementTrace>,
}

/// Wall-clock seconds per stage; kept apart from [`ImageTrace`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub image_id: u64,
    pub classify: f64,
    pub segment: f64,
    pub fuse: f64,
    pub refine: f64,
}

fn stage_err<E: std::error::Error + Send + Sync + 'static>(
    image_id: u64,
    stage: Stage,
) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError::Stage {
        image_id,
        stage,
        source: Box::new(e),
    }
}

pub fn run_image(
    image: &ImageRecord,
    pipeline: &Pipeline,
) -> Result<(LabelMask, ImageTrace, StageTimings), PipelineError> {
    let id = image.image_id;
    let cfg = &pipeline.config;
    let mut timings = StageTimings {
        image_id: id,
        ..Default::default()
    };

    let t = Instant::now();
    let cls = pipeline.classifier.classify(image).map_err(stage_err(id, Stage::Classify))?;
    timings.classify = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let members = pipeline.ensemble(cls.group);
    if members.is_empty() {
        return Err(PipelineError::Stage {
            image_id: id,
            stage: Stage::Segment,
            source: format!("{} ensemble is empty", cls.group.as_str()).into(),
        });
    }
    let stacks = members
        .iter()
        .map(|m| m.segment(image, cls.group))
        .collect::<Result<Vec<_>, _>>()
        .map_err(stage_err(id, Stage::Segment))?;
    timings.segment = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let fused = fuse(&stacks, cfg.fusion_mode, cfg.threshold).map_err(stage_err(id, Stage::Fuse))?;
    let mut mask = decode(&fused, cfg.threshold);
    timings.fuse = t.elapsed().as_secs_f64();

    let mut refinement = None;
    if cls.group == VesselGroup::Lca && cfg.refinement_enabled {
        let t = Instant::now();
        let outcome =
            refine_lca(image, &mask, &pipeline.refiners, &cfg.refinement).map_err(stage_err(id, Stage::Refine))?;
        timings.refine = t.elapsed().as_secs_f64();
        refinement = Some(RefinementTrace {
            regions: outcome.regions,
            conflicts: outcome.conflicts,
        });
        mask = outcome.mask;
    }

    let trace = ImageTrace {
        image_id: id,
        group: cls.group,
        confidence: cls.confidence,
        members: stacks.len(),
        foreground_pixels: mask.foreground_count(),
        refinement,
    };
    Ok((mask, trace, timings))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedImage {
    pub image_id: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub n_images: usize,
    pub images: Vec<ImageTrace>,
    pub failed: Vec<FailedImage>,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    /// Worker threads; 0 means one per available core.
    pub workers: usize,
    pub evaluate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub n_images: usize,
    pub succeeded: usize,
    pub failed_image_ids: Vec<u64>,
    pub eval: Option<EvalReport>,
}

impl RunSummary {
    pub fn is_partial(&self) -> bool {
        !self.failed_image_ids.is_empty()
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

type ImageResult = Result<(LabelMask, ImageTrace, StageTimings), PipelineError>;

/// Runs every image of `images` (ids from `index`). Per-image failures are
/// collected, not fatal; only I/O on the output directory aborts the run.
pub fn run_dataset(
    index: &DatasetIndex,
    images: &[ImageRecord],
    pipeline: &Pipeline,
    opts: &RunOptions,
) -> Result<RunSummary, PipelineError> {
    let mask_dir = opts.out.join("masks");
    std::fs::create_dir_all(&mask_dir).map_err(io_err(&mask_dir))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| PipelineError::Config(format!("worker pool: {e}")))?;

    let results: Vec<ImageResult> = pool.install(|| {
        images
            .par_iter()
            .map(|img| {
                let (mask, trace, timings) = run_image(img, pipeline)?;
                let path = mask_dir.join(format!("{}.png", img.image_id));
                mask.write_png(&path).map_err(stage_err(img.image_id, Stage::Write))?;
                Ok((mask, trace, timings))
            })
            .collect()
    });

    let mut traces = Vec::new();
    let mut timings = Vec::new();
    let mut failed = Vec::new();
    let mut outputs: Vec<(u64, LabelMask)> = Vec::new();
    for (img, r) in images.iter().zip(results) {
        match r {
            Ok((mask, trace, t)) => {
                traces.push(trace);
                timings.push(t);
                outputs.push((img.image_id, mask));
            }
            Err(e) => {
                log::error!("{e}");
                failed.push(FailedImage {
                    image_id: img.image_id,
                    error: e.to_string(),
                });
            }
        }
    }

    let manifest = RunManifest {
        config_hash: pipeline.config.hash(),
        seed: pipeline.config.seed,
        n_images: images.len(),
        images: traces,
        failed: failed.clone(),
    };
    write_json(&opts.out.join("manifest.json"), &manifest)?;
    write_json(&opts.out.join("timings.json"), &timings)?;

    let eval = if opts.evaluate {
        let gts = outputs
            .iter()
            .map(|(id, _)| index.label_mask(*id))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        let pairs: Vec<(u64, &LabelMask, &LabelMask)> =
            outputs.iter().zip(&gts).map(|((id, p), g)| (*id, *g, p)).collect();
        let report = pool
            .install(|| evaluate(&pairs))
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        write_json(&opts.out.join("eval.json"), &report)?;
        Some(report)
    } else {
        None
    };

    Ok(RunSummary {
        n_images: images.len(),
        succeeded: outputs.len(),
        failed_image_ids: failed.iter().map(|f| f.image_id).collect(),
        eval,
    })
}
