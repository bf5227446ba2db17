pub mod augment;
pub mod backends;
pub mod dataset;
pub mod fusion;
pub mod mask;
pub mod metrics;
pub mod pipeline;
pub mod refinement;
pub mod rng;
pub mod synth;
pub mod taxonomy;
