//! Sequential interlaced multiview sampling of a latent texture, and the
//! two-round coarse-to-fine pipeline built on it.

mod aggregate;
mod pipeline;
mod rig;
mod round;

pub use aggregate::{aggregate_view, renoise_visited, AggregationState};
pub use pipeline::{
    refine_init, run_pipeline, MeshSummary, PipelineOutput, RoundRecord, RunManifest, SimsConfig,
};
pub use rig::CameraRig;
pub use round::{sims_round, RoundOutput, RoundParams, SimsObserver, ViewEvent, LATENT_CHANNELS};
