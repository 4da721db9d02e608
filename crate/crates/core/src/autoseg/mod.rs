//! Tracked multi-view segmentation.
//!
//! A user mask is turned into a dense sequence of views, a mask provider
//! produces one mask per view with the user masks injected as references,
//! and the masks are fused into a per-Gaussian selection.

pub mod aggregate;
pub mod job;
pub mod jobdir;
pub mod pipeline;
pub mod provider;

pub use aggregate::{
    aggregate, aggregate_with_progress, AggregationConfig, AggregationResult, ViewKind, ViewLoss,
};
pub use job::{build_track_job, Injection, ReferenceMask, TrackJob};
pub use jobdir::{read_job_masks, write_job_dir, JobDirProvider, Manifest};
pub use pipeline::{
    pre_segment, segment_auto, segment_auto_with_progress, AutosegConfig, Progress, Segmentation,
    ViewSourceConfig,
};
pub use provider::{
    geometric_provider, run_provider, GeometricProvider, MaskProvider, OracleProvider,
    ReplayProvider,
};
