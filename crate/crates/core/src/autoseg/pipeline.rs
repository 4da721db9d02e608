//! End-to-end automatic segmentation and its correction loop.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::aggregate::{aggregate_with_progress, AggregationConfig, AggregationResult, ViewLoss};
use super::job::{build_track_job, ReferenceMask, TrackJob};
use super::provider::{run_provider, MaskProvider};
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::scene::GaussianScene;
use crate::selection::{combine_selection3d, frustum_project, Mask2D, SelectMode, Selection3D};
use crate::views::{self, ViewSequence, DEFAULT_VIEW_COUNT};

/// Intersection of the frustum projections of every occlusion-free mask, or
/// `None` when no mask is flagged.
pub fn pre_segment(scene: &GaussianScene, user_masks: &[Mask2D]) -> Option<Selection3D> {
    let mut flagged = user_masks.iter().filter(|m| m.occlusion_free);
    let first = frustum_project(scene, flagged.next()?);
    Some(flagged.fold(first, |acc, m| {
        combine_selection3d(&acc, &frustum_project(scene, m), SelectMode::I).expect("same scene")
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViewSourceConfig {
    Turnaround,
    /// Subsample of these cameras.
    TrainingSubset(Vec<Camera>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutosegConfig {
    pub views: ViewSourceConfig,
    pub m: usize,
    pub presegment: bool,
    pub aggregation: AggregationConfig,
}

impl Default for AutosegConfig {
    fn default() -> Self {
        Self {
            views: ViewSourceConfig::Turnaround,
            m: DEFAULT_VIEW_COUNT,
            presegment: true,
            aggregation: AggregationConfig::default(),
        }
    }
}

/// Progress events of a pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Progress {
    Stage { name: String },
    View(ViewLoss),
}

fn stage(progress: &mut dyn FnMut(&Progress), name: &str) {
    progress(&Progress::Stage {
        name: name.to_string(),
    });
}

/// A finished pipeline run that can take corrections.
#[derive(Debug, Clone)]
pub struct Segmentation {
    pub job: TrackJob,
    /// Result in source-scene index space.
    pub result: AggregationResult,
    /// Pre-segment in source-scene index space.
    pub presegment: Option<Selection3D>,
    pub config: AutosegConfig,
    source_len: usize,
}

impl Segmentation {
    pub fn selection(&self) -> &Selection3D {
        &self.result.selection
    }

    /// Schedules `mask` as an extra reference, re-runs the provider from the
    /// injection point and re-aggregates. Returns the injection id.
    pub fn add_correction(&mut self, mask: Mask2D, provider: &dyn MaskProvider) -> Result<u64> {
        self.add_correction_with_progress(mask, provider, &mut |_| {})
    }

    pub fn add_correction_with_progress(
        &mut self,
        mask: Mask2D,
        provider: &dyn MaskProvider,
        progress: &mut dyn FnMut(&Progress),
    ) -> Result<u64> {
        let reference = ReferenceMask::new(&self.job.scene, mask);
        let (id, _) = self.job.add_correction(reference)?;
        self.rerun(provider, progress)?;
        Ok(id)
    }

    pub fn remove_correction(&mut self, id: u64, provider: &dyn MaskProvider) -> Result<()> {
        self.job.remove_injection(id)?;
        self.rerun(provider, &mut |_| {})
    }

    /// Tracks every invalidated frame and aggregates again.
    pub fn rerun(
        &mut self,
        provider: &dyn MaskProvider,
        progress: &mut dyn FnMut(&Progress),
    ) -> Result<()> {
        let start = Instant::now();
        stage(progress, "track");
        run_provider(&mut self.job, provider)?;
        self.result = aggregate_job(
            &self.job,
            self.source_len,
            &self.config.aggregation,
            progress,
        )?;
        self.result.elapsed = start.elapsed().as_secs_f64();
        Ok(())
    }
}

fn aggregate_job(
    job: &TrackJob,
    source_len: usize,
    config: &AggregationConfig,
    progress: &mut dyn FnMut(&Progress),
) -> Result<AggregationResult> {
    stage(progress, "aggregate");
    let masks = job.tracked_masks()?;
    let references: Vec<ReferenceMask> = job.references().cloned().collect();
    let result = aggregate_with_progress(
        &job.scene,
        &job.sequence.cameras,
        &masks,
        &references,
        None,
        config,
        &mut |v| progress(&Progress::View(*v)),
    )?;
    Ok(match &job.scene_indices {
        Some(idx) => result.scatter(idx, source_len),
        None => result,
    })
}

fn dense_views(
    scene: &GaussianScene,
    first: &Mask2D,
    config: &AutosegConfig,
) -> Result<ViewSequence> {
    match &config.views {
        ViewSourceConfig::Turnaround => views::turnaround_views(scene, first, config.m),
        ViewSourceConfig::TrainingSubset(all) => views::subsample_training_views(all, config.m),
    }
}

pub fn segment_auto(
    scene: &GaussianScene,
    user_masks: Vec<Mask2D>,
    config: &AutosegConfig,
    provider: &dyn MaskProvider,
) -> Result<Segmentation> {
    segment_auto_with_progress(scene, user_masks, config, provider, &mut |_| {})
}

/// Pre-segments (when enabled and a mask is flagged occlusion-free), builds
/// the dense view sequence and track job on the pre-segmented scene, runs
/// the provider and aggregates restricted to the pre-segment.
pub fn segment_auto_with_progress(
    scene: &GaussianScene,
    user_masks: Vec<Mask2D>,
    config: &AutosegConfig,
    provider: &dyn MaskProvider,
    progress: &mut dyn FnMut(&Progress),
) -> Result<Segmentation> {
    let start = Instant::now();
    if user_masks.is_empty() {
        return Err(Error::argument("at least one user mask is required"));
    }
    if let Some(i) = user_masks.iter().position(Mask2D::is_empty) {
        return Err(Error::argument(format!("user mask {i} is empty")));
    }
    stage(progress, "presegment");
    let presegment = if config.presegment {
        pre_segment(scene, &user_masks)
    } else {
        None
    };
    let (job_scene, indices) = match &presegment {
        Some(p) if p.count() == 0 => {
            return Err(Error::DegenerateSelection(
                "pre-segmentation removed every Gaussian; check the occlusion-free masks".into(),
            ))
        }
        Some(p) => {
            let (s, idx) = scene.subset(p)?;
            (Arc::new(s), Some(Arc::new(idx)))
        }
        None => (Arc::new(scene.clone()), None),
    };

    stage(progress, "views");
    let seq = dense_views(&job_scene, &user_masks[0], config)?;
    stage(progress, "render");
    let references = user_masks
        .into_iter()
        .map(|m| ReferenceMask::new(&job_scene, m))
        .collect();
    let mut job = build_track_job(job_scene.clone(), references, seq)?;
    if let Some(idx) = indices {
        job.presegment = Some(Selection3D::all(idx.len()));
        job.scene_indices = Some(idx);
    }

    stage(progress, "track");
    run_provider(&mut job, provider)?;
    let mut result = aggregate_job(&job, scene.len(), &config.aggregation, progress)?;
    result.elapsed = start.elapsed().as_secs_f64();
    Ok(Segmentation {
        job,
        result,
        presegment,
        config: config.clone(),
        source_len: scene.len(),
    })
}
