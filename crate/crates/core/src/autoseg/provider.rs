//! Mask providers: anything that turns a rendered frame sequence plus
//! injected references into one binary mask per frame.

use std::path::PathBuf;
use std::sync::Arc;

use nalgebra::Vector3;
use rayon::prelude::*;

use super::job::TrackJob;
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::eval::selection_to_mask;
use crate::image_io;
use crate::raster::{self, RenderOutputs};
use crate::scene::GaussianScene;
use crate::selection::{surface_selection, DepthTolerance, Mask2D, Selection3D};

/// Relative depth tolerance of the geometric provider's visibility tests.
pub const SURFACE_TOLERANCE: f64 = 0.02;

pub trait MaskProvider: Send + Sync {
    fn id(&self) -> &str;

    /// Masks for positions `from..job.frame_count()`. Providers are
    /// sequential: the state at `from` must reflect every injection
    /// scheduled before it.
    fn track(&self, job: &TrackJob, from: usize) -> Result<Vec<Mask2D>>;
}

/// Runs `provider` from the first untracked position. On failure the
/// untracked positions stay empty and partial output is discarded.
pub fn run_provider(job: &mut TrackJob, provider: &dyn MaskProvider) -> Result<()> {
    let Some(from) = job.first_invalid() else {
        return Ok(());
    };
    let fail = |message: String| Error::Provider {
        provider: provider.id().to_string(),
        message,
    };
    let masks = provider.track(job, from).map_err(|e| match e {
        Error::Provider { .. } => e,
        other => fail(other.to_string()),
    })?;
    let expected = job.frame_count() - from;
    if masks.len() != expected {
        return Err(fail(format!(
            "returned {} masks, expected {expected}",
            masks.len()
        )));
    }
    let mut checked = Vec::with_capacity(masks.len());
    for (k, mask) in masks.into_iter().enumerate() {
        let cam = &job.sequence.cameras[from + k];
        if mask.bits.len() != cam.pixel_count() {
            return Err(fail(format!("mask {} has the wrong resolution", from + k)));
        }
        checked.push(Mask2D {
            camera: cam.clone(),
            bits: mask.bits,
            occlusion_free: false,
        });
    }
    for (k, mask) in checked.into_iter().enumerate() {
        job.tracked[from + k] = Some(mask);
    }
    job.provider_id = Some(provider.id().to_string());
    Ok(())
}

/// Deterministic geometric stand-in for a learned video tracker.
///
/// With a pre-segment the provider keeps a per-Gaussian object estimate,
/// seeded by the pre-segment and updated by every injected reference: the
/// visible surface inside the reference mask is added, the visible surface
/// clearly outside it removed. Each frame's mask is the composited
/// silhouette of the estimate, closed with a 3x3 square.
///
/// Without a pre-segment the estimate is a point set lifted from the
/// reference masks at rendered depth; frames show the points that pass a
/// depth test against the frame's own depth, splatted 3x3 and closed.
#[derive(Debug, Clone, Default)]
pub struct GeometricProvider {
    /// Overrides the job's pre-segment (job index space).
    pub presegment: Option<Selection3D>,
}

impl GeometricProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_presegment(presegment: Selection3D) -> Self {
        Self {
            presegment: Some(presegment),
        }
    }
}

impl MaskProvider for GeometricProvider {
    fn id(&self) -> &str {
        "geometric"
    }

    fn track(&self, job: &TrackJob, from: usize) -> Result<Vec<Mask2D>> {
        match self.presegment.as_ref().or(job.presegment.as_ref()) {
            Some(preseg) => track_with_support(job, preseg, from),
            None => track_with_points(job, from),
        }
    }
}

/// Closed silhouette of `preseg` in every frame of `job`, ignoring the
/// injected references.
pub fn geometric_provider(job: &TrackJob, preseg: &Selection3D) -> Result<Vec<Mask2D>> {
    check_presegment(job, preseg)?;
    Ok(job
        .sequence
        .cameras
        .par_iter()
        .map(|cam| silhouette(&job.scene, preseg, cam))
        .collect())
}

fn check_presegment(job: &TrackJob, preseg: &Selection3D) -> Result<()> {
    if preseg.len() != job.scene.len() {
        return Err(Error::argument(
            "pre-segment length does not match the job scene",
        ));
    }
    if preseg.count() == 0 {
        return Err(Error::argument(
            "geometric provider needs a non-empty pre-segment",
        ));
    }
    Ok(())
}

fn reference_scan(scene: &GaussianScene, mask: &Mask2D) -> (RenderOutputs, Mask2D) {
    (raster::render(scene, &mask.camera), mask.dilated(2))
}

fn absorb_support(scene: &GaussianScene, support: &mut Selection3D, reference: &Mask2D) {
    let cam = &reference.camera;
    let (out, near) = reference_scan(scene, reference);
    let tol = DepthTolerance::Relative(SURFACE_TOLERANCE);
    let inside = surface_selection(scene, cam, &out.depth, tol, |x, y| reference.get(x, y));
    let outside = surface_selection(scene, cam, &out.depth, tol, |x, y| !near.get(x, y));
    for i in 0..support.len() {
        if inside.bits[i] {
            support.bits[i] = true;
        } else if outside.bits[i] {
            support.bits[i] = false;
        }
    }
}

fn silhouette(scene: &GaussianScene, support: &Selection3D, cam: &Camera) -> Mask2D {
    selection_to_mask(scene, support, cam).closed()
}

fn track_with_support(job: &TrackJob, preseg: &Selection3D, from: usize) -> Result<Vec<Mask2D>> {
    check_presegment(job, preseg)?;
    let scene = &job.scene;
    let schedule = job.schedule();
    let mut support = preseg.clone();
    let mut states: Vec<Arc<Selection3D>> = Vec::with_capacity(job.frame_count());
    let mut current = Arc::new(support.clone());
    for k in 0..job.frame_count() {
        let mut changed = false;
        for inj in schedule.iter().filter(|i| i.position == k) {
            absorb_support(scene, &mut support, &inj.reference.mask);
            changed = true;
        }
        if changed {
            current = Arc::new(support.clone());
        }
        states.push(current.clone());
    }
    Ok((from..job.frame_count())
        .into_par_iter()
        .map(|k| silhouette(scene, &states[k], &job.sequence.cameras[k]))
        .collect())
}

fn absorb_points(scene: &GaussianScene, points: &mut Vec<Vector3<f64>>, reference: &Mask2D) {
    let cam = &reference.camera;
    let (out, near) = reference_scan(scene, reference);
    points.retain(|p| match visible_pixel(cam, &out.depth, p) {
        Some((x, y)) => near.get(x, y),
        None => true,
    });
    for y in 0..cam.height {
        for x in 0..cam.width {
            let p = (y * cam.width + x) as usize;
            if reference.bits[p] && out.first_hit[p] >= 0 && out.depth[p] > 0.0 {
                points.push(cam.unproject_pixel(x, y, out.depth[p]));
            }
        }
    }
}

/// Pixel of `p` when it is not hidden behind the rendered surface.
fn visible_pixel(cam: &Camera, depth: &[f64], p: &Vector3<f64>) -> Option<(u32, u32)> {
    let pc = cam.to_camera(p);
    if !(pc.z > cam.near && pc.z < cam.far) {
        return None;
    }
    let (u, v) = cam.project_camera_point(&pc);
    let (x, y) = cam.pixel_at(u, v)?;
    let d = depth[(y * cam.width + x) as usize];
    (d > 0.0 && pc.z <= d * (1.0 + SURFACE_TOLERANCE)).then_some((x, y))
}

fn splat_points(scene: &GaussianScene, points: &[Vector3<f64>], cam: &Camera) -> Mask2D {
    let depth = raster::render(scene, cam).depth;
    let mut mask = Mask2D::empty(cam.clone());
    let (w, h) = (cam.width as i64, cam.height as i64);
    for p in points {
        if let Some((x, y)) = visible_pixel(cam, &depth, p) {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx >= 0 && ny >= 0 && nx < w && ny < h {
                        mask.set(nx as u32, ny as u32, true);
                    }
                }
            }
        }
    }
    mask.closed()
}

fn track_with_points(job: &TrackJob, from: usize) -> Result<Vec<Mask2D>> {
    let scene = &job.scene;
    let schedule = job.schedule();
    let mut points = Vec::new();
    let mut states: Vec<Arc<Vec<Vector3<f64>>>> = Vec::with_capacity(job.frame_count());
    let mut current = Arc::new(Vec::new());
    for k in 0..job.frame_count() {
        let mut changed = false;
        for inj in schedule.iter().filter(|i| i.position == k) {
            absorb_points(scene, &mut points, &inj.reference.mask);
            changed = true;
        }
        if changed {
            current = Arc::new(points.clone());
        }
        states.push(current.clone());
    }
    Ok((from..job.frame_count())
        .into_par_iter()
        .map(|k| splat_points(scene, &states[k], &job.sequence.cameras[k]))
        .collect())
}

/// Ground-truth provider for benchmarks: each frame's mask is the
/// occlusion-aware silhouette of a known selection.
#[derive(Debug, Clone)]
pub struct OracleProvider {
    /// Ground truth in source-scene index space.
    pub truth: Selection3D,
}

impl MaskProvider for OracleProvider {
    fn id(&self) -> &str {
        "oracle"
    }

    fn track(&self, job: &TrackJob, from: usize) -> Result<Vec<Mask2D>> {
        let truth = match &job.scene_indices {
            Some(idx) => Selection3D {
                bits: idx.iter().map(|&i| self.truth.bits[i]).collect(),
            },
            None => self.truth.clone(),
        };
        if truth.len() != job.scene.len() {
            return Err(Error::argument("oracle truth does not match the scene"));
        }
        Ok((from..job.frame_count())
            .into_par_iter()
            .map(|k| selection_to_mask(&job.scene, &truth, &job.sequence.cameras[k]))
            .collect())
    }
}

/// Replays masks previously written to disk as `NNN.png`, either directly
/// in `dir` or in `dir/masks`.
#[derive(Debug, Clone)]
pub struct ReplayProvider {
    pub dir: PathBuf,
}

impl MaskProvider for ReplayProvider {
    fn id(&self) -> &str {
        "replay"
    }

    fn track(&self, job: &TrackJob, from: usize) -> Result<Vec<Mask2D>> {
        let base = if self.dir.join("masks").is_dir() {
            self.dir.join("masks")
        } else {
            self.dir.clone()
        };
        (from..job.frame_count())
            .map(|k| {
                image_io::load_mask(
                    base.join(super::jobdir::frame_name(k)),
                    job.sequence.cameras[k].clone(),
                )
            })
            .collect()
    }
}
