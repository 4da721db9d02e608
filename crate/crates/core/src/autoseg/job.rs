use std::sync::Arc;

use image::RgbaImage;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image_io::rgba_image;
use crate::raster;
use crate::scene::GaussianScene;
use crate::selection::{Mask2D, Selection3D};
use crate::views::{self, ViewSequence};

/// A user mask together with the render of its view, as handed to a mask
/// provider.
#[derive(Debug, Clone)]
pub struct ReferenceMask {
    pub mask: Mask2D,
    pub render: Arc<RgbaImage>,
}

impl ReferenceMask {
    pub fn new(scene: &GaussianScene, mask: Mask2D) -> Self {
        let render = Arc::new(rgba_image(&raster::render(scene, &mask.camera)));
        Self { mask, render }
    }
}

/// A reference injected immediately before the provider predicts
/// `position`.
#[derive(Debug, Clone)]
pub struct Injection {
    pub id: u64,
    pub position: usize,
    pub reference: ReferenceMask,
}

/// The dense tracking sequence with its frames, injection schedule and the
/// masks produced so far.
#[derive(Debug, Clone)]
pub struct TrackJob {
    /// Scene the frames are rendered from. When pre-segmentation is active
    /// this is the pre-segmented sub-scene.
    pub scene: Arc<GaussianScene>,
    /// Source-scene index of every Gaussian in [`TrackJob::scene`], when it
    /// is a sub-scene.
    pub scene_indices: Option<Arc<Vec<usize>>>,
    /// Known object support in job index space, used by the geometric
    /// provider.
    pub presegment: Option<Selection3D>,
    /// Shifted sequence: position 0 is the view most similar to the first
    /// user mask.
    pub sequence: ViewSequence,
    pub frames: Vec<Arc<RgbaImage>>,
    /// In insertion order; see [`TrackJob::schedule`] for provider order.
    pub injections: Vec<Injection>,
    pub tracked: Vec<Option<Mask2D>>,
    pub provider_id: Option<String>,
    visibility: Vec<Vec<bool>>,
    next_id: u64,
}

impl TrackJob {
    pub fn frame_count(&self) -> usize {
        self.sequence.len()
    }

    /// Injections sorted by position; ties keep insertion order.
    pub fn schedule(&self) -> Vec<&Injection> {
        let mut s: Vec<&Injection> = self.injections.iter().collect();
        s.sort_by_key(|inj| (inj.position, inj.id));
        s
    }

    pub fn injections_at(&self, position: usize) -> impl Iterator<Item = &Injection> {
        self.schedule()
            .into_iter()
            .filter(move |i| i.position == position)
    }

    /// Earliest position without a tracked mask.
    pub fn first_invalid(&self) -> Option<usize> {
        self.tracked.iter().position(Option::is_none)
    }

    pub fn is_complete(&self) -> bool {
        self.first_invalid().is_none()
    }

    pub fn tracked_masks(&self) -> Result<Vec<Mask2D>> {
        self.tracked
            .iter()
            .enumerate()
            .map(|(k, m)| {
                m.clone()
                    .ok_or_else(|| Error::argument(format!("frame {k} has not been tracked")))
            })
            .collect()
    }

    /// User references in insertion order.
    pub fn references(&self) -> impl Iterator<Item = &ReferenceMask> {
        self.injections.iter().map(|i| &i.reference)
    }

    /// Position in the shifted sequence most similar to `reference`'s view.
    pub fn best_position(&self, reference: &Mask2D) -> usize {
        let viz = raster::visibility(&self.scene, &reference.camera);
        views::best_match(&viz, &self.visibility)
    }

    fn push_injection(&mut self, reference: ReferenceMask) -> (u64, usize) {
        let position = self.best_position(&reference.mask);
        let id = self.next_id;
        self.next_id += 1;
        self.injections.push(Injection {
            id,
            position,
            reference,
        });
        (id, position)
    }

    /// Schedules an extra reference before its most similar view and drops
    /// tracked masks from that position on. Returns the injection id and its
    /// position.
    pub fn add_correction(&mut self, reference: ReferenceMask) -> Result<(u64, usize)> {
        if !reference
            .mask
            .camera
            .same_resolution(&self.sequence.cameras[0])
        {
            return Err(Error::argument(
                "correction resolution differs from the tracking views",
            ));
        }
        let (id, position) = self.push_injection(reference);
        self.invalidate_from(position);
        Ok((id, position))
    }

    /// Removes an injection and drops tracked masks from its position on.
    pub fn remove_injection(&mut self, id: u64) -> Result<()> {
        let k = self
            .injections
            .iter()
            .position(|i| i.id == id)
            .ok_or_else(|| Error::argument(format!("no injection with id {id}")))?;
        if self.injections.len() == 1 {
            return Err(Error::argument("a job keeps at least one reference"));
        }
        let inj = self.injections.remove(k);
        self.invalidate_from(inj.position);
        Ok(())
    }

    pub fn invalidate_from(&mut self, position: usize) {
        for t in &mut self.tracked[position..] {
            *t = None;
        }
    }
}

/// Shifts `seq` to start at the view most similar to the first user mask,
/// renders every frame and schedules one injection per user mask.
pub fn build_track_job(
    scene: Arc<GaussianScene>,
    user_masks: Vec<ReferenceMask>,
    seq: ViewSequence,
) -> Result<TrackJob> {
    if user_masks.is_empty() {
        return Err(Error::argument("at least one user mask is required"));
    }
    if seq.is_empty() {
        return Err(Error::argument("empty view sequence"));
    }
    if let Some(r) = user_masks
        .iter()
        .find(|r| !r.mask.camera.same_resolution(&seq.cameras[0]))
    {
        return Err(Error::argument(format!(
            "user mask is {}x{} but tracking views are {}x{}",
            r.mask.width(),
            r.mask.height(),
            seq.cameras[0].width,
            seq.cameras[0].height
        )));
    }
    let mut visibility = views::visibility_sets(&scene, &seq.cameras);
    let first = raster::visibility(&scene, &user_masks[0].mask.camera);
    let start = views::best_match(&first, &visibility);
    let sequence = views::shift_sequence(&seq, start)?;
    visibility.rotate_left(start);

    let frames: Vec<Arc<RgbaImage>> = sequence
        .cameras
        .par_iter()
        .map(|c| Arc::new(rgba_image(&raster::render(&scene, c))))
        .collect();
    let m = sequence.len();
    let mut job = TrackJob {
        scene,
        scene_indices: None,
        presegment: None,
        sequence,
        frames,
        injections: Vec::new(),
        tracked: vec![None; m],
        provider_id: None,
        visibility,
        next_id: 0,
    };
    for r in user_masks {
        job.push_injection(r);
    }
    Ok(job)
}
