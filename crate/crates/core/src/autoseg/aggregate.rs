//! Fusion of per-view masks into one scalar per Gaussian.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::job::ReferenceMask;
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::raster;
use crate::scene::GaussianScene;
use crate::selection::{Mask2D, Selection3D};

/// Optimizer settings of the single aggregation pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AggregationConfig {
    pub learning_rate: f64,
    pub init: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            init: 0.5,
            beta1: 0.9,
            beta2: 0.999,
            // Large enough that Gaussians with only a sliver of weight in a
            // view are not moved as far as fully visible ones.
            epsilon: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewKind {
    Tracked,
    User,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewLoss {
    /// Position in the optimisation loop.
    pub step: usize,
    pub kind: ViewKind,
    /// Index within its kind.
    pub index: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregationResult {
    /// Optimized feature per source Gaussian; 0 outside the restriction.
    pub m: Vec<f64>,
    pub selection: Selection3D,
    pub loss_trace: Vec<ViewLoss>,
    pub elapsed: f64,
}

impl AggregationResult {
    /// Maps a result computed on a sub-scene back to `n` source Gaussians.
    pub fn scatter(self, indices: &[usize], n: usize) -> AggregationResult {
        let mut m = vec![0.0; n];
        for (k, &i) in indices.iter().enumerate() {
            m[i] = self.m[k];
        }
        AggregationResult {
            selection: threshold(&m),
            m,
            loss_trace: self.loss_trace,
            elapsed: self.elapsed,
        }
    }
}

pub fn threshold(m: &[f64]) -> Selection3D {
    Selection3D {
        bits: m.iter().map(|&v| v > 0.5).collect(),
    }
}

struct Adam {
    cfg: AggregationConfig,
    m1: Vec<f64>,
    m2: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(cfg: AggregationConfig, n: usize) -> Self {
        Self {
            cfg,
            m1: vec![0.0; n],
            m2: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, x: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t);
        let bc2 = 1.0 - c.beta2.powi(self.t);
        for i in 0..x.len() {
            let g = grad[i];
            self.m1[i] = c.beta1 * self.m1[i] + (1.0 - c.beta1) * g;
            self.m2[i] = c.beta2 * self.m2[i] + (1.0 - c.beta2) * g * g;
            let mh = self.m1[i] / bc1;
            let vh = self.m2[i] / bc2;
            x[i] -= c.learning_rate * mh / (vh.sqrt() + c.epsilon);
        }
    }
}

pub fn aggregate(
    scene: &GaussianScene,
    views: &[Camera],
    masks: &[Mask2D],
    user_masks: &[ReferenceMask],
    restrict: Option<&Selection3D>,
    config: &AggregationConfig,
) -> Result<AggregationResult> {
    aggregate_with_progress(
        scene,
        views,
        masks,
        user_masks,
        restrict,
        config,
        &mut |_| {},
    )
}

/// One pass over the tracked views followed by the user views, each taking
/// one optimizer step on the per-Gaussian feature towards the view's mask.
/// `progress` sees every view's loss as it is computed.
pub fn aggregate_with_progress(
    scene: &GaussianScene,
    views: &[Camera],
    masks: &[Mask2D],
    user_masks: &[ReferenceMask],
    restrict: Option<&Selection3D>,
    config: &AggregationConfig,
    progress: &mut dyn FnMut(&ViewLoss),
) -> Result<AggregationResult> {
    let start = Instant::now();
    if views.len() != masks.len() {
        return Err(Error::argument(format!(
            "{} views but {} masks",
            views.len(),
            masks.len()
        )));
    }
    if views.is_empty() && user_masks.is_empty() {
        return Err(Error::argument("aggregation needs at least one view"));
    }
    let mut targets: Vec<(ViewKind, usize, &Camera, &Mask2D)> =
        Vec::with_capacity(views.len() + user_masks.len());
    for (k, (cam, mask)) in views.iter().zip(masks).enumerate() {
        targets.push((ViewKind::Tracked, k, cam, mask));
    }
    for (k, r) in user_masks.iter().enumerate() {
        targets.push((ViewKind::User, k, &r.mask.camera, &r.mask));
    }
    for (kind, k, cam, mask) in &targets {
        if mask.bits.len() != cam.pixel_count() {
            return Err(Error::argument(format!(
                "{kind:?} mask {k} does not match its camera"
            )));
        }
    }

    let sub;
    let (work, indices) = match restrict {
        Some(r) => {
            if r.len() != scene.len() {
                return Err(Error::argument(
                    "restriction length does not match the scene",
                ));
            }
            let (s, idx) = scene.subset(r)?;
            sub = s;
            (&sub, Some(idx))
        }
        None => (scene, None),
    };

    let mut m = vec![config.init; work.len()];
    let mut adam = Adam::new(*config, work.len());
    let mut loss_trace = Vec::with_capacity(targets.len());
    for (step, (kind, index, cam, mask)) in targets.into_iter().enumerate() {
        let weights = raster::render(work, cam).weights;
        let rendered = weights.features(&m, 1)?;
        let residual: Vec<f64> = rendered
            .iter()
            .zip(&mask.bits)
            .map(|(&f, &b)| f - if b { 1.0 } else { 0.0 })
            .collect();
        let loss = 0.5 * residual.iter().map(|r| r * r).sum::<f64>();
        let grad = weights.features_grad(&residual, 1)?;
        adam.step(&mut m, &grad);
        let entry = ViewLoss {
            step,
            kind,
            index,
            loss,
        };
        progress(&entry);
        loss_trace.push(entry);
    }

    let result = AggregationResult {
        selection: threshold(&m),
        m,
        loss_trace,
        elapsed: 0.0,
    };
    let mut result = match indices {
        Some(idx) => result.scatter(&idx, scene.len()),
        None => result,
    };
    result.elapsed = start.elapsed().as_secs_f64();
    Ok(result)
}
