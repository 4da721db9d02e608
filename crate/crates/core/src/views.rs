//! Dense view generation and visibility-based view matching.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::raster;
use crate::scene::GaussianScene;
use crate::selection::Mask2D;

pub const DEFAULT_VIEW_COUNT: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewSource {
    TrainingSubset,
    Turnaround,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewSequence {
    pub cameras: Vec<Camera>,
    pub source: ViewSource,
    /// Look-at point of a turnaround.
    pub center: Option<Vector3<f64>>,
}

impl ViewSequence {
    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }
}

/// Lifts the first hits under `mask` to world points at the rendered depth.
pub fn lift_first_hits(scene: &GaussianScene, mask: &Mask2D) -> Vec<Vector3<f64>> {
    let cam = &mask.camera;
    let out = raster::render(scene, cam);
    let mut points = Vec::new();
    for y in 0..cam.height {
        for x in 0..cam.width {
            let p = (y * cam.width + x) as usize;
            if mask.bits[p] && out.first_hit[p] >= 0 && out.depth[p] > 0.0 {
                points.push(cam.unproject_pixel(x, y, out.depth[p]));
            }
        }
    }
    points
}

/// A full circle of `m` cameras around the centroid of the lifted mask,
/// at the user camera's distance, in the plane through the centroid
/// orthogonal to the user camera's up axis. View 0 sits at the user
/// camera's azimuth.
pub fn turnaround_views(
    scene: &GaussianScene,
    user_mask: &Mask2D,
    m: usize,
) -> Result<ViewSequence> {
    if m < 3 {
        return Err(Error::argument("a turnaround needs at least 3 views"));
    }
    if user_mask.is_empty() {
        return Err(Error::argument("user mask is empty"));
    }
    let points = lift_first_hits(scene, user_mask);
    if points.is_empty() {
        return Err(Error::NoFirstHits);
    }
    let center = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    let user = &user_mask.camera;
    let up = user.up();
    let offset = user.position() - center;
    let radius = offset.norm();
    if radius <= 0.0 {
        return Err(Error::argument("user camera sits on the lifted centroid"));
    }
    let in_plane = |v: Vector3<f64>| v - up * v.dot(&up);
    let mut e1 = in_plane(offset);
    if e1.norm() < 1e-9 * radius {
        // Looking straight along the up axis: fall back to the view direction.
        e1 = in_plane(-user.forward());
    }
    if e1.norm() < 1e-9 {
        e1 = in_plane(user.rotation().row(0).transpose());
    }
    let e1 = e1.normalize();
    let e2 = up.cross(&e1);

    let cameras = (0..m)
        .map(|k| {
            let theta = std::f64::consts::TAU * k as f64 / m as f64;
            let eye = center + radius * (theta.cos() * e1 + theta.sin() * e2);
            user.reposed(eye, center, up)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ViewSequence {
        cameras,
        source: ViewSource::Turnaround,
        center: Some(center),
    })
}

/// Uniform-stride subsample preserving order. Asking for more views than
/// available returns all of them.
pub fn subsample_training_views(all: &[Camera], m: usize) -> Result<ViewSequence> {
    if all.is_empty() || m == 0 {
        return Err(Error::argument("no training views to sample"));
    }
    if all.iter().any(|c| !c.same_resolution(&all[0])) {
        return Err(Error::argument("training views must share one resolution"));
    }
    let cameras = if m >= all.len() {
        if m > all.len() {
            log::warn!(
                "requested {m} training views but only {} exist; using all",
                all.len()
            );
        }
        all.to_vec()
    } else {
        (0..m).map(|k| all[k * all.len() / m].clone()).collect()
    };
    Ok(ViewSequence {
        cameras,
        source: ViewSource::TrainingSubset,
        center: None,
    })
}

/// Jaccard index of two visibility sets; 0 when both are empty.
pub fn jaccard(a: &[bool], b: &[bool]) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Per-camera visibility masks, computed in parallel.
pub fn visibility_sets(scene: &GaussianScene, cameras: &[Camera]) -> Vec<Vec<bool>> {
    cameras
        .par_iter()
        .map(|c| raster::visibility(scene, c))
        .collect()
}

/// Index of the candidate whose visibility set is most similar (highest
/// Jaccard index) to `annotated`; ties go to the lowest index.
pub fn best_match(annotated: &[bool], candidates: &[Vec<bool>]) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (j, viz) in candidates.iter().enumerate() {
        let score = jaccard(annotated, viz);
        if score > best.1 {
            best = (j, score);
        }
    }
    best.0
}

pub fn best_matching_view(
    scene: &GaussianScene,
    annotated: &Camera,
    candidates: &ViewSequence,
) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::argument("no candidate views"));
    }
    let viz = raster::visibility(scene, annotated);
    Ok(best_match(
        &viz,
        &visibility_sets(scene, &candidates.cameras),
    ))
}

/// Cyclic rotation so that `start` comes first.
pub fn shift_sequence(seq: &ViewSequence, start: usize) -> Result<ViewSequence> {
    if start >= seq.len() {
        return Err(Error::argument(format!(
            "shift {start} out of range for {} views",
            seq.len()
        )));
    }
    let mut cameras = seq.cameras.clone();
    cameras.rotate_left(start);
    Ok(ViewSequence {
        cameras,
        source: seq.source,
        center: seq.center,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cams(n: usize) -> Vec<Camera> {
        (0..n)
            .map(|k| {
                let a = k as f64;
                Camera::look_at(
                    Vector3::new(a.cos() * 3.0, a.sin() * 3.0, 0.0),
                    Vector3::zeros(),
                    Vector3::z(),
                    1.0,
                    8,
                    8,
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn jaccard_set_arithmetic() {
        let a = [false, true, true, true, false];
        let b = [false, false, true, true, true];
        assert_eq!(jaccard(&a, &b), 0.5);
        assert_eq!(jaccard(&a, &a), 1.0);
        assert_eq!(jaccard(&[false; 3], &[false; 3]), 0.0);
        assert_eq!(jaccard(&a, &b), jaccard(&b, &a));
    }

    #[test]
    fn shifting() {
        let seq = ViewSequence {
            cameras: cams(5),
            source: ViewSource::Turnaround,
            center: None,
        };
        assert_eq!(shift_sequence(&seq, 0).unwrap(), seq);
        let s3 = shift_sequence(&seq, 3).unwrap();
        let order: Vec<usize> = s3
            .cameras
            .iter()
            .map(|c| seq.cameras.iter().position(|d| d == c).unwrap())
            .collect();
        assert_eq!(order, vec![3, 4, 0, 1, 2]);
        let twice = shift_sequence(&shift_sequence(&seq, 2).unwrap(), 4).unwrap();
        assert_eq!(twice, shift_sequence(&seq, 1).unwrap());
        assert!(shift_sequence(&seq, 5).is_err());
    }

    #[test]
    fn subsampling() {
        let all = cams(100);
        assert_eq!(subsample_training_views(&all, 100).unwrap().cameras, all);
        assert_eq!(
            subsample_training_views(&all, 1).unwrap().cameras,
            vec![all[0].clone()]
        );
        let half = subsample_training_views(&all, 50).unwrap();
        assert!(half
            .cameras
            .iter()
            .enumerate()
            .all(|(k, c)| *c == all[2 * k]));
        assert_eq!(subsample_training_views(&all[..3], 10).unwrap().len(), 3);
    }
}
