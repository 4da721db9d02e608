//! CPU splat rasterizer.
//!
//! All kernels share one forward pass: Gaussians are projected with the EWA
//! approximation, sorted globally by camera depth and alpha-composited front
//! to back per pixel. The pass records every non-negligible compositing
//! weight, and the colour, depth, feature, gradient, visibility and first-hit
//! outputs are all derived from those weights.
//!
//! Work is split over 16x16 pixel tiles. Each pixel composites in the global
//! depth order, so results do not depend on the thread schedule.

use nalgebra::{Matrix2, Matrix2x3, Vector3};
use rayon::prelude::*;

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::scene::GaussianScene;
use crate::sh;

/// Isotropic screen-space dilation added to every projected covariance (px^2).
pub const COV2D_DILATION: f64 = 0.3;
/// Upper bound on the per-pixel opacity of a single Gaussian.
pub const ALPHA_MAX: f64 = 0.99;
/// Contributions with per-pixel opacity below this are skipped.
pub const ALPHA_MIN: f64 = 1.0 / 255.0;
/// Accumulated alpha at which the current Gaussian counts as the first hit.
pub const FIRST_HIT_ALPHA: f64 = 0.5;
/// Default visibility threshold on a Gaussian's maximum pixel weight.
pub const VIZ_THRESHOLD: f64 = 1.0 / 255.0;
/// Compositing stops once transmittance falls below this.
pub const TRANSMITTANCE_CUTOFF: f64 = 1e-6;

const TILE: u32 = 16;

/// A Gaussian projected into one camera.
#[derive(Debug, Clone)]
pub struct Splat {
    pub index: u32,
    /// Projected mean in continuous pixel coordinates.
    pub center: [f64; 2],
    /// Inverse 2D covariance as (a, b, c) for `a dx^2 + 2 b dx dy + c dy^2`.
    pub conic: [f64; 3],
    pub opacity: f64,
    /// Camera-space z of the mean.
    pub depth: f64,
    pub color: [f64; 3],
    /// Pixel bounds `[x0, x1) x [y0, y1)` outside which the splat is skipped.
    bounds: [u32; 4],
}

/// Projects, culls and depth-sorts every Gaussian of `scene` for `cam`.
pub fn project_splats(scene: &GaussianScene, cam: &Camera) -> Vec<Splat> {
    let rot = cam.rotation();
    let trans = cam.translation();
    let eye = cam.position();
    let mut splats: Vec<Splat> = (0..scene.len())
        .into_par_iter()
        .filter_map(|i| {
            let mean = scene.mean(i);
            let pc = rot * mean + trans;
            let z = pc.z;
            if !(z >= cam.near && z <= cam.far) {
                return None;
            }
            let opacity = scene.opacity(i);
            if opacity < ALPHA_MIN {
                return None;
            }
            let (u, v) = cam.project_camera_point(&pc);
            let jac = Matrix2x3::new(
                cam.fx / z,
                0.0,
                -cam.fx * pc.x / (z * z),
                0.0,
                cam.fy / z,
                -cam.fy * pc.y / (z * z),
            );
            let t = jac * rot;
            let cov =
                t * scene.covariance(i) * t.transpose() + Matrix2::identity() * COV2D_DILATION;
            let det = cov[(0, 0)] * cov[(1, 1)] - cov[(0, 1)] * cov[(1, 0)];
            if det.is_nan() || det <= 0.0 {
                return None;
            }
            let conic = [cov[(1, 1)] / det, -cov[(0, 1)] / det, cov[(0, 0)] / det];

            // Beyond Euclidean distance r the Mahalanobis term alone pushes
            // the opacity under ALPHA_MIN, so the box is conservative.
            let mid = 0.5 * (cov[(0, 0)] + cov[(1, 1)]);
            let lambda_max = mid + (mid * mid - det).max(0.0).sqrt();
            let r = (2.0 * lambda_max * (255.0 * opacity).ln()).max(0.0).sqrt() + 1.0;
            let clamp_x = |x: f64| x.clamp(0.0, cam.width as f64) as u32;
            let clamp_y = |y: f64| y.clamp(0.0, cam.height as f64) as u32;
            let bounds = [
                clamp_x((u - r - 0.5).floor()),
                clamp_y((v - r - 0.5).floor()),
                clamp_x((u + r - 0.5).ceil() + 1.0),
                clamp_y((v + r - 0.5).ceil() + 1.0),
            ];
            if bounds[0] >= bounds[2] || bounds[1] >= bounds[3] {
                return None;
            }

            let dir = mean - eye;
            let dir = if dir.norm() > 0.0 {
                dir.normalize()
            } else {
                Vector3::z()
            };
            let color = sh::eval_color(scene.sh_of(i), scene.sh_coeffs, &dir);
            Some(Splat {
                index: i as u32,
                center: [u, v],
                conic,
                opacity,
                depth: z,
                color,
                bounds,
            })
        })
        .collect();
    splats.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));
    splats
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contribution {
    pub index: u32,
    pub weight: f64,
}

/// Per-pixel compositing weights in compressed row form.
#[derive(Debug, Clone)]
pub struct Compositing {
    pub width: u32,
    pub height: u32,
    /// Number of Gaussians in the scene the weights refer to.
    pub gaussian_count: usize,
    offsets: Vec<usize>,
    entries: Vec<Contribution>,
}

impl Compositing {
    /// Contributions to pixel `p` (row-major index) in compositing order.
    pub fn pixel(&self, p: usize) -> &[Contribution] {
        &self.entries[self.offsets[p]..self.offsets[p + 1]]
    }

    pub fn pixel_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn total_entries(&self) -> usize {
        self.entries.len()
    }

    /// Alpha-composited feature image, `dim` values per pixel.
    pub fn features(&self, features: &[f64], dim: usize) -> Result<Vec<f64>> {
        check_features(features, dim, self.gaussian_count)?;
        let mut out = vec![0.0; self.pixel_count() * dim];
        out.par_chunks_mut(dim.max(1))
            .enumerate()
            .for_each(|(p, px)| {
                for c in self.pixel(p) {
                    let f = &features[c.index as usize * dim..(c.index as usize + 1) * dim];
                    for (o, &v) in px.iter_mut().zip(f) {
                        *o += c.weight * v;
                    }
                }
            });
        Ok(out)
    }

    /// Gradient of `0.5 * |features(F) - target|^2` with respect to `F`,
    /// given `residual = features(F) - target`.
    pub fn features_grad(&self, residual: &[f64], dim: usize) -> Result<Vec<f64>> {
        if residual.len() != self.pixel_count() * dim {
            return Err(Error::argument(format!(
                "residual has {} values, expected {}",
                residual.len(),
                self.pixel_count() * dim
            )));
        }
        // Transpose to per-Gaussian lists so each gradient sums in a fixed
        // pixel order regardless of scheduling.
        let n = self.gaussian_count;
        let mut counts = vec![0usize; n + 1];
        for e in &self.entries {
            counts[e.index as usize + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut cursor = counts.clone();
        let mut by_gaussian = vec![(0u32, 0.0f64); self.entries.len()];
        for p in 0..self.pixel_count() {
            for c in self.pixel(p) {
                let slot = &mut cursor[c.index as usize];
                by_gaussian[*slot] = (p as u32, c.weight);
                *slot += 1;
            }
        }
        let mut grad = vec![0.0; n * dim];
        grad.par_chunks_mut(dim.max(1))
            .enumerate()
            .for_each(|(i, g)| {
                for &(p, w) in &by_gaussian[counts[i]..counts[i + 1]] {
                    let r = &residual[p as usize * dim..(p as usize + 1) * dim];
                    for (gv, &rv) in g.iter_mut().zip(r) {
                        *gv += w * rv;
                    }
                }
            });
        Ok(grad)
    }

    /// Largest weight each Gaussian reaches over all pixels.
    pub fn max_weights(&self) -> Vec<f64> {
        let mut out = vec![0.0f64; self.gaussian_count];
        for e in &self.entries {
            let slot = &mut out[e.index as usize];
            *slot = slot.max(e.weight);
        }
        out
    }
}

fn check_features(features: &[f64], dim: usize, n: usize) -> Result<()> {
    if dim == 0 || features.len() != n * dim {
        return Err(Error::argument(format!(
            "feature matrix has {} values, expected {} Gaussians x {} dims",
            features.len(),
            n,
            dim
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RenderOutputs {
    pub width: u32,
    pub height: u32,
    /// Premultiplied RGBA per pixel; alpha is the weight sum.
    pub rgba: Vec<[f64; 4]>,
    /// Weight-normalized camera z, 0 where nothing was rendered.
    pub depth: Vec<f64>,
    /// Index of the first-hit Gaussian, -1 where there is none.
    pub first_hit: Vec<i64>,
    pub weights: Compositing,
}

impl RenderOutputs {
    pub fn alpha(&self, p: usize) -> f64 {
        self.rgba[p][3]
    }
}

struct TileOutput {
    pixels: Vec<usize>,
    rgba: Vec<[f64; 4]>,
    depth: Vec<f64>,
    first_hit: Vec<i64>,
    counts: Vec<usize>,
    entries: Vec<Contribution>,
}

/// Forward pass producing colour, depth, first hits and compositing weights.
pub fn render(scene: &GaussianScene, cam: &Camera) -> RenderOutputs {
    let splats = project_splats(scene, cam);
    composite(&splats, scene.len(), cam)
}

fn composite(splats: &[Splat], gaussian_count: usize, cam: &Camera) -> RenderOutputs {
    let (w, h) = (cam.width, cam.height);
    let tiles_x = w.div_ceil(TILE);
    let tiles_y = h.div_ceil(TILE);
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); (tiles_x * tiles_y) as usize];
    for (rank, s) in splats.iter().enumerate() {
        let [x0, y0, x1, y1] = s.bounds;
        for ty in y0 / TILE..=(y1 - 1) / TILE {
            for tx in x0 / TILE..=(x1 - 1) / TILE {
                bins[(ty * tiles_x + tx) as usize].push(rank as u32);
            }
        }
    }

    let tiles: Vec<TileOutput> = bins
        .par_iter()
        .enumerate()
        .map(|(t, bin)| {
            let tx = t as u32 % tiles_x;
            let ty = t as u32 / tiles_x;
            let mut out = TileOutput {
                pixels: Vec::new(),
                rgba: Vec::new(),
                depth: Vec::new(),
                first_hit: Vec::new(),
                counts: Vec::new(),
                entries: Vec::new(),
            };
            for y in ty * TILE..((ty + 1) * TILE).min(h) {
                for x in tx * TILE..((tx + 1) * TILE).min(w) {
                    let before = out.entries.len();
                    let px = composite_pixel(splats, bin, x, y, &mut out.entries);
                    out.pixels.push((y * w + x) as usize);
                    out.rgba.push(px.rgba);
                    out.depth.push(px.depth);
                    out.first_hit.push(px.first_hit);
                    out.counts.push(out.entries.len() - before);
                }
            }
            out
        })
        .collect();

    let npix = (w * h) as usize;
    let mut rgba = vec![[0.0; 4]; npix];
    let mut depth = vec![0.0; npix];
    let mut first_hit = vec![-1; npix];
    let mut counts = vec![0usize; npix];
    for tile in &tiles {
        for (k, &p) in tile.pixels.iter().enumerate() {
            rgba[p] = tile.rgba[k];
            depth[p] = tile.depth[k];
            first_hit[p] = tile.first_hit[k];
            counts[p] = tile.counts[k];
        }
    }
    let mut offsets = Vec::with_capacity(npix + 1);
    offsets.push(0);
    for c in &counts {
        offsets.push(offsets.last().unwrap() + c);
    }
    let mut entries = vec![
        Contribution {
            index: 0,
            weight: 0.0
        };
        *offsets.last().unwrap()
    ];
    for tile in &tiles {
        let mut src = 0;
        for (k, &p) in tile.pixels.iter().enumerate() {
            let len = tile.counts[k];
            entries[offsets[p]..offsets[p] + len].copy_from_slice(&tile.entries[src..src + len]);
            src += len;
        }
    }

    RenderOutputs {
        width: w,
        height: h,
        rgba,
        depth,
        first_hit,
        weights: Compositing {
            width: w,
            height: h,
            gaussian_count,
            offsets,
            entries,
        },
    }
}

struct PixelOut {
    rgba: [f64; 4],
    depth: f64,
    first_hit: i64,
}

fn composite_pixel(
    splats: &[Splat],
    bin: &[u32],
    x: u32,
    y: u32,
    entries: &mut Vec<Contribution>,
) -> PixelOut {
    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
    let mut transmittance = 1.0;
    let mut acc = 0.0;
    let mut rgb = [0.0; 3];
    let mut zsum = 0.0;
    let mut first_hit = -1i64;
    let mut best = (-1i64, 0.0f64);
    for &rank in bin {
        let s = &splats[rank as usize];
        if x < s.bounds[0] || x >= s.bounds[2] || y < s.bounds[1] || y >= s.bounds[3] {
            continue;
        }
        let dx = px - s.center[0];
        let dy = py - s.center[1];
        let power = s.conic[0] * dx * dx + 2.0 * s.conic[1] * dx * dy + s.conic[2] * dy * dy;
        let alpha = (s.opacity * (-0.5 * power).exp()).min(ALPHA_MAX);
        if alpha < ALPHA_MIN {
            continue;
        }
        let weight = alpha * transmittance;
        entries.push(Contribution {
            index: s.index,
            weight,
        });
        for (o, c) in rgb.iter_mut().zip(s.color) {
            *o += weight * c;
        }
        zsum += weight * s.depth;
        acc += weight;
        if first_hit < 0 && acc > FIRST_HIT_ALPHA {
            first_hit = s.index as i64;
        }
        if weight > best.1 {
            best = (s.index as i64, weight);
        }
        transmittance *= 1.0 - alpha;
        if transmittance < TRANSMITTANCE_CUTOFF {
            break;
        }
    }
    if first_hit < 0 {
        first_hit = best.0;
    }
    PixelOut {
        rgba: [rgb[0], rgb[1], rgb[2], acc],
        depth: if acc > 0.0 { zsum / acc } else { 0.0 },
        first_hit,
    }
}

/// Feature image `sum_i w_i F_i`, `dim` channels per pixel, row-major.
pub fn render_features(
    scene: &GaussianScene,
    cam: &Camera,
    features: &[f64],
    dim: usize,
) -> Result<Vec<f64>> {
    check_features(features, dim, scene.len())?;
    render(scene, cam).weights.features(features, dim)
}

/// Gradient of `0.5 * |render_features(F) - target|^2` with respect to `F`
/// where `residual = render_features(F) - target`. Geometry, opacity and
/// colour are held fixed.
pub fn render_features_grad(
    scene: &GaussianScene,
    cam: &Camera,
    features: &[f64],
    dim: usize,
    residual: &[f64],
) -> Result<Vec<f64>> {
    check_features(features, dim, scene.len())?;
    render(scene, cam).weights.features_grad(residual, dim)
}

/// Gaussians whose maximum pixel weight reaches [`VIZ_THRESHOLD`].
pub fn visibility(scene: &GaussianScene, cam: &Camera) -> Vec<bool> {
    visibility_with_threshold(scene, cam, VIZ_THRESHOLD)
}

pub fn visibility_with_threshold(scene: &GaussianScene, cam: &Camera, threshold: f64) -> Vec<bool> {
    render(scene, cam)
        .weights
        .max_weights()
        .into_iter()
        .map(|w| w >= threshold)
        .collect()
}
