//! 2D masks, per-Gaussian selections, the N/A/S/I selection modes, manual
//! mask tools and the frustum and depth projections from 2D to 3D.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::raster;
use crate::scene::GaussianScene;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum SelectMode {
    /// Replace.
    #[default]
    #[serde(alias = "new", alias = "replace")]
    N,
    /// Union.
    #[serde(alias = "add")]
    A,
    /// Difference.
    #[serde(alias = "subtract")]
    S,
    /// Intersection.
    #[serde(alias = "intersect")]
    I,
}

impl SelectMode {
    #[inline]
    pub fn apply(self, current: bool, incoming: bool) -> bool {
        match self {
            SelectMode::N => incoming,
            SelectMode::A => current | incoming,
            SelectMode::S => current & !incoming,
            SelectMode::I => current & incoming,
        }
    }
}

impl std::str::FromStr for SelectMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "N" | "n" | "new" | "replace" => Ok(SelectMode::N),
            "A" | "a" | "add" => Ok(SelectMode::A),
            "S" | "s" | "subtract" => Ok(SelectMode::S),
            "I" | "i" | "intersect" => Ok(SelectMode::I),
            other => Err(Error::argument(format!("unknown selection mode `{other}`"))),
        }
    }
}

/// Binary image mask bound to the camera it was drawn in.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask2D {
    pub camera: Camera,
    pub bits: Vec<bool>,
    /// The user asserts the masked object is not occluded in this view.
    pub occlusion_free: bool,
}

impl Mask2D {
    pub fn empty(camera: Camera) -> Self {
        let n = camera.pixel_count();
        Self {
            camera,
            bits: vec![false; n],
            occlusion_free: false,
        }
    }

    pub fn full(camera: Camera) -> Self {
        let n = camera.pixel_count();
        Self {
            camera,
            bits: vec![true; n],
            occlusion_free: false,
        }
    }

    pub fn from_bits(camera: Camera, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != camera.pixel_count() {
            return Err(Error::argument(format!(
                "mask has {} pixels, camera is {}x{}",
                bits.len(),
                camera.width,
                camera.height
            )));
        }
        Ok(Self {
            camera,
            bits,
            occlusion_free: false,
        })
    }

    pub fn with_occlusion_free(mut self, flag: bool) -> Self {
        self.occlusion_free = flag;
        self
    }

    pub fn width(&self) -> u32 {
        self.camera.width
    }

    pub fn height(&self) -> u32 {
        self.camera.height
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[(y * self.camera.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let w = self.camera.width;
        self.bits[(y * w + x) as usize] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Morphological closing with a 3x3 square. Pixels outside the image
    /// count as background for the dilation and foreground for the erosion,
    /// so the result always contains the input.
    pub fn closed(&self) -> Mask2D {
        let dilated = morph(&self.bits, self.width(), self.height(), true);
        let bits = morph(&dilated, self.width(), self.height(), false);
        Mask2D {
            camera: self.camera.clone(),
            bits,
            occlusion_free: self.occlusion_free,
        }
    }

    /// Dilation by `radius` pixels with a square structuring element.
    pub fn dilated(&self, radius: u32) -> Mask2D {
        let mut bits = self.bits.clone();
        for _ in 0..radius {
            bits = morph(&bits, self.width(), self.height(), true);
        }
        Mask2D {
            camera: self.camera.clone(),
            bits,
            occlusion_free: self.occlusion_free,
        }
    }
}

fn morph(bits: &[bool], w: u32, h: u32, dilate: bool) -> Vec<bool> {
    let (w, h) = (w as i64, h as i64);
    (0..h * w)
        .map(|p| {
            let (x, y) = (p % w, p / w);
            let mut any = false;
            let mut all = true;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    let v = if nx >= 0 && ny >= 0 && nx < w && ny < h {
                        bits[(ny * w + nx) as usize]
                    } else {
                        !dilate
                    };
                    any |= v;
                    all &= v;
                }
            }
            if dilate {
                any
            } else {
                all
            }
        })
        .collect()
}

/// One bit per Gaussian, indexed like the scene.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Selection3D {
    pub bits: Vec<bool>,
}

impl Selection3D {
    pub fn empty(n: usize) -> Self {
        Self {
            bits: vec![false; n],
        }
    }

    pub fn all(n: usize) -> Self {
        Self {
            bits: vec![true; n],
        }
    }

    pub fn from_indices(n: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Self::empty(n);
        for i in indices {
            s.bits[i] = true;
        }
        s
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
    }

    pub fn invert(&self) -> Selection3D {
        Selection3D {
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    pub fn is_subset_of(&self, other: &Selection3D) -> bool {
        self.bits.len() == other.bits.len()
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Serializes to the `GSEL` sidecar layout: magic, version (u32 LE),
    /// count (u64 LE), then bits packed LSB-first.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.len().div_ceil(8));
        out.extend_from_slice(GSEL_MAGIC);
        out.extend_from_slice(&GSEL_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        let mut packed = vec![0u8; self.len().div_ceil(8)];
        for i in self.iter_ones() {
            packed[i / 8] |= 1 << (i % 8);
        }
        out.extend_from_slice(&packed);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != GSEL_MAGIC {
            return Err(Error::format("not a GSEL selection file"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != GSEL_VERSION {
            return Err(Error::format(format!("unsupported GSEL version {version}")));
        }
        let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let need = count.div_ceil(8);
        if bytes.len() < 16 + need {
            return Err(Error::Truncated {
                offset: bytes.len() as u64,
                source: std::io::Error::new(
                    std::io::ErrorKind::UnexpectedEof,
                    "selection bitset truncated",
                ),
            });
        }
        let packed = &bytes[16..16 + need];
        let bits = (0..count)
            .map(|i| packed[i / 8] >> (i % 8) & 1 == 1)
            .collect();
        Ok(Self { bits })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }
}

const GSEL_MAGIC: &[u8; 4] = b"GSEL";
const GSEL_VERSION: u32 = 1;

pub fn combine_mask2d(current: &Mask2D, incoming: &Mask2D, mode: SelectMode) -> Result<Mask2D> {
    if current.camera != incoming.camera {
        return Err(Error::argument("masks were drawn in different views"));
    }
    Ok(Mask2D {
        camera: current.camera.clone(),
        bits: combine_bits(&current.bits, &incoming.bits, mode),
        occlusion_free: if mode == SelectMode::N {
            incoming.occlusion_free
        } else {
            current.occlusion_free
        },
    })
}

pub fn combine_selection3d(
    current: &Selection3D,
    incoming: &Selection3D,
    mode: SelectMode,
) -> Result<Selection3D> {
    if current.len() != incoming.len() {
        return Err(Error::argument(format!(
            "selection lengths differ ({} vs {})",
            current.len(),
            incoming.len()
        )));
    }
    Ok(Selection3D {
        bits: combine_bits(&current.bits, &incoming.bits, mode),
    })
}

fn combine_bits(a: &[bool], b: &[bool], mode: SelectMode) -> Vec<bool> {
    a.iter().zip(b).map(|(&x, &y)| mode.apply(x, y)).collect()
}

/// A brush sample: pixel coordinates and radius in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrokePoint {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

/// Sets (or clears) disks along the stroke joined by capsules. A pixel is
/// covered when its centre lies within the radius of the stroke polyline;
/// the pixel under each stroke sample is always covered so a zero radius
/// still paints a connected one-pixel line.
pub fn paint_mask(mask: &Mask2D, stroke: &[StrokePoint], value: bool) -> Mask2D {
    let mut out = mask.clone();
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let stamp = |x: f64, y: f64, out: &mut Mask2D| {
        let (px, py) = (x.floor() as i64, y.floor() as i64);
        if px >= 0 && py >= 0 && px < w && py < h {
            out.set(px as u32, py as u32, value);
        }
    };
    let segments: Vec<(StrokePoint, StrokePoint)> = if stroke.len() == 1 {
        vec![(stroke[0], stroke[0])]
    } else {
        stroke.windows(2).map(|s| (s[0], s[1])).collect()
    };
    for (a, b) in segments {
        let r = a.radius.max(b.radius).max(0.0);
        let x0 = ((a.x.min(b.x) - r - 1.0).floor() as i64).max(0);
        let x1 = ((a.x.max(b.x) + r + 1.0).ceil() as i64).min(w - 1);
        let y0 = ((a.y.min(b.y) - r - 1.0).floor() as i64).max(0);
        let y1 = ((a.y.max(b.y) + r + 1.0).ceil() as i64).min(h - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
                let (d, t) = point_segment_distance(cx, cy, a.x, a.y, b.x, b.y);
                let radius = a.radius + (b.radius - a.radius) * t;
                if d <= radius {
                    out.set(x as u32, y as u32, value);
                }
            }
        }
        let len = ((b.x - a.x).powi(2) + (b.y - a.y).powi(2)).sqrt();
        let steps = (len / 0.5).ceil().max(1.0) as usize;
        for k in 0..=steps {
            let t = k as f64 / steps as f64;
            stamp(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t, &mut out);
        }
    }
    out
}

fn point_segment_distance(px: f64, py: f64, ax: f64, ay: f64, bx: f64, by: f64) -> (f64, f64) {
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (ax + t * dx, ay + t * dy);
    (((px - qx).powi(2) + (py - qy).powi(2)).sqrt(), t)
}

/// Filled axis-aligned rectangle; pixel `(x, y)` is inside when its centre
/// lies in `[x0, x1) x [y0, y1)`. Corners may be given in any order.
pub fn box_mask(camera: &Camera, rect: [f64; 4]) -> Mask2D {
    let (x0, x1) = (rect[0].min(rect[2]), rect[0].max(rect[2]));
    let (y0, y1) = (rect[1].min(rect[3]), rect[1].max(rect[3]));
    let mut mask = Mask2D::empty(camera.clone());
    for y in 0..camera.height {
        let cy = y as f64 + 0.5;
        if cy < y0 || cy >= y1 {
            continue;
        }
        for x in 0..camera.width {
            let cx = x as f64 + 0.5;
            if cx >= x0 && cx < x1 {
                mask.set(x, y, true);
            }
        }
    }
    mask
}

/// Pixel hit by a Gaussian's mean and the mean's camera depth, when the mean
/// lies strictly between the clip planes and projects inside the image.
pub fn project_mean(scene: &GaussianScene, i: usize, cam: &Camera) -> Option<(u32, u32, f64)> {
    let pc = cam.to_camera(&scene.mean(i));
    if !(pc.z > cam.near && pc.z < cam.far) {
        return None;
    }
    let (u, v) = cam.project_camera_point(&pc);
    cam.pixel_at(u, v).map(|(x, y)| (x, y, pc.z))
}

/// Selects every Gaussian whose mean falls inside the sweep of the mask
/// through the camera frustum. No occlusion test.
pub fn frustum_project(scene: &GaussianScene, mask: &Mask2D) -> Selection3D {
    let cam = &mask.camera;
    let bits = (0..scene.len())
        .into_par_iter()
        .map(|i| match project_mean(scene, i, cam) {
            Some((x, y, _)) => mask.get(x, y),
            None => false,
        })
        .collect();
    Selection3D { bits }
}

/// How the depth threshold of [`depth_project`] is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DepthTolerance {
    /// Fraction of the rendered depth.
    Relative(f64),
    /// Scene units.
    Absolute(f64),
}

impl Default for DepthTolerance {
    fn default() -> Self {
        DepthTolerance::Relative(0.01)
    }
}

impl DepthTolerance {
    fn admits(self, z: f64, rendered: f64) -> bool {
        let diff = (z - rendered).abs();
        match self {
            DepthTolerance::Relative(t) => diff <= t * rendered,
            DepthTolerance::Absolute(t) => diff <= t,
        }
    }
}

/// Frustum projection restricted to Gaussians whose camera depth lies within
/// the tolerance of the rendered depth at their pixel.
pub fn depth_project(
    scene: &GaussianScene,
    mask: &Mask2D,
    tolerance: DepthTolerance,
) -> Result<Selection3D> {
    match tolerance {
        DepthTolerance::Relative(t) | DepthTolerance::Absolute(t) if t.is_nan() || t <= 0.0 => {
            return Err(Error::argument("depth threshold must be positive"));
        }
        _ => {}
    }
    let cam = &mask.camera;
    let depth = raster::render(scene, cam).depth;
    Ok(surface_selection(scene, cam, &depth, tolerance, |x, y| {
        mask.get(x, y)
    }))
}

/// Gaussians inside `inside` whose depth matches the given depth image.
pub(crate) fn surface_selection(
    scene: &GaussianScene,
    cam: &Camera,
    depth: &[f64],
    tolerance: DepthTolerance,
    inside: impl Fn(u32, u32) -> bool + Sync,
) -> Selection3D {
    let bits = (0..scene.len())
        .into_par_iter()
        .map(|i| match project_mean(scene, i, cam) {
            Some((x, y, z)) if inside(x, y) => {
                let d = depth[(y * cam.width + x) as usize];
                d > 0.0 && tolerance.admits(z, d)
            }
            _ => false,
        })
        .collect();
    Selection3D { bits }
}
