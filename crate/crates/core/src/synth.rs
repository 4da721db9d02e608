//! Deterministic synthetic scenes with per-Gaussian ground-truth labels.
//!
//! Objects are built the way trained splat scenes look: opaque surfaces of
//! small Gaussians rather than filled volumes.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

use crate::camera::Camera;
use crate::error::Result;
use crate::scene::{GaussianScene, RawGaussian};
use crate::selection::Selection3D;
use crate::sh::dc_from_rgb;

#[derive(Debug, Clone)]
pub struct LabeledScene {
    pub scene: GaussianScene,
    /// Object label per Gaussian.
    pub labels: Vec<u32>,
}

impl LabeledScene {
    pub fn selection_of(&self, label: u32) -> Selection3D {
        Selection3D {
            bits: self.labels.iter().map(|&l| l == label).collect(),
        }
    }
}

#[derive(Debug, Default)]
pub struct SceneBuilder {
    gaussians: Vec<RawGaussian>,
    labels: Vec<u32>,
}

fn golden_angle() -> f64 {
    std::f64::consts::PI * (3.0 - 5f64.sqrt())
}

/// Small deterministic perturbation in [-1, 1].
fn jitter(k: usize, salt: u64) -> f64 {
    let mut x =
        (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    x ^= x >> 31;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 29;
    (x >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

fn quat(r: &Matrix3<f64>) -> [f32; 4] {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r));
    [q.w as f32, q.i as f32, q.j as f32, q.k as f32]
}

impl SceneBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, g: RawGaussian, label: u32) {
        self.gaussians.push(g);
        self.labels.push(label);
    }

    /// `count` Gaussians spread over a sphere surface (Fibonacci lattice),
    /// flattened along the normal.
    pub fn sphere_shell(
        &mut self,
        center: Vector3<f64>,
        radius: f64,
        count: usize,
        rgb: [f64; 3],
        label: u32,
    ) -> &mut Self {
        let area_per = 4.0 * std::f64::consts::PI * radius * radius / count as f64;
        let sigma = area_per.sqrt() * 0.9;
        for k in 0..count {
            let y = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
            let r = (1.0 - y * y).sqrt();
            let phi = golden_angle() * k as f64;
            let n = Vector3::new(r * phi.cos(), r * phi.sin(), y);
            self.surfel(center + n * radius, n, sigma, rgb, label, k);
        }
        self
    }

    /// Axis-aligned box surface with roughly `count` Gaussians.
    pub fn box_shell(
        &mut self,
        center: Vector3<f64>,
        half: Vector3<f64>,
        count: usize,
        rgb: [f64; 3],
        label: u32,
    ) -> &mut Self {
        let faces = [
            (Vector3::x(), half.x, half.y, half.z),
            (-Vector3::x(), half.x, half.y, half.z),
            (Vector3::y(), half.y, half.x, half.z),
            (-Vector3::y(), half.y, half.x, half.z),
            (Vector3::z(), half.z, half.x, half.y),
            (-Vector3::z(), half.z, half.x, half.y),
        ];
        let total_area: f64 = faces.iter().map(|f| 4.0 * f.2 * f.3).sum();
        let spacing = (total_area / count as f64).sqrt();
        let mut k = 0;
        for (normal, offset, a, b) in faces {
            let (u, v) = tangent_basis(&normal);
            // u and v follow the remaining axes in increasing index order.
            let nu = ((2.0 * a / spacing).round() as usize).max(1);
            let nv = ((2.0 * b / spacing).round() as usize).max(1);
            for i in 0..nu {
                for j in 0..nv {
                    let su = -a + (i as f64 + 0.5) * 2.0 * a / nu as f64;
                    let sv = -b + (j as f64 + 0.5) * 2.0 * b / nv as f64;
                    let p = center + normal * offset + u * su + v * sv;
                    self.surfel(p, normal, spacing * 0.9, rgb, label, k);
                    k += 1;
                }
            }
        }
        self
    }

    /// Square grid of Gaussians in a plane through `center` with the given
    /// normal; `n x n` Gaussians spanning `2 * half` on a side.
    pub fn plane(
        &mut self,
        center: Vector3<f64>,
        normal: Vector3<f64>,
        half: f64,
        n: usize,
        rgb: [f64; 3],
        label: u32,
    ) -> &mut Self {
        let normal = normal.normalize();
        let (u, v) = tangent_basis(&normal);
        let spacing = 2.0 * half / n as f64;
        let mut k = 0;
        for i in 0..n {
            for j in 0..n {
                let su = -half + (i as f64 + 0.5) * spacing;
                let sv = -half + (j as f64 + 0.5) * spacing;
                self.surfel(
                    center + u * su + v * sv,
                    normal,
                    spacing * 0.9,
                    rgb,
                    label,
                    k,
                );
                k += 1;
            }
        }
        self
    }

    fn surfel(
        &mut self,
        p: Vector3<f64>,
        normal: Vector3<f64>,
        sigma: f64,
        rgb: [f64; 3],
        label: u32,
        k: usize,
    ) {
        let (u, v) = tangent_basis(&normal);
        let spin = jitter(k, label as u64 + 17) * std::f64::consts::PI;
        let (u, v) = (
            u * spin.cos() + v * spin.sin(),
            v * spin.cos() - u * spin.sin(),
        );
        let frame = Matrix3::from_columns(&[u, v, normal]);
        let frame = if frame.determinant() < 0.0 {
            Matrix3::from_columns(&[v, u, normal])
        } else {
            frame
        };
        let shade = 1.0 + 0.08 * jitter(k, label as u64 + 5);
        let color = rgb.map(|c| (c * shade).clamp(0.0, 1.0));
        let dc = dc_from_rgb(color);
        self.push(
            RawGaussian {
                mean: [p.x as f32, p.y as f32, p.z as f32],
                rotation: quat(&frame),
                log_scale: [
                    sigma.ln() as f32,
                    sigma.ln() as f32,
                    (sigma * 0.2).ln() as f32,
                ],
                opacity_logit: 4.0,
                sh: dc.to_vec(),
            },
            label,
        );
    }

    pub fn build(&self) -> LabeledScene {
        LabeledScene {
            scene: GaussianScene::from_gaussians(1, self.gaussians.clone())
                .expect("builder emits degree-0 SH"),
            labels: self.labels.clone(),
        }
    }
}

fn tangent_basis(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if n.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let u = n.cross(&helper).normalize();
    let v = n.cross(&u);
    (u, v)
}

/// Camera on a sphere around `target`, world +z up. Azimuth is measured
/// from +x towards +y, elevation from the xy plane, both in radians.
pub fn orbit_camera(
    target: Vector3<f64>,
    distance: f64,
    azimuth: f64,
    elevation: f64,
    fov_x: f64,
    size: u32,
) -> Result<Camera> {
    let dir = Vector3::new(
        elevation.cos() * azimuth.cos(),
        elevation.cos() * azimuth.sin(),
        elevation.sin(),
    );
    Camera::look_at(
        target + dir * distance,
        target,
        Vector3::z(),
        fov_x,
        size,
        size,
    )
}

/// Label of the target object in the benchmark scenes.
pub const TARGET: u32 = 0;

/// Three separated objects on the xy plane: the target sphere at the
/// origin, a box and a second sphere beside it.
pub fn three_clusters(gaussians_per_cluster: usize) -> LabeledScene {
    let mut b = SceneBuilder::new();
    b.sphere_shell(
        Vector3::zeros(),
        0.5,
        gaussians_per_cluster,
        [0.9, 0.2, 0.2],
        TARGET,
    );
    b.box_shell(
        Vector3::new(0.2, 1.6, 0.0),
        Vector3::new(0.35, 0.35, 0.35),
        gaussians_per_cluster,
        [0.2, 0.8, 0.3],
        1,
    );
    b.sphere_shell(
        Vector3::new(-1.3, -1.0, 0.1),
        0.4,
        gaussians_per_cluster,
        [0.2, 0.3, 0.9],
        2,
    );
    b.build()
}

/// Target sphere with a flat occluding wall between it and the annotated
/// view direction (+x), plus a background box.
pub fn occluded_target(gaussians_per_cluster: usize) -> LabeledScene {
    let mut b = SceneBuilder::new();
    b.sphere_shell(
        Vector3::zeros(),
        0.5,
        gaussians_per_cluster,
        [0.9, 0.6, 0.1],
        TARGET,
    );
    let side = ((gaussians_per_cluster as f64).sqrt().round() as usize).max(2);
    b.plane(
        Vector3::new(1.0, 0.35, 0.0),
        Vector3::x(),
        0.3,
        side,
        [0.4, 0.4, 0.45],
        1,
    );
    b.box_shell(
        Vector3::new(-0.3, -1.5, 0.0),
        Vector3::new(0.3, 0.3, 0.3),
        gaussians_per_cluster,
        [0.2, 0.5, 0.8],
        2,
    );
    b.build()
}

/// Target sphere with a flat panel directly behind it as seen from +x, so
/// the panel is hidden from the annotated view but visible from most others,
/// plus a background box.
pub fn hidden_distractor(gaussians_per_cluster: usize) -> LabeledScene {
    let mut b = SceneBuilder::new();
    b.sphere_shell(
        Vector3::zeros(),
        0.5,
        gaussians_per_cluster,
        [0.3, 0.7, 0.9],
        TARGET,
    );
    let side = ((gaussians_per_cluster as f64).sqrt().round() as usize).max(2);
    b.plane(
        Vector3::new(-1.2, 0.0, 0.0),
        Vector3::x(),
        0.3,
        side,
        [0.9, 0.8, 0.2],
        1,
    );
    b.box_shell(
        Vector3::new(0.4, -1.6, -0.1),
        Vector3::new(0.3, 0.3, 0.3),
        gaussians_per_cluster,
        [0.6, 0.3, 0.6],
        2,
    );
    b.build()
}

/// Two opaque parallel planes facing the camera axis at z = 1 (label 0)
/// and z = 2 (label 1). The back plane is smaller, so from a camera on the
/// negative z axis it is entirely hidden behind the front one.
pub fn two_planes(n: usize) -> LabeledScene {
    let mut b = SceneBuilder::new();
    b.plane(
        Vector3::new(0.0, 0.0, 1.0),
        Vector3::z(),
        0.6,
        n,
        [0.8, 0.8, 0.8],
        0,
    );
    b.plane(
        Vector3::new(0.0, 0.0, 2.0),
        Vector3::z(),
        0.4,
        n,
        [0.3, 0.3, 0.9],
        1,
    );
    b.build()
}

/// A ground plane tilted by `tilt` radians about the x axis, label 0, with a
/// sphere resting above it, label 1.
pub fn tilted_ground(n: usize, tilt: f64) -> LabeledScene {
    let normal = Rotation3::from_axis_angle(&Vector3::x_axis(), tilt) * Vector3::z();
    let mut b = SceneBuilder::new();
    b.plane(
        Vector3::new(0.3, -0.2, 0.1),
        normal,
        1.5,
        n,
        [0.5, 0.45, 0.4],
        0,
    );
    b.sphere_shell(
        Vector3::new(0.3, -0.2, 0.1) + normal * 0.6,
        0.4,
        n * 4,
        [0.8, 0.3, 0.3],
        1,
    );
    b.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builders_are_deterministic_and_labelled() {
        let a = three_clusters(500);
        let b = three_clusters(500);
        assert_eq!(a.scene, b.scene);
        assert_eq!(a.labels.len(), a.scene.len());
        assert_eq!(a.selection_of(TARGET).count(), 500);
        for i in 0..a.scene.len() {
            assert!((a.scene.rotation(i).quaternion().norm() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn jitter_stays_in_range() {
        for k in 0..1000 {
            let j = jitter(k, 3);
            assert!((-1.0..=1.0).contains(&j));
        }
    }
}
