//! Pinhole camera model and its JSON form.
//!
//! Camera space follows the usual splatting convention: +x right, +y down,
//! +z forward. Pixel `(x, y)` covers `[x, x+1) x [y, y+1)` so its centre is
//! at `(x + 0.5, y + 0.5)`.

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::check_rotation;

pub const DEFAULT_NEAR: f64 = 0.01;
pub const DEFAULT_FAR: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraJson", into = "CameraJson")]
pub struct Camera {
    pub world_to_camera: Matrix4<f64>,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub near: f64,
    pub far: f64,
}

#[derive(Serialize, Deserialize)]
struct CameraJson {
    world_to_camera: [f64; 16],
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
    #[serde(default = "default_near")]
    near: f64,
    #[serde(default = "default_far")]
    far: f64,
}

fn default_near() -> f64 {
    DEFAULT_NEAR
}

fn default_far() -> f64 {
    DEFAULT_FAR
}

impl TryFrom<CameraJson> for Camera {
    type Error = Error;

    fn try_from(j: CameraJson) -> Result<Self> {
        // Row-major on the wire.
        let m = Matrix4::from_row_slice(&j.world_to_camera);
        Camera::new(m, j.fx, j.fy, j.cx, j.cy, j.width, j.height, j.near, j.far)
    }
}

impl From<Camera> for CameraJson {
    fn from(c: Camera) -> Self {
        let mut w = [0.0; 16];
        for r in 0..4 {
            for col in 0..4 {
                w[r * 4 + col] = c.world_to_camera[(r, col)];
            }
        }
        CameraJson {
            world_to_camera: w,
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
            near: c.near,
            far: c.far,
        }
    }
}

impl Camera {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        world_to_camera: Matrix4<f64>,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        near: f64,
        far: f64,
    ) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::argument("focal lengths must be positive"));
        }
        if !(near > 0.0 && near < far) {
            return Err(Error::argument(
                "clip distances must satisfy 0 < near < far",
            ));
        }
        if width == 0 || height == 0 {
            return Err(Error::argument("image size must be at least 1x1"));
        }
        let rot: Matrix3<f64> = world_to_camera.fixed_view::<3, 3>(0, 0).into_owned();
        check_rotation(&rot)?;
        Ok(Self {
            world_to_camera,
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            near,
            far,
        })
    }

    /// Camera at `eye` looking at `target`, with `up` the world direction that
    /// should appear upwards in the image. The principal point is the image
    /// centre and the horizontal field of view is `fov_x` radians.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        fov_x: f64,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let f = width as f64 / (2.0 * (fov_x / 2.0).tan());
        let pose = look_at_pose(eye, target, up)?;
        Camera::new(
            pose,
            f,
            f,
            width as f64 / 2.0,
            height as f64 / 2.0,
            width,
            height,
            DEFAULT_NEAR,
            DEFAULT_FAR,
        )
    }

    /// Same intrinsics, image size and clip planes as `self`, posed at `eye`
    /// looking at `target`.
    pub fn reposed(
        &self,
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
    ) -> Result<Self> {
        let pose = look_at_pose(eye, target, up)?;
        Camera::new(
            pose,
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            self.width,
            self.height,
            self.near,
            self.far,
        )
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.world_to_camera.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.world_to_camera.fixed_view::<3, 1>(0, 3).into_owned()
    }

    /// Camera centre in world coordinates.
    pub fn position(&self) -> Vector3<f64> {
        -(self.rotation().transpose() * self.translation())
    }

    /// World direction of the image's upward axis (camera -y).
    pub fn up(&self) -> Vector3<f64> {
        -self.rotation().row(1).transpose()
    }

    /// World direction of the optical axis (camera +z).
    pub fn forward(&self) -> Vector3<f64> {
        self.rotation().row(2).transpose()
    }

    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * p + self.translation()
    }

    /// Projects a camera-space point to continuous pixel coordinates.
    pub fn project_camera_point(&self, pc: &Vector3<f64>) -> (f64, f64) {
        (
            self.fx * pc.x / pc.z + self.cx,
            self.fy * pc.y / pc.z + self.cy,
        )
    }

    /// Pixel containing continuous coordinates `(u, v)`, if inside the image.
    pub fn pixel_at(&self, u: f64, v: f64) -> Option<(u32, u32)> {
        let (x, y) = (u.floor(), v.floor());
        if x >= 0.0 && y >= 0.0 && x < self.width as f64 && y < self.height as f64 {
            Some((x as u32, y as u32))
        } else {
            None
        }
    }

    /// World point seen at the centre of pixel `(x, y)` at camera depth `z`.
    pub fn unproject_pixel(&self, x: u32, y: u32, z: f64) -> Vector3<f64> {
        let u = x as f64 + 0.5;
        let v = y as f64 + 0.5;
        let pc = Vector3::new((u - self.cx) / self.fx * z, (v - self.cy) / self.fy * z, z);
        self.rotation().transpose() * (pc - self.translation())
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn same_resolution(&self, other: &Camera) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// World-to-camera transform for a camera at `eye` looking at `target` with
/// `up` appearing upwards in the image.
pub fn look_at_pose(
    eye: Vector3<f64>,
    target: Vector3<f64>,
    up: Vector3<f64>,
) -> Result<Matrix4<f64>> {
    let forward = target - eye;
    if forward.norm() == 0.0 {
        return Err(Error::argument("eye and target coincide"));
    }
    let forward = forward.normalize();
    let right = forward.cross(&up);
    if right.norm() < 1e-12 {
        return Err(Error::argument(
            "up direction is parallel to the viewing direction",
        ));
    }
    let right = right.normalize();
    let down = forward.cross(&right);
    let rot = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
    let t = -(rot * eye);
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rot);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
    Ok(m)
}

/// Reads one camera or a JSON array of cameras.
pub fn load_cameras(path: impl AsRef<Path>) -> Result<Vec<Camera>> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    if value.is_array() {
        Ok(serde_json::from_value(value)?)
    } else {
        Ok(vec![serde_json::from_value(value)?])
    }
}

pub fn save_cameras(cameras: &[Camera], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(cameras)?)?;
    Ok(())
}
