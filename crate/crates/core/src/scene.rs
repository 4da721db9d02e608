//! Gaussian scene data model.
//!
//! Parameters are kept exactly as stored on disk (pre-activation). The
//! activated quantities used for rendering are computed on demand so that
//! exports stay byte-identical to their source rows.

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::selection::Selection3D;

/// Number of SH coefficients per colour channel for degrees 0..=3.
pub const SH_BAND_COUNTS: [usize; 4] = [1, 4, 9, 16];

/// A named per-Gaussian attribute that the engine carries but does not
/// interpret (e.g. `nx`, `ny`, `nz`).
#[derive(Debug, Clone, PartialEq)]
pub struct ExtraAttribute {
    pub name: String,
    pub values: Vec<f32>,
}

/// One Gaussian in raw form, used to assemble scenes programmatically.
#[derive(Debug, Clone, PartialEq)]
pub struct RawGaussian {
    pub mean: [f32; 3],
    /// (w, x, y, z), not necessarily normalized.
    pub rotation: [f32; 4],
    pub log_scale: [f32; 3],
    pub opacity_logit: f32,
    /// Channel-major, `3 * sh_coeffs` entries: all coefficients of red,
    /// then green, then blue. Coefficient 0 is the DC term.
    pub sh: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianScene {
    pub means: Vec<[f32; 3]>,
    pub rotations: Vec<[f32; 4]>,
    pub log_scales: Vec<[f32; 3]>,
    pub opacity_logits: Vec<f32>,
    /// `count * 3 * sh_coeffs` values, laid out per Gaussian as
    /// `[channel][coefficient]`.
    pub sh: Vec<f32>,
    /// Coefficients per channel: 1, 4, 9 or 16.
    pub sh_coeffs: usize,
    pub extras: Vec<ExtraAttribute>,
    /// Property order used when writing the scene back to disk. Empty means
    /// the canonical order.
    pub property_order: Vec<String>,
    /// Set once a rigid transform has left SH bands of degree >= 2
    /// unrotated.
    pub view_dependent_color_approximate: bool,
}

impl Default for GaussianScene {
    fn default() -> Self {
        Self::new(1)
    }
}

impl GaussianScene {
    pub fn new(sh_coeffs: usize) -> Self {
        assert!(
            SH_BAND_COUNTS.contains(&sh_coeffs),
            "unsupported SH coefficient count {sh_coeffs}"
        );
        Self {
            means: Vec::new(),
            rotations: Vec::new(),
            log_scales: Vec::new(),
            opacity_logits: Vec::new(),
            sh: Vec::new(),
            sh_coeffs,
            extras: Vec::new(),
            property_order: Vec::new(),
            view_dependent_color_approximate: false,
        }
    }

    pub fn from_gaussians(
        sh_coeffs: usize,
        gaussians: impl IntoIterator<Item = RawGaussian>,
    ) -> Result<Self> {
        let mut scene = Self::new(sh_coeffs);
        for g in gaussians {
            scene.push(g)?;
        }
        Ok(scene)
    }

    pub fn push(&mut self, g: RawGaussian) -> Result<()> {
        if g.sh.len() != 3 * self.sh_coeffs {
            return Err(Error::argument(format!(
                "expected {} SH values, got {}",
                3 * self.sh_coeffs,
                g.sh.len()
            )));
        }
        if !self.extras.is_empty() {
            return Err(Error::argument(
                "cannot push onto a scene with extra attributes",
            ));
        }
        self.means.push(g.mean);
        self.rotations.push(g.rotation);
        self.log_scales.push(g.log_scale);
        self.opacity_logits.push(g.opacity_logit);
        self.sh.extend_from_slice(&g.sh);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn sh_degree(&self) -> usize {
        SH_BAND_COUNTS
            .iter()
            .position(|&b| b == self.sh_coeffs)
            .expect("validated coefficient count")
    }

    /// Checks that all attribute arrays agree on the Gaussian count.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let ok = self.rotations.len() == n
            && self.log_scales.len() == n
            && self.opacity_logits.len() == n
            && self.sh.len() == n * 3 * self.sh_coeffs
            && self.extras.iter().all(|e| e.values.len() == n);
        if !ok {
            return Err(Error::format("attribute arrays disagree on Gaussian count"));
        }
        if !SH_BAND_COUNTS.contains(&self.sh_coeffs) {
            return Err(Error::format(format!(
                "unsupported SH coefficient count {}",
                self.sh_coeffs
            )));
        }
        Ok(())
    }

    pub fn sh_of(&self, i: usize) -> &[f32] {
        let stride = 3 * self.sh_coeffs;
        &self.sh[i * stride..(i + 1) * stride]
    }

    pub fn mean(&self, i: usize) -> Vector3<f64> {
        let m = self.means[i];
        Vector3::new(m[0] as f64, m[1] as f64, m[2] as f64)
    }

    /// Activated opacity, sigmoid of the stored logit.
    pub fn opacity(&self, i: usize) -> f64 {
        sigmoid(self.opacity_logits[i] as f64)
    }

    /// Activated per-axis standard deviations.
    pub fn scale(&self, i: usize) -> Vector3<f64> {
        let s = self.log_scales[i];
        Vector3::new(
            (s[0] as f64).exp(),
            (s[1] as f64).exp(),
            (s[2] as f64).exp(),
        )
    }

    /// Normalized rotation. A zero quaternion activates to the identity.
    pub fn rotation(&self, i: usize) -> UnitQuaternion<f64> {
        let [w, x, y, z] = self.rotations[i];
        let q = Quaternion::new(w as f64, x as f64, y as f64, z as f64);
        if q.norm() == 0.0 {
            UnitQuaternion::identity()
        } else {
            UnitQuaternion::from_quaternion(q)
        }
    }

    /// World-space covariance `R diag(s^2) R^T`.
    pub fn covariance(&self, i: usize) -> Matrix3<f64> {
        let r = self.rotation(i).to_rotation_matrix().into_inner();
        let s = self.scale(i);
        let d = Matrix3::from_diagonal(&s.component_mul(&s));
        r * d * r.transpose()
    }

    /// Copies out the Gaussians whose selection bit is set, in index order.
    /// Returns the sub-scene and, for each of its Gaussians, the source index.
    pub fn subset(&self, sel: &Selection3D) -> Result<(GaussianScene, Vec<usize>)> {
        if sel.len() != self.len() {
            return Err(Error::argument(format!(
                "selection length {} does not match scene count {}",
                sel.len(),
                self.len()
            )));
        }
        let indices: Vec<usize> = sel.iter_ones().collect();
        Ok((self.gather(&indices), indices))
    }

    pub(crate) fn gather(&self, indices: &[usize]) -> GaussianScene {
        let stride = 3 * self.sh_coeffs;
        let mut sh = Vec::with_capacity(indices.len() * stride);
        for &i in indices {
            sh.extend_from_slice(self.sh_of(i));
        }
        GaussianScene {
            means: indices.iter().map(|&i| self.means[i]).collect(),
            rotations: indices.iter().map(|&i| self.rotations[i]).collect(),
            log_scales: indices.iter().map(|&i| self.log_scales[i]).collect(),
            opacity_logits: indices.iter().map(|&i| self.opacity_logits[i]).collect(),
            sh,
            sh_coeffs: self.sh_coeffs,
            extras: self
                .extras
                .iter()
                .map(|e| ExtraAttribute {
                    name: e.name.clone(),
                    values: indices.iter().map(|&i| e.values[i]).collect(),
                })
                .collect(),
            property_order: self.property_order.clone(),
            view_dependent_color_approximate: self.view_dependent_color_approximate,
        }
    }

    /// Applies `x -> R x + t` to the whole scene.
    ///
    /// Means and orientations are mapped exactly and SH band 1 is rotated as
    /// a direction vector. Higher bands are kept as they are and the scene is
    /// flagged with [`GaussianScene::view_dependent_color_approximate`].
    pub fn apply_rigid_transform(
        &self,
        rotation: &Matrix3<f64>,
        translation: &Vector3<f64>,
    ) -> Result<GaussianScene> {
        check_rotation(rotation)?;
        let rot =
            UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*rotation));
        let rq = *rot.quaternion();
        let mut out = self.clone();

        for i in 0..self.len() {
            let mu = rotation * self.mean(i) + translation;
            out.means[i] = [mu.x as f32, mu.y as f32, mu.z as f32];

            let [w, x, y, z] = self.rotations[i];
            let q = rq * Quaternion::new(w as f64, x as f64, y as f64, z as f64);
            out.rotations[i] = [q.w as f32, q.i as f32, q.j as f32, q.k as f32];
        }

        if self.sh_coeffs >= 4 {
            let b = self.sh_coeffs;
            for i in 0..self.len() {
                for c in 0..3 {
                    let base = i * 3 * b + c * b;
                    let (a1, a2, a3) = (
                        self.sh[base + 1] as f64,
                        self.sh[base + 2] as f64,
                        self.sh[base + 3] as f64,
                    );
                    // Band 1 evaluates to C1 * dot(v, dir) with v = (-a3, -a1, a2).
                    let v = rotation * Vector3::new(-a3, -a1, a2);
                    out.sh[base + 1] = (-v.y) as f32;
                    out.sh[base + 2] = v.z as f32;
                    out.sh[base + 3] = (-v.x) as f32;
                }
            }
        }
        if self.sh_coeffs > 4 && (rotation - Matrix3::identity()).abs().max() > 1e-12 {
            log::warn!(
                "SH bands of degree >= 2 are not rotated; view-dependent colour is approximate"
            );
            out.view_dependent_color_approximate = true;
        }
        Ok(out)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Errors unless `r` is orthonormal with determinant +1 (to 1e-6).
pub fn check_rotation(r: &Matrix3<f64>) -> Result<()> {
    let err = (r * r.transpose() - Matrix3::identity()).abs().max();
    let det = r.determinant();
    if err > 1e-6 || (det - 1.0).abs() > 1e-6 {
        return Err(Error::argument(format!(
            "rotation is not orthonormal with det +1 (orthogonality error {err:.3e}, det {det:.6})"
        )));
    }
    Ok(())
}
