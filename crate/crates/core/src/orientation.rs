//! Re-orienting a scene so the principal axes of a selection line up with
//! chosen world axes.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::error::{Error, Result};
use crate::scene::GaussianScene;
use crate::selection::Selection3D;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    pub center: Vector3<f64>,
    /// Rows are the principal directions, by descending variance.
    pub components: Matrix3<f64>,
    pub variances: [f64; 3],
}

/// Principal axes of the selected means (population covariance). The basis
/// is right-handed.
pub fn pca_basis(scene: &GaussianScene, sel: &Selection3D) -> Result<PcaBasis> {
    if sel.len() != scene.len() {
        return Err(Error::argument("selection length does not match the scene"));
    }
    let points: Vec<Vector3<f64>> = sel.iter_ones().map(|i| scene.mean(i)).collect();
    if points.len() < 3 {
        return Err(Error::DegenerateSelection(format!(
            "PCA needs at least 3 selected Gaussians, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let center = points.iter().sum::<Vector3<f64>>() / n;
    let cov = points.iter().fold(Matrix3::zeros(), |acc, p| {
        let d = p - center;
        acc + d * d.transpose()
    }) / n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let variances = order.map(|k| eig.eigenvalues[k].max(0.0));
    if variances[0].is_nan() || variances[0] <= 0.0 || variances[1] <= 1e-12 * variances[0] {
        return Err(Error::DegenerateSelection(
            "selected means are collinear".into(),
        ));
    }
    let mut components = Matrix3::from_rows(&order.map(|k| eig.eigenvectors.column(k).transpose()));
    if components.determinant() < 0.0 {
        let flipped = -components.row(2);
        components.set_row(2, &flipped);
    }
    Ok(PcaBasis {
        center,
        components,
        variances,
    })
}

/// World axis (0 = x, 1 = y, 2 = z) assigned to each principal component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AxisMapping {
    pub axes: [usize; 3],
}

impl Default for AxisMapping {
    fn default() -> Self {
        Self { axes: [0, 1, 2] }
    }
}

impl AxisMapping {
    pub fn new(axes: [usize; 3]) -> Result<Self> {
        let mut seen = [false; 3];
        for &a in &axes {
            if a > 2 || seen[a] {
                return Err(Error::argument(format!(
                    "{axes:?} is not a permutation of x, y, z"
                )));
            }
            seen[a] = true;
        }
        Ok(Self { axes })
    }

    /// Permutation matrix sending basis vector `i` to `axes[i]`.
    fn matrix(&self) -> Matrix3<f64> {
        let mut q = Matrix3::zeros();
        for (i, &a) in self.axes.iter().enumerate() {
            q[(a, i)] = 1.0;
        }
        q
    }
}

const AXIS_NAMES: [&str; 3] = ["x", "y", "z"];

/// Parses `pc3=z,pc1=x`. Components left out take the unused axes in
/// ascending order.
impl FromStr for AxisMapping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut axes: [Option<usize>; 3] = [None; 3];
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (pc, axis) = part.split_once('=').ok_or_else(|| {
                Error::argument(format!(
                    "mapping entry `{part}` is not of the form pcN=axis"
                ))
            })?;
            let pc = match pc.trim().to_ascii_lowercase().as_str() {
                "pc1" => 0,
                "pc2" => 1,
                "pc3" => 2,
                other => return Err(Error::argument(format!("unknown component `{other}`"))),
            };
            let axis = AXIS_NAMES
                .iter()
                .position(|n| n.eq_ignore_ascii_case(axis.trim()))
                .ok_or_else(|| Error::argument(format!("unknown axis `{}`", axis.trim())))?;
            if axes[pc].is_some() {
                return Err(Error::argument(format!("pc{} mapped twice", pc + 1)));
            }
            if axes.contains(&Some(axis)) {
                return Err(Error::argument(format!(
                    "axis {} used twice",
                    AXIS_NAMES[axis]
                )));
            }
            axes[pc] = Some(axis);
        }
        let mut free = (0..3).filter(|a| !axes.contains(&Some(*a)));
        let filled = axes
            .map(|a| a.unwrap_or_else(|| free.next().expect("three axes for three components")));
        AxisMapping::new(filled)
    }
}

impl fmt::Display for AxisMapping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .axes
            .iter()
            .enumerate()
            .map(|(i, &a)| format!("pc{}={}", i + 1, AXIS_NAMES[a]))
            .collect();
        f.write_str(&parts.join(","))
    }
}

/// Rotation sending each principal component to its mapped axis, with the
/// component signs chosen to keep the rotation closest to the identity, and
/// the translation that keeps the selection centroid in place.
pub fn orientation_transform(
    scene: &GaussianScene,
    sel: &Selection3D,
    mapping: AxisMapping,
) -> Result<(Matrix3<f64>, Vector3<f64>)> {
    let basis = pca_basis(scene, sel)?;
    let qp = mapping.matrix() * basis.components;
    let parity = mapping.matrix().determinant().signum();
    let mut best: Option<(f64, Matrix3<f64>)> = None;
    for signs in [
        [1.0, 1.0, 1.0],
        [1.0, -1.0, -1.0],
        [-1.0, 1.0, -1.0],
        [-1.0, -1.0, 1.0],
    ] {
        let d = Matrix3::from_diagonal(&Vector3::from(signs).map(|s: f64| s * parity));
        let r = d * qp;
        if best.as_ref().is_none_or(|(t, _)| r.trace() > *t) {
            best = Some((r.trace(), r));
        }
    }
    let rotation = best.expect("four candidates").1;
    let translation = basis.center - rotation * basis.center;
    Ok((rotation, translation))
}

pub fn orient_scene(
    scene: &GaussianScene,
    sel: &Selection3D,
    mapping: AxisMapping,
) -> Result<GaussianScene> {
    let (r, t) = orientation_transform(scene, sel, mapping)?;
    scene.apply_rigid_transform(&r, &t)
}
