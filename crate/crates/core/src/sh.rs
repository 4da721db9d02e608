//! Real spherical harmonics colour evaluation (degrees 0 to 3) using the
//! basis and sign conventions of common splat training code.

use nalgebra::Vector3;

const C0: f64 = 0.282_094_791_773_878_14;
const C1: f64 = 0.488_602_511_902_919_9;
const C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// Basis values for the first `coeffs` functions along unit direction `d`.
fn basis(coeffs: usize, d: &Vector3<f64>) -> [f64; 16] {
    let (x, y, z) = (d.x, d.y, d.z);
    let mut b = [0.0; 16];
    b[0] = C0;
    if coeffs > 1 {
        b[1] = -C1 * y;
        b[2] = C1 * z;
        b[3] = -C1 * x;
    }
    if coeffs > 4 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        b[4] = C2[0] * x * y;
        b[5] = C2[1] * y * z;
        b[6] = C2[2] * (2.0 * zz - xx - yy);
        b[7] = C2[3] * x * z;
        b[8] = C2[4] * (xx - yy);
        if coeffs > 9 {
            b[9] = C3[0] * y * (3.0 * xx - yy);
            b[10] = C3[1] * x * y * z;
            b[11] = C3[2] * y * (4.0 * zz - xx - yy);
            b[12] = C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
            b[13] = C3[4] * x * (4.0 * zz - xx - yy);
            b[14] = C3[5] * z * (xx - yy);
            b[15] = C3[6] * x * (xx - 3.0 * yy);
        }
    }
    b
}

/// Evaluates RGB along `dir` (unit, from camera towards the Gaussian),
/// shifted by +0.5 and clamped to [0, 1].
///
/// `sh` holds `3 * coeffs` values in `[channel][coefficient]` order.
pub fn eval_color(sh: &[f32], coeffs: usize, dir: &Vector3<f64>) -> [f64; 3] {
    debug_assert_eq!(sh.len(), 3 * coeffs);
    let b = basis(coeffs, dir);
    let mut rgb = [0.0; 3];
    for (c, out) in rgb.iter_mut().enumerate() {
        let row = &sh[c * coeffs..(c + 1) * coeffs];
        let v: f64 = row.iter().zip(&b).map(|(&k, &bv)| k as f64 * bv).sum();
        *out = (v + 0.5).clamp(0.0, 1.0);
    }
    rgb
}

/// DC coefficient that renders as `rgb` when the colour is view independent.
pub fn dc_from_rgb(rgb: [f64; 3]) -> [f32; 3] {
    rgb.map(|c| ((c - 0.5) / C0) as f32)
}
