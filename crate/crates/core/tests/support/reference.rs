//! Naive per-pixel splat renderer used as a test oracle.
//!
//! Plain scalar arithmetic: no tiles, no bounding boxes, no early exit. Every
//! pixel visits every Gaussian in depth order.

#![allow(dead_code)]

use gsseg_core::scene::RawGaussian;
use gsseg_core::{Camera, GaussianScene};
use rand::Rng;

pub struct RefPixel {
    pub rgba: [f64; 4],
    pub depth: f64,
    pub first_hit: i64,
    /// (gaussian, weight) in compositing order.
    pub weights: Vec<(usize, f64)>,
}

struct RefSplat {
    index: usize,
    u: f64,
    v: f64,
    inv: [f64; 3],
    opacity: f64,
    z: f64,
    color: [f64; 3],
}

fn mat3_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            for k in 0..3 {
                out[r][c] += a[r][k] * b[k][c];
            }
        }
    }
    out
}

fn transpose(a: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] = a[c][r];
        }
    }
    out
}

fn quat_matrix(q: [f32; 4]) -> [[f64; 3]; 3] {
    let n = q
        .iter()
        .map(|&v| (v as f64) * (v as f64))
        .sum::<f64>()
        .sqrt();
    let (w, x, y, z) = if n == 0.0 {
        (1.0, 0.0, 0.0, 0.0)
    } else {
        (
            q[0] as f64 / n,
            q[1] as f64 / n,
            q[2] as f64 / n,
            q[3] as f64 / n,
        )
    };
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

/// SH colour for degree 0 or 1 only.
fn sh_color(coeffs: &[f32], n: usize, d: [f64; 3]) -> [f64; 3] {
    let c0 = 0.28209479177387814;
    let c1 = 0.4886025119029199;
    let mut out = [0.0; 3];
    for ch in 0..3 {
        let s = &coeffs[ch * n..(ch + 1) * n];
        let mut v = c0 * s[0] as f64;
        if n >= 4 {
            v += -c1 * d[1] * s[1] as f64 + c1 * d[2] * s[2] as f64 - c1 * d[0] * s[3] as f64;
        }
        out[ch] = (v + 0.5).clamp(0.0, 1.0);
    }
    out
}

fn splats(scene: &GaussianScene, cam: &Camera) -> Vec<RefSplat> {
    let w2c = cam.world_to_camera;
    let rot = [
        [w2c[(0, 0)], w2c[(0, 1)], w2c[(0, 2)]],
        [w2c[(1, 0)], w2c[(1, 1)], w2c[(1, 2)]],
        [w2c[(2, 0)], w2c[(2, 1)], w2c[(2, 2)]],
    ];
    let t = [w2c[(0, 3)], w2c[(1, 3)], w2c[(2, 3)]];
    // Camera centre: -R^T t.
    let eye = [
        -(rot[0][0] * t[0] + rot[1][0] * t[1] + rot[2][0] * t[2]),
        -(rot[0][1] * t[0] + rot[1][1] * t[1] + rot[2][1] * t[2]),
        -(rot[0][2] * t[0] + rot[1][2] * t[1] + rot[2][2] * t[2]),
    ];
    let n = scene.sh_coeffs;
    let mut out = Vec::new();
    for i in 0..scene.len() {
        let m = scene.means[i].map(|v| v as f64);
        let pc: Vec<f64> = (0..3)
            .map(|r| rot[r][0] * m[0] + rot[r][1] * m[1] + rot[r][2] * m[2] + t[r])
            .collect();
        let z = pc[2];
        if z < cam.near || z > cam.far {
            continue;
        }
        let opacity = 1.0 / (1.0 + (-(scene.opacity_logits[i] as f64)).exp());
        let s = scene.log_scales[i].map(|v| (v as f64).exp());
        let r = quat_matrix(scene.rotations[i]);
        let rs = [
            [r[0][0] * s[0], r[0][1] * s[1], r[0][2] * s[2]],
            [r[1][0] * s[0], r[1][1] * s[1], r[1][2] * s[2]],
            [r[2][0] * s[0], r[2][1] * s[1], r[2][2] * s[2]],
        ];
        let sigma = mat3_mul(&rs, &transpose(&rs));
        let jac = [
            [cam.fx / z, 0.0, -cam.fx * pc[0] / (z * z)],
            [0.0, cam.fy / z, -cam.fy * pc[1] / (z * z)],
            [0.0, 0.0, 0.0],
        ];
        let tm = mat3_mul(&jac, &rot);
        let c = mat3_mul(&mat3_mul(&tm, &sigma), &transpose(&tm));
        let (a, b, d) = (c[0][0] + 0.3, c[0][1], c[1][1] + 0.3);
        let det = a * d - b * b;
        if det <= 0.0 {
            continue;
        }
        let dir = [m[0] - eye[0], m[1] - eye[1], m[2] - eye[2]];
        let len = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
        let dir = if len > 0.0 {
            dir.map(|v| v / len)
        } else {
            [0.0, 0.0, 1.0]
        };
        out.push(RefSplat {
            index: i,
            u: cam.fx * pc[0] / z + cam.cx,
            v: cam.fy * pc[1] / z + cam.cy,
            inv: [d / det, -b / det, a / det],
            opacity,
            z,
            color: sh_color(scene.sh_of(i), n, dir),
        });
    }
    out.sort_by(|p, q| p.z.partial_cmp(&q.z).unwrap().then(p.index.cmp(&q.index)));
    out
}

pub fn render(scene: &GaussianScene, cam: &Camera) -> Vec<RefPixel> {
    let sp = splats(scene, cam);
    let mut pixels = Vec::new();
    for y in 0..cam.height {
        for x in 0..cam.width {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut t = 1.0;
            let mut px_out = RefPixel {
                rgba: [0.0; 4],
                depth: 0.0,
                first_hit: -1,
                weights: Vec::new(),
            };
            let mut zsum = 0.0;
            let mut best = (-1i64, 0.0);
            for s in &sp {
                let (dx, dy) = (px - s.u, py - s.v);
                let q = s.inv[0] * dx * dx + 2.0 * s.inv[1] * dx * dy + s.inv[2] * dy * dy;
                let mut alpha = s.opacity * (-0.5 * q).exp();
                if alpha > 0.99 {
                    alpha = 0.99;
                }
                if alpha < 1.0 / 255.0 {
                    continue;
                }
                let w = alpha * t;
                px_out.weights.push((s.index, w));
                for c in 0..3 {
                    px_out.rgba[c] += w * s.color[c];
                }
                px_out.rgba[3] += w;
                zsum += w * s.z;
                if px_out.first_hit < 0 && px_out.rgba[3] > 0.5 {
                    px_out.first_hit = s.index as i64;
                }
                if w > best.1 {
                    best = (s.index as i64, w);
                }
                t *= 1.0 - alpha;
            }
            if px_out.first_hit < 0 {
                px_out.first_hit = best.0;
            }
            if px_out.rgba[3] > 0.0 {
                px_out.depth = zsum / px_out.rgba[3];
            }
            pixels.push(px_out);
        }
    }
    pixels
}

pub fn features(pixels: &[RefPixel], f: &[f64], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; pixels.len() * dim];
    for (p, px) in pixels.iter().enumerate() {
        for &(i, w) in &px.weights {
            for c in 0..dim {
                out[p * dim + c] += w * f[i * dim + c];
            }
        }
    }
    out
}

/// Random scene of up to `max_n` Gaussians in front of [`test_camera`].
pub fn random_scene(rng: &mut impl Rng, max_n: usize, sh_degree: usize) -> GaussianScene {
    let coeffs = [1, 4, 9, 16][sh_degree];
    let n = rng.gen_range(1..=max_n);
    let gaussians = (0..n).map(|_| RawGaussian {
        mean: [
            rng.gen_range(-0.6..0.6),
            rng.gen_range(-0.6..0.6),
            rng.gen_range(2.0..4.0),
        ],
        rotation: [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ],
        log_scale: [
            rng.gen_range(-3.0..-1.2),
            rng.gen_range(-3.0..-1.2),
            rng.gen_range(-3.0..-1.2),
        ],
        opacity_logit: rng.gen_range(-2.0..5.0),
        sh: (0..3 * coeffs).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    });
    GaussianScene::from_gaussians(coeffs, gaussians).unwrap()
}

/// Camera at the origin looking down +z with world -y up.
pub fn test_camera(size: u32) -> Camera {
    use nalgebra::Vector3;
    Camera::look_at(
        Vector3::zeros(),
        Vector3::z(),
        -Vector3::y(),
        0.7,
        size,
        size,
    )
    .unwrap()
}

/// Random scene of exactly `n` Gaussians.
pub fn random_scene_of(rng: &mut impl Rng, n: usize, sh_degree: usize) -> GaussianScene {
    loop {
        let s = random_scene(rng, n, sh_degree);
        if s.len() == n {
            return s;
        }
    }
}
