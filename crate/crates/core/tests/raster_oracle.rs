mod support;

use gsseg_core::raster::{render, render_features, render_features_grad};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::reference;

#[test]
fn production_kernels_match_naive_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cam = reference::test_camera(32);
    let mut worst = 0.0f64;
    for trial in 0..120 {
        let scene = reference::random_scene(&mut rng, 10, trial % 2);
        let ours = render(&scene, &cam);
        let naive = reference::render(&scene, &cam);
        let dim = 3;
        let f: Vec<f64> = (0..scene.len() * dim)
            .map(|_| rng.gen_range(-2.0..2.0))
            .collect();
        let feats = ours.weights.features(&f, dim).unwrap();
        let naive_feats = reference::features(&naive, &f, dim);
        for (p, px) in naive.iter().enumerate() {
            for c in 0..4 {
                worst = worst.max((ours.rgba[p][c] - px.rgba[c]).abs());
            }
            worst = worst.max((ours.depth[p] - px.depth).abs());
            assert_eq!(ours.first_hit[p], px.first_hit, "trial {trial} pixel {p}");
        }
        for (a, b) in feats.iter().zip(&naive_feats) {
            worst = worst.max((a - b).abs());
        }
    }
    assert!(worst <= 1e-4, "max abs diff {worst}");
}

#[test]
fn feature_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cam = reference::test_camera(16);
    let h = 1e-3;
    for _ in 0..25 {
        let scene = reference::random_scene(&mut rng, 5, 0);
        let n = scene.len();
        let f: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let target: Vec<f64> = (0..cam.pixel_count())
            .map(|_| rng.gen_range(0.0..1.0))
            .collect();
        let loss = |f: &[f64]| -> f64 {
            let img = render_features(&scene, &cam, f, 1).unwrap();
            0.5 * img
                .iter()
                .zip(&target)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        };
        let img = render_features(&scene, &cam, &f, 1).unwrap();
        let residual: Vec<f64> = img.iter().zip(&target).map(|(a, b)| a - b).collect();
        let grad = render_features_grad(&scene, &cam, &f, 1, &residual).unwrap();
        for i in 0..n {
            let mut up = f.clone();
            up[i] += h;
            let mut down = f.clone();
            down[i] -= h;
            let fd = (loss(&up) - loss(&down)) / (2.0 * h);
            let rel = (grad[i] - fd).abs() / fd.abs().max(grad[i].abs()).max(1e-8);
            assert!(
                rel < 1e-3 || (grad[i] - fd).abs() < 1e-9,
                "gaussian {i}: {} vs {fd}",
                grad[i]
            );
        }
    }
}

#[test]
fn feature_render_is_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cam = reference::test_camera(24);
    for _ in 0..100 {
        let scene = reference::random_scene(&mut rng, 8, 0);
        let dim = 2;
        let n = scene.len() * dim;
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (s, t) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| s * x + t * y).collect();
        let ra = render_features(&scene, &cam, &a, dim).unwrap();
        let rb = render_features(&scene, &cam, &b, dim).unwrap();
        let rm = render_features(&scene, &cam, &mix, dim).unwrap();
        for k in 0..rm.len() {
            assert!((rm[k] - (s * ra[k] + t * rb[k])).abs() < 1e-5);
        }
    }
}
