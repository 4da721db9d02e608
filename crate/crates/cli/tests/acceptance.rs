//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.
//!
//! Run with `cargo test -p gsseg-cli --test acceptance`.

#[path = "../../core/tests/support/reference.rs"]
mod reference;

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use gsseg_core::autoseg::{
    build_track_job, read_job_masks, run_provider, segment_auto, write_job_dir, AutosegConfig,
    GeometricProvider, OracleProvider, ReferenceMask, ReplayProvider,
};
use gsseg_core::eval::{
    correction_experiment, mask_metrics, run_scenes, selection3d_metrics, selection_to_mask,
    BenchConfig, BenchScene, GroundTruth, MetricKind, ProviderSpec,
};
use gsseg_core::image_io::{encode_png_gray, mask_to_image, save_mask};
use gsseg_core::orientation::{orient_scene, orientation_transform, AxisMapping};
use gsseg_core::selection::{
    combine_mask2d, combine_selection3d, depth_project, frustum_project, DepthTolerance,
};
use gsseg_core::views::{
    best_matching_view, jaccard, lift_first_hits, turnaround_views, ViewSequence, ViewSource,
};
use gsseg_core::{ply, raster, synth, Camera, Mask2D, SelectMode, Selection3D};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn user_camera(size: u32, azimuth: f64, elevation: f64) -> Camera {
    synth::orbit_camera(Vector3::zeros(), 4.0, azimuth, elevation, 0.9, size).unwrap()
}

fn rasterizer_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let cam = reference::test_camera(32);
    let (mut worst, mut hit_mismatch) = (0.0f64, 0usize);
    let trials = 120;
    for t in 0..trials {
        let scene = reference::random_scene(&mut rng, 10, t % 2);
        let ours = raster::render(&scene, &cam);
        let naive = reference::render(&scene, &cam);
        let f: Vec<f64> = (0..scene.len() * 3)
            .map(|_| rng.gen_range(-2.0..2.0))
            .collect();
        let feats = ours.weights.features(&f, 3).unwrap();
        for (a, b) in feats.iter().zip(reference::features(&naive, &f, 3)) {
            worst = worst.max((a - b).abs());
        }
        for (p, px) in naive.iter().enumerate() {
            for c in 0..4 {
                worst = worst.max((ours.rgba[p][c] - px.rgba[c]).abs());
            }
            worst = worst.max((ours.depth[p] - px.depth).abs());
            hit_mismatch += (ours.first_hit[p] != px.first_hit) as usize;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-4 && secs < 30.0,
        format!("{trials} scenes, max abs diff {worst:.2e}, first-hit mismatches {hit_mismatch}, {secs:.2} s"),
    )
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let cam = reference::test_camera(16);
    let h = 1e-3;
    let mut worst = 0.0f64;
    let scenes = 25;
    for _ in 0..scenes {
        let scene = reference::random_scene_of(&mut rng, 5, 0);
        let f: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..1.0)).collect();
        let target: Vec<f64> = (0..cam.pixel_count())
            .map(|_| rng.gen_range(0.0..1.0))
            .collect();
        let loss = |f: &[f64]| {
            let img = raster::render_features(&scene, &cam, f, 1).unwrap();
            0.5 * img
                .iter()
                .zip(&target)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        };
        let img = raster::render_features(&scene, &cam, &f, 1).unwrap();
        let residual: Vec<f64> = img.iter().zip(&target).map(|(a, b)| a - b).collect();
        let grad = raster::render_features_grad(&scene, &cam, &f, 1, &residual).unwrap();
        for i in 0..5 {
            let (mut up, mut down) = (f.clone(), f.clone());
            up[i] += h;
            down[i] -= h;
            let fd = (loss(&up) - loss(&down)) / (2.0 * h);
            // Gaussians off screen have zero gradient on both sides.
            if fd == 0.0 && grad[i] == 0.0 {
                continue;
            }
            worst = worst.max((grad[i] - fd).abs() / fd.abs().max(grad[i].abs()));
        }
    }
    outcome(
        worst < 1e-3,
        format!("{scenes} scenes of 5 Gaussians at 16x16, max relative error {worst:.2e}"),
    )
}

fn linearity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let cam = reference::test_camera(24);
    let mut worst = 0.0f64;
    let trials = 100;
    for _ in 0..trials {
        let scene = reference::random_scene(&mut rng, 8, 1);
        let n = scene.len() * 2;
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (s, t) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| s * x + t * y).collect();
        let ra = raster::render_features(&scene, &cam, &a, 2).unwrap();
        let rb = raster::render_features(&scene, &cam, &b, 2).unwrap();
        let rm = raster::render_features(&scene, &cam, &mix, 2).unwrap();
        for k in 0..rm.len() {
            worst = worst.max((rm[k] - (s * ra[k] + t * rb[k])).abs());
        }
    }
    outcome(
        worst < 1e-5,
        format!("{trials} trials, max deviation {worst:.2e}"),
    )
}

fn truth_table(mode: SelectMode, a: bool, b: bool) -> bool {
    match mode {
        SelectMode::N => b,
        SelectMode::A => a || b,
        SelectMode::S => a && !b,
        SelectMode::I => a && b,
    }
}

fn selection_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let modes = [SelectMode::N, SelectMode::A, SelectMode::S, SelectMode::I];
    let cam = Camera::look_at(Vector3::zeros(), Vector3::z(), -Vector3::y(), 1.0, 16, 12).unwrap();
    let (mut mismatches, cases) = (0usize, 1000);
    for k in 0..cases {
        let mode = modes[k % 4];
        let p = rng.gen_range(0.0..1.0);
        let a: Vec<bool> = (0..192).map(|_| rng.gen_bool(p)).collect();
        let b: Vec<bool> = (0..192).map(|_| rng.gen_bool(p)).collect();
        let ma = Mask2D::from_bits(cam.clone(), a.clone()).unwrap();
        let mb = Mask2D::from_bits(cam.clone(), b.clone()).unwrap();
        let m = combine_mask2d(&ma, &mb, mode).unwrap();
        let n = rng.gen_range(0..500);
        let sa: Vec<bool> = (0..n).map(|_| rng.gen_bool(p)).collect();
        let sb: Vec<bool> = (0..n).map(|_| rng.gen_bool(p)).collect();
        let s = combine_selection3d(
            &Selection3D { bits: sa.clone() },
            &Selection3D { bits: sb.clone() },
            mode,
        )
        .unwrap();
        mismatches += (0..192)
            .filter(|&i| m.bits[i] != truth_table(mode, a[i], b[i]))
            .count();
        mismatches += (0..n)
            .filter(|&i| s.bits[i] != truth_table(mode, sa[i], sb[i]))
            .count();
    }
    outcome(
        mismatches == 0,
        format!("{cases} mask pairs and {cases} bitset pairs, {mismatches} mismatches"),
    )
}

fn precision_recall(pred: &Selection3D, truth: &Selection3D) -> (f64, f64) {
    let tp = pred.iter_ones().filter(|&i| truth.bits[i]).count() as f64;
    (
        tp / pred.count().max(1) as f64,
        tp / truth.count().max(1) as f64,
    )
}

fn depth_vs_frustum() -> Outcome {
    let ls = synth::two_planes(30);
    let cam = Camera::look_at(
        Vector3::new(0.0, 0.0, -1.0),
        Vector3::z(),
        -Vector3::y(),
        0.9,
        64,
        64,
    )
    .unwrap();
    let full = Mask2D::full(cam);
    let frustum = frustum_project(&ls.scene, &full);
    let depth = depth_project(&ls.scene, &full, DepthTolerance::Relative(0.1)).unwrap();
    let (front, back) = (ls.selection_of(0), ls.selection_of(1));
    let frustum_both = front.is_subset_of(&frustum) && back.is_subset_of(&frustum);
    let (p, r) = precision_recall(&depth, &front);
    outcome(
        frustum_both && p == 1.0 && r == 1.0,
        format!(
            "frustum {} of {} Gaussians; depth precision {p:.3} recall {r:.3} on the front plane",
            frustum.count(),
            ls.scene.len()
        ),
    )
}

fn ordering() -> Outcome {
    let mut ok = true;
    let mut checked = 0;
    let mut jaccard_ok = true;
    for ls in [
        synth::three_clusters(300),
        synth::occluded_target(300),
        synth::hidden_distractor(300),
    ] {
        let cams: Vec<Camera> = (0..12)
            .map(|k| {
                synth::orbit_camera(Vector3::zeros(), 4.0, k as f64 * 0.52, 0.25, 0.9, 48).unwrap()
            })
            .collect();
        let seq = ViewSequence {
            cameras: cams.clone(),
            source: ViewSource::TrainingSubset,
            center: None,
        };
        let vis: Vec<Vec<bool>> = cams
            .iter()
            .map(|c| raster::visibility(&ls.scene, c))
            .collect();
        for (k, cam) in cams.iter().enumerate() {
            ok &= best_matching_view(&ls.scene, cam, &seq).unwrap() == k;
            checked += 1;
            let a: BTreeSet<usize> = (0..vis[k].len()).filter(|&i| vis[k][i]).collect();
            let j = (k + 1) % cams.len();
            let b: BTreeSet<usize> = (0..vis[j].len()).filter(|&i| vis[j][i]).collect();
            let oracle = a.intersection(&b).count() as f64 / a.union(&b).count() as f64;
            jaccard_ok &= jaccard(&vis[k], &vis[j]) == oracle;
        }
    }
    outcome(ok && jaccard_ok, format!("{checked} annotated views over 3 scenes, all recovered: {ok}; jaccard matches set oracle: {jaccard_ok}"))
}

fn turnaround_geometry() -> Outcome {
    let ls = synth::three_clusters(400);
    let user = user_camera(64, 0.3, 0.35);
    let mask = selection_to_mask(&ls.scene, &ls.selection_of(synth::TARGET), &user);
    let seq = turnaround_views(&ls.scene, &mask, 50).unwrap();
    let pts = lift_first_hits(&ls.scene, &mask);
    let c = pts.iter().sum::<Vector3<f64>>() / pts.len() as f64;
    let r0 = (user.position() - c).norm();
    let up = user.up();
    let e1 = (seq.cameras[0].position() - c).normalize();
    let e2 = up.cross(&e1);
    let tau = std::f64::consts::TAU;
    let (mut dist, mut spacing, mut ray) = (0.0f64, 0.0f64, 0.0f64);
    for (k, cam) in seq.cameras.iter().enumerate() {
        let d = cam.position() - c;
        dist = dist.max((d.norm() - r0).abs() / r0);
        let az = d.dot(&e2).atan2(d.dot(&e1)).rem_euclid(tau);
        let diff = (az - tau * k as f64 / 50.0).abs();
        spacing = spacing.max(diff.min(tau - diff));
        ray = ray.max(
            cam.forward()
                .cross(&(c - cam.position()).normalize())
                .norm(),
        );
    }
    outcome(
        seq.len() == 50 && dist <= 1e-5 && spacing <= 1e-6 && ray <= 1e-4,
        format!("m=50: distance rel err {dist:.1e}, azimuth err {spacing:.1e} rad, ray offset {ray:.1e}"),
    )
}

fn end_to_end() -> Outcome {
    let ls = synth::three_clusters(1200);
    let truth = ls.selection_of(synth::TARGET);
    let mask =
        selection_to_mask(&ls.scene, &truth, &user_camera(96, 0.0, 0.3)).with_occlusion_free(true);
    let config = AutosegConfig {
        m: 16,
        ..AutosegConfig::default()
    };
    let start = Instant::now();
    let seg = segment_auto(
        &ls.scene,
        vec![mask],
        &config,
        &OracleProvider {
            truth: truth.clone(),
        },
    )
    .unwrap();
    let secs = start.elapsed().as_secs_f64();
    let iou = selection3d_metrics(seg.selection(), &truth).unwrap().iou;
    outcome(
        ls.scene.len() >= 3000 && iou >= 0.95 && secs <= 5.0,
        format!(
            "{} Gaussians, m=16, 3D IoU {iou:.4}, {secs:.2} s",
            ls.scene.len()
        ),
    )
}

/// Outline of the target as if nothing occluded it.
fn amodal_mask(ls: &synth::LabeledScene, cam: &Camera) -> Mask2D {
    let (target, _) = ls.scene.subset(&ls.selection_of(synth::TARGET)).unwrap();
    selection_to_mask(&target, &Selection3D::all(target.len()), cam).with_occlusion_free(true)
}

fn presegment_trend() -> Outcome {
    let ls = synth::occluded_target(1200);
    let truth = ls.selection_of(synth::TARGET);
    let mask = amodal_mask(&ls, &user_camera(96, 0.0, 0.3));
    let run = |presegment| {
        let config = AutosegConfig {
            m: 16,
            presegment,
            ..AutosegConfig::default()
        };
        let seg = segment_auto(
            &ls.scene,
            vec![mask.clone()],
            &config,
            &GeometricProvider::new(),
        )
        .unwrap();
        selection3d_metrics(seg.selection(), &truth).unwrap().iou
    };
    let (on, off) = (run(true), run(false));
    outcome(
        on >= off,
        format!("geometric provider, m=16: IoU preseg on {on:.4}, off {off:.4}"),
    )
}

fn view_count_trend() -> Outcome {
    let mut scenes = Vec::new();
    for (id, ls) in [
        ("three_clusters", synth::three_clusters(800)),
        ("occluded_target", synth::occluded_target(800)),
        ("hidden_distractor", synth::hidden_distractor(800)),
    ] {
        let truth = ls.selection_of(synth::TARGET);
        let mask = amodal_mask(&ls, &user_camera(96, 0.0, 0.3));
        scenes.push(BenchScene {
            id: id.into(),
            scene: ls.scene,
            inputs: vec![mask],
            gt: GroundTruth {
                selection: Some(truth),
                views: vec![],
            },
            training_cameras: None,
        });
    }
    let configs: Vec<BenchConfig> = [10, 20, 50]
        .map(|m| BenchConfig {
            m,
            provider: ProviderSpec::Oracle,
            ..BenchConfig::default()
        })
        .to_vec();
    let work = tempfile::tempdir().unwrap();
    let report = run_scenes(&scenes, &configs, work.path());
    let ious: Vec<f64> = configs
        .iter()
        .map(|c| {
            report
                .mean_iou(MetricKind::Selection3D, c)
                .unwrap_or(f64::NAN)
        })
        .collect();
    let elapsed: Vec<f64> = configs
        .iter()
        .map(|c| {
            report
                .records
                .iter()
                .filter(|r| &r.config == c)
                .map(|r| r.elapsed)
                .sum()
        })
        .collect();
    let iou_ok = ious.windows(2).all(|w| w[1] >= w[0]);
    let time_ok = elapsed.windows(2).all(|w| w[1] > w[0]);
    outcome(
        report.notices.is_empty() && iou_ok && time_ok,
        format!(
            "mean IoU m=10/20/50: {:.4}/{:.4}/{:.4}; total elapsed {:.2}/{:.2}/{:.2} s",
            ious[0], ious[1], ious[2], elapsed[0], elapsed[1], elapsed[2]
        ),
    )
}

fn correction_efficacy() -> Outcome {
    let ls = synth::hidden_distractor(1200);
    let truth = ls.selection_of(synth::TARGET);
    // Corrupted run: the provider's object memory wrongly includes the
    // panel hidden behind the target.
    let corrupt = combine_selection3d(&truth, &ls.selection_of(1), SelectMode::A).unwrap();
    let provider = GeometricProvider::with_presegment(corrupt);
    let mask = selection_to_mask(&ls.scene, &truth, &user_camera(96, 0.0, 0.1));
    let config = AutosegConfig {
        m: 16,
        presegment: false,
        ..AutosegConfig::default()
    };
    let r = correction_experiment(&ls.scene, &truth, vec![mask], &config, &provider).unwrap();
    outcome(
        r.iou_after - r.iou_before >= 0.1,
        format!(
            "worst view {} (2D IoU {:.3}); 3D IoU {:.4} -> {:.4}",
            r.position, r.worst_frame_iou, r.iou_before, r.iou_after
        ),
    )
}

fn orientation() -> Outcome {
    let ls = synth::tilted_ground(30, 0.4);
    let sel = ls.selection_of(0);
    let mapping: AxisMapping = "pc3=z".parse().unwrap();
    let (r, t) = orientation_transform(&ls.scene, &sel, mapping).unwrap();
    let pts: Vec<Vector3<f64>> = sel.iter_ones().map(|i| ls.scene.mean(i)).collect();
    let c = pts.iter().sum::<Vector3<f64>>() / pts.len() as f64;
    let moved = (r * c + t - c).norm();
    let out = orient_scene(&ls.scene, &sel, mapping).unwrap();
    let q: Vec<Vector3<f64>> = sel.iter_ones().map(|i| out.mean(i)).collect();
    let n = q.len() as f64;
    let m = q.iter().sum::<Vector3<f64>>() / n;
    let var = |k: usize| q.iter().map(|p| (p[k] - m[k]).powi(2)).sum::<f64>() / n;
    let ratio = var(2) / (var(0) + var(1) + var(2));
    outcome(
        ratio <= 1e-6 && moved <= 1e-9,
        format!("z variance share {ratio:.2e}, centroid displacement {moved:.1e}"),
    )
}

fn metrics_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let cam = Camera::look_at(Vector3::zeros(), Vector3::z(), -Vector3::y(), 1.0, 10, 10).unwrap();
    let mut mismatches = 0;
    let cases = 1000;
    for _ in 0..cases {
        let p = rng.gen_range(0.0..1.0);
        let a: Vec<bool> = (0..100).map(|_| rng.gen_bool(p)).collect();
        let b: Vec<bool> = (0..100).map(|_| rng.gen_bool(p)).collect();
        let tp = (0..100).filter(|&i| a[i] && b[i]).count();
        let union = (0..100).filter(|&i| a[i] || b[i]).count();
        let agree = (0..100).filter(|&i| a[i] == b[i]).count();
        let iou = if union == 0 {
            1.0
        } else {
            tp as f64 / union as f64
        };
        let acc = agree as f64 / 100.0;
        let m2 = mask_metrics(
            &Mask2D::from_bits(cam.clone(), a.clone()).unwrap(),
            &Mask2D::from_bits(cam.clone(), b.clone()).unwrap(),
        )
        .unwrap();
        let m3 = selection3d_metrics(&Selection3D { bits: a }, &Selection3D { bits: b }).unwrap();
        mismatches +=
            ((m2.iou, m2.acc) != (iou, acc)) as usize + ((m3.iou, m3.acc) != (iou, acc)) as usize;
    }
    let sel = |b: &[bool]| Selection3D { bits: b.to_vec() };
    let same = selection3d_metrics(&sel(&[true, false, true]), &sel(&[true, false, true]))
        .unwrap()
        .iou;
    let disjoint = selection3d_metrics(&sel(&[true, false, false]), &sel(&[false, true, false]))
        .unwrap()
        .iou;
    let third = selection3d_metrics(&sel(&[true, true, false]), &sel(&[false, true, true]))
        .unwrap()
        .iou;
    let hand = same == 1.0 && disjoint == 0.0 && third == 1.0 / 3.0;
    outcome(
        mismatches == 0 && hand,
        format!("{cases} random cases, {mismatches} mismatches; hand examples {same}, {disjoint}, {third:.6}"),
    )
}

fn round_trips() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let ls = synth::three_clusters(200);
    let path = dir.path().join("scene.ply");
    ply::save_scene(&ls.scene, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    let loaded = ply::load_scene(&path).unwrap();
    ply::save_scene(&loaded, &path).unwrap();
    let scene_ok = loaded == ls.scene && std::fs::read(&path).unwrap() == bytes;

    let sel = ls.selection_of(synth::TARGET);
    let gsel = dir.path().join("sel.gsel");
    sel.save(&gsel).unwrap();
    let sel_ok = Selection3D::load(&gsel).unwrap() == sel;

    let cam = user_camera(40, 0.0, 0.3);
    let mask = selection_to_mask(&ls.scene, &sel, &cam);
    let seq = turnaround_views(&ls.scene, &mask, 6).unwrap();
    let scene = Arc::new(ls.scene.clone());
    let mut job =
        build_track_job(scene.clone(), vec![ReferenceMask::new(&scene, mask)], seq).unwrap();
    run_provider(&mut job, &OracleProvider { truth: sel }).unwrap();
    let tracked = job.tracked_masks().unwrap();
    let jd = dir.path().join("job");
    write_job_dir(&job, &jd).unwrap();
    for (k, m) in tracked.iter().enumerate() {
        save_mask(m, jd.join("masks").join(format!("{k:03}.png"))).unwrap();
    }
    let mut replay = job.clone();
    replay.invalidate_from(0);
    run_provider(&mut replay, &ReplayProvider { dir: jd.clone() }).unwrap();
    let replay_ok = replay.tracked_masks().unwrap() == tracked
        && read_job_masks(&jd, &job, 0).unwrap() == tracked;
    outcome(
        scene_ok && sel_ok && replay_ok,
        format!("scene {scene_ok}, selection sidecar {sel_ok}, job-directory replay {replay_ok}"),
    )
}

fn cli_service_parity() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let ls = synth::three_clusters(400);
    let scene_path = dir.path().join("scene.ply");
    ply::save_scene(&ls.scene, &scene_path).unwrap();
    let cam = user_camera(64, 0.4, 0.3);
    let mask = selection_to_mask(&ls.scene, &ls.selection_of(synth::TARGET), &cam);
    let cam_path = dir.path().join("cam.json");
    cam.save(&cam_path).unwrap();
    let mask_path = dir.path().join("mask.png");
    save_mask(&mask, &mask_path).unwrap();
    let out = dir.path().join("cli.gsel");
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_gsseg"))
        .args([
            "segment",
            "--scene",
            &s(&scene_path),
            "--mask",
            &s(&mask_path),
            "--camera",
            &s(&cam_path),
        ])
        .args([
            "--occlusion-free",
            "--m",
            "16",
            "--provider",
            "geometric",
            "--out",
            &s(&out),
        ])
        .output()
        .unwrap();
    if !status.status.success() {
        return outcome(
            false,
            format!(
                "segment failed: {}",
                String::from_utf8_lossy(&status.stderr)
            ),
        );
    }
    let cli = Selection3D::load(&out).unwrap();

    let service = tokio::runtime::Runtime::new()
        .unwrap()
        .block_on(service_autoseg(&scene_path, &cam, &mask));
    match service {
        Ok(sel) => outcome(
            sel == cli && cli.count() > 0,
            format!(
                "CLI {} selected, service {} selected, bit-identical: {}",
                cli.count(),
                sel.count(),
                sel == cli
            ),
        ),
        Err(e) => outcome(false, format!("service run failed: {e}")),
    }
}

async fn service_autoseg(scene: &Path, cam: &Camera, mask: &Mask2D) -> Result<Selection3D, String> {
    use axum::body::Body;
    use axum::http::Request;
    use http_body_util::BodyExt;
    use tower::ServiceExt;

    let app = gsseg_service::router(gsseg_service::AppState::new(Default::default()));
    let call = |method: &str, uri: String, body: Vec<u8>| {
        let app = app.clone();
        let req = Request::builder()
            .method(method)
            .uri(uri)
            .header("content-type", "application/json")
            .body(Body::from(body))
            .unwrap();
        async move {
            let res = app.oneshot(req).await.map_err(|e| e.to_string())?;
            let ok = res.status().is_success();
            let bytes = res
                .into_body()
                .collect()
                .await
                .map_err(|e| e.to_string())?
                .to_bytes()
                .to_vec();
            if ok {
                Ok(bytes)
            } else {
                Err(String::from_utf8_lossy(&bytes).into_owned())
            }
        }
    };
    let json = |v: serde_json::Value| serde_json::to_vec(&v).unwrap();
    let created: serde_json::Value = serde_json::from_slice(
        &call(
            "POST",
            "/sessions".into(),
            json(serde_json::json!({"scene_path": scene})),
        )
        .await?,
    )
    .unwrap();
    let sid = created["session_id"].as_str().unwrap().to_string();
    let camera: String = serde_json::to_string(cam)
        .unwrap()
        .bytes()
        .map(|b| {
            if b.is_ascii_alphanumeric() {
                (b as char).to_string()
            } else {
                format!("%{b:02X}")
            }
        })
        .collect();
    let png = encode_png_gray(&mask_to_image(mask)).unwrap();
    call(
        "PUT",
        format!("/sessions/{sid}/mask?occlusion_free=true&camera={camera}"),
        png,
    )
    .await?;
    let job: serde_json::Value = serde_json::from_slice(
        &call(
            "POST",
            format!("/sessions/{sid}/autoseg"),
            json(serde_json::json!({"m": 16, "provider": "geometric"})),
        )
        .await?,
    )
    .unwrap();
    call(
        "POST",
        format!("/sessions/{sid}/selection/combine"),
        json(serde_json::json!({"mode": "N", "source": "job", "job": job["job_id"]})),
    )
    .await?;
    let bytes = call("GET", format!("/sessions/{sid}/selection"), vec![]).await?;
    Selection3D::from_bytes(&bytes).map_err(|e| e.to_string())
}

fn main() {
    type Check = fn() -> Outcome;
    let criteria: [(&str, Check); 15] = [
        ("rasterizer oracle equivalence", rasterizer_oracle),
        ("gradient check", gradient_check),
        ("feature-render linearity", linearity),
        ("selection algebra", selection_algebra),
        ("depth vs frustum projection", depth_vs_frustum),
        ("view ordering", ordering),
        ("turnaround geometry", turnaround_geometry),
        ("end-to-end oracle segmentation", end_to_end),
        ("presegmentation benefit trend", presegment_trend),
        ("view-count trend", view_count_trend),
        ("correction efficacy", correction_efficacy),
        ("orientation", orientation),
        ("metrics oracle", metrics_oracle),
        ("round-trips", round_trips),
        ("CLI/service parity", cli_service_parity),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        failed += !result.pass as usize;
        println!(
            "[{}] {name}: {} ({:.1} s)",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
