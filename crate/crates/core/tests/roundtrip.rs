use std::sync::Arc;

use gsseg_core::autoseg::*;
use gsseg_core::eval::selection_to_mask;
use gsseg_core::image_io::save_mask;
use gsseg_core::ply::{export_selection, load_scene, save_scene};
use gsseg_core::synth;
use gsseg_core::views::turnaround_views;
use gsseg_core::Selection3D;
use nalgebra::Vector3;

#[test]
fn scene_and_selection_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ls = synth::three_clusters(200);
    let path = dir.path().join("scene.ply");
    save_scene(&ls.scene, &path).unwrap();
    let back = load_scene(&path).unwrap();
    assert_eq!(back, ls.scene);
    let bytes = std::fs::read(&path).unwrap();
    save_scene(&back, &path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);

    let sel = ls.selection_of(synth::TARGET);
    let gsel = dir.path().join("sel.gsel");
    sel.save(&gsel).unwrap();
    assert_eq!(Selection3D::load(&gsel).unwrap(), sel);

    let obj = dir.path().join("obj.ply");
    assert_eq!(export_selection(&ls.scene, &sel, &obj, false).unwrap(), 200);
    let (expected, _) = ls.scene.subset(&sel).unwrap();
    assert_eq!(load_scene(&obj).unwrap(), expected);
    assert_eq!(
        export_selection(&ls.scene, &sel, &obj, true).unwrap(),
        ls.scene.len() - 200
    );
}

#[test]
fn job_directory_replay_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let ls = synth::three_clusters(200);
    let truth = ls.selection_of(synth::TARGET);
    let cam = synth::orbit_camera(Vector3::zeros(), 4.0, 0.0, 0.3, 0.9, 40).unwrap();
    let mask = selection_to_mask(&ls.scene, &truth, &cam);
    let seq = turnaround_views(&ls.scene, &mask, 6).unwrap();
    let scene = Arc::new(ls.scene.clone());
    let mut job =
        build_track_job(scene.clone(), vec![ReferenceMask::new(&scene, mask)], seq).unwrap();
    run_provider(&mut job, &OracleProvider { truth }).unwrap();
    let tracked = job.tracked_masks().unwrap();

    let manifest = write_job_dir(&job, dir.path()).unwrap();
    assert_eq!(manifest.frame_count, 6);
    assert_eq!(manifest.frames[3], "frames/003.png");
    assert_eq!(manifest.injections[0].position, 0);
    for (k, m) in tracked.iter().enumerate() {
        save_mask(m, dir.path().join("masks").join(format!("{k:03}.png"))).unwrap();
    }
    let mut replay_job = job.clone();
    replay_job.invalidate_from(0);
    run_provider(
        &mut replay_job,
        &ReplayProvider {
            dir: dir.path().to_path_buf(),
        },
    )
    .unwrap();
    assert_eq!(replay_job.tracked_masks().unwrap(), tracked);
    assert_eq!(
        read_job_masks(dir.path(), &job, 2).unwrap(),
        tracked[2..].to_vec()
    );
}

#[cfg(unix)]
#[test]
fn command_provider_speaks_the_job_protocol() {
    use std::os::unix::fs::PermissionsExt;
    let dir = tempfile::tempdir().unwrap();
    // Copies each frame's alpha-free stand-in: marks every pixel foreground.
    let script = dir.path().join("provider.sh");
    std::fs::write(
        &script,
        "#!/bin/sh\nset -e\njob=\"$1\"\nn=$(sed -n 's/.*\"frame_count\": *\\([0-9]*\\).*/\\1/p' \"$job/manifest.json\")\ni=0\nwhile [ $i -lt $n ]; do f=$(printf '%03d' $i); cp \"$job/refs/0_mask.png\" \"$job/masks/$f.png\"; i=$((i+1)); done\necho '{\"status\":\"ok\"}' > \"$job/done.json\"\n",
    )
    .unwrap();
    std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();

    let ls = synth::three_clusters(100);
    let truth = ls.selection_of(synth::TARGET);
    let cam = synth::orbit_camera(Vector3::zeros(), 4.0, 0.0, 0.3, 0.9, 32).unwrap();
    let mask = selection_to_mask(&ls.scene, &truth, &cam);
    let seq = turnaround_views(&ls.scene, &mask, 4).unwrap();
    let scene = Arc::new(ls.scene.clone());
    let mut job = build_track_job(
        scene.clone(),
        vec![ReferenceMask::new(&scene, mask.clone())],
        seq,
    )
    .unwrap();
    let provider = JobDirProvider::command(
        dir.path().join("jobs"),
        vec![script.display().to_string()],
        std::time::Duration::from_secs(30),
    );
    run_provider(&mut job, &provider).unwrap();
    for m in job.tracked_masks().unwrap() {
        assert_eq!(m.bits, mask.bits);
    }

    let failing = JobDirProvider::command(
        dir.path().join("jobs"),
        vec!["false".into()],
        std::time::Duration::from_secs(30),
    );
    job.invalidate_from(0);
    let err = run_provider(&mut job, &failing).unwrap_err();
    assert!(matches!(err, gsseg_core::Error::Provider { .. }));
    assert!(job.tracked.iter().all(Option::is_none));
}
