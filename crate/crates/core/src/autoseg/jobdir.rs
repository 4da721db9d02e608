//! Filesystem exchange with external mask providers.
//!
//! A job directory holds `manifest.json`, the rendered frames under
//! `frames/`, and one frame/mask pair per injection under `refs/`. The
//! provider answers with `masks/NNN.png` and a `done.json` status file.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::job::TrackJob;
use super::provider::MaskProvider;
use crate::error::{Error, Result};
use crate::image_io;
use crate::selection::Mask2D;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub frame_count: usize,
    pub frames: Vec<String>,
    pub injections: Vec<ManifestInjection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestInjection {
    pub position: usize,
    pub frame: String,
    pub mask: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoneStatus {
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

/// Zero-padded file name of frame `k`.
pub fn frame_name(k: usize) -> String {
    format!("{k:03}.png")
}

/// Writes the frames and the injection schedule of `job` into `dir`.
/// Injections are listed in provider order.
pub fn write_job_dir(job: &TrackJob, dir: impl AsRef<Path>) -> Result<Manifest> {
    let dir = dir.as_ref();
    for sub in ["frames", "refs", "masks"] {
        fs::create_dir_all(dir.join(sub))?;
    }
    let mut frames = Vec::with_capacity(job.frame_count());
    for (k, img) in job.frames.iter().enumerate() {
        let rel = format!("frames/{}", frame_name(k));
        img.save(dir.join(&rel))?;
        frames.push(rel);
    }
    let mut injections = Vec::new();
    for (i, inj) in job.schedule().into_iter().enumerate() {
        let frame = format!("refs/{i}_frame.png");
        let mask = format!("refs/{i}_mask.png");
        inj.reference.render.save(dir.join(&frame))?;
        image_io::save_mask(&inj.reference.mask, dir.join(&mask))?;
        injections.push(ManifestInjection {
            position: inj.position,
            frame,
            mask,
        });
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        frame_count: job.frame_count(),
        frames,
        injections,
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

/// Reads `done.json`, if present.
pub fn read_done(dir: impl AsRef<Path>) -> Result<Option<DoneStatus>> {
    let path = dir.as_ref().join("done.json");
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(serde_json::from_str(&fs::read_to_string(path)?)?))
}

/// Loads `masks/NNN.png` for positions `from..` of `job`.
pub fn read_job_masks(dir: impl AsRef<Path>, job: &TrackJob, from: usize) -> Result<Vec<Mask2D>> {
    let masks = dir.as_ref().join("masks");
    (from..job.frame_count())
        .map(|k| {
            let path = masks.join(frame_name(k));
            if !path.exists() {
                return Err(Error::format(format!(
                    "provider wrote no mask for frame {k}"
                )));
            }
            image_io::load_mask(path, job.sequence.cameras[k].clone())
        })
        .collect()
}

/// External provider reached through a job directory.
///
/// Each run writes a fresh job under `root`. With a `command`, the program
/// is spawned with the job directory as its last argument; otherwise an
/// external watcher is expected to pick the job up. Either way the run
/// waits for `done.json` until `timeout`.
#[derive(Debug, Clone)]
pub struct JobDirProvider {
    pub name: String,
    pub root: PathBuf,
    pub command: Option<Vec<String>>,
    pub timeout: Duration,
    pub poll: Duration,
}

static JOB_COUNTER: AtomicU64 = AtomicU64::new(0);

impl JobDirProvider {
    pub fn watched(root: impl Into<PathBuf>, timeout: Duration) -> Self {
        Self {
            name: "jobdir".into(),
            root: root.into(),
            command: None,
            timeout,
            poll: Duration::from_millis(20),
        }
    }

    pub fn command(root: impl Into<PathBuf>, argv: Vec<String>, timeout: Duration) -> Self {
        Self {
            name: "cmd".into(),
            root: root.into(),
            command: Some(argv),
            timeout,
            poll: Duration::from_millis(20),
        }
    }

    fn fail(&self, message: impl Into<String>) -> Error {
        Error::Provider {
            provider: self.name.clone(),
            message: message.into(),
        }
    }

    fn fresh_dir(&self) -> PathBuf {
        let n = JOB_COUNTER.fetch_add(1, Ordering::Relaxed);
        self.root.join(format!("job-{}-{n}", std::process::id()))
    }

    fn wait(&self, dir: &Path) -> Result<DoneStatus> {
        let deadline = Instant::now() + self.timeout;
        let mut child = match &self.command {
            Some(argv) if !argv.is_empty() => Some(
                Command::new(&argv[0])
                    .args(&argv[1..])
                    .arg(dir)
                    .spawn()
                    .map_err(|e| self.fail(format!("cannot start `{}`: {e}", argv[0])))?,
            ),
            Some(_) => return Err(self.fail("empty provider command")),
            None => None,
        };
        loop {
            if let Some(done) = read_done(dir)? {
                if let Some(c) = child.as_mut() {
                    let _ = c.wait();
                }
                return Ok(done);
            }
            if let Some(c) = child.as_mut() {
                if let Some(status) = c.try_wait()? {
                    if let Some(done) = read_done(dir)? {
                        return Ok(done);
                    }
                    return Err(
                        self.fail(format!("exited with {status} without writing done.json"))
                    );
                }
            }
            if Instant::now() >= deadline {
                if let Some(c) = child.as_mut() {
                    let _ = c.kill();
                    let _ = c.wait();
                }
                return Err(self.fail(format!(
                    "timed out after {:.1} s",
                    self.timeout.as_secs_f64()
                )));
            }
            std::thread::sleep(self.poll);
        }
    }
}

impl MaskProvider for JobDirProvider {
    fn id(&self) -> &str {
        &self.name
    }

    fn track(&self, job: &TrackJob, from: usize) -> Result<Vec<Mask2D>> {
        let dir = self.fresh_dir();
        write_job_dir(job, &dir)?;
        let done = self.wait(&dir)?;
        if done.status != "ok" {
            return Err(self.fail(
                done.message
                    .unwrap_or_else(|| format!("status `{}`", done.status)),
            ));
        }
        read_job_masks(&dir, job, from).map_err(|e| self.fail(e.to_string()))
    }
}
