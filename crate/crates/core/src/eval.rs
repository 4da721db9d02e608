//! Segmentation metrics and the benchmark harness.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::autoseg::{
    segment_auto, AutosegConfig, GeometricProvider, JobDirProvider, MaskProvider, OracleProvider,
    ReplayProvider, ViewSourceConfig,
};
use crate::camera::{load_cameras, Camera};
use crate::error::{Error, Result};
use crate::image_io;
use crate::ply;
use crate::raster;
use crate::scene::GaussianScene;
use crate::selection::{Mask2D, Selection3D};
use crate::views::DEFAULT_VIEW_COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub iou: f64,
    pub acc: f64,
}

fn metrics_from_bits(pred: &[bool], gt: &[bool]) -> Metrics {
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &g) in pred.iter().zip(gt) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let union = tp + fp + fn_;
    let iou = if union == 0 {
        1.0
    } else {
        tp as f64 / union as f64
    };
    let total = pred.len();
    let acc = if total == 0 {
        1.0
    } else {
        (tp + tn) as f64 / total as f64
    };
    Metrics { iou, acc }
}

/// Foreground IoU and pixel accuracy. IoU is 1 when both masks are empty.
pub fn mask_metrics(pred: &Mask2D, gt: &Mask2D) -> Result<Metrics> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::argument(format!(
            "prediction is {}x{} but ground truth is {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    Ok(metrics_from_bits(&pred.bits, &gt.bits))
}

pub fn selection3d_metrics(pred: &Selection3D, gt: &Selection3D) -> Result<Metrics> {
    if pred.len() != gt.len() {
        return Err(Error::argument(format!(
            "prediction has {} Gaussians but ground truth has {}",
            pred.len(),
            gt.len()
        )));
    }
    Ok(metrics_from_bits(&pred.bits, &gt.bits))
}

/// Silhouette of the selected Gaussians composited with the whole scene, so
/// unselected Gaussians in front still occlude.
pub fn selection_to_mask(scene: &GaussianScene, sel: &Selection3D, cam: &Camera) -> Mask2D {
    let indicator: Vec<f64> = sel
        .bits
        .iter()
        .map(|&b| if b { 1.0 } else { 0.0 })
        .collect();
    let image = raster::render_features(scene, cam, &indicator, 1)
        .expect("indicator has one value per Gaussian");
    Mask2D {
        camera: cam.clone(),
        bits: image.iter().map(|&v| v > 0.5).collect(),
        occlusion_free: false,
    }
}

/// Textual provider choice: `geometric`, `oracle`, `replay:DIR`,
/// `jobdir:ROOT` or `cmd:PROGRAM [ARGS...]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ProviderSpec {
    Geometric,
    Oracle,
    Replay(PathBuf),
    JobDir(PathBuf),
    Command(Vec<String>),
}

pub const PROVIDER_TIMEOUT: Duration = Duration::from_secs(600);

impl ProviderSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let need = |what: &str| {
            arg.filter(|a| !a.is_empty())
                .ok_or_else(|| Error::argument(format!("provider `{kind}` needs {what}")))
        };
        Ok(match kind {
            "geometric" => ProviderSpec::Geometric,
            "oracle" => ProviderSpec::Oracle,
            "replay" => ProviderSpec::Replay(need("a directory")?.into()),
            "jobdir" => ProviderSpec::JobDir(need("a root directory")?.into()),
            "cmd" => ProviderSpec::Command(
                need("a program")?
                    .split_whitespace()
                    .map(String::from)
                    .collect(),
            ),
            other => return Err(Error::argument(format!("unknown provider `{other}`"))),
        })
    }

    /// Builds the provider. The oracle needs `truth`; external providers
    /// exchange job directories under `work_dir`.
    pub fn build(
        &self,
        truth: Option<&Selection3D>,
        work_dir: &Path,
    ) -> Result<Box<dyn MaskProvider>> {
        Ok(match self {
            ProviderSpec::Geometric => Box::new(GeometricProvider::new()),
            ProviderSpec::Oracle => Box::new(OracleProvider {
                truth: truth
                    .ok_or_else(|| Error::argument("the oracle provider needs 3D ground truth"))?
                    .clone(),
            }),
            ProviderSpec::Replay(dir) => Box::new(ReplayProvider { dir: dir.clone() }),
            ProviderSpec::JobDir(root) => Box::new(JobDirProvider::watched(root, PROVIDER_TIMEOUT)),
            ProviderSpec::Command(argv) => Box::new(JobDirProvider::command(
                work_dir,
                argv.clone(),
                PROVIDER_TIMEOUT,
            )),
        })
    }
}

impl std::str::FromStr for ProviderSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProviderSpec::parse(s)
    }
}

impl TryFrom<String> for ProviderSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        ProviderSpec::parse(&s)
    }
}

impl From<ProviderSpec> for String {
    fn from(p: ProviderSpec) -> String {
        match p {
            ProviderSpec::Geometric => "geometric".into(),
            ProviderSpec::Oracle => "oracle".into(),
            ProviderSpec::Replay(d) => format!("replay:{}", d.display()),
            ProviderSpec::JobDir(d) => format!("jobdir:{}", d.display()),
            ProviderSpec::Command(argv) => format!("cmd:{}", argv.join(" ")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ViewSourceName {
    #[default]
    Turnaround,
    #[serde(alias = "training", alias = "train")]
    TrainingSubset,
}

fn default_m() -> usize {
    DEFAULT_VIEW_COUNT
}

fn default_true() -> bool {
    true
}

fn default_provider() -> ProviderSpec {
    ProviderSpec::Geometric
}

/// One pipeline configuration of a benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default)]
    pub view_source: ViewSourceName,
    #[serde(default = "default_true")]
    pub presegment: bool,
    #[serde(default = "default_provider")]
    pub provider: ProviderSpec,
}

impl BenchConfig {
    /// Pipeline settings for this configuration. Training-subset views
    /// sample from `training_cameras`.
    pub fn autoseg_config(&self, training_cameras: Option<&[Camera]>) -> Result<AutosegConfig> {
        let views = match self.view_source {
            ViewSourceName::Turnaround => ViewSourceConfig::Turnaround,
            ViewSourceName::TrainingSubset => ViewSourceConfig::TrainingSubset(
                training_cameras
                    .ok_or_else(|| Error::argument("training_subset views need training cameras"))?
                    .to_vec(),
            ),
        };
        Ok(AutosegConfig {
            views,
            m: self.m,
            presegment: self.presegment,
            ..AutosegConfig::default()
        })
    }
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            m: DEFAULT_VIEW_COUNT,
            view_source: ViewSourceName::Turnaround,
            presegment: true,
            provider: ProviderSpec::Geometric,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskInput {
    pub mask: PathBuf,
    pub camera: PathBuf,
    #[serde(default)]
    pub occlusion_free: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtView {
    pub mask: PathBuf,
    pub camera: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    /// Defaults to the scene file stem.
    #[serde(default)]
    pub id: Option<String>,
    pub scene: PathBuf,
    pub inputs: Vec<MaskInput>,
    #[serde(default)]
    pub gt2d: Option<Vec<GtView>>,
    #[serde(default)]
    pub gt3d: Option<PathBuf>,
    /// Camera list for the `training_subset` view source.
    #[serde(default)]
    pub training_cameras: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct BenchmarkManifest {
    #[serde(default)]
    pub scenes: Vec<SceneEntry>,
    #[serde(default)]
    pub configs: Vec<BenchConfig>,
}

impl BenchmarkManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricKind {
    #[serde(rename = "3d")]
    Selection3D,
    #[serde(rename = "2d")]
    Mask2D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub scene_id: String,
    pub metric: MetricKind,
    pub iou: f64,
    pub acc: f64,
    pub elapsed: f64,
    pub config: BenchConfig,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchmarkReport {
    pub records: Vec<EvalRecord>,
    /// Skipped scenes and other non-fatal problems.
    pub notices: Vec<String>,
}

impl BenchmarkReport {
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_jsonl()?)?;
        Ok(())
    }

    /// Mean IoU of the records matching `metric` and `config`.
    pub fn mean_iou(&self, metric: MetricKind, config: &BenchConfig) -> Option<f64> {
        let v: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.metric == metric && &r.config == config)
            .map(|r| r.iou)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Ground truth of one benchmark scene.
#[derive(Debug, Clone, Default)]
pub struct GroundTruth {
    pub selection: Option<Selection3D>,
    pub views: Vec<Mask2D>,
}

impl GroundTruth {
    pub fn is_empty(&self) -> bool {
        self.selection.is_none() && self.views.is_empty()
    }
}

/// In-memory benchmark scene.
#[derive(Debug, Clone)]
pub struct BenchScene {
    pub id: String,
    pub scene: GaussianScene,
    pub inputs: Vec<Mask2D>,
    pub gt: GroundTruth,
    pub training_cameras: Option<Vec<Camera>>,
}

/// Runs one configuration on one scene and scores it against every
/// available ground truth.
pub fn evaluate_scene(
    scene: &BenchScene,
    bench: &BenchConfig,
    work_dir: &Path,
) -> Result<Vec<EvalRecord>> {
    let provider = bench
        .provider
        .build(scene.gt.selection.as_ref(), work_dir)?;
    let config = bench.autoseg_config(scene.training_cameras.as_deref())?;
    let seg = segment_auto(
        &scene.scene,
        scene.inputs.clone(),
        &config,
        provider.as_ref(),
    )?;
    let elapsed = seg.result.elapsed;
    let mut records = Vec::new();
    let record = |metric, m: Metrics| EvalRecord {
        scene_id: scene.id.clone(),
        metric,
        iou: m.iou,
        acc: m.acc,
        elapsed,
        config: bench.clone(),
    };
    if let Some(gt) = &scene.gt.selection {
        records.push(record(
            MetricKind::Selection3D,
            selection3d_metrics(seg.selection(), gt)?,
        ));
    }
    for gt in &scene.gt.views {
        let pred = selection_to_mask(&scene.scene, seg.selection(), &gt.camera);
        records.push(record(MetricKind::Mask2D, mask_metrics(&pred, gt)?));
    }
    Ok(records)
}

/// Runs every configuration on every scene. Scenes without ground truth
/// and failed runs are skipped with a notice.
pub fn run_scenes(
    scenes: &[BenchScene],
    configs: &[BenchConfig],
    work_dir: &Path,
) -> BenchmarkReport {
    let mut report = BenchmarkReport::default();
    for scene in scenes {
        if scene.gt.is_empty() {
            report
                .notices
                .push(format!("{}: no ground truth, skipped", scene.id));
            continue;
        }
        for config in configs {
            match evaluate_scene(scene, config, work_dir) {
                Ok(r) => report.records.extend(r),
                Err(e) => report.notices.push(format!(
                    "{} [{}]: {e}",
                    scene.id,
                    String::from(config.provider.clone())
                )),
            }
        }
    }
    report
}

fn load_entry(entry: &SceneEntry, base: &Path) -> Result<BenchScene> {
    let at = |p: &Path| {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };
    let scene = ply::load_scene(at(&entry.scene))?;
    let id = entry.id.clone().unwrap_or_else(|| {
        entry
            .scene
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| entry.scene.display().to_string())
    });
    let load_view = |mask: &Path, camera: &Path| -> Result<Mask2D> {
        let cam = Camera::load(at(camera))?;
        image_io::load_mask(at(mask), cam)
    };
    let inputs = entry
        .inputs
        .iter()
        .map(|i| Ok(load_view(&i.mask, &i.camera)?.with_occlusion_free(i.occlusion_free)))
        .collect::<Result<Vec<_>>>()?;
    let selection = match &entry.gt3d {
        Some(p) => {
            let s = Selection3D::load(at(p))?;
            if s.len() != scene.len() {
                return Err(Error::format("gt3d length does not match the scene"));
            }
            Some(s)
        }
        None => None,
    };
    let views = entry
        .gt2d
        .iter()
        .flatten()
        .map(|v| load_view(&v.mask, &v.camera))
        .collect::<Result<Vec<_>>>()?;
    let training_cameras = entry
        .training_cameras
        .as_ref()
        .map(|p| load_cameras(at(p)))
        .transpose()?;
    Ok(BenchScene {
        id,
        scene,
        inputs,
        gt: GroundTruth { selection, views },
        training_cameras,
    })
}

/// Loads the manifest's scenes (paths relative to `base`) and runs them
/// under every listed configuration, or the default one when none is listed.
pub fn run_benchmark(
    manifest: &BenchmarkManifest,
    base: &Path,
    work_dir: &Path,
) -> BenchmarkReport {
    let mut scenes = Vec::new();
    let mut notices = Vec::new();
    for entry in &manifest.scenes {
        match load_entry(entry, base) {
            Ok(s) => scenes.push(s),
            Err(e) => notices.push(format!("{}: {e}, skipped", entry.scene.display())),
        }
    }
    let defaults = [BenchConfig::default()];
    let configs = if manifest.configs.is_empty() {
        &defaults[..]
    } else {
        &manifest.configs[..]
    };
    let mut report = run_scenes(&scenes, configs, work_dir);
    notices.append(&mut report.notices);
    report.notices = notices;
    report
}

/// Outcome of a single-correction experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionOutcome {
    pub iou_before: f64,
    pub iou_after: f64,
    /// Sequence position of the corrected view.
    pub position: usize,
    /// 2D IoU of the tracked mask at that position before correcting.
    pub worst_frame_iou: f64,
    /// Per-position 2D IoU of the tracked masks, before and after.
    pub frames_before: Vec<f64>,
    pub frames_after: Vec<f64>,
}

fn frame_scores(
    scene: &GaussianScene,
    truth: &Selection3D,
    job: &crate::autoseg::TrackJob,
) -> Result<Vec<f64>> {
    job.tracked_masks()?
        .iter()
        .map(|m| Ok(mask_metrics(m, &selection_to_mask(scene, truth, &m.camera))?.iou))
        .collect()
}

/// Runs the pipeline, scores every tracked mask against the ground-truth
/// silhouette, adds the true mask of the worst view as a correction and
/// reports the 3D IoU before and after.
pub fn correction_experiment(
    scene: &GaussianScene,
    truth: &Selection3D,
    user_masks: Vec<Mask2D>,
    config: &AutosegConfig,
    provider: &dyn MaskProvider,
) -> Result<CorrectionOutcome> {
    let mut seg = segment_auto(scene, user_masks, config, provider)?;
    let iou_before = selection3d_metrics(seg.selection(), truth)?.iou;
    let frames_before = frame_scores(scene, truth, &seg.job)?;
    let position = (0..frames_before.len())
        .min_by(|&a, &b| frames_before[a].total_cmp(&frames_before[b]))
        .ok_or_else(|| Error::argument("no tracked frames"))?;
    let cam = seg.job.sequence.cameras[position].clone();
    seg.add_correction(selection_to_mask(scene, truth, &cam), provider)?;
    Ok(CorrectionOutcome {
        iou_before,
        iou_after: selection3d_metrics(seg.selection(), truth)?.iou,
        position,
        worst_frame_iou: frames_before[position],
        frames_after: frame_scores(scene, truth, &seg.job)?,
        frames_before,
    })
}

/// Aligned plain-text table with one row per scene, metric and config plus
/// a mean row per metric and config.
pub fn summary_table(records: &[EvalRecord]) -> String {
    let mut rows: Vec<[String; 8]> = vec![[
        "scene", "metric", "provider", "views", "m", "preseg", "iou", "acc",
    ]
    .map(String::from)];
    let describe = |c: &BenchConfig| {
        [
            String::from(c.provider.clone()),
            match c.view_source {
                ViewSourceName::Turnaround => "turnaround".to_string(),
                ViewSourceName::TrainingSubset => "training".to_string(),
            },
            c.m.to_string(),
            if c.presegment { "on" } else { "off" }.to_string(),
        ]
    };
    let metric_name = |m: MetricKind| match m {
        MetricKind::Selection3D => "3d",
        MetricKind::Mask2D => "2d",
    };
    let mut groups: Vec<(MetricKind, &BenchConfig)> = Vec::new();
    for r in records {
        let [p, v, m, s] = describe(&r.config);
        rows.push([
            r.scene_id.clone(),
            metric_name(r.metric).into(),
            p,
            v,
            m,
            s,
            format!("{:.4}", r.iou),
            format!("{:.4}", r.acc),
        ]);
        if !groups
            .iter()
            .any(|(k, c)| *k == r.metric && *c == &r.config)
        {
            groups.push((r.metric, &r.config));
        }
    }
    for (metric, config) in groups {
        let sel: Vec<&EvalRecord> = records
            .iter()
            .filter(|r| r.metric == metric && &r.config == config)
            .collect();
        let n = sel.len() as f64;
        let [p, v, m, s] = describe(config);
        rows.push([
            "mean".into(),
            metric_name(metric).into(),
            p,
            v,
            m,
            s,
            format!("{:.4}", sel.iter().map(|r| r.iou).sum::<f64>() / n),
            format!("{:.4}", sel.iter().map(|r| r.acc).sum::<f64>() / n),
        ]);
    }
    let widths: Vec<usize> = (0..8)
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn cam() -> Camera {
        Camera::look_at(
            Vector3::new(0.0, 0.0, -3.0),
            Vector3::zeros(),
            -Vector3::y(),
            1.0,
            4,
            2,
        )
        .unwrap()
    }

    fn mask(bits: &[u8]) -> Mask2D {
        Mask2D::from_bits(cam(), bits.iter().map(|&b| b == 1).collect()).unwrap()
    }

    #[test]
    fn hand_derived_mask_metrics() {
        let a = mask(&[1, 1, 0, 0, 1, 1, 0, 0]);
        assert_eq!(
            mask_metrics(&a, &a).unwrap(),
            Metrics { iou: 1.0, acc: 1.0 }
        );
        let half = mask(&[1, 1, 0, 0, 1, 1, 0, 0]);
        let none = mask(&[0; 8]);
        assert_eq!(
            mask_metrics(&none, &half).unwrap(),
            Metrics { iou: 0.0, acc: 0.5 }
        );
        let shifted = mask(&[0, 1, 1, 0, 0, 1, 1, 0]);
        let m = mask_metrics(&shifted, &half).unwrap();
        assert_eq!(m.iou, 1.0 / 3.0);
        assert_eq!(mask_metrics(&none, &none).unwrap().iou, 1.0);
    }

    #[test]
    fn selection_metrics_and_length_check() {
        let a = Selection3D::from_indices(6, [0, 1, 2, 3]);
        let b = Selection3D::from_indices(6, [2, 3, 4, 5]);
        assert_eq!(selection3d_metrics(&a, &b).unwrap().iou, 1.0 / 3.0);
        assert!(selection3d_metrics(&a, &Selection3D::empty(5)).is_err());
    }

    #[test]
    fn provider_specs_round_trip() {
        for s in [
            "geometric",
            "oracle",
            "replay:/tmp/x",
            "jobdir:/tmp/j",
            "cmd:python3 track.py",
        ] {
            let p = ProviderSpec::parse(s).unwrap();
            assert_eq!(String::from(p), s);
        }
        assert!(ProviderSpec::parse("replay").is_err());
        assert!(ProviderSpec::parse("sam").is_err());
    }

    #[test]
    fn empty_manifest_gives_empty_report() {
        let m: BenchmarkManifest = serde_json::from_str("{}").unwrap();
        let r = run_benchmark(&m, Path::new("."), Path::new("."));
        assert!(r.records.is_empty() && r.notices.is_empty());
        assert_eq!(summary_table(&r.records).lines().count(), 1);
    }
}
