//! Headless entry points: segment, eval, orient, extract and serve.
//!
//! Exit codes: 0 on success, 2 on argument errors, 1 on engine errors.

use std::ffi::OsString;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use gsseg_core::autoseg::{segment_auto_with_progress, Progress};
use gsseg_core::camera::load_cameras;
use gsseg_core::eval::{
    run_benchmark, summary_table, BenchConfig, BenchmarkManifest, ProviderSpec, ViewSourceName,
};
use gsseg_core::image_io::load_mask;
use gsseg_core::orientation::{orient_scene, AxisMapping};
use gsseg_core::views::DEFAULT_VIEW_COUNT;
use gsseg_core::{ply, Camera, Mask2D, Selection3D};
use gsseg_service::{parse_registry, ServiceConfig};

#[derive(Debug, Parser)]
#[command(
    name = "gsseg",
    version,
    about = "Selection and segmentation of 3D Gaussian Splat scenes"
)]
pub struct Cli {
    /// Caps engine parallelism.
    #[arg(long, global = true, env = "GSSEG_THREADS")]
    pub threads: Option<usize>,
    /// Accepted for compatibility; every pipeline stage is deterministic.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Automatic multi-view segmentation from one or more annotated views.
    Segment(SegmentArgs),
    /// Runs a benchmark manifest and writes one JSON record per line.
    Eval(EvalArgs),
    /// Rigidly aligns the scene to the selection's principal axes.
    Orient(OrientArgs),
    /// Writes the selected (or unselected) Gaussians as a new scene.
    Extract(ExtractArgs),
    /// Runs the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub scene: PathBuf,
    /// Mask PNG; pairs in order with --camera.
    #[arg(long = "mask", required = true)]
    pub masks: Vec<PathBuf>,
    /// Camera JSON of the matching --mask.
    #[arg(long = "camera", required = true)]
    pub cameras: Vec<PathBuf>,
    /// Flags every input mask as occlusion-free, enabling pre-segmentation.
    #[arg(long)]
    pub occlusion_free: bool,
    /// `turnaround` or `train:PATH` (camera array JSON, or a directory
    /// holding cameras.json).
    #[arg(long, default_value = "turnaround")]
    pub views: String,
    #[arg(long, default_value_t = DEFAULT_VIEW_COUNT)]
    pub m: usize,
    #[arg(long)]
    pub no_presegment: bool,
    /// Registry name or provider spec (geometric, oracle, replay:DIR,
    /// jobdir:ROOT, cmd:PROGRAM ARGS).
    #[arg(long, default_value = "geometric")]
    pub provider: String,
    /// `name=spec;name=spec` registry for --provider.
    #[arg(long, env = "GSSEG_PROVIDERS", default_value = "")]
    pub providers: String,
    /// Ground-truth selection for the oracle provider.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Where command providers get their job directories.
    #[arg(long, env = "GSSEG_WORK_DIR")]
    pub work_dir: Option<PathBuf>,
    /// Prints per-view aggregation losses to stderr.
    #[arg(long)]
    pub progress: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, env = "GSSEG_WORK_DIR")]
    pub work_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OrientArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub selection: PathBuf,
    /// Principal component to axis mapping, e.g. `pc3=z,pc1=x`.
    #[arg(long = "map", default_value = "pc3=z")]
    pub mapping: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub selection: PathBuf,
    #[arg(long)]
    pub invert: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "GSSEG_LISTEN", default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    #[arg(long, env = "GSSEG_MAX_SESSIONS", default_value_t = 16)]
    pub max_sessions: usize,
    #[arg(long, env = "GSSEG_PROVIDERS", default_value = "")]
    pub providers: String,
    #[arg(long, env = "GSSEG_WORK_DIR")]
    pub work_dir: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Argument(String),
    Engine(gsseg_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Argument(_) => 2,
            CliError::Engine(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Argument(m) => write!(f, "argument error: {m}"),
            CliError::Engine(e) => write!(f, "{e}"),
        }
    }
}

impl From<gsseg_core::Error> for CliError {
    fn from(e: gsseg_core::Error) -> Self {
        CliError::Engine(e)
    }
}

fn arg_err(m: impl Into<String>) -> CliError {
    CliError::Argument(m.into())
}

fn work_dir(given: Option<PathBuf>) -> PathBuf {
    given.unwrap_or_else(|| std::env::temp_dir().join("gsseg-jobs"))
}

/// Parses `argv` and runs it, printing errors to stderr.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .try_init();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("gsseg: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(arg_err("--threads must be positive"));
        }
        // Fails only when a pool already exists, e.g. on a second call in
        // the same process.
        if rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .is_err()
        {
            log::warn!("thread pool already initialised; --threads ignored");
        }
    }
    match cli.command {
        Command::Segment(a) => segment(a),
        Command::Eval(a) => eval(a),
        Command::Orient(a) => orient(a),
        Command::Extract(a) => extract(a),
        Command::Serve(a) => serve(a),
    }
}

fn training_cameras(path: &Path) -> gsseg_core::Result<Vec<Camera>> {
    if path.is_dir() {
        load_cameras(path.join("cameras.json"))
    } else {
        load_cameras(path)
    }
}

fn load_selection(path: &Path, n: usize) -> Result<Selection3D, CliError> {
    let sel = Selection3D::load(path)?;
    if sel.len() != n {
        return Err(CliError::Engine(gsseg_core::Error::Format(format!(
            "selection has {} entries, scene has {n} Gaussians",
            sel.len()
        ))));
    }
    Ok(sel)
}

fn segment(a: SegmentArgs) -> Result<(), CliError> {
    if a.masks.len() != a.cameras.len() {
        return Err(arg_err(format!(
            "{} masks but {} cameras",
            a.masks.len(),
            a.cameras.len()
        )));
    }
    if a.m == 0 {
        return Err(arg_err("--m must be positive"));
    }
    let registry = parse_registry(&a.providers).map_err(|e| arg_err(e.to_string()))?;
    let provider = match registry.get(&a.provider) {
        Some(spec) => spec.clone(),
        None => a
            .provider
            .parse::<ProviderSpec>()
            .map_err(|e| arg_err(e.to_string()))?,
    };
    let (view_source, train) = match a.views.as_str() {
        "turnaround" => (ViewSourceName::Turnaround, None),
        v => match v.strip_prefix("train:") {
            Some(p) if !p.is_empty() => (ViewSourceName::TrainingSubset, Some(PathBuf::from(p))),
            _ => {
                return Err(arg_err(format!(
                    "--views must be `turnaround` or `train:PATH`, got `{v}`"
                )))
            }
        },
    };
    let bench = BenchConfig {
        m: a.m,
        view_source,
        presegment: !a.no_presegment,
        provider,
    };

    let start = Instant::now();
    let scene = ply::load_scene(&a.scene)?;
    let masks = a
        .masks
        .iter()
        .zip(&a.cameras)
        .map(|(m, c)| Ok(load_mask(m, Camera::load(c)?)?.with_occlusion_free(a.occlusion_free)))
        .collect::<gsseg_core::Result<Vec<Mask2D>>>()?;
    let train = train.map(|p| training_cameras(&p)).transpose()?;
    let truth = a
        .truth
        .as_deref()
        .map(|p| load_selection(p, scene.len()))
        .transpose()?;
    let config = bench.autoseg_config(train.as_deref())?;
    let provider = bench
        .provider
        .build(truth.as_ref(), &work_dir(a.work_dir))?;
    let show = a.progress;
    let seg = segment_auto_with_progress(&scene, masks, &config, provider.as_ref(), &mut |p| {
        if show {
            match p {
                Progress::Stage { name } => eprintln!("stage {name}"),
                Progress::View(v) => eprintln!(
                    "view {} {:?} {} loss {:.6}",
                    v.step, v.kind, v.index, v.loss
                ),
            }
        }
    })?;
    seg.selection().save(&a.out)?;
    println!(
        "selected {} of {} Gaussians in {:.3} s (pipeline {:.3} s)",
        seg.selection().count(),
        scene.len(),
        start.elapsed().as_secs_f64(),
        seg.result.elapsed
    );
    Ok(())
}

fn eval(a: EvalArgs) -> Result<(), CliError> {
    let manifest = BenchmarkManifest::load(&a.manifest)?;
    let base = a
        .manifest
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let report = run_benchmark(&manifest, &base, &work_dir(a.work_dir));
    for n in &report.notices {
        eprintln!("notice: {n}");
    }
    report.write_jsonl(&a.out)?;
    if !report.records.is_empty() {
        print!("{}", summary_table(&report.records));
    }
    println!(
        "{} records written to {}",
        report.records.len(),
        a.out.display()
    );
    Ok(())
}

fn orient(a: OrientArgs) -> Result<(), CliError> {
    let mapping: AxisMapping = a
        .mapping
        .parse()
        .map_err(|e: gsseg_core::Error| arg_err(e.to_string()))?;
    let scene = ply::load_scene(&a.scene)?;
    let sel = load_selection(&a.selection, scene.len())?;
    let out = orient_scene(&scene, &sel, mapping)?;
    ply::save_scene(&out, &a.out)?;
    println!("oriented {} Gaussians ({mapping})", out.len());
    Ok(())
}

fn extract(a: ExtractArgs) -> Result<(), CliError> {
    let scene = ply::load_scene(&a.scene)?;
    let sel = load_selection(&a.selection, scene.len())?;
    let written = ply::export_selection(&scene, &sel, &a.out, a.invert)?;
    println!("wrote {written} Gaussians to {}", a.out.display());
    Ok(())
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    if a.max_sessions == 0 {
        return Err(arg_err("--max-sessions must be positive"));
    }
    let config = ServiceConfig {
        max_sessions: a.max_sessions,
        providers: parse_registry(&a.providers).map_err(|e| arg_err(e.to_string()))?,
        work_dir: work_dir(a.work_dir),
    };
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Engine(e.into()))?;
    rt.block_on(gsseg_service::serve(a.listen, config))
        .map_err(|e| CliError::Engine(e.into()))
}
