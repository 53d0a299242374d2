//! `radkit` command-line entry point.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
//! abort. `RADKIT_THREADS` caps the worker pool.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use radkit::augment::{make_views, AugmentationSpec};
use radkit::dataset::{generate_scenes, simulate_dir, write_scenes, SceneGenConfig};
use radkit::encoder::{forward, VisionOracle};
use radkit::eval::{evaluate_detections, retrieval_topk, Detection, GroundTruth};
use radkit::io::{
    decode_heatmap, decode_tensor, read_json, read_tensor, write_heatmap, write_json, HEATMAP_MAGIC, TENSOR_MAGIC,
};
use radkit::probe::{label_efficiency_sweep, linear_probe, ProbeConfig, LABEL_FRACTIONS};
use radkit::simulator::integrate_heatmap;
use radkit::trainer::{encoder_input, pretrain_with};
use radkit::{ArrayGeometry, Checkpoint, Dataset, Heatmap, PolarGrid, RngStream, SimConfig, TrainConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(
    name = "radkit",
    version,
    about = "Synthetic radar simulation, contrastive pretraining and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate random scene files.
    GenScenes(GenScenesArgs),
    /// Simulate one virtual-array tensor per scene and write a manifest.
    Simulate(SimulateArgs),
    /// Draw two augmented heatmap views of a tensor.
    Augment(AugmentArgs),
    /// Render a heatmap or tensor as an 8-bit PGM image.
    Render(RenderArgs),
    /// Pretrain the encoder; writes checkpoints and a JSONL metrics log.
    Pretrain(RunArgs),
    /// Fit a ridge probe on frozen features and report test RMSE.
    Probe(RunArgs),
    /// Probe pretrained and random-init backbones at several label fractions.
    SweepLabels(RunArgs),
    /// Rotated-box average precision of detections against ground truth.
    EvalDet(RunArgs),
    /// Top-k retrieval between augmented views and against the vision oracle.
    Retrieval(RunArgs),
}

#[derive(Args)]
struct GenScenesArgs {
    /// Number of scenes.
    #[arg(long)]
    count: usize,
    /// Scene generation seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fewest scatterers per scene.
    #[arg(long, default_value_t = 1)]
    scatterers_min: usize,
    /// Most scatterers per scene.
    #[arg(long, default_value_t = 3)]
    scatterers_max: usize,
    /// Polar grid JSON; the default grid when omitted.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Directory of scene JSON files.
    #[arg(long)]
    scenes: PathBuf,
    /// Array geometry JSON; the default 3×4 array when omitted.
    #[arg(long)]
    geometry: Option<PathBuf>,
    /// Polar grid JSON; the default grid when omitted.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Simulator settings JSON; defaults when omitted.
    #[arg(long)]
    sim: Option<PathBuf>,
    /// Simulation seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for tensors, scene copies and the manifest.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AugmentArgs {
    /// Input tensor (RST1).
    #[arg(long = "in")]
    input: PathBuf,
    /// Augmentation spec JSON; the default spec when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// View seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for `view_a.hmp` and `view_b.hmp`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    /// Heatmap (HMP1) or tensor (RST1); tensors are integrated first.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output PGM path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// JSON config; relative paths inside resolve against its directory.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

struct Failure {
    code: u8,
    message: String,
}

type CliResult<T> = std::result::Result<T, Failure>;

fn config_error(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: 2,
        message: e.to_string(),
    }
}

fn data_error(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: 3,
        message: e.to_string(),
    }
}

/// Errors raised while running a module operation on already loaded inputs.
fn run_error(e: radkit::Error) -> Failure {
    let code = match e {
        radkit::Error::NonFinite(_) => 4,
        radkit::Error::Invalid { .. } => 2,
        _ => 3,
    };
    Failure {
        code,
        message: e.to_string(),
    }
}

fn load_config<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    read_json(path).map_err(config_error)
}

fn optional_config<T: DeserializeOwned + Default>(path: Option<&PathBuf>) -> CliResult<T> {
    path.map_or_else(|| Ok(T::default()), |p| load_config(p))
}

fn resolve(config_path: &Path, path: &Path) -> PathBuf {
    match config_path.parent() {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    }
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| data_error(format!("cannot create {}: {e}", dir.display())))
}

fn write_report<T: Serialize>(value: &T, path: &Path) -> CliResult<()> {
    write_json(value, path).map_err(data_error)
}

fn gen_scenes(args: &GenScenesArgs) -> CliResult<()> {
    let grid: PolarGrid = optional_config(args.grid.as_ref())?;
    let config = SceneGenConfig {
        count: args.count,
        seed: args.seed,
        scatterers_min: args.scatterers_min,
        scatterers_max: args.scatterers_max,
        ..SceneGenConfig::default()
    };
    let scenes = generate_scenes(&config, &grid).map_err(config_error)?;
    create_dir(&args.out)?;
    write_scenes(&scenes, &args.out).map_err(data_error)?;
    Ok(())
}

fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let geometry: ArrayGeometry = optional_config(args.geometry.as_ref())?;
    let grid: PolarGrid = optional_config(args.grid.as_ref())?;
    let sim: SimConfig = optional_config(args.sim.as_ref())?;
    geometry.validate().map_err(config_error)?;
    grid.validate().map_err(config_error)?;
    sim.validate().map_err(config_error)?;
    simulate_dir(&args.scenes, &geometry, &grid, &sim, args.seed, &args.out).map_err(data_error)?;
    Ok(())
}

fn augment(args: &AugmentArgs) -> CliResult<()> {
    let spec: AugmentationSpec = optional_config(args.spec.as_ref())?;
    spec.validate().map_err(config_error)?;
    let tensor = read_tensor(&args.input).map_err(data_error)?;
    let source = args.input.display().to_string();
    let views = make_views(
        &tensor,
        &spec,
        &RngStream::new(args.seed, radkit::rng::label("cli-views")),
        &source,
    )
    .map_err(run_error)?;
    create_dir(&args.out)?;
    write_heatmap(&views.view_a, args.out.join("view_a.hmp")).map_err(data_error)?;
    write_heatmap(&views.view_b, args.out.join("view_b.hmp")).map_err(data_error)?;
    Ok(())
}

/// Min–max normalized 8-bit binary PGM, range rows by azimuth columns with
/// row 0 the nearest range. A constant heatmap renders mid-gray.
fn to_pgm(heatmap: &Heatmap) -> (Vec<u8>, bool) {
    let (lo, hi) = heatmap
        .data()
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let flat = hi <= lo || !(hi - lo).is_finite();
    let mut out = format!("P5\n{} {}\n255\n", heatmap.num_azimuth(), heatmap.num_range()).into_bytes();
    out.extend(heatmap.data().iter().map(|&v| {
        if flat {
            128
        } else {
            (255.0 * f64::from(v - lo) / f64::from(hi - lo)).round() as u8
        }
    }));
    (out, flat)
}

fn render(args: &RenderArgs) -> CliResult<()> {
    let path = &args.input;
    let bytes = fs::read(path).map_err(|e| data_error(format!("cannot read {}: {e}", path.display())))?;
    let heatmap = match bytes.get(..4) {
        Some(m) if m == TENSOR_MAGIC => integrate_heatmap(&decode_tensor(&bytes).map_err(data_error)?),
        Some(m) if m == HEATMAP_MAGIC => decode_heatmap(&bytes).map_err(data_error)?,
        _ => {
            return Err(data_error(format!(
                "{}: neither a tensor nor a heatmap file",
                path.display()
            )))
        }
    };
    let (image, flat) = to_pgm(&heatmap);
    if flat {
        eprintln!("warning: {} has a constant value; rendered as mid-gray", path.display());
    }
    fs::write(&args.out, image).map_err(|e| data_error(format!("cannot write {}: {e}", args.out.display())))
}

fn load_dataset(config_path: &Path, manifest: &Path) -> CliResult<Dataset> {
    Dataset::load(resolve(config_path, manifest)).map_err(data_error)
}

fn load_checkpoint(config_path: &Path, path: &Path) -> CliResult<Checkpoint> {
    Checkpoint::load(resolve(config_path, path)).map_err(data_error)
}

fn pretrain(args: &RunArgs) -> CliResult<()> {
    let config: TrainConfig = load_config(&args.config)?;
    config.validate().map_err(config_error)?;
    let manifest = config
        .dataset_path
        .as_deref()
        .ok_or_else(|| config_error("pretrain config needs dataset_path"))?;
    let dataset = load_dataset(&args.config, manifest)?;
    create_dir(&args.out)?;
    let out_dir = &args.out;
    let outcome = pretrain_with(&config, &dataset, |ckpt| {
        ckpt.save(out_dir.join(format!("step-{:06}.ckpt", ckpt.step)))
    })
    .map_err(run_error)?;
    outcome.initial.save(out_dir.join("init.ckpt")).map_err(data_error)?;
    outcome
        .checkpoint
        .save(out_dir.join("final.ckpt"))
        .map_err(data_error)?;
    let mut log = Vec::new();
    for entry in &outcome.log {
        serde_json::to_writer(&mut log, entry).map_err(data_error)?;
        log.push(b'\n');
    }
    fs::write(out_dir.join("metrics.jsonl"), log).map_err(data_error)?;
    write_report(&config, &out_dir.join("config.json"))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProbeRun {
    checkpoint: PathBuf,
    train: PathBuf,
    test: PathBuf,
    #[serde(default)]
    probe: ProbeConfig,
}

fn probe(args: &RunArgs) -> CliResult<()> {
    let run: ProbeRun = load_config(&args.config)?;
    run.probe.validate().map_err(config_error)?;
    let ckpt = load_checkpoint(&args.config, &run.checkpoint)?;
    let train = load_dataset(&args.config, &run.train)?;
    let test = load_dataset(&args.config, &run.test)?;
    let report = linear_probe(&ckpt.params, &train, &test, &run.probe).map_err(run_error)?;
    create_dir(&args.out)?;
    write_report(&report, &args.out.join("probe.json"))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepRun {
    checkpoint: PathBuf,
    /// Random-init backbone to compare against, e.g. `init.ckpt`.
    baseline: PathBuf,
    train: PathBuf,
    test: PathBuf,
    #[serde(default = "default_fractions")]
    fractions: Vec<f64>,
    #[serde(default)]
    probe: ProbeConfig,
}

fn default_fractions() -> Vec<f64> {
    LABEL_FRACTIONS.to_vec()
}

fn sweep_labels(args: &RunArgs) -> CliResult<()> {
    let run: SweepRun = load_config(&args.config)?;
    run.probe.validate().map_err(config_error)?;
    if run.fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
        return Err(config_error("fractions must lie in (0, 1]"));
    }
    let pretrained = load_checkpoint(&args.config, &run.checkpoint)?;
    let baseline = load_checkpoint(&args.config, &run.baseline)?;
    let train = load_dataset(&args.config, &run.train)?;
    let test = load_dataset(&args.config, &run.test)?;
    let report = label_efficiency_sweep(
        &pretrained.params,
        &baseline.params,
        &train,
        &test,
        &run.fractions,
        &run.probe,
    )
    .map_err(run_error)?;
    create_dir(&args.out)?;
    write_report(&report, &args.out.join("sweep.json"))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalDetRun {
    detections: PathBuf,
    ground_truth: PathBuf,
}

fn eval_det(args: &RunArgs) -> CliResult<()> {
    let run: EvalDetRun = load_config(&args.config)?;
    let dets: Vec<Detection> = read_json(resolve(&args.config, &run.detections)).map_err(data_error)?;
    let gts: Vec<GroundTruth> = read_json(resolve(&args.config, &run.ground_truth)).map_err(data_error)?;
    let report = evaluate_detections(&dets, &gts).map_err(data_error)?;
    create_dir(&args.out)?;
    write_report(&report, &args.out.join("detection.json"))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RetrievalRun {
    checkpoint: PathBuf,
    dataset: PathBuf,
    /// Use the first `frames` frames; all when omitted.
    #[serde(default)]
    frames: Option<usize>,
    #[serde(default = "one")]
    k: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    augmentation: AugmentationSpec,
    #[serde(default = "default_oracle_seed")]
    oracle_seed: u64,
    #[serde(default = "default_oracle_scatterers")]
    oracle_max_scatterers: usize,
}

fn one() -> usize {
    1
}

fn default_oracle_seed() -> u64 {
    radkit::EncoderConfig::default().oracle_seed
}

fn default_oracle_scatterers() -> usize {
    radkit::EncoderConfig::default().oracle_max_scatterers
}

#[derive(Serialize)]
struct RetrievalReport {
    frames: usize,
    k: usize,
    view_to_view: f64,
    radar_to_oracle: f64,
    chance: f64,
}

fn retrieval(args: &RunArgs) -> CliResult<()> {
    let run: RetrievalRun = load_config(&args.config)?;
    run.augmentation.validate().map_err(config_error)?;
    let ckpt = load_checkpoint(&args.config, &run.checkpoint)?;
    let mut dataset = load_dataset(&args.config, &run.dataset)?;
    if let Some(n) = run.frames {
        dataset = dataset.slice(0, n);
    }
    let params = &ckpt.params;
    let oracle =
        VisionOracle::new(run.oracle_seed, params.embed_dim(), run.oracle_max_scatterers).map_err(config_error)?;
    let root = RngStream::new(run.seed, radkit::rng::label("retrieval-views"));
    let embed = |h: &Heatmap| forward(params, &encoder_input(h)).map(|f| f.projected);
    let mut rows = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (i, frame) in dataset.frames.iter().enumerate() {
        let views = make_views(
            &frame.tensor,
            &run.augmentation,
            &root.derive(i as u64),
            &frame.scene.id,
        )
        .map_err(run_error)?;
        let a = embed(&views.view_a).map_err(run_error)?;
        let b = embed(&views.view_b).map_err(run_error)?;
        rows.2.push(radkit::contrastive::prototype(&a, &b));
        rows.0.push(a);
        rows.1.push(b);
        rows.3.push(oracle.embed(&frame.scene));
    }
    let n = dataset.len();
    let report = RetrievalReport {
        frames: n,
        k: run.k,
        view_to_view: retrieval_topk(&rows.0, &rows.1, run.k).map_err(run_error)?,
        radar_to_oracle: retrieval_topk(&rows.2, &rows.3, run.k).map_err(run_error)?,
        chance: if n == 0 { 0.0 } else { (run.k.min(n)) as f64 / n as f64 },
    };
    create_dir(&args.out)?;
    write_report(&report, &args.out.join("retrieval.json"))
}

fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("RADKIT_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| config_error(format!("RADKIT_THREADS = {value:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(config_error)
}

fn run(cli: &Cli) -> CliResult<()> {
    configure_threads()?;
    match &cli.command {
        Command::GenScenes(a) => gen_scenes(a),
        Command::Simulate(a) => simulate(a),
        Command::Augment(a) => augment(a),
        Command::Render(a) => render(a),
        Command::Pretrain(a) => pretrain(a),
        Command::Probe(a) => probe(a),
        Command::SweepLabels(a) => sweep_labels(a),
        Command::EvalDet(a) => eval_det(a),
        Command::Retrieval(a) => retrieval(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let _ = writeln!(std::io::stderr(), "error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
