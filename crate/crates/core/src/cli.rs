//! Command-line front end: `make-targets`, `eval`, `loss-check` and
//! `demo-forward`.
//!
//! Every command is deterministic for fixed arguments and writes a
//! [`RunManifest`] (to `<out>/run_manifest.json` when an output directory is
//! given, otherwise to standard error).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::annotations::{parse_dataset, subsample_keypoints, BBox, Dataset};
use crate::error::{Error, Result};
use crate::grid::GrayMap;
use crate::kernels::{
    coef_head, cross_attention_cost, default_schedule, dense_head, downsampled,
    scaled_dot_attention, FeatureMap, Matrix, QuerySet,
};
use crate::losses::{finite_diff_check, penalty_reduced_focal, Dice, FocalConfig};
use crate::metrics::{evaluate_with_workers, EvalConfig, ImagePredictions, PredictedInstance};
use crate::pgm;
use crate::raster::{build_tunnel_target, TunnelTarget};

/// Gradient checks fail above this relative error.
pub const GRADIENT_TOLERANCE: f64 = 1e-5;

pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";
pub const PREDICTION_MANIFEST_FILE: &str = "manifest.json";
pub const TARGET_MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "report.json";
pub const PR_TABLE_FILE: &str = "pr_curve.csv";

#[derive(Debug, Parser)]
#[command(name = "instedge", version, about = "Point-supervised instance edge toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write one tunnel-target graymap per annotated instance.
    MakeTargets(MakeTargetsArgs),
    /// Score instance edge predictions (ODS/OIS).
    Eval(EvalArgs),
    /// Verify loss gradients against central finite differences.
    LossCheck(LossCheckArgs),
    /// Run the query/dense-head kernels on seeded random tensors.
    DemoForward(DemoForwardArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct MakeTargetsArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Fraction of keypoints kept per ring.
    #[arg(long, default_value_t = 1.0)]
    pub ratio: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    /// Directory holding `manifest.json` and `<image_id>_<instance_id>.pgm` files.
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long, default_value_t = 0.0075)]
    pub lambda: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct LossCheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub step: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct DemoForwardArgs {
    /// Number of object queries.
    #[arg(long, default_value_t = 4)]
    pub n: usize,
    /// Query dimension.
    #[arg(long, default_value_t = 16)]
    pub d: usize,
    /// Dense-head feature channels.
    #[arg(long, default_value_t = 8)]
    pub f: usize,
    /// Image height in pixels.
    #[arg(long, default_value_t = 64)]
    pub h: usize,
    /// Image width in pixels.
    #[arg(long, default_value_t = 64)]
    pub w: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Record of one command invocation.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<String>,
    pub arguments: serde_json::Value,
    pub eval_config: Option<EvalConfig>,
    pub focal_config: Option<FocalConfig>,
    pub version: String,
    pub duration_seconds: f64,
}

/// One entry of the prediction directory manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionEntry {
    pub image_id: u64,
    pub instance_id: u64,
    pub category_id: u64,
    pub bbox: [f64; 4],
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct PredictionManifest {
    pub predictions: Vec<PredictionEntry>,
}

/// One entry of the `make-targets` manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetEntry {
    pub image_id: u64,
    pub instance_id: u64,
    pub keypoint_count: usize,
    pub file: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TargetManifest {
    pub ratio: f64,
    pub seed: u64,
    pub targets: Vec<TargetEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub lambda: f64,
    pub thresholds: Vec<f64>,
    pub ods: f64,
    pub ods_threshold: f64,
    pub ois: f64,
    pub curve: Vec<crate::metrics::PRPoint>,
    pub per_image: Vec<crate::metrics::ImageBest>,
    /// Annotated images with no prediction file; scored as empty predictions.
    pub images_without_predictions: Vec<u64>,
}

/// File name for an instance map: `<image_id>_<instance_id>.pgm`.
pub fn instance_file_name(image_id: u64, instance_id: u64) -> String {
    format!("{image_id}_{instance_id}.pgm")
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    parse_dataset(&read_text(path)?)
}

/// Seed for one instance, independent of iteration order.
fn instance_seed(seed: u64, image_id: u64, instance_id: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(mix(seed) ^ image_id) ^ instance_id)
}

struct Finished {
    inputs: Vec<String>,
    eval_config: Option<EvalConfig>,
    focal_config: Option<FocalConfig>,
    out: Option<PathBuf>,
}

/// Runs a parsed command, writing human-readable output to `stdout`.
pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<RunManifest> {
    let start = Instant::now();
    let (name, arguments, finished) = match &cli.command {
        Command::MakeTargets(a) => ("make-targets", json!(a), make_targets(a, stdout)?),
        Command::Eval(a) => ("eval", json!(a), eval(a, stdout)?),
        Command::LossCheck(a) => ("loss-check", json!(a), loss_check(a, stdout)?),
        Command::DemoForward(a) => ("demo-forward", json!(a), demo_forward(a, stdout)?),
    };
    let manifest = RunManifest {
        command: name.to_string(),
        inputs: finished.inputs,
        arguments,
        eval_config: finished.eval_config,
        focal_config: finished.focal_config,
        version: env!("CARGO_PKG_VERSION").to_string(),
        duration_seconds: start.elapsed().as_secs_f64(),
    };
    match finished.out {
        Some(dir) => write_file(&dir.join(RUN_MANIFEST_FILE), to_json(&manifest))?,
        None => eprint!("{}", to_json(&manifest)),
    }
    Ok(manifest)
}

fn make_targets(args: &MakeTargetsArgs, stdout: &mut dyn Write) -> Result<Finished> {
    if !(args.ratio > 0.0 && args.ratio <= 1.0) {
        return Err(Error::Argument(format!(
            "--ratio must be in (0, 1], got {}",
            args.ratio
        )));
    }
    let dataset = load_dataset(&args.annotations)?;
    create_dir(&args.out)?;
    let mut targets = Vec::new();
    for image in dataset.images() {
        for inst in image.instances() {
            let seed = instance_seed(args.seed, image.image_id(), inst.instance_id());
            let reduced = subsample_keypoints(inst, args.ratio, seed)?;
            let target = build_tunnel_target(&reduced, image.height(), image.width())?;
            let file = instance_file_name(image.image_id(), inst.instance_id());
            pgm::write_graymap(&args.out.join(&file), target.map())?;
            targets.push(TargetEntry {
                image_id: image.image_id(),
                instance_id: inst.instance_id(),
                keypoint_count: target.keypoint_count(),
                file,
            });
        }
    }
    let manifest = TargetManifest {
        ratio: args.ratio,
        seed: args.seed,
        targets,
    };
    write_file(&args.out.join(TARGET_MANIFEST_FILE), to_json(&manifest))?;
    writeln!(
        stdout,
        "wrote {} targets for {} images",
        manifest.targets.len(),
        dataset.images().len()
    )
    .map_err(|e| Error::io("<stdout>", e))?;
    Ok(Finished {
        inputs: vec![args.annotations.display().to_string()],
        eval_config: None,
        focal_config: None,
        out: Some(args.out.clone()),
    })
}

/// Loads a prediction directory and pairs each image's predictions to its
/// ground truth. Returns the predictions and the annotated images that have none.
pub fn load_predictions(dir: &Path, dataset: &Dataset) -> Result<(Vec<ImagePredictions>, Vec<u64>)> {
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        ));
    }
    let manifest_path = dir.join(PREDICTION_MANIFEST_FILE);
    let manifest: PredictionManifest = if manifest_path.exists() {
        serde_json::from_str(&read_text(&manifest_path)?)
            .map_err(|e| Error::parse(manifest_path.display().to_string(), e))?
    } else {
        PredictionManifest::default()
    };

    let mut grouped: std::collections::BTreeMap<u64, Vec<(u64, PredictedInstance)>> =
        Default::default();
    for entry in manifest.predictions {
        let [x, y, w, h] = entry.bbox;
        let bbox = BBox::new(x, y, w, h).map_err(|e| {
            Error::Validation(format!(
                "prediction {}/{}: {e}",
                entry.image_id, entry.instance_id
            ))
        })?;
        let map = pgm::read_graymap(&dir.join(instance_file_name(entry.image_id, entry.instance_id)))?;
        grouped.entry(entry.image_id).or_default().push((
            entry.instance_id,
            PredictedInstance {
                category_id: entry.category_id,
                bbox,
                map,
            },
        ));
    }

    let mut predictions = Vec::new();
    for (image_id, mut instances) in grouped {
        let image = dataset.image(image_id).ok_or_else(|| {
            Error::Validation(format!("predictions for unknown image {image_id}"))
        })?;
        instances.sort_by_key(|(id, _)| *id);
        if let Some(w) = instances.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::Validation(format!(
                "image {image_id}: duplicate prediction id {}",
                w[0].0
            )));
        }
        let instances = instances.into_iter().map(|(_, p)| p).collect();
        predictions.push(ImagePredictions::paired(image, instances));
    }
    let missing = dataset
        .images()
        .iter()
        .map(|i| i.image_id())
        .filter(|id| predictions.iter().all(|p| p.image_id != *id))
        .collect();
    Ok((predictions, missing))
}

fn eval(args: &EvalArgs, stdout: &mut dyn Write) -> Result<Finished> {
    let cfg = EvalConfig::with_lambda(args.lambda);
    cfg.validate()?;
    if args.workers == 0 {
        return Err(Error::Argument("--workers must be at least 1".into()));
    }
    let dataset = load_dataset(&args.annotations)?;
    let (predictions, missing) = load_predictions(&args.predictions, &dataset)?;
    let summary = evaluate_with_workers(&predictions, &dataset, &cfg, args.workers)?;

    create_dir(&args.out)?;
    let report = EvalReport {
        lambda: cfg.lambda,
        thresholds: cfg.thresholds.clone(),
        ods: summary.ods,
        ods_threshold: summary.ods_threshold,
        ois: summary.ois,
        curve: summary.curve.clone(),
        per_image: summary.per_image.clone(),
        images_without_predictions: missing,
    };
    write_file(&args.out.join(REPORT_FILE), to_json(&report))?;
    write_file(&args.out.join(PR_TABLE_FILE), summary.to_csv())?;
    writeln!(stdout, "ODS: {:.4}\nOIS: {:.4}", summary.ods, summary.ois)
        .map_err(|e| Error::io("<stdout>", e))?;
    Ok(Finished {
        inputs: vec![
            args.annotations.display().to_string(),
            args.predictions.display().to_string(),
        ],
        eval_config: Some(cfg),
        focal_config: None,
        out: Some(args.out.clone()),
    })
}

fn random_map(rng: &mut ChaCha8Rng, h: usize, w: usize, lo: f64, hi: f64) -> GrayMap {
    let values = (0..h * w).map(|_| rng.random_range(lo..hi)).collect();
    GrayMap::from_values(h, w, values).expect("values drawn inside [0, 1]")
}

/// Random `{0, 0.7, 1}` target with at least one keypoint.
pub fn random_tunnel_target(rng: &mut ChaCha8Rng, h: usize, w: usize) -> TunnelTarget {
    let mut values: Vec<f64> = (0..h * w)
        .map(|_| [0.0, 0.7, 1.0][rng.random_range(0..3usize)])
        .collect();
    let forced = rng.random_range(0..h * w);
    values[forced] = 1.0;
    let ones = values.iter().filter(|&&v| v == 1.0).count();
    TunnelTarget::new(GrayMap::from_values(h, w, values).expect("valid values"), ones)
        .expect("valid tunnel target")
}

/// Worst finite-difference errors `(dice, focal)` over `trials` random 5×5 instances.
pub fn gradient_errors(seed: u64, trials: usize, step: f64) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let focal_cfg = FocalConfig::default();
    let dice = Dice::default();
    let (mut worst_dice, mut worst_focal) = (0.0f64, 0.0f64);
    for _ in 0..trials {
        let pred = random_map(&mut rng, 5, 5, 0.05, 0.95);
        let gt_values = (0..25).map(|_| if rng.random_bool(0.4) { 1.0 } else { 0.0 }).collect();
        let gt = GrayMap::from_values(5, 5, gt_values)?;
        worst_dice = worst_dice.max(finite_diff_check(|p| dice.loss(p, &gt), &pred, step)?);

        let pred = random_map(&mut rng, 5, 5, 0.1, 0.9);
        let target = random_tunnel_target(&mut rng, 5, 5);
        worst_focal = worst_focal.max(finite_diff_check(
            |p| penalty_reduced_focal(p, &target, &focal_cfg),
            &pred,
            step,
        )?);
    }
    Ok((worst_dice, worst_focal))
}

fn loss_check(args: &LossCheckArgs, stdout: &mut dyn Write) -> Result<Finished> {
    if args.trials == 0 {
        return Err(Error::Argument("--trials must be at least 1".into()));
    }
    let (dice, focal) = gradient_errors(args.seed, args.trials, args.step)?;
    writeln!(
        stdout,
        "dice max relative error: {dice:.6e}\nfocal max relative error: {focal:.6e}"
    )
    .map_err(|e| Error::io("<stdout>", e))?;
    if let Some(out) = &args.out {
        create_dir(out)?;
    }
    if dice > GRADIENT_TOLERANCE || focal > GRADIENT_TOLERANCE {
        return Err(Error::Validation(format!(
            "gradient check failed (tolerance {GRADIENT_TOLERANCE:e})"
        )));
    }
    Ok(Finished {
        inputs: Vec::new(),
        eval_config: None,
        focal_config: Some(FocalConfig::default()),
        out: args.out.clone(),
    })
}

fn uniform(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-scale..scale)).collect()
}

fn demo_forward(args: &DemoForwardArgs, stdout: &mut dyn Write) -> Result<Finished> {
    let DemoForwardArgs { n, d, f, h, w, seed, .. } = *args;
    if [n, d, f, h, w].contains(&0) {
        return Err(Error::Argument("all dimensions must be positive".into()));
    }
    let io = |e| Error::io("<stdout>", e);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schedule = default_schedule();

    // Decoder: one cross-attention step per layer against that layer's feature map.
    let mut queries = uniform(&mut rng, n * d, 1.0);
    writeln!(stdout, "decoder cross-attention cost (n={n}, d={d}, image {h}x{w}):").map_err(io)?;
    for (layer, &factor) in schedule.factors().iter().enumerate() {
        let (fh, fw) = (downsampled(h as u64, factor), downsampled(w as u64, factor));
        let cost = cross_attention_cost(n as u64, d as u64, fh, fw)?;
        writeln!(stdout, "  layer {layer} 1/{factor}: {fh}x{fw} cost {cost}").map_err(io)?;
        let tokens = (fh * fw) as usize;
        let memory = Matrix::new(tokens, d, uniform(&mut rng, tokens * d, 1.0))?;
        let q = Matrix::new(n, d, queries.clone())?;
        let (attended, _) = scaled_dot_attention(&q, &memory, &memory)?;
        for (qv, a) in queries.iter_mut().zip(attended.data()) {
            *qv += a;
        }
    }

    let queries = QuerySet::new(n, d, queries)?;
    let weight = Matrix::new(d, f, uniform(&mut rng, d * f, 1.0 / (d as f64).sqrt()))?;
    let bias = uniform(&mut rng, f, 0.1);
    let coefs = coef_head(&queries, &weight, &bias)?;
    let (fh, fw) = (downsampled(h as u64, 4) as usize, downsampled(w as u64, 4) as usize);
    let features = FeatureMap::new(f, fh, fw, uniform(&mut rng, f * fh * fw, 1.0))?;
    let maps = dense_head(&coefs, &features)?;
    writeln!(stdout, "dense head outputs ({fh}x{fw}):").map_err(io)?;
    for (i, m) in maps.iter().enumerate() {
        let v = m.values();
        let min = v.iter().copied().fold(f64::INFINITY, f64::min);
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        writeln!(stdout, "  query {i}: min {min:.6} max {max:.6} mean {mean:.6}").map_err(io)?;
    }
    if let Some(out) = &args.out {
        create_dir(out)?;
    }
    Ok(Finished {
        inputs: Vec::new(),
        eval_config: None,
        focal_config: None,
        out: args.out.clone(),
    })
}
