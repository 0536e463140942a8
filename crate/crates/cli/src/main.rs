//! `prep` — turn a directory of raw capture frames into a posed NeRF
//! dataset, plus utility subcommands for validating datasets, converting
//! existing sparse models, and comparing images.
//!
//! Exit codes: 0 success (including an empty input), 2 configuration
//! error, 3 pipeline/processing failure, 4 dataset-validation failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use prep_core::config::{Flavor, Overrides, PipelineConfig};
use prep_core::frame::{Frame, FrameId};
use prep_core::manifest::{EstimatorStatus, PipelineManifest, RunOutcome};
use prep_core::metrics::{psnr, ssim, MetricReport};
use prep_core::nerf::{emit_poses_bounds, emit_transforms_json, EmitOptions};
use prep_core::pipeline::PipelineError;

const EXIT_CONFIG: u8 = 2;
const EXIT_PIPELINE: u8 = 3;
const EXIT_VALIDATION: u8 = 4;

#[derive(Parser)]
#[command(name = "prep", version, about = "NeRF dataset preparation toolchain")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline: sample, rotate, drop blurred frames,
    /// deduplicate, estimate poses, and emit dataset files.
    Run(RunArgs),
    /// Compare two images (or two directories paired by filename) and
    /// print PSNR/SSIM reports as JSON lines.
    Metrics(MetricsArgs),
    /// Check an emitted dataset file for structural problems.
    Validate(ValidateArgs),
    /// Emit dataset files from an existing sparse model without running
    /// the pipeline.
    Convert(ConvertArgs),
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum FlavorArg {
    Blender,
    Llff,
    Both,
}

impl From<FlavorArg> for Flavor {
    fn from(v: FlavorArg) -> Flavor {
        match v {
            FlavorArg::Blender => Flavor::Blender,
            FlavorArg::Llff => Flavor::Llff,
            FlavorArg::Both => Flavor::Both,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// TOML config file; every flag below overrides its setting of the
    /// same name. With no file, the flags must cover the required
    /// settings (input-root, output-root, k, h-b, pose-cmd).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory scanned recursively for input frames.
    #[arg(long, value_name = "DIR")]
    input_root: Option<PathBuf>,
    /// Directory receiving frames, models, datasets, and the manifest.
    #[arg(long, value_name = "DIR")]
    output_root: Option<PathBuf>,
    /// Keep every k-th frame per (camera, video) group.
    #[arg(long, value_name = "N")]
    k: Option<u32>,
    /// Sharpness threshold in [0, 1]; frames scoring at or below it drop.
    #[arg(long, value_name = "X")]
    h_b: Option<f64>,
    /// Added to h-b on every pose-coverage retry.
    #[arg(long, value_name = "X")]
    h_b_step: Option<f64>,
    /// Hamming radius for near-duplicate clustering (0-64).
    #[arg(long, value_name = "N")]
    h_s: Option<u32>,
    /// Pose-estimator command template containing {frames_dir} and
    /// {model_dir}.
    #[arg(long, value_name = "CMD")]
    pose_cmd: Option<String>,
    /// Minimum fraction of submitted frames the estimator must register.
    #[arg(long, value_name = "X")]
    min_pose_coverage: Option<f64>,
    /// Extra attempts after the first, each with a raised blur threshold.
    #[arg(long, value_name = "N")]
    max_retries: Option<u32>,
    /// Which dataset layout(s) to emit.
    #[arg(long, value_enum, value_name = "KIND")]
    flavor: Option<FlavorArg>,
    /// Fail instead of warn when the accepted model misses frames.
    #[arg(long)]
    strict: bool,
    /// Filename layout with {camera} and {index} placeholders.
    #[arg(long, value_name = "PATTERN")]
    filename_pattern: Option<String>,
    /// Newline-delimited frame-id patterns to drop at ingest.
    #[arg(long, value_name = "FILE")]
    exclusion_list: Option<PathBuf>,
    /// Camera id whose frames need a half-turn; repeatable. When given,
    /// replaces the config file's rotation_map entirely.
    #[arg(long = "rotate-camera", value_name = "CAMERA")]
    rotate_cameras: Vec<String>,
}

#[derive(Args)]
struct MetricsArgs {
    /// Reference image file or directory.
    a: PathBuf,
    /// Candidate image file or directory (paired with `a` by filename).
    b: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    /// Dataset file: a transforms .json or a poses/bounds .npy.
    dataset: PathBuf,
}

#[derive(Args)]
struct ConvertArgs {
    /// Directory holding the sparse model (text or binary layout).
    model_dir: PathBuf,
    /// Directory holding the image files the model refers to.
    frames_dir: PathBuf,
    /// Directory receiving the dataset files (created if needed).
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    #[arg(long, value_enum, value_name = "KIND", default_value = "both")]
    flavor: FlavorArg,
}

/// A failed subcommand: what to print and which exit code to use.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

trait IntoFailure<T> {
    fn or_exit(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> IntoFailure<T> for Result<T, E> {
    fn or_exit(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure { code, error: e.into() })
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::default().filter_or("PREP_LOG", "warn"),
    )
    .format_timestamp(None)
    .init();

    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Metrics(args) => metrics(args),
        Command::Validate(args) => validate(args),
        Command::Convert(args) => convert(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            // Print the cause chain, but skip causes whose text the parent
            // message already embeds (our error types include their source
            // in Display).
            let mut parent = failure.error.to_string();
            eprintln!("error: {parent}");
            for cause in failure.error.chain().skip(1) {
                let text = cause.to_string();
                if !parent.contains(&text) {
                    eprintln!("  caused by: {text}");
                }
                parent = text;
            }
            ExitCode::from(failure.code)
        }
    }
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let overrides = Overrides {
        input_root: args.input_root,
        output_root: args.output_root,
        k: args.k,
        h_b: args.h_b,
        h_b_step: args.h_b_step,
        h_s: args.h_s,
        pose_cmd: args.pose_cmd,
        min_pose_coverage: args.min_pose_coverage,
        max_retries: args.max_retries,
        flavor: args.flavor.map(Into::into),
        strict: args.strict.then_some(true),
        filename_pattern: args.filename_pattern,
        exclusion_list: args.exclusion_list,
        rotate_cameras: (!args.rotate_cameras.is_empty()).then_some(args.rotate_cameras),
    };
    let config = match &args.config {
        Some(path) => PipelineConfig::load(path, &overrides),
        None => PipelineConfig::from_toml_str("", &overrides),
    }
    .or_exit(EXIT_CONFIG)?;

    match prep_core::run_pipeline(&config) {
        Ok(manifest) => {
            print_manifest(&config, &manifest);
            Ok(())
        }
        Err(err) => {
            // Terminal outcomes still leave a manifest worth summarizing.
            match &err {
                PipelineError::RetriesExhausted { manifest, .. }
                | PipelineError::StrictPosesMissing { manifest, .. } => {
                    print_manifest(&config, manifest);
                }
                _ => {}
            }
            Err(err).or_exit(EXIT_PIPELINE)
        }
    }
}

fn print_manifest(config: &PipelineConfig, manifest: &PipelineManifest) {
    let core = &manifest.core;
    println!(
        "ingested {} frame(s), {} after sampling",
        core.counts.raw, core.counts.sampled
    );
    for a in &core.attempts {
        let status = match &a.estimator {
            EstimatorStatus::Succeeded => "ok".to_string(),
            EstimatorStatus::Failed(reason) => format!("failed: {reason}"),
        };
        println!(
            "attempt {}: h_b {:.4}, {} sharp, {} unique, {} posed (coverage {:.3}, estimator {})",
            a.attempt,
            a.h_b,
            a.counts.deblurred,
            a.counts.deduped,
            a.counts.posed,
            a.pose_coverage,
            status
        );
    }
    for e in &core.emitted {
        println!("emitted {} ({:?}, attempt {})", e.path, e.flavor, e.attempt);
    }
    let outcome = match core.outcome {
        RunOutcome::Success => "success",
        RunOutcome::NothingToDo => "nothing to do (no input frames)",
        RunOutcome::RetriesExhausted => "retries exhausted",
        RunOutcome::StrictFailure => "strict failure",
    };
    println!("outcome: {outcome}");
    println!("manifest: {}", config.output_root.join("manifest.json").display());
}

fn metrics(args: MetricsArgs) -> Result<(), Failure> {
    let pairs = pair_inputs(&args.a, &args.b)?;
    let mut out = std::io::stdout().lock();
    for (path_a, path_b) in pairs {
        let fa = load_frame(&path_a).or_exit(EXIT_PIPELINE)?;
        let fb = load_frame(&path_b).or_exit(EXIT_PIPELINE)?;
        let report = MetricReport::new(
            path_a.display().to_string(),
            path_b.display().to_string(),
            psnr(&fa, &fb).or_exit(EXIT_PIPELINE)?,
            ssim(&fa, &fb).or_exit(EXIT_PIPELINE)?,
        );
        let line = serde_json::to_string(&report).or_exit(EXIT_PIPELINE)?;
        use std::io::Write;
        writeln!(out, "{line}").or_exit(EXIT_PIPELINE)?;
    }
    Ok(())
}

/// Resolves the two metric inputs into concrete file pairs: two files form
/// one pair; two directories are joined on filename.
fn pair_inputs(a: &Path, b: &Path) -> Result<Vec<(PathBuf, PathBuf)>, Failure> {
    if a.is_file() && b.is_file() {
        return Ok(vec![(a.to_path_buf(), b.to_path_buf())]);
    }
    if a.is_dir() && b.is_dir() {
        let names_b = image_names(b).or_exit(EXIT_PIPELINE)?;
        let mut pairs = Vec::new();
        for name in image_names(a).or_exit(EXIT_PIPELINE)? {
            if names_b.contains(&name) {
                pairs.push((a.join(&name), b.join(&name)));
            } else {
                log::warn!("{name}: present under {} only; skipped", a.display());
            }
        }
        if pairs.is_empty() {
            return Err(anyhow!(
                "{} and {} share no image filenames",
                a.display(),
                b.display()
            ))
            .or_exit(EXIT_PIPELINE);
        }
        return Ok(pairs);
    }
    Err(anyhow!(
        "{} and {} must both be files or both be directories",
        a.display(),
        b.display()
    ))
    .or_exit(EXIT_CONFIG)
}

/// Sorted image filenames directly inside `dir`.
fn image_names(dir: &Path) -> anyhow::Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let entry = entry?;
        if !entry.file_type()?.is_file() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        let ext = Path::new(&name)
            .extension()
            .map(|e| e.to_string_lossy().to_ascii_lowercase());
        if matches!(ext.as_deref(), Some("png" | "jpg" | "jpeg")) {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

fn load_frame(path: &Path) -> anyhow::Result<Frame> {
    let rgb = image::open(path)
        .with_context(|| format!("cannot decode {}", path.display()))?
        .to_rgb8();
    let (width, height) = rgb.dimensions();
    Ok(Frame::new(
        FrameId::new("cli", "", 0),
        width,
        height,
        rgb.into_raw(),
        path.to_path_buf(),
    ))
}

fn validate(args: ValidateArgs) -> Result<(), Failure> {
    let report = prep_core::validate_dataset(&args.dataset).or_exit(EXIT_VALIDATION)?;
    for violation in &report.violations {
        println!("violation: {violation}");
    }
    if report.passed() {
        println!(
            "ok: {} ({:?}, {} frame(s))",
            report.path.display(),
            report.kind,
            report.frames
        );
        Ok(())
    } else {
        Err(anyhow!(
            "{}: {} violation(s) in {} frame(s)",
            report.path.display(),
            report.violations.len(),
            report.frames
        ))
        .or_exit(EXIT_VALIDATION)
    }
}

fn convert(args: ConvertArgs) -> Result<(), Failure> {
    let flavor: Flavor = args.flavor.into();
    let model = prep_core::parse_model_dir(&args.model_dir).or_exit(EXIT_PIPELINE)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))
        .or_exit(EXIT_PIPELINE)?;

    if flavor.wants_blender() {
        let out = args.out.join("transforms.json");
        let opts = EmitOptions {
            frames_dir: args.frames_dir.clone(),
            include_intrinsics: true,
        };
        emit_transforms_json(&model, &out, &opts).or_exit(EXIT_PIPELINE)?;
        println!("emitted {}", out.display());
    }
    if flavor.wants_llff() {
        let out = args.out.join("poses_bounds.npy");
        emit_poses_bounds(&model, &out).or_exit(EXIT_PIPELINE)?;
        println!("emitted {}", out.display());
    }
    Ok(())
}
