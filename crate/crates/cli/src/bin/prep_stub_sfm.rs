//! Offline stand-in for an external pose estimator.
//!
//! Reads the image files in `frames_dir`, registers the first
//! `ceil(coverage * n)` of them (sorted by name) in a synthetic
//! ring-of-cameras sparse model, and writes that model into `model_dir`.
//! `--coverage` simulates partial registration, `--fail` a crashing
//! estimator — the two failure modes the pipeline's retry loop reacts to.
//!
//! Frames must share one resolution (they come from a single rig).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use prep_core::colmap::{write_binary_model, write_text_model, SparseModel};

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ModelFormat {
    Text,
    Binary,
}

#[derive(Parser)]
#[command(name = "prep-stub-sfm", about = "Synthetic pose estimator for offline runs")]
struct Cli {
    /// Directory of input images (png/jpg/jpeg).
    frames_dir: PathBuf,
    /// Directory receiving the sparse model (created if needed).
    model_dir: PathBuf,
    /// Fraction of the frames (sorted by name) to register.
    #[arg(long, default_value_t = 1.0)]
    coverage: f64,
    /// Seed for the synthetic camera ring and point cloud.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, value_enum, default_value = "binary")]
    format: ModelFormat,
    /// Exit with an error without writing anything.
    #[arg(long)]
    fail: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("prep-stub-sfm: {message}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli) -> Result<(), String> {
    if cli.fail {
        return Err("instructed to fail (--fail)".into());
    }
    if !(0.0..=1.0).contains(&cli.coverage) {
        return Err(format!("--coverage {} is not in [0, 1]", cli.coverage));
    }

    let mut names: Vec<String> = Vec::new();
    let entries = std::fs::read_dir(&cli.frames_dir)
        .map_err(|e| format!("cannot read {}: {e}", cli.frames_dir.display()))?;
    for entry in entries {
        let entry = entry.map_err(|e| e.to_string())?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let ext = name.rsplit('.').next().map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("png" | "jpg" | "jpeg")) {
            names.push(name);
        }
    }
    names.sort();

    let keep = ((cli.coverage * names.len() as f64).ceil() as usize).min(names.len());
    names.truncate(keep);

    let mut images = Vec::with_capacity(names.len());
    for name in names {
        let path = cli.frames_dir.join(&name);
        let (w, h) = image::image_dimensions(&path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        images.push((name, w, h));
    }

    let model = if images.is_empty() {
        SparseModel { cameras: vec![], images: vec![], points3d: vec![] }
    } else {
        prep_testkit::ring_model(&images, cli.seed)
    };

    let written = match cli.format {
        ModelFormat::Text => write_text_model(&model, &cli.model_dir),
        ModelFormat::Binary => write_binary_model(&model, &cli.model_dir),
    };
    written.map_err(|e| format!("cannot write model into {}: {e}", cli.model_dir.display()))?;
    eprintln!(
        "prep-stub-sfm: registered {} image(s) into {}",
        model.images.len(),
        cli.model_dir.display()
    );
    Ok(())
}
