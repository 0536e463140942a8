//! Stage orchestration: ingest, subsample, rotate, then a retry loop of
//! blur filtering, near-duplicate removal, and external pose estimation.
//!
//! Pose estimation is delegated through [`PoseEstimator`]; the production
//! implementation spawns the configured command with `{frames_dir}` and
//! `{model_dir}` substituted. When the estimator registers fewer than
//! `min_pose_coverage` of the submitted frames, the blur threshold is
//! raised by `h_b_step` and the attempt repeats — a stricter sharpness cut
//! hands the estimator an easier frame set. After `max_retries` extra
//! attempts the run fails, but the manifest is written either way.
//!
//! Sharpness scores and perceptual hashes are computed once per frame and
//! reused across attempts; only the thresholding is re-applied.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use image::ImageEncoder;
use serde::Serialize;

use crate::blur::classify_blur;
use crate::colmap::parse_model_dir;
use crate::config::{Flavor, PipelineConfig};
use crate::dedup::{cluster_hashes, reduce_duplicates};
use crate::frame::{Frame, FrameId, Provenance};
use crate::ingest::{self, ExclusionList, FilenamePattern, IngestError, IngestRecord};
use crate::manifest::{
    AttemptCounts, AttemptRecord, EmittedDataset, EstimatorStatus, FrameAction, FrameDisposition,
    IngestCounts, ManifestCore, ManifestError, PipelineManifest, RunOutcome, Timings,
};
use crate::nerf::{
    emit_poses_bounds, emit_transforms_json, read_poses_bounds, read_transforms_json, EmitOptions,
    NerfError,
};
use crate::phash::{phash64, PerceptualHash};
use crate::pose::matrix_from_rows;

#[derive(Debug, Clone, thiserror::Error)]
#[error("{0}")]
pub struct EstimatorError(pub String);

/// Produces a sparse reconstruction in `model_dir` from the images in
/// `frames_dir`. Failures are reported, recorded in the manifest, and
/// handled by the retry loop rather than aborting the run.
pub trait PoseEstimator {
    fn estimate(&self, frames_dir: &Path, model_dir: &Path) -> Result<(), EstimatorError>;
}

impl<F> PoseEstimator for F
where
    F: Fn(&Path, &Path) -> Result<(), EstimatorError>,
{
    fn estimate(&self, frames_dir: &Path, model_dir: &Path) -> Result<(), EstimatorError> {
        self(frames_dir, model_dir)
    }
}

/// Spawns the configured command template with the placeholders replaced.
///
/// The substituted line is split on whitespace and executed directly (no
/// shell), so the working directories must not contain whitespace.
pub struct CommandEstimator {
    template: String,
}

impl CommandEstimator {
    pub fn new(template: impl Into<String>) -> Self {
        Self { template: template.into() }
    }
}

/// Placeholder substitution + whitespace split, kept separate from the
/// spawn so the argv construction is testable.
fn build_argv(
    template: &str,
    frames_dir: &Path,
    model_dir: &Path,
) -> Result<Vec<String>, EstimatorError> {
    let mut paths = Vec::new();
    for (name, path) in [("frames_dir", frames_dir), ("model_dir", model_dir)] {
        let s = path
            .to_str()
            .ok_or_else(|| EstimatorError(format!("{name} path is not valid UTF-8")))?;
        if s.chars().any(char::is_whitespace) {
            return Err(EstimatorError(format!(
                "{name} path {s:?} contains whitespace, which the command template cannot carry"
            )));
        }
        paths.push(s);
    }
    let line = template.replace("{frames_dir}", paths[0]).replace("{model_dir}", paths[1]);
    let argv: Vec<String> = line.split_whitespace().map(String::from).collect();
    if argv.is_empty() {
        return Err(EstimatorError("pose command template is empty".into()));
    }
    Ok(argv)
}

impl PoseEstimator for CommandEstimator {
    fn estimate(&self, frames_dir: &Path, model_dir: &Path) -> Result<(), EstimatorError> {
        let argv = build_argv(&self.template, frames_dir, model_dir)?;
        log::info!("running pose estimator: {}", argv.join(" "));
        let output = std::process::Command::new(&argv[0])
            .args(&argv[1..])
            .output()
            .map_err(|e| EstimatorError(format!("cannot spawn `{}`: {e}", argv[0])))?;
        if output.status.success() {
            Ok(())
        } else {
            let stderr = String::from_utf8_lossy(&output.stderr);
            let tail: String = stderr.chars().rev().take(400).collect::<Vec<_>>().into_iter().rev().collect();
            Err(EstimatorError(format!("`{}` failed ({}): {}", argv[0], output.status, tail.trim())))
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("cannot encode {path}: {source}")]
    Encode { path: PathBuf, source: image::ImageError },
    #[error(transparent)]
    Nerf(#[from] NerfError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("attempt {attempt}: every frame was filtered out before pose estimation")]
    NothingLeft { attempt: u32 },
    #[error(
        "pose coverage {coverage:.3} stayed below the minimum {minimum} after {attempts} attempt(s)"
    )]
    RetriesExhausted { coverage: f64, minimum: f64, attempts: u32, manifest: Box<PipelineManifest> },
    #[error("strict mode: the accepted model is missing poses for {missing} frame(s)")]
    StrictPosesMissing { missing: usize, manifest: Box<PipelineManifest> },
    #[error("cannot tell the dataset kind of {path} (expected a .json or .npy file)")]
    UnknownDatasetKind { path: PathBuf },
}

fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

/// Runs the full pipeline with the command estimator from the config.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineManifest, PipelineError> {
    run_pipeline_with(config, &CommandEstimator::new(&config.pose_cmd))
}

/// Everything the terminal manifest needs besides the attempt history.
struct RunParts {
    config: PipelineConfig,
    counts: IngestCounts,
    ingest_records: Vec<IngestRecord>,
    sampled_ids: Vec<FrameId>,
    rotated: Vec<FrameId>,
}

impl RunParts {
    fn manifest(
        self,
        attempts: Vec<AttemptRecord>,
        emitted: Vec<EmittedDataset>,
        outcome: RunOutcome,
        timings: Timings,
    ) -> Result<PipelineManifest, PipelineError> {
        let output_root = self.config.output_root.clone();
        let core = ManifestCore {
            config: self.config,
            counts: self.counts,
            ingest_records: self.ingest_records,
            sampled: self.sampled_ids,
            rotated: self.rotated,
            attempts,
            emitted,
            outcome,
        };
        let manifest = PipelineManifest::seal(core, timings);
        manifest.write(&output_root)?;
        Ok(manifest)
    }
}

/// Runs the full pipeline with a caller-supplied pose estimator.
pub fn run_pipeline_with(
    config: &PipelineConfig,
    estimator: &dyn PoseEstimator,
) -> Result<PipelineManifest, PipelineError> {
    let run_start = Instant::now();
    let ms = |start: Instant| start.elapsed().as_millis() as u64;
    std::fs::create_dir_all(&config.output_root).map_err(io_at(&config.output_root))?;

    let pattern = FilenamePattern::compile(&config.filename_pattern)?;
    let exclusions = match &config.exclusion_list {
        Some(path) => ExclusionList::from_file(path)?,
        None => ExclusionList::empty(),
    };
    let (raw, ingest_records) =
        ingest::enumerate_sources(&config.input_root, &pattern, &exclusions)?;
    log::info!("ingested {} frames ({} files skipped)", raw.len(), ingest_records.len());

    if raw.is_empty() {
        log::warn!("no usable frames under {}; nothing to do", config.input_root.display());
        let parts = RunParts {
            config: config.clone(),
            counts: IngestCounts { raw: 0, sampled: 0 },
            ingest_records,
            sampled_ids: vec![],
            rotated: vec![],
        };
        return parts.manifest(
            vec![],
            vec![],
            RunOutcome::NothingToDo,
            Timings { total_ms: ms(run_start), attempts_ms: vec![] },
        );
    }

    let raw_count = raw.len();
    let sampled = ingest::subsample(&raw, config.k);
    drop(raw);
    let (sampled, rotated) = ingest::apply_rotation_map(&sampled, &config.rotation_map);
    log::info!(
        "kept {} of {raw_count} frames (k = {}); rotated {}",
        sampled.len(),
        config.k,
        rotated.len()
    );

    // Sharpness is scored once; attempts re-threshold the cached scores.
    let mut scores: BTreeMap<FrameId, (f64, f64)> = BTreeMap::new();
    for f in &sampled {
        let report = classify_blur(&f.luma_plane(), f.id.clone(), config.h_b);
        scores.insert(f.id.clone(), (report.fm_score, report.lap_var));
    }
    let mut hash_cache: BTreeMap<FrameId, PerceptualHash> = BTreeMap::new();

    let parts = RunParts {
        config: config.clone(),
        counts: IngestCounts { raw: raw_count, sampled: sampled.len() },
        ingest_records,
        sampled_ids: sampled.iter().map(|f| f.id.clone()).collect(),
        rotated,
    };

    let mut attempts: Vec<AttemptRecord> = Vec::new();
    let mut attempts_ms: Vec<u64> = Vec::new();
    let mut h_b_cur = config.h_b;
    let max_attempts = config.max_retries + 1;

    for attempt in 1..=max_attempts {
        let attempt_start = Instant::now();

        let deblurred = sampled.retain(Provenance::Deblurred, |f| scores[&f.id].0 > h_b_cur);
        log::info!(
            "attempt {attempt}: h_b = {h_b_cur:.4}, {} of {} frames pass the sharpness cut",
            deblurred.len(),
            sampled.len()
        );

        let mut hashes: Vec<(FrameId, PerceptualHash)> = Vec::with_capacity(deblurred.len());
        for f in &deblurred {
            let hash = *hash_cache.entry(f.id.clone()).or_insert_with(|| phash64(f));
            hashes.push((f.id.clone(), hash));
        }
        let clusters = cluster_hashes(&hashes, config.h_s);
        let deduped = reduce_duplicates(&deblurred, &clusters);
        log::info!(
            "attempt {attempt}: {} duplicate cluster(s); {} frames remain",
            clusters.len(),
            deduped.len()
        );
        if deduped.is_empty() {
            return Err(PipelineError::NothingLeft { attempt });
        }

        let attempt_dir = config.output_root.join(format!("attempt_{attempt}"));
        let frames_dir = attempt_dir.join("frames");
        let model_dir = attempt_dir.join("model");
        reset_dir(&frames_dir)?;
        reset_dir(&model_dir)?;
        let mut submitted: BTreeMap<String, FrameId> = BTreeMap::new();
        for f in &deduped {
            let name = format!("{}.png", f.id.file_stem());
            write_png(&frames_dir.join(&name), f)?;
            submitted.insert(name, f.id.clone());
        }

        let (status, mut model) = match estimator.estimate(&frames_dir, &model_dir) {
            Ok(()) => match parse_model_dir(&model_dir) {
                Ok(m) => (EstimatorStatus::Succeeded, Some(m)),
                Err(e) => (EstimatorStatus::Failed(format!("unusable model: {e}")), None),
            },
            Err(e) => (EstimatorStatus::Failed(e.to_string()), None),
        };
        if let EstimatorStatus::Failed(reason) = &status {
            log::warn!("attempt {attempt}: pose estimation failed: {reason}");
        }

        let posed_ids: BTreeSet<FrameId> = match &mut model {
            Some(m) => {
                let before = m.images.len();
                m.images.retain(|img| submitted.contains_key(&img.name));
                if m.images.len() < before {
                    log::warn!(
                        "attempt {attempt}: model references {} unknown image(s); ignoring them",
                        before - m.images.len()
                    );
                }
                m.images.iter().map(|img| submitted[&img.name].clone()).collect()
            }
            None => BTreeSet::new(),
        };
        let coverage = posed_ids.len() as f64 / deduped.len() as f64;

        let duplicate_links: BTreeMap<FrameId, (FrameId, u32)> = clusters
            .iter()
            .flat_map(|c| {
                c.members.iter().map(|(m, d)| (m.clone(), (c.representative.clone(), *d)))
            })
            .collect();
        let mut dispositions = Vec::with_capacity(sampled.len());
        for f in &sampled {
            let (fm, lap) = scores[&f.id];
            let mut d = FrameDisposition {
                frame: f.id.clone(),
                action: FrameAction::Kept,
                fm_score: Some(fm),
                lap_var: Some(lap),
                duplicate_of: None,
                hamming: None,
            };
            if fm <= h_b_cur {
                d.action = FrameAction::RemovedBlur;
            } else if let Some((rep, dist)) = duplicate_links.get(&f.id) {
                d.action = FrameAction::RemovedDuplicate;
                d.duplicate_of = Some(rep.clone());
                d.hamming = Some(*dist);
            } else if !posed_ids.contains(&f.id) {
                d.action = FrameAction::PoseMissing;
            }
            dispositions.push(d);
        }

        attempts.push(AttemptRecord {
            attempt,
            h_b: h_b_cur,
            counts: AttemptCounts {
                sampled: sampled.len(),
                deblurred: deblurred.len(),
                deduped: deduped.len(),
                posed: posed_ids.len(),
            },
            pose_coverage: coverage,
            estimator: status,
            dispositions,
        });
        attempts_ms.push(ms(attempt_start));

        if coverage >= config.min_pose_coverage {
            let missing = deduped.len() - posed_ids.len();
            if missing > 0 {
                log::warn!(
                    "attempt {attempt}: accepted with {missing} unposed frame(s) \
                     (coverage {coverage:.3})"
                );
            }
            if config.strict && missing > 0 {
                let manifest = parts.manifest(
                    attempts,
                    vec![],
                    RunOutcome::StrictFailure,
                    Timings { total_ms: ms(run_start), attempts_ms },
                )?;
                return Err(PipelineError::StrictPosesMissing {
                    missing,
                    manifest: Box::new(manifest),
                });
            }
            let model = model.expect("accepted coverage implies a parsed model");

            let mut emitted = Vec::new();
            if config.flavor.wants_blender() {
                let out = config.output_root.join("transforms.json");
                let opts =
                    EmitOptions { frames_dir: frames_dir.clone(), include_intrinsics: true };
                emit_transforms_json(&model, &out, &opts)?;
                emitted.push(EmittedDataset {
                    flavor: Flavor::Blender,
                    path: "transforms.json".into(),
                    attempt,
                });
            }
            if config.flavor.wants_llff() {
                let out = config.output_root.join("poses_bounds.npy");
                emit_poses_bounds(&model, &out)?;
                emitted.push(EmittedDataset {
                    flavor: Flavor::Llff,
                    path: "poses_bounds.npy".into(),
                    attempt,
                });
            }
            log::info!(
                "attempt {attempt}: accepted (coverage {coverage:.3}); emitted {} dataset(s)",
                emitted.len()
            );
            return parts.manifest(
                attempts,
                emitted,
                RunOutcome::Success,
                Timings { total_ms: ms(run_start), attempts_ms },
            );
        }

        if attempt < max_attempts {
            log::warn!(
                "attempt {attempt}: coverage {coverage:.3} below the minimum {}; \
                 raising h_b from {h_b_cur:.4} by {}",
                config.min_pose_coverage,
                config.h_b_step
            );
            h_b_cur += config.h_b_step;
        } else {
            let manifest = parts.manifest(
                attempts,
                vec![],
                RunOutcome::RetriesExhausted,
                Timings { total_ms: ms(run_start), attempts_ms },
            )?;
            return Err(PipelineError::RetriesExhausted {
                coverage,
                minimum: config.min_pose_coverage,
                attempts: max_attempts,
                manifest: Box::new(manifest),
            });
        }
    }
    unreachable!("the attempt loop always returns");
}

fn reset_dir(dir: &Path) -> Result<(), PipelineError> {
    if dir.exists() {
        std::fs::remove_dir_all(dir).map_err(io_at(dir))?;
    }
    std::fs::create_dir_all(dir).map_err(io_at(dir))
}

/// Fast-compression PNG write: the files feed the pose estimator and are
/// re-read by dataset consumers, so lossless matters but ratio does not.
fn write_png(path: &Path, frame: &Frame) -> Result<(), PipelineError> {
    let file = std::fs::File::create(path).map_err(io_at(path))?;
    let encoder = image::codecs::png::PngEncoder::new_with_quality(
        BufWriter::new(file),
        image::codecs::png::CompressionType::Fast,
        image::codecs::png::FilterType::Adaptive,
    );
    encoder
        .write_image(&frame.rgb, frame.width, frame.height, image::ExtendedColorType::Rgb8)
        .map_err(|source| PipelineError::Encode { path: path.to_path_buf(), source })
}

/// Result of checking an emitted dataset file.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub path: PathBuf,
    pub kind: Flavor,
    /// Number of camera entries checked.
    pub frames: usize,
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

const ROTATION_TOLERANCE: f64 = 1e-6;

/// Checks an emitted dataset for internal consistency: finite values,
/// orthonormal right-handed rotations, positive depth bounds (LLFF), and
/// frame files that actually exist (Blender). The dataset kind is taken
/// from the file extension.
pub fn validate_dataset(path: &Path) -> Result<ValidationReport, PipelineError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => validate_blender(path),
        Some("npy") => validate_llff(path),
        _ => Err(PipelineError::UnknownDatasetKind { path: path.to_path_buf() }),
    }
}

fn rotation_violations(r: &nalgebra::Matrix3<f64>, what: &str, violations: &mut Vec<String>) {
    let gram_err = (r.transpose() * r - nalgebra::Matrix3::identity()).abs().max();
    if gram_err > ROTATION_TOLERANCE {
        violations.push(format!("{what}: rotation is not orthonormal (deviation {gram_err:.2e})"));
    } else if (r.determinant() - 1.0).abs() > ROTATION_TOLERANCE {
        violations.push(format!(
            "{what}: rotation determinant {} is not +1",
            r.determinant()
        ));
    }
}

fn validate_blender(path: &Path) -> Result<ValidationReport, PipelineError> {
    let doc = read_transforms_json(path)?;
    let mut violations = Vec::new();
    if !doc.camera_angle_x.is_finite()
        || doc.camera_angle_x <= 0.0
        || doc.camera_angle_x >= std::f64::consts::PI
    {
        violations.push(format!("camera_angle_x {} is not in (0, pi)", doc.camera_angle_x));
    }
    let base = path.parent().unwrap_or(Path::new(""));
    for frame in &doc.frames {
        let what = format!("frame {:?}", frame.file_path);
        let cells = frame.transform_matrix;
        if cells.iter().flatten().any(|v| !v.is_finite()) {
            violations.push(format!("{what}: transform contains non-finite values"));
            continue;
        }
        let m = matrix_from_rows(&cells);
        rotation_violations(&m.fixed_view::<3, 3>(0, 0).into(), &what, &mut violations);
        let bottom = cells[3];
        if bottom
            .iter()
            .zip([0.0, 0.0, 0.0, 1.0])
            .any(|(got, want)| (got - want).abs() > 1e-9)
        {
            violations.push(format!("{what}: bottom row {bottom:?} is not [0, 0, 0, 1]"));
        }
        if !base.join(&frame.file_path).is_file() {
            violations.push(format!("{what}: image file does not exist"));
        }
    }
    Ok(ValidationReport { path: path.to_path_buf(), kind: Flavor::Blender, frames: doc.frames.len(), violations })
}

fn validate_llff(path: &Path) -> Result<ValidationReport, PipelineError> {
    let rows = read_poses_bounds(path)?;
    let mut violations = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let what = format!("row {i}");
        if row.iter().any(|v| !v.is_finite()) {
            violations.push(format!("{what}: contains non-finite values"));
            continue;
        }
        let r = nalgebra::Matrix3::from_fn(|rr, cc| row[rr * 5 + cc]);
        rotation_violations(&r, &what, &mut violations);
        let (h, w, f) = (row[4], row[9], row[14]);
        if h <= 0.0 || w <= 0.0 || f <= 0.0 {
            violations.push(format!("{what}: non-positive size/focal ({h}, {w}, {f})"));
        }
        let (near, far) = (row[15], row[16]);
        if !(0.0 < near && near < far) {
            violations.push(format!("{what}: bounds near {near}, far {far} are not 0 < near < far"));
        }
    }
    Ok(ValidationReport { path: path.to_path_buf(), kind: Flavor::Llff, frames: rows.len(), violations })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argv_substitution() {
        let argv = build_argv(
            "sfm --frames {frames_dir} --out {model_dir} -q",
            Path::new("/tmp/f"),
            Path::new("/tmp/m"),
        )
        .unwrap();
        assert_eq!(argv, ["sfm", "--frames", "/tmp/f", "--out", "/tmp/m", "-q"]);

        let err = build_argv("sfm {frames_dir} {model_dir}", Path::new("/tmp/a b"), Path::new("/m"))
            .unwrap_err();
        assert!(err.0.contains("whitespace"), "{}", err.0);

        assert!(build_argv("  ", Path::new("/f"), Path::new("/m")).is_err());
    }

    #[test]
    fn command_estimator_reports_spawn_and_exit_failures() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("f");
        let m = dir.path().join("m");

        let ok = CommandEstimator::new("true {frames_dir} {model_dir}");
        assert!(ok.estimate(&f, &m).is_ok());

        let failing = CommandEstimator::new("false {frames_dir} {model_dir}");
        let err = failing.estimate(&f, &m).unwrap_err();
        assert!(err.0.contains("failed"), "{}", err.0);

        let missing = CommandEstimator::new("definitely-not-a-real-binary {frames_dir} {model_dir}");
        let err = missing.estimate(&f, &m).unwrap_err();
        assert!(err.0.contains("spawn"), "{}", err.0);
    }

    // Validation behavior over emitted datasets (accepting clean output,
    // flagging broken rotations/bounds/missing files) lives in
    // tests/dataset_formats.rs alongside the emitter tests.

    #[test]
    fn validate_rejects_unknown_kinds() {
        assert!(matches!(
            validate_dataset(Path::new("dataset.txt")),
            Err(PipelineError::UnknownDatasetKind { .. })
        ));
    }
}
