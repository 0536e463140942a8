//! The run manifest: a complete, machine-readable account of one pipeline
//! run — what was ingested, what each attempt kept or removed and why,
//! what got emitted, and how the run ended.
//!
//! Everything except wall-clock timings lives in [`ManifestCore`], whose
//! canonical JSON encoding is hashed (SHA-256) into `determinism_hash`:
//! two runs over the same input with the same config must produce the
//! same hash. The core therefore contains no maps with nondeterministic
//! iteration order and no timestamps.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Flavor, PipelineConfig};
use crate::frame::FrameId;
use crate::ingest::IngestRecord;

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("json error on {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

/// What happened to one frame during an attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameAction {
    /// Survived every stage of the attempt.
    Kept,
    /// Dropped by the sharpness filter.
    RemovedBlur,
    /// Dropped as a near-duplicate of `duplicate_of`.
    RemovedDuplicate,
    /// Survived filtering but the accepted model has no pose for it.
    PoseMissing,
}

/// Per-frame accounting row; optional fields are filled where they apply
/// (scores for every frame, duplicate links only for duplicates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDisposition {
    pub frame: FrameId,
    pub action: FrameAction,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fm_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lap_var: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duplicate_of: Option<FrameId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hamming: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "detail")]
pub enum EstimatorStatus {
    Succeeded,
    Failed(String),
}

/// Frame counts as the attempt narrows the working set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptCounts {
    pub sampled: usize,
    pub deblurred: usize,
    pub deduped: usize,
    pub posed: usize,
}

/// One pass through blur filtering, dedup, and pose estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    /// 1-based attempt number.
    pub attempt: u32,
    /// Blur threshold used for this attempt.
    pub h_b: f64,
    pub counts: AttemptCounts,
    /// Registered fraction of the frames submitted to the estimator.
    pub pose_coverage: f64,
    pub estimator: EstimatorStatus,
    pub dispositions: Vec<FrameDisposition>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmittedDataset {
    pub flavor: Flavor,
    /// Path of the dataset file, relative to the output root.
    pub path: String,
    /// Which attempt's frames and model the dataset was built from.
    pub attempt: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunOutcome {
    Success,
    /// The input tree contained no usable frames; nothing was emitted.
    NothingToDo,
    /// Every attempt fell short of the pose-coverage requirement.
    RetriesExhausted,
    /// Coverage was acceptable but strict mode forbids missing poses.
    StrictFailure,
}

/// Ingest-level counts (before any attempt runs).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestCounts {
    pub raw: usize,
    pub sampled: usize,
}

/// The deterministic payload of the manifest — see the module docs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestCore {
    pub config: PipelineConfig,
    pub counts: IngestCounts,
    /// Files seen but not ingested, with reasons.
    pub ingest_records: Vec<IngestRecord>,
    /// Frames kept by temporal subsampling, in pipeline order.
    pub sampled: Vec<FrameId>,
    /// Frames that received a half-turn correction.
    pub rotated: Vec<FrameId>,
    pub attempts: Vec<AttemptRecord>,
    pub emitted: Vec<EmittedDataset>,
    pub outcome: RunOutcome,
}

/// Wall-clock measurements; excluded from the determinism hash.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timings {
    pub total_ms: u64,
    pub attempts_ms: Vec<u64>,
}

/// The full manifest as written to `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineManifest {
    #[serde(flatten)]
    pub core: ManifestCore,
    /// SHA-256 (hex) of the canonical JSON encoding of the core fields.
    pub determinism_hash: String,
    pub timings: Timings,
}

impl PipelineManifest {
    pub fn seal(core: ManifestCore, timings: Timings) -> Self {
        let determinism_hash = hash_core(&core);
        Self { core, determinism_hash, timings }
    }

    /// Recomputes the hash from the core fields and compares.
    pub fn verify(&self) -> bool {
        hash_core(&self.core) == self.determinism_hash
    }

    /// Writes `manifest.json` plus a `records.jsonl` projection with one
    /// line per (attempt, frame) disposition for stream-friendly tooling.
    pub fn write(&self, dir: &Path) -> Result<(), ManifestError> {
        let manifest_path = dir.join("manifest.json");
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source: std::io::Error| ManifestError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let mut json = serde_json::to_string_pretty(self)
            .map_err(|source| ManifestError::Json { path: manifest_path.clone(), source })?;
        json.push('\n');
        std::fs::write(&manifest_path, json).map_err(io(&manifest_path))?;

        let records_path = dir.join("records.jsonl");
        let mut out = std::io::BufWriter::new(
            std::fs::File::create(&records_path).map_err(io(&records_path))?,
        );
        #[derive(Serialize)]
        struct Line<'a> {
            attempt: u32,
            #[serde(flatten)]
            disposition: &'a FrameDisposition,
        }
        for attempt in &self.core.attempts {
            for disposition in &attempt.dispositions {
                let line = Line { attempt: attempt.attempt, disposition };
                let encoded = serde_json::to_string(&line)
                    .map_err(|source| ManifestError::Json { path: records_path.clone(), source })?;
                writeln!(out, "{encoded}").map_err(io(&records_path))?;
            }
        }
        out.flush().map_err(io(&records_path))?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, ManifestError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ManifestError::Io { path: path.to_path_buf(), source })?;
        serde_json::from_str(&text)
            .map_err(|source| ManifestError::Json { path: path.to_path_buf(), source })
    }
}

fn hash_core(core: &ManifestCore) -> String {
    let bytes = serde_json::to_vec(core).expect("manifest core serializes");
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for b in digest {
        use std::fmt::Write as _;
        write!(hex, "{b:02x}").expect("writing to string");
    }
    hex
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Overrides;

    fn sample_core() -> ManifestCore {
        let config = PipelineConfig::from_toml_str(
            r#"
                input_root = "/in"
                output_root = "/out"
                k = 2
                h_b = 0.1
                pose_cmd = "sfm {frames_dir} {model_dir}"
            "#,
            &Overrides::default(),
        )
        .unwrap();
        let f = |i| FrameId::new("A", "", i);
        ManifestCore {
            config,
            counts: IngestCounts { raw: 4, sampled: 2 },
            ingest_records: vec![],
            sampled: vec![f(0), f(2)],
            rotated: vec![],
            attempts: vec![AttemptRecord {
                attempt: 1,
                h_b: 0.1,
                counts: AttemptCounts { sampled: 2, deblurred: 2, deduped: 1, posed: 1 },
                pose_coverage: 1.0,
                estimator: EstimatorStatus::Succeeded,
                dispositions: vec![
                    FrameDisposition {
                        frame: f(0),
                        action: FrameAction::Kept,
                        fm_score: Some(0.4),
                        lap_var: Some(120.0),
                        duplicate_of: None,
                        hamming: None,
                    },
                    FrameDisposition {
                        frame: f(2),
                        action: FrameAction::RemovedDuplicate,
                        fm_score: Some(0.39),
                        lap_var: Some(118.0),
                        duplicate_of: Some(f(0)),
                        hamming: Some(3),
                    },
                ],
            }],
            emitted: vec![EmittedDataset {
                flavor: Flavor::Blender,
                path: "transforms.json".into(),
                attempt: 1,
            }],
            outcome: RunOutcome::Success,
        }
    }

    #[test]
    fn hash_depends_on_core_but_not_timings() {
        let core = sample_core();
        let a = PipelineManifest::seal(core.clone(), Timings::default());
        let b = PipelineManifest::seal(
            core.clone(),
            Timings { total_ms: 999, attempts_ms: vec![999] },
        );
        assert_eq!(a.determinism_hash, b.determinism_hash);
        assert_eq!(a.determinism_hash.len(), 64);
        assert!(a.verify() && b.verify());

        let mut changed = core;
        changed.attempts[0].pose_coverage = 0.5;
        let c = PipelineManifest::seal(changed, Timings::default());
        assert_ne!(a.determinism_hash, c.determinism_hash);
    }

    #[test]
    fn write_read_roundtrip_and_jsonl_projection() {
        let dir = tempfile::tempdir().unwrap();
        let manifest =
            PipelineManifest::seal(sample_core(), Timings { total_ms: 5, attempts_ms: vec![5] });
        manifest.write(dir.path()).unwrap();

        let back = PipelineManifest::read(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(back, manifest);
        assert!(back.verify());

        let jsonl = std::fs::read_to_string(dir.path().join("records.jsonl")).unwrap();
        let lines: Vec<&str> = jsonl.lines().collect();
        assert_eq!(lines.len(), 2);
        let first: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(first["attempt"], 1);
        assert_eq!(first["action"], "kept");
        let second: serde_json::Value = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(second["action"], "removed_duplicate");
        assert_eq!(second["hamming"], 3);
    }

    #[test]
    fn tampering_breaks_verification() {
        let manifest = PipelineManifest::seal(sample_core(), Timings::default());
        let mut tampered = manifest.clone();
        tampered.core.outcome = RunOutcome::RetriesExhausted;
        assert!(!tampered.verify());
    }

    #[test]
    fn enums_serialize_snake_case() {
        let json = serde_json::to_string(&RunOutcome::NothingToDo).unwrap();
        assert_eq!(json, "\"nothing_to_do\"");
        let json = serde_json::to_string(&FrameAction::RemovedBlur).unwrap();
        assert_eq!(json, "\"removed_blur\"");
        let json = serde_json::to_string(&EstimatorStatus::Failed("exit 1".into())).unwrap();
        assert_eq!(json, r#"{"status":"failed","detail":"exit 1"}"#);
    }
}
