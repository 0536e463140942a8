//! Run configuration.
//!
//! Settings come from a TOML file, with optional programmatic overrides
//! (the CLI maps its flags onto [`Overrides`]). Everything is validated up
//! front into a [`PipelineConfig`]; any problem here is a configuration
//! error, reported before the pipeline touches the input tree.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::frame::RotationMap;
use crate::ingest::FilenamePattern;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config {path}: {source}")]
    Toml { path: PathBuf, source: Box<toml::de::Error> },
    #[error("missing required setting `{0}`")]
    Missing(&'static str),
    #[error("invalid setting `{field}`: {msg}")]
    Invalid { field: &'static str, msg: String },
}

/// Which dataset layout(s) to emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    Blender,
    Llff,
    Both,
}

impl Flavor {
    pub fn wants_blender(self) -> bool {
        matches!(self, Flavor::Blender | Flavor::Both)
    }

    pub fn wants_llff(self) -> bool {
        matches!(self, Flavor::Llff | Flavor::Both)
    }
}

/// Fully-validated pipeline settings. Construct via [`PipelineConfig::load`]
/// or [`PipelineConfig::from_toml_str`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Directory scanned recursively for input frames.
    pub input_root: PathBuf,
    /// Directory receiving working frames, the estimator model, datasets,
    /// and the run manifest.
    pub output_root: PathBuf,
    /// Temporal subsampling interval: keep every k-th frame per
    /// (camera, video) group.
    pub k: u32,
    /// Initial sharpness threshold in [0, 1]; a frame is dropped when its
    /// spectral sharpness score is at or below this.
    pub h_b: f64,
    /// Amount added to `h_b` on each pose-coverage retry.
    pub h_b_step: f64,
    /// Hamming radius for near-duplicate clustering (0..=64).
    pub h_s: u32,
    /// Cameras whose frames arrive upside down and need a half-turn.
    pub rotation_map: RotationMap,
    /// Pose-estimator command template; must mention `{frames_dir}` and
    /// `{model_dir}`, which are substituted before spawning.
    pub pose_cmd: String,
    /// Minimum fraction of submitted frames the estimator must register
    /// before the result is accepted.
    pub min_pose_coverage: f64,
    /// Extra attempts after the first, each with a raised blur threshold.
    pub max_retries: u32,
    pub flavor: Flavor,
    /// Fail instead of warn when an accepted model still misses frames.
    pub strict: bool,
    /// Filename layout with `{camera}` and `{index}` placeholders.
    pub filename_pattern: String,
    /// Optional newline-delimited frame-id patterns to drop at ingest.
    pub exclusion_list: Option<PathBuf>,
}

/// As-parsed TOML shape: everything optional, unknown keys rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    input_root: Option<PathBuf>,
    output_root: Option<PathBuf>,
    k: Option<u32>,
    h_b: Option<f64>,
    h_b_step: Option<f64>,
    h_s: Option<u32>,
    rotation_map: Option<RotationMap>,
    pose_cmd: Option<String>,
    min_pose_coverage: Option<f64>,
    max_retries: Option<u32>,
    flavor: Option<Flavor>,
    strict: Option<bool>,
    filename_pattern: Option<String>,
    exclusion_list: Option<PathBuf>,
}

/// Programmatic overrides applied on top of the file; `None` leaves the
/// file (or default) value in place.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub input_root: Option<PathBuf>,
    pub output_root: Option<PathBuf>,
    pub k: Option<u32>,
    pub h_b: Option<f64>,
    pub h_b_step: Option<f64>,
    pub h_s: Option<u32>,
    pub pose_cmd: Option<String>,
    pub min_pose_coverage: Option<f64>,
    pub max_retries: Option<u32>,
    pub flavor: Option<Flavor>,
    pub strict: Option<bool>,
    pub filename_pattern: Option<String>,
    pub exclusion_list: Option<PathBuf>,
    /// When set, replaces the file's rotation map with half-turns for
    /// exactly these cameras.
    pub rotate_cameras: Option<Vec<String>>,
}

impl PipelineConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::resolve(&text, path, overrides)
    }

    /// Parses and validates config text directly (no file involved).
    pub fn from_toml_str(text: &str, overrides: &Overrides) -> Result<Self, ConfigError> {
        Self::resolve(text, Path::new("<inline>"), overrides)
    }

    fn resolve(text: &str, origin: &Path, ov: &Overrides) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|source| ConfigError::Toml {
            path: origin.to_path_buf(),
            source: Box::new(source),
        })?;

        let config = Self {
            input_root: ov
                .input_root
                .clone()
                .or(raw.input_root)
                .ok_or(ConfigError::Missing("input_root"))?,
            output_root: ov
                .output_root
                .clone()
                .or(raw.output_root)
                .ok_or(ConfigError::Missing("output_root"))?,
            k: ov.k.or(raw.k).ok_or(ConfigError::Missing("k"))?,
            h_b: ov.h_b.or(raw.h_b).ok_or(ConfigError::Missing("h_b"))?,
            h_b_step: ov.h_b_step.or(raw.h_b_step).unwrap_or(0.05),
            h_s: ov.h_s.or(raw.h_s).unwrap_or(10),
            rotation_map: match &ov.rotate_cameras {
                Some(cameras) => RotationMap::half_turn_for(cameras.iter().cloned()),
                None => raw.rotation_map.unwrap_or_default(),
            },
            pose_cmd: ov
                .pose_cmd
                .clone()
                .or(raw.pose_cmd)
                .ok_or(ConfigError::Missing("pose_cmd"))?,
            min_pose_coverage: ov.min_pose_coverage.or(raw.min_pose_coverage).unwrap_or(0.9),
            max_retries: ov.max_retries.or(raw.max_retries).unwrap_or(2),
            flavor: ov.flavor.or(raw.flavor).unwrap_or(Flavor::Both),
            strict: ov.strict.or(raw.strict).unwrap_or(false),
            filename_pattern: ov
                .filename_pattern
                .clone()
                .or(raw.filename_pattern)
                .unwrap_or_else(|| "{camera}_{index}".to_string()),
            exclusion_list: ov.exclusion_list.clone().or(raw.exclusion_list),
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        fn invalid(field: &'static str, msg: impl Into<String>) -> ConfigError {
            ConfigError::Invalid { field, msg: msg.into() }
        }
        if self.k < 1 {
            return Err(invalid("k", "subsampling interval must be at least 1"));
        }
        if !self.h_b.is_finite() || !(0.0..=1.0).contains(&self.h_b) {
            return Err(invalid("h_b", format!("{} is not in [0, 1]", self.h_b)));
        }
        if !self.h_b_step.is_finite() || self.h_b_step <= 0.0 {
            return Err(invalid("h_b_step", format!("{} is not positive", self.h_b_step)));
        }
        if self.h_s > 64 {
            return Err(invalid("h_s", format!("{} exceeds the 64-bit hash width", self.h_s)));
        }
        if !self.pose_cmd.contains("{frames_dir}") || !self.pose_cmd.contains("{model_dir}") {
            return Err(invalid(
                "pose_cmd",
                "template must contain both {frames_dir} and {model_dir}",
            ));
        }
        if !self.min_pose_coverage.is_finite()
            || self.min_pose_coverage <= 0.0
            || self.min_pose_coverage > 1.0
        {
            return Err(invalid(
                "min_pose_coverage",
                format!("{} is not in (0, 1]", self.min_pose_coverage),
            ));
        }
        FilenamePattern::compile(&self.filename_pattern)
            .map_err(|e| invalid("filename_pattern", e.to_string()))?;
        // The output tree would be rescanned as input on the next run.
        let inside = match (std::path::absolute(&self.output_root), std::path::absolute(&self.input_root)) {
            (Ok(out), Ok(inp)) => out.starts_with(&inp),
            _ => self.output_root.starts_with(&self.input_root),
        };
        if inside {
            return Err(invalid("output_root", "must not be inside input_root"));
        }
        Ok(())
    }
}
