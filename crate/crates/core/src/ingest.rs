//! Frame discovery, temporal subsampling, and orientation correction.
//!
//! The input root is scanned recursively for `.png` / `.jpg` / `.jpeg`
//! files whose stem matches the configured filename pattern (default
//! `{camera}_{index}`). A frame's `video_id` is the directory path of the
//! file relative to the root, so flat directories get an empty video id
//! and per-video subdirectories group naturally.
//!
//! Files that do not become frames are never silently dropped: every skip
//! is recorded with a reason so the run manifest accounts for the whole
//! input tree.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::frame::{Frame, FrameId, FrameSet, Provenance, Rotation, RotationMap};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read input root {root}: {source}")]
    Root { root: PathBuf, source: walkdir::Error },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(
        "invalid filename pattern {pattern:?}: must contain {{camera}} and {{index}} exactly once"
    )]
    BadPattern { pattern: String },
    #[error(transparent)]
    FrameSet(#[from] crate::frame::FrameSetError),
}

/// Why a discovered file did not become a frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason", content = "detail")]
pub enum SkipReason {
    /// Matched an exclusion-list pattern.
    Excluded,
    /// Image-looking file whose stem does not match the filename pattern.
    PatternMismatch,
    /// Decoder rejected the file.
    DecodeError(String),
    /// Another file already produced the same frame id.
    DuplicateId,
}

/// Manifest record for one skipped file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestRecord {
    pub path: PathBuf,
    pub frame_id: Option<FrameId>,
    #[serde(flatten)]
    pub reason: SkipReason,
}

/// Compiled form of a filename pattern such as `{camera}_{index}`.
///
/// `{camera}` matches any non-empty text (lazily), `{index}` a decimal
/// number; the pattern must match the whole file stem.
#[derive(Debug, Clone)]
pub struct FilenamePattern {
    regex: regex::Regex,
    pattern: String,
}

impl FilenamePattern {
    pub fn compile(pattern: &str) -> Result<Self, IngestError> {
        let bad = || IngestError::BadPattern { pattern: pattern.to_string() };
        if pattern.matches("{camera}").count() != 1 || pattern.matches("{index}").count() != 1 {
            return Err(bad());
        }
        let mut regex_src = String::from("^");
        let mut rest = pattern;
        while !rest.is_empty() {
            if let Some(stripped) = rest.strip_prefix("{camera}") {
                regex_src.push_str("(?P<camera>.+?)");
                rest = stripped;
            } else if let Some(stripped) = rest.strip_prefix("{index}") {
                regex_src.push_str(r"(?P<index>\d+)");
                rest = stripped;
            } else {
                let mut chars = rest.chars();
                let c = chars.next().unwrap();
                if c == '{' || c == '}' {
                    return Err(bad()); // unknown placeholder
                }
                regex_src.push_str(&regex::escape(&c.to_string()));
                rest = chars.as_str();
            }
        }
        regex_src.push('$');
        let regex = regex::Regex::new(&regex_src).map_err(|_| bad())?;
        Ok(Self { regex, pattern: pattern.to_string() })
    }

    pub fn pattern(&self) -> &str {
        &self.pattern
    }

    /// Extracts `(camera_id, index)` from a file stem.
    pub fn parse_stem(&self, stem: &str) -> Option<(String, u32)> {
        let caps = self.regex.captures(stem)?;
        let camera = caps.name("camera").unwrap().as_str().to_string();
        let index: u32 = caps.name("index").unwrap().as_str().parse().ok()?;
        Some((camera, index))
    }
}

/// Frame-id patterns from a newline-delimited file. Each line is matched
/// with `*` wildcards against the `camera:video:index` form of a frame id;
/// blank lines and `#` comments are ignored.
#[derive(Debug, Clone, Default)]
pub struct ExclusionList {
    patterns: Vec<String>,
}

impl ExclusionList {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_file(path: &Path) -> Result<Self, IngestError> {
        let content = std::fs::read_to_string(path)?;
        Ok(Self::from_lines(&content))
    }

    pub fn from_lines(content: &str) -> Self {
        let patterns = content
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(String::from)
            .collect();
        Self { patterns }
    }

    pub fn matches(&self, id: &FrameId) -> bool {
        let text = id.to_string();
        self.patterns.iter().any(|p| wildcard_match(p, &text))
    }
}

/// Glob-lite: `*` matches any (possibly empty) substring; everything else
/// is literal. Classic two-pointer algorithm with backtracking.
fn wildcard_match(pattern: &str, text: &str) -> bool {
    let p: Vec<char> = pattern.chars().collect();
    let t: Vec<char> = text.chars().collect();
    let (mut pi, mut ti) = (0usize, 0usize);
    let mut star: Option<(usize, usize)> = None;
    while ti < t.len() {
        if pi < p.len() && (p[pi] == t[ti]) {
            pi += 1;
            ti += 1;
        } else if pi < p.len() && p[pi] == '*' {
            star = Some((pi, ti));
            pi += 1;
        } else if let Some((sp, st)) = star {
            pi = sp + 1;
            ti = st + 1;
            star = Some((sp, st + 1));
        } else {
            return false;
        }
    }
    while pi < p.len() && p[pi] == '*' {
        pi += 1;
    }
    pi == p.len()
}

const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg"];

/// Scans `root` recursively and decodes every image whose name matches the
/// pattern, in deterministic frame-id order.
///
/// Returns the raw frame set plus a record for every file that was skipped
/// (excluded, unparseable name, undecodable, or colliding frame id).
/// Non-image files are ignored outright.
pub fn enumerate_sources(
    root: &Path,
    pattern: &FilenamePattern,
    exclusions: &ExclusionList,
) -> Result<(FrameSet, Vec<IngestRecord>), IngestError> {
    let mut candidates: Vec<(FrameId, PathBuf)> = Vec::new();
    let mut records: Vec<IngestRecord> = Vec::new();

    let walker = walkdir::WalkDir::new(root).sort_by_file_name();
    for entry in walker {
        let entry = entry.map_err(|source| IngestError::Root { root: root.to_path_buf(), source })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let path = entry.path();
        let Some(ext) = path.extension().and_then(|e| e.to_str()) else { continue };
        if !IMAGE_EXTENSIONS.contains(&ext.to_ascii_lowercase().as_str()) {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
        let Some((camera_id, index)) = pattern.parse_stem(stem) else {
            records.push(IngestRecord {
                path: path.to_path_buf(),
                frame_id: None,
                reason: SkipReason::PatternMismatch,
            });
            continue;
        };
        let video_id = path
            .parent()
            .and_then(|p| p.strip_prefix(root).ok())
            .map(|p| p.to_string_lossy().replace('\\', "/"))
            .unwrap_or_default();
        let id = FrameId::new(camera_id, video_id, index);
        if exclusions.matches(&id) {
            records.push(IngestRecord {
                path: path.to_path_buf(),
                frame_id: Some(id),
                reason: SkipReason::Excluded,
            });
            continue;
        }
        candidates.push((id, path.to_path_buf()));
    }

    // Deterministic order and id uniqueness: ties on id resolve to the
    // lexicographically first path; later paths are recorded as duplicates.
    candidates.sort();
    let mut frames: Vec<crate::frame::FrameRef> = Vec::with_capacity(candidates.len());
    let mut last_id: Option<FrameId> = None;
    for (id, path) in candidates {
        if last_id.as_ref() == Some(&id) {
            records.push(IngestRecord {
                path,
                frame_id: Some(id.clone()),
                reason: SkipReason::DuplicateId,
            });
            continue;
        }
        match image::open(&path) {
            Ok(img) => {
                let rgb = img.to_rgb8();
                let (width, height) = rgb.dimensions();
                last_id = Some(id.clone());
                frames.push(Arc::new(Frame::new(id, width, height, rgb.into_raw(), path)));
            }
            Err(e) => {
                records.push(IngestRecord {
                    path,
                    frame_id: Some(id),
                    reason: SkipReason::DecodeError(e.to_string()),
                });
            }
        }
    }
    Ok((FrameSet::new(frames, Provenance::Raw)?, records))
}

/// Keeps every `k`-th frame (positions 0, k, 2k, ...) independently within
/// each `(camera_id, video_id)` group, preserving order.
pub fn subsample(frames: &FrameSet, k: u32) -> FrameSet {
    assert!(k >= 1, "subsampling interval must be at least 1");
    let mut group: Option<(String, String)> = None;
    let mut position = 0u32;
    frames.retain(Provenance::Sampled, |f| {
        let key = (f.id.camera_id.clone(), f.id.video_id.clone());
        if group.as_ref() != Some(&key) {
            group = Some(key);
            position = 0;
        }
        let keep = position % k == 0;
        position += 1;
        keep
    })
}

/// 180-degree rotation: pixel order reversed, channel order preserved,
/// dimensions unchanged. Applying it twice restores the original bytes.
pub fn rotate_180(frame: &Frame) -> Frame {
    let mut rgb = Vec::with_capacity(frame.rgb.len());
    for px in frame.rgb.chunks_exact(3).rev() {
        rgb.extend_from_slice(px);
    }
    Frame::new(frame.id.clone(), frame.width, frame.height, rgb, frame.source_path.clone())
}

/// Applies per-camera rotation corrections; returns the corrected set and
/// the ids of the frames that were actually rotated.
pub fn apply_rotation_map(frames: &FrameSet, map: &RotationMap) -> (FrameSet, Vec<FrameId>) {
    let mut rotated = Vec::new();
    let out = frames.map(frames.provenance(), |f| match map.rotation_for(&f.id.camera_id) {
        Rotation::None => f.clone(),
        Rotation::HalfTurn => {
            rotated.push(f.id.clone());
            Arc::new(rotate_180(f))
        }
    });
    (out, rotated)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pattern_parses_default_layout() {
        let p = FilenamePattern::compile("{camera}_{index}").unwrap();
        assert_eq!(p.parse_stem("A_0001"), Some(("A".into(), 1)));
        // Lazy camera match leaves the trailing digits to the index.
        assert_eq!(p.parse_stem("cam_A_0012"), Some(("cam_A".into(), 12)));
        assert_eq!(p.parse_stem("A-12"), None);
        assert_eq!(p.parse_stem("A_"), None);
        assert_eq!(p.parse_stem("A_12x"), None);
    }

    #[test]
    fn pattern_validation() {
        assert!(FilenamePattern::compile("{camera}").is_err());
        assert!(FilenamePattern::compile("{camera}_{index}_{index}").is_err());
        assert!(FilenamePattern::compile("{camera}_{frame}").is_err());
        let p = FilenamePattern::compile("v{index}.{camera}").unwrap();
        assert_eq!(p.parse_stem("v42.left"), Some(("left".into(), 42)));
    }

    #[test]
    fn wildcards() {
        assert!(wildcard_match("A:*:3", "A::3"));
        assert!(wildcard_match("A:*:3", "A:scan1:3"));
        assert!(!wildcard_match("A:*:3", "B::3"));
        assert!(wildcard_match("*", "anything"));
        assert!(wildcard_match("B:*", "B:x:9"));
        assert!(!wildcard_match("B", "B:x:9"));
        assert!(wildcard_match("*:7", "A::7"));
    }

    #[test]
    fn rotate_180_is_an_involution_and_reverses_pixels() {
        let rgb: Vec<u8> = (0..18).collect(); // 3x2 frame
        let f = Frame::new(FrameId::new("A", "", 0), 3, 2, rgb.clone(), PathBuf::new());
        let r = rotate_180(&f);
        assert_eq!(&r.rgb[0..3], &rgb[15..18], "last pixel moves first, channels intact");
        assert_eq!((r.width, r.height), (3, 2));
        let rr = rotate_180(&r);
        assert_eq!(rr.rgb, rgb);
    }

    fn frame_with(cam: &str, video: &str, idx: u32) -> crate::frame::FrameRef {
        Arc::new(Frame::new(FrameId::new(cam, video, idx), 1, 1, vec![0, 0, 0], PathBuf::new()))
    }

    #[test]
    fn subsample_is_per_group() {
        let frames = FrameSet::new(
            vec![
                frame_with("A", "", 0),
                frame_with("A", "", 1),
                frame_with("A", "", 2),
                frame_with("A", "", 3),
                frame_with("B", "", 10),
                frame_with("B", "", 11),
                frame_with("B", "", 12),
            ],
            Provenance::Raw,
        )
        .unwrap();
        let sampled = subsample(&frames, 3);
        let ids: Vec<String> = sampled.iter().map(|f| f.id.to_string()).collect();
        // Positions 0 and 3 of camera A, position 0 of camera B: the
        // counter restarts per group regardless of raw index values.
        assert_eq!(ids, vec!["A::0", "A::3", "B::10"]);
        assert_eq!(sampled.provenance(), Provenance::Sampled);

        // ceil(len/k) per group
        assert_eq!(subsample(&frames, 2).len(), 2 + 2);
        assert_eq!(subsample(&frames, 1).len(), 7);
    }

    #[test]
    fn enumerate_scans_and_records_skips() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        prep_testkit::write_png(&root.join("A_0001.png"), 4, 4, &[128; 48]);
        prep_testkit::write_png(&root.join("A_0002.png"), 4, 4, &[100; 48]);
        // Subdirectory => distinct video id.
        std::fs::create_dir(root.join("scan2")).unwrap();
        prep_testkit::write_png(&root.join("scan2/A_0001.png"), 4, 4, &[90; 48]);
        // Pattern mismatch, decode error, and a non-image straggler.
        prep_testkit::write_png(&root.join("notes.png"), 2, 2, &[1; 12]);
        std::fs::write(root.join("B_0003.png"), b"not a png").unwrap();
        std::fs::write(root.join("README.md"), "hello").unwrap();

        let pattern = FilenamePattern::compile("{camera}_{index}").unwrap();
        let exclusions = ExclusionList::from_lines("A:scan2:*\n# comment\n");
        let (frames, records) = enumerate_sources(root, &pattern, &exclusions).unwrap();

        let ids: Vec<String> = frames.iter().map(|f| f.id.to_string()).collect();
        assert_eq!(ids, vec!["A::1", "A::2"]);
        assert_eq!(frames.provenance(), Provenance::Raw);

        let mut reasons: Vec<(&str, &SkipReason)> = records
            .iter()
            .map(|r| (r.path.file_name().unwrap().to_str().unwrap(), &r.reason))
            .collect();
        reasons.sort_by_key(|(name, _)| *name);
        assert_eq!(reasons.len(), 3);
        assert!(matches!(reasons[0], ("A_0001.png", SkipReason::Excluded)));
        assert!(matches!(reasons[1], ("B_0003.png", SkipReason::DecodeError(_))));
        assert!(matches!(reasons[2], ("notes.png", SkipReason::PatternMismatch)));
    }

    #[test]
    fn duplicate_ids_keep_first_path() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        prep_testkit::write_png(&root.join("A_7.png"), 2, 2, &[10; 12]);
        // Same id through a different spelling; jpg sorts after png is
        // false ("A_007.jpg" < "A_7.png"), so the jpg wins by path order.
        let rgb = [200u8; 12];
        let bytes = prep_testkit::jpeg_bytes(2, 2, &rgb, 90);
        std::fs::write(root.join("A_007.jpg"), bytes).unwrap();

        let pattern = FilenamePattern::compile("{camera}_{index}").unwrap();
        let (frames, records) = enumerate_sources(root, &pattern, &ExclusionList::empty()).unwrap();
        assert_eq!(frames.len(), 1);
        assert_eq!(frames.frames()[0].source_path.file_name().unwrap(), "A_007.jpg");
        assert_eq!(records.len(), 1);
        assert!(matches!(records[0].reason, SkipReason::DuplicateId));
        assert!(records[0].path.ends_with("A_7.png"));
    }

    #[test]
    fn rotation_map_rotates_only_flagged_cameras() {
        let a = frame_with("A", "", 0);
        let b = Arc::new(Frame::new(
            FrameId::new("B", "", 0),
            2,
            1,
            vec![1, 2, 3, 4, 5, 6],
            PathBuf::new(),
        ));
        let set = FrameSet::new(vec![a, b], Provenance::Sampled).unwrap();
        let map = RotationMap::half_turn_for(["B"]);
        let (out, rotated) = apply_rotation_map(&set, &map);
        assert_eq!(rotated, vec![FrameId::new("B", "", 0)]);
        assert_eq!(out.frames()[1].rgb, vec![4, 5, 6, 1, 2, 3]);
        assert_eq!(out.frames()[0].rgb, vec![0, 0, 0]);
        assert_eq!(out.provenance(), Provenance::Sampled);
    }
}
