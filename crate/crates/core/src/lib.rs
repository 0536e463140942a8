//! Core library of `prep`, a dataset-preparation toolchain for NeRF-style
//! capture rigs.
//!
//! The library turns a directory of raw video frames into a reduced, posed
//! dataset ready for NeRF training:
//!
//! 1. [`ingest`] — enumerate frame files, temporally subsample, and apply
//!    per-camera rotation corrections.
//! 2. [`blur`] — score frame sharpness in the frequency domain and drop
//!    defocused frames.
//! 3. [`dedup`] — collapse near-duplicate frames with a perceptual hash and
//!    a BK-tree metric index.
//! 4. [`colmap`] / [`pose`] / [`nerf`] — parse sparse reconstruction output
//!    from an external pose estimator and convert it into NeRF dataset
//!    formats (`transforms.json` and `poses_bounds.npy`).
//! 5. [`metrics`] — PSNR/SSIM helpers for comparing renders against
//!    held-out frames.
//! 6. [`pipeline`] — the orchestrator tying the stages together, with a
//!    retry loop that escalates the blur threshold when pose estimation
//!    fails to cover enough frames.
//!
//! Every stage is a pure function over in-memory frame sets; all file I/O
//! lives at the edges (ingest, the external pose estimator, and dataset
//! emission), which keeps the stages deterministic and independently
//! testable.

pub mod bktree;
pub mod blur;
pub mod colmap;
pub mod config;
pub mod dedup;
pub mod fft;
pub mod frame;
pub mod ingest;
pub mod manifest;
pub mod metrics;
pub mod nerf;
pub mod phash;
pub mod pipeline;
pub mod pose;

pub use blur::{classify_blur, filter_blurred, laplacian_variance, sharpness_fm, SharpnessReport};
pub use colmap::{parse_model_dir, CameraIntrinsics, CameraModel, ImagePose, Point3D, SparseModel};
pub use config::{Flavor, PipelineConfig};
pub use dedup::{find_duplicates, reduce_duplicates, DuplicateCluster};
pub use frame::{Frame, FrameId, FrameRef, FrameSet, GrayPlane, Provenance, Rotation, RotationMap};
pub use manifest::PipelineManifest;
pub use metrics::{psnr, ssim, MetricReport};
pub use phash::{hamming, phash64, PerceptualHash};
pub use pipeline::{run_pipeline, run_pipeline_with, validate_dataset, PoseEstimator};
