//! Real-time semantic background subtraction.
//!
//! A pixel-wise background subtractor (SuBSENSE by default, ViBe or a
//! Gaussian mixture as alternatives) runs on every frame. Per-pixel
//! foreground probabilities from a segmentation network are compared
//! against a slowly updated semantic background model, and two thresholds
//! decide per pixel whether the semantics overrule the subtractor. The
//! fused mask feeds back into both models.
//!
//! The pipeline runs the two models on separate threads so that semantic
//! maps, which may arrive only every N-th frame, never stall the
//! subtractor. Results are bit-identical to a sequential run.

pub mod bgs;
pub mod config;
pub mod error;
pub mod eval;
pub mod frame_io;
pub mod fusion;
pub mod pipeline;
pub mod runner;
pub mod semantic;

pub use bgs::{Segmenter, SegmenterKind, SegmenterParams};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use frame_io::{FgMask, Frame, GroundTruthFrame, RoiMask, SemanticMap, SignedMap, BG, FG};
pub use fusion::FusionParams;
pub use pipeline::{FrameResult, PipelineParams};
