//! Counting insects in water-trap image sequences captured while the trap is
//! stirred.
//!
//! The crate covers everything downstream of an object detector:
//!
//! * [`detection`]: box geometry, hard NMS and Soft-NMS
//! * [`tiling`]: overlapping tile plans and merging of per-tile detections
//! * [`image`], [`pnm`], [`clarity`]: grayscale rasters, Netpbm I/O and the
//!   gradient-magnitude clarity score
//! * [`evaluation`]: ground-truth matching, counting confidence and AP
//! * [`model`]: per-frame features and the linear confidence model
//! * [`fusion`]: softmax-weighted count fusion and the static/max baselines
//! * [`sim`]: a seeded simulator of stirring sequences with ground truth
//! * [`pipeline`], [`manifest`], [`report`], [`cli`]: glue, file formats and
//!   the command-line front end
//!
//! Runnable walkthroughs live in `examples/`.

pub mod annotation;
pub mod cli;
pub mod clarity;
pub mod detection;
pub mod evaluation;
pub mod fusion;
pub mod image;
pub mod manifest;
pub mod model;
pub mod pipeline;
pub mod pnm;
pub mod report;
pub mod sim;
pub mod tiling;

pub use detection::{iou, nms, soft_nms, BoundingBox, Detection, SoftNmsMethod, SoftNmsParams, Suppression};
pub use fusion::{fuse_counts, CountEstimate};
pub use image::GrayImage;
pub use model::{ConfidenceModel, SequenceFeatures};
pub use sim::{simulate_sequence, SimConfig, SimulatedSequence};
