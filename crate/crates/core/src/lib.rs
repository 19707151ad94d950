//! Field boundary inference for binary network protocols.
//!
//! A coarse segmentation of each message (from the null-byte segmenter, a
//! bit-congruence segmenter or an external tool) is refined by clustering
//! similar segments across messages, overlaying each cluster, and reading
//! field boundaries off the principal components of the byte-wise
//! covariance. Static refinement passes, a synthetic protocol generator
//! and a scoring harness complete the toolkit.

pub mod cli;
pub mod cluster;
pub mod dissim;
pub mod error;
pub mod eval;
pub mod model;
pub mod pca;
pub mod refiners;
pub mod rules;
pub mod synth;
pub mod trace_io;

pub use error::{Error, Result};
pub use model::{segments_of, AnalysisParams, GroundTruth, Message, SegmentRef, Segmentation};
