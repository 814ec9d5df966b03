//! Contrastive attention refinement for vision-language models.
//!
//! The crate consumes an image together with two attention dumps captured
//! from the same model (one for the task question, one for a task-free
//! general instruction), isolates the question-specific part of the
//! attention by an element-wise regularized ratio, and turns the result into
//! a mask that removes visually noisy regions before the image is handed back
//! to the model.
//!
//! Modules:
//! - [`imaging`]: image type, Canny edges, texture and color complexity.
//! - [`attention`]: attention maps and stacks, the CATT dump format, entropy.
//! - [`contrast`]: closed-form refinement, spatial reshape, weighted fusion.
//! - [`maskgen`]: percentile threshold, connected regions, extraction, and
//!   the end-to-end pipeline.
//! - [`oracle`]: synthetic decompositions and numerical checks of the
//!   refinement's theory (numeric minimizer, error bounds, cost model).
//! - [`study`]: complexity/entropy correlation harness.

pub mod attention;
pub mod contrast;
mod error;
pub mod imaging;
pub mod maskgen;
pub mod oracle;
pub mod study;

pub use error::{Error, Result};

/// Task-free prompt used to collect the general (noise-dominated) attention.
pub const GENERAL_INSTRUCTION: &str = "Write a general description of the image.";
