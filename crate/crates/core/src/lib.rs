//! Tracking-by-association with uncertainty-aware tracklet labeling.
//!
//! The crate covers the full loop used to train an appearance embedder
//! without identity labels:
//!
//! - [`tracker`]: per-frame association, verification of each match by its
//!   association uncertainty, rectification of uncertain matches, and
//!   tracklet propagation;
//! - [`tga`]: tracklet-guided augmentation with uncertainty-based anchor
//!   sampling;
//! - [`contrastive`]: InfoNCE loss and a linear embedder trained on the
//!   resulting pseudo-tracklets;
//! - [`simulator`] and [`eval`]: synthetic scenes with ground truth and the
//!   diagnostics used to check the pipeline.

pub mod assignment;
pub mod contrastive;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod simulator;
pub mod tga;
pub mod tracker;
pub mod uncertainty;

pub use error::{Error, Result};
