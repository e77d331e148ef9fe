//! Pole-landmark self-localization.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`extraction`] voxelizes registered point clouds into reflection-count
//!    grids and detects isolated vertical stacks as pole landmarks.
//! 2. [`classing`] learns pseudo pole classes from pole descriptors with
//!    seeded Lloyd k-means.
//! 3. [`polemap`] stores pole maps and the pairwise-distance lookup table
//!    used to turn a local pole pair into candidate global correspondences.
//! 4. [`matcher`] generates rigid-transform hypotheses from those
//!    correspondences and scores them, optionally rewarding class agreement.
//!
//! [`synth`] and [`eval`] provide synthetic worlds, a brute-force
//! localization oracle, and accuracy reporting.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classing;
pub mod cloud_io;
pub mod config;
pub mod error;
pub mod eval;
pub mod extraction;
pub mod geometry;
pub mod matcher;
pub mod polemap;
pub mod synth;

pub use error::{PoleError, Result};
pub use geometry::{Point2, Pose2};
