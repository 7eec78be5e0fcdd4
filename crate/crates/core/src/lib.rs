//! Class activation maps from representative comparison classes.
//!
//! The flow has three steps:
//!
//! 1. **Select** ([`selection`]): build a class-similarity matrix from
//!    classifier probability logs ([`similarity`]) and choose a few
//!    comparison classes per target class, by rank position or from clusters
//!    of mutually similar classes.
//! 2. **Activate** ([`cam`]): for each (target, comparison) binary classifier,
//!    compute Grad-CAM at several layers and fuse them into one pair map.
//! 3. **Fuse** ([`cam::fuse_classes`]): average the pair maps of the chosen
//!    comparison classes.
//!
//! [`evaluate`] scores maps against segmentation masks by thresholded mIoU and
//! reproduces the pairwise Top-k analysis; [`pipeline`] wires everything into
//! the `camsel` command line tool. Model-side tensors arrive on disk in the
//! formats of [`tensorio`].

pub mod cam;
mod error;
pub mod evaluate;
pub mod pipeline;
pub mod selection;
pub mod similarity;
pub mod tensorio;

pub use error::{Error, Result};
