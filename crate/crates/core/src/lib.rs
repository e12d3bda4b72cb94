//! Star-convex polygon instance segmentation for pellet images.
//!
//! The crate covers everything around the network: target generation from
//! label maps ([`targets`]), polygon post-processing ([`postproc`]),
//! per-instance classification and sizing ([`analysis`]), evaluation and
//! loss functions ([`metrics`]), dataset utilities ([`dataset`]) and the
//! on-disk formats ([`io`], [`config`]).
//!
//! Dense per-pixel work runs on rayon when the `parallel` feature is enabled
//! (the default). Without it every routine falls back to a sequential loop
//! with identical results.

pub mod analysis;
pub mod config;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod metrics;
mod par;
pub mod postproc;
pub mod report;
pub mod targets;

pub use error::{Error, Result};
pub use grid::{ClassMap, Grid, LabelMap, RgbImage};
