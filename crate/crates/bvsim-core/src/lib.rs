//! Synthetic turntable benchmark for event cameras and difference-plane
//! sensors.
//!
//! The crate simulates a textured pattern spinning on a turntable, renders it
//! through three sensor front ends (a contrast-threshold event sensor, a
//! quantized temporal/spatial-difference sensor, and a conventional
//! exposure-integrating frame sensor), and measures how well downstream
//! processing holds up as rotation speed grows: slice warping and contrast
//! maximization, gradient-domain reconstruction, sharpness metrics, corner
//! detection and optical flow.
//!
//! Everything is deterministic for a fixed seed: identical configs produce
//! byte-identical event streams, reports and plots.

pub mod aop;
pub mod calib;
pub mod config;
pub mod error;
pub mod evs;
pub mod geometry;
pub mod metrics;
pub mod pgm;
pub mod pipeline;
pub mod plane;
pub mod plots;
pub mod recon;
pub mod scene;
pub mod sweep;
pub mod tasks;

pub use error::{Error, Result};
pub use geometry::Homography;
pub use plane::Plane;
