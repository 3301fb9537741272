//! Point clouds from FMCW MIMO radar.
//!
//! - [`sim`] synthesises ADC cubes for a moving radar and a scatterer scene.
//! - [`nca`] turns each frame into points via range-Doppler FFTs, CFAR and
//!   angle estimation, then accumulates them in the world frame.
//! - [`saa`] back-projects a moving sequence onto a voxel grid.
//! - [`rdm`] classifies and filters the merged cloud with a learned point
//!   network and per-point Kalman fusion.
//! - [`metrics`] scores clouds against a reference (Chamfer, EMD, F-score).
//!
//! [`dataset`] and [`cli`] cover on-disk sequences and the command line tool.

pub mod error;
pub mod config;
pub mod pose;
pub mod cloud;
pub mod spatial;
pub mod sim;
pub mod detect;
pub mod nca;
pub mod saa;
pub mod rdm;
pub mod metrics;
pub mod corpus;
pub mod dataset;
pub mod cli;
