//! Synthetic action videos, dense optical flow and temporal-segment
//! classification.

pub mod config;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod flow;
pub mod pnm;
pub mod render;
pub mod seed;
pub mod skeleton;
pub mod tsn;

pub use error::{Error, Result};
