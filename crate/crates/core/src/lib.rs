//! Soil-water simulation and closed-loop irrigation scheduling for
//! center-pivot fields.

pub mod config;
pub mod crop;
pub mod error;
pub mod field;
pub mod grid;
pub mod hydraulics;
pub mod integrate;
pub mod output;
pub mod pipeline;
pub mod reduction;
pub mod scheduler;
pub mod weather;

pub use error::{Error, Result};

pub const SECONDS_PER_DAY: f64 = 86_400.0;
