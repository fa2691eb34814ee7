//! Object-goal navigation in procedurally generated floor plans by
//! predicting where to look next and choosing among imagined views.

// `!(x > 0.0)` also rejects NaN; index loops read better in the numeric code
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod controller;
pub mod error;
pub mod imagination;
pub mod planner;
pub mod raster;
pub mod runner;
pub mod sensor;
pub mod waypoint;
pub mod world;

pub use error::{Error, Result};
