//! Multistatic asynchronous ISAC sensing from per-beam CIR streams.

// `!(x > 0.0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detect;
pub mod error;
pub mod eval;
pub mod exec;
pub mod frame;
pub mod geometry;
pub mod io;
pub mod manifest;
pub mod microdoppler;
pub mod pipeline;
mod rng;
pub mod scenarios;
pub mod scene;
pub mod stats;
pub mod sync;
pub mod tracker;

pub use error::{Error, Result};
pub use exec::Exec;
pub use frame::CirFrame;
pub use geometry::{Bistatic, Point2};
