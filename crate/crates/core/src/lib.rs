//! Continuous-time representation learning on fully dynamic graphs.
//!
//! Nodes and edges appear, disappear and change attributes over time. The
//! model keeps an embedding per node and edge, updated event by event, and
//! scores every possible next event with a softplus intensity. Training
//! maximizes the point-process likelihood of an observed event stream.

pub mod attention;
pub mod attribute_codec;
pub mod autodiff;
pub mod cli;
pub mod config;
pub mod embedding;
pub mod engine;
pub mod error;
pub mod event_stream;
pub mod intensity;
pub mod params;
pub mod simulator;
pub mod training;

pub use error::{FdgnnError, Result};
