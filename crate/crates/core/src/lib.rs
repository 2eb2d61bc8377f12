//! Sleep-event detection from polysomnography: record containers, signal
//! preparation, the dense recurrent convolutional network, multi-task
//! training, scoring and clinical summaries.

pub mod clinical;
pub mod container;
pub mod error;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod prediction;
pub mod prep;
pub mod record;
pub mod remap;
pub mod train;

pub use error::{Error, Result};

