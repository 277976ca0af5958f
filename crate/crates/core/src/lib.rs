//! Bidirectional message-passing neural networks for molecular property
//! prediction: parsing, featurization, a reverse-mode autodiff engine, model
//! variants, training, feature selection, tuning and diversity statistics.

pub mod checkpoint;
pub mod chem;
pub mod dataset;
pub mod diversity;
pub mod elements;
pub mod error;
pub mod features;
pub mod layout;
pub mod metrics;
pub mod mpnn;
pub mod pipeline;
pub mod protocol;
pub mod selection;
pub mod tensor;
pub mod train;
pub mod tuning;

pub use error::{Error, Result};
