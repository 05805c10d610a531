//! Boosted convolutional and recurrent weak learners for multilabel
//! sequence labeling.
//!
//! The numeric core (tensors, the differentiation graph, the optimizer) is
//! generic over the scalar type; the rest of the crate and the aliases below
//! fix it to f64.

pub mod boosting;
pub mod cli;
pub mod config;
pub mod explain;
pub mod gradcheck;
pub mod graph;
pub mod learners;
pub mod matrix;
pub mod metrics;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod sequences;
pub mod synth;
pub mod tensor;
pub mod tensorio;

pub use matrix::{LabelMatrix, PredictionSequence, SeqMatrix, ValueKind};
pub use scalar::Scalar;

/// f64 tensor used throughout the pipeline.
pub type Tensor = tensor::Tensor<f64>;
/// f64 differentiation graph used throughout the pipeline.
pub type Graph = graph::Graph<f64>;
/// f64 parameter set used throughout the pipeline.
pub type ParamSet = optim::ParamSet<f64>;
