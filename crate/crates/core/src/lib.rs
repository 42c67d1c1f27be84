//! Neuron-activity-aware (NeAW) Hebbian learning for point clouds.
//!
//! A winner-take-all MLP encoder is trained without labels by rules that
//! switch each output neuron between Hebbian and anti-Hebbian updates
//! depending on how often it wins. A small supervised head classifies the
//! max-pooled global feature. The `analysis` module checks the geometric
//! winner-flip properties of the rule family and the activity statistics.
//!
//! All model types are generic over [`Scalar`] (`f32`/`f64`); the `*64`
//! aliases below are what the CLI and the tests use.

pub mod analysis;
pub mod classifier;
pub mod data;
pub mod encoder;
pub mod error;
pub mod numerics;
pub mod persist;
pub mod rules;

pub use error::{Error, Result};
pub use numerics::{Matrix, Scalar, SeededRng};

pub type Vec64 = Vec<f64>;
pub type Mat64 = Matrix<f64>;
pub type Mat32 = Matrix<f32>;

pub type WtaLayer64 = encoder::WtaLayer<f64>;
pub type EncoderModel64 = encoder::EncoderModel<f64>;
pub type EncoderModel32 = encoder::EncoderModel<f32>;
pub type GlobalFeature64 = encoder::GlobalFeature<f64>;
pub type ClassifierModel64 = classifier::ClassifierModel<f64>;
pub type ClassifierModel32 = classifier::ClassifierModel<f32>;
