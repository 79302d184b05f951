//! Banded score prediction by combining continuous regressor outputs through a
//! Beta³ item-response model.
//!
//! The pipeline: featurize essays (or load a feature table), train a roster of
//! regressors, measure each model's per-band error on a validation split,
//! fit an item-response model to that error matrix, and use the fitted error
//! expectations to size per-model confidence intervals that vote on the final
//! score band. Agreement metrics (Cohen's kappa, QWK, Pearson) evaluate every
//! system under stratified cross-validation.

pub mod birt;
pub mod combiner;
pub mod features;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod regressors;
pub mod scale;
pub mod seeding;

mod error;

pub use error::{Error, Result};
