//! Iterative evolutionary feature construction.
//!
//! A small number of small symbolic features (expression trees over the
//! original columns of a dataset) are evolved one at a time, each scored by
//! the cross-validated error of a chosen learner on the features built so
//! far. The constructed features then replace the original feature set.
//!
//! Module map:
//! - [`dataset`]: CSV loading, train/test split, stratified folds.
//! - [`exprtree`]: tree genotypes (fixed-height templates and free-shape trees).
//! - [`semantics`]: protected evaluation and the evaluation-skip criteria.
//! - [`learners`]: naive Bayes, least squares, CART, random forest and metrics.
//! - [`search`]: random search, standard GP (bounded or not) and GP-GOMEA.
//! - [`fcs`]: the K-round construction loop and baseline scoring.
//! - [`cli`]: command-line front end, batch runs and grid export.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod exprtree;
pub mod fcs;
pub mod learners;
pub mod search;
pub mod semantics;

mod seeds;

pub use error::{Error, Result};
pub use seeds::derive_seed;
