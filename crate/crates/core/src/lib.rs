//! Evidence-faithful document classification.
//!
//! A classifier predicts a label for a `(document, query)` pair; an
//! attribution method ranks the document's sentences; the sufficiency loop
//! grows a ranked prefix until the model reproduces its full-document
//! prediction. Training can add attention regularization and entropy
//! maximization from a small amount of sentence-level evidence supervision.

pub mod attribution;
pub mod baselines;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod sufficiency;
pub mod training;

pub use error::{Error, Result};
