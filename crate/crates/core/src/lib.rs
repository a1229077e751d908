//! Multiple-instance task-driven dictionary learning for wideband EMI
//! buried-object detection.
//!
//! The crate covers the whole detection chain:
//!
//! - [`dsrf`]: relaxation-frequency response model and fixed dictionaries;
//! - [`sim`]: synthetic lane generator standing in for measured sweeps;
//! - [`solvers`]: matching pursuits and elastic-net coordinate descent;
//! - [`alarms`]: joint-pursuit prescreening, mean shift, alarm extraction;
//! - [`td_efumi`]: latent posteriors, objective, gradients, trainer, classifier;
//! - [`evaluation`]: lane-based folds, clutter removal, ROC scoring;
//! - [`pipeline`]: the cross-validated end-to-end run.

// `!(x > 0.0)` rejects NaN as well; index loops mirror the formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod alarms;
pub mod dsrf;
pub mod error;
pub mod evaluation;
pub mod io;
pub(crate) mod linalg;
pub mod pipeline;
pub mod sim;
pub mod solvers;
pub mod td_efumi;

pub use error::{Error, Result};
