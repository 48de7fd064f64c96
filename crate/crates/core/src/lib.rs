//! Causal parent discovery for targets whose conditional law is a
//! generalized linear model.
//!
//! A covariate subset is a candidate parent set when its penalized GLM fit
//! leaves a perfectly dispersed Pearson statistic. Candidates are found by
//! exhaustive or stepwise search and refined by BIC.

pub mod basis;
pub mod bench;
pub mod cli;
pub mod data;
pub mod disptest;
pub mod edf;
pub mod error;
pub mod fit;
pub mod registry;
pub mod report;
pub mod rng;
pub mod search;
pub mod simulate;
pub mod special;

pub use basis::{build_design, BasisKind, BasisSpec, Design};
pub use data::Dataset;
pub use disptest::{bootstrap_test, chisq_test, pearson_statistic, DispersionTest, TestResult};
pub use edf::Family;
pub use error::{Error, Result};
pub use fit::{fit_glm, select_lambda, FitResult};
pub use registry::Registry;
pub use search::{discover, full_search, stepwise_search, SearchConfig, SearchReport};
pub use report::RunReport;
