//! Monte-Carlo risk estimation for the estimators of `tomo-core`, and the
//! tables behind the reference figures.

pub mod config;
pub mod error;
pub mod experiment;
pub mod figures;
pub mod report;
pub mod rng;
pub mod stats;

pub use config::{DesignSpec, ExperimentConfig, Metric};
pub use error::{BenchError, Result};
pub use experiment::run_experiment;
pub use figures::{reproduce_figure, FigureName, FigureOptions};
pub use report::{FigureReport, FigureRow, RiskReport, RiskRow, Skipped};
pub use rng::{derive_substream, Stage};
pub use stats::Welford;
