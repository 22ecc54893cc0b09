//! Regime-aware forecasting toolkit: market data alignment, recession-aware
//! splits, from-scratch recurrent models, evaluation metrics, a GBM baseline
//! and a squared-error recession index.

#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::too_many_arguments,
    clippy::large_enum_variant
)]

pub mod data;
pub mod error;
pub mod experiment;
pub mod gbm;
pub mod metrics;
pub mod nn;
pub mod recession_index;
pub mod split;
pub mod synthetic;
pub mod train;

pub use data::{FactorPanel, FeaturePanel, PriceSeries, RecessionCalendar};
pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, RunOptions};
pub use metrics::{EvaluationSeries, MetricReport, MetricRow, Regime};
pub use nn::{HSource, ModelKind, ModelParams};
pub use split::{SplitSet, SubPeriod, TrainSet};
pub use train::{HyperParams, TrainConfig, TrainedModel};
