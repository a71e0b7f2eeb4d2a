//! Optimal case:control sampling ratios for comparative diagnostic trials.
//!
//! The crate estimates the variance components (v_x, v_y) of paired ROC
//! comparisons (DeLong's AUC difference and the weighted-AUC Δ-statistic),
//! turns them into optimal sampling ratios, sample sizes and power, runs the
//! two-stage internal-pilot procedure, and reproduces its Monte Carlo studies.

pub mod design;
pub mod error;
pub mod kde;
pub mod models;
pub mod normal;
pub mod numeric;
pub mod roc;
pub mod sample;
pub mod sim;
pub mod two_stage;
pub mod variance;

pub use error::{Error, Result};
pub use design::{DesignParams, FinalTest, SizePlan};
pub use kde::SmoothingSpec;
pub use models::{Family, ModelSpec, TargetSummary};
pub use roc::WeightMeasure;
pub use sample::{Marker, PairedSample};
pub use two_stage::{Phase, TwoStageState};
pub use variance::{Estimator, VarianceComponents};
