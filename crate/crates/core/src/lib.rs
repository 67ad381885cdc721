//! Learned layout-quality scores for bar charts.
//!
//! Layout configurations are sampled from a parameter grid, compared in
//! pairs by raters (simulated or human), and used to train a shared scoring
//! network. The score can then be maximized over the grid by brute force.

pub mod baselines;
pub mod error;
pub mod eval;
pub mod model;
pub mod optimize;
pub mod oracle;
pub mod pairs;
pub mod params;
pub mod render;
pub mod scoring;

pub use error::{Error, Result};
pub use model::{train, ScoringModel, TrainConfig};
pub use pairs::{ComparisonPair, Dataset, Side};
pub use params::{default_grid, Experiment, LayoutParams, Param, ParamGrid};
pub use scoring::{FeatureScorer, PairPredictor, Scorer};
