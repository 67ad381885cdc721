//! Common scoring interfaces shared by learned models, the synthetic oracle
//! and the optimizer.

use crate::error::Result;
use crate::pairs::{ComparisonPair, Side};
use crate::params::{FeatureSpace, LayoutParams};

/// Anything that assigns a layout-quality score to a configuration.
pub trait Scorer: Sync {
    fn score(&self, params: &LayoutParams) -> Result<f64>;
}

/// A scorer defined on the normalized feature vector, so it can be
/// differentiated numerically on the unit cube.
pub trait FeatureScorer: Sync {
    fn feature_space(&self) -> &FeatureSpace;
    fn score_features(&self, features: &[f64]) -> f64;
}

/// Anything that predicts the preferred side of a comparison pair.
pub trait PairPredictor {
    fn predict(&self, pair: &ComparisonPair) -> Result<Side>;
}

/// Wraps a closure as a [`Scorer`].
pub struct FnScorer<F>(pub F);

impl<F> Scorer for FnScorer<F>
where
    F: Fn(&LayoutParams) -> f64 + Sync,
{
    fn score(&self, params: &LayoutParams) -> Result<f64> {
        Ok((self.0)(params))
    }
}

/// Wraps a closure over normalized features as a [`FeatureScorer`].
pub struct FnFeatureScorer<F> {
    pub space: FeatureSpace,
    pub f: F,
}

impl<F> FeatureScorer for FnFeatureScorer<F>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn feature_space(&self) -> &FeatureSpace {
        &self.space
    }

    fn score_features(&self, features: &[f64]) -> f64 {
        (self.f)(features)
    }
}

/// Scores both sides and names the strictly higher one; exact ties go to `a`.
pub fn prefer(score_a: f64, score_b: f64) -> Side {
    if score_b > score_a {
        Side::B
    } else {
        Side::A
    }
}
