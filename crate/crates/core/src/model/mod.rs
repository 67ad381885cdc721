//! Siamese scoring network: one shared MLP scores both sides of a pair and is
//! trained with the pairwise margin loss.

mod network;

pub use network::{Adadelta, Dense, Gradients, Mlp, Trace};

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pairs::{ComparisonPair, Dataset, Side};
use crate::params::{FeatureSpace, LayoutParams, ParamGrid};
use crate::scoring::{prefer, FeatureScorer, PairPredictor, Scorer};

pub const MODEL_VERSION: u32 = 1;
pub const DEFAULT_HIDDEN: [usize; 6] = [64, 64, 32, 32, 16, 8];

pub const DEFAULT_BATCH: usize = 32;

/// Pairwise hinge: zero iff the preferred score beats the other by `margin`.
pub fn pair_loss(s_plus: f64, s_minus: f64, margin: f64) -> f64 {
    (s_minus - s_plus + margin).max(0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub margin: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub halving_period: usize,
    pub rho: f64,
    pub eps: f64,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
    pub dropout: f64,
    pub hidden: Vec<usize>,
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            margin: 0.12,
            epochs: 200,
            learning_rate: 1.0,
            halving_period: 30,
            rho: 0.9,
            eps: 1e-6,
            batch_size: Some(DEFAULT_BATCH),
            seed: 0,
            dropout: 0.1,
            hidden: DEFAULT_HIDDEN.to_vec(),
            validation_fraction: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.margin > 0.0) {
            return bad("margin must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if self.halving_period == 0 {
            return bad("halving period must be at least 1");
        }
        if !(0.0..1.0).contains(&self.rho) || !(self.eps > 0.0) {
            return bad("adadelta needs 0 <= rho < 1 and eps > 0");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation fraction must lie in [0, 1)");
        }
        if self.batch_size == Some(0) || self.hidden.contains(&0) {
            return bad("batch size and layer widths must be positive");
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * 0.5f64.powi((epoch / self.halving_period) as i32)
    }

    fn resolve_batch(&self, train_len: usize) -> Result<usize> {
        let size = self.batch_size.unwrap_or(train_len);
        if train_len < size {
            return Err(Error::InsufficientData(format!(
                "{train_len} training pairs is fewer than batch size {size}"
            )));
        }
        Ok(size)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    /// Absent when training without a validation split.
    pub validation_loss: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: ScoringModel,
    pub history: Vec<EpochLoss>,
    /// Epoch whose weights were kept.
    pub best_epoch: usize,
}

/// `(preferred, other)` feature vectors for every labeled pair.
pub fn preference_features(
    dataset: &Dataset,
    space: &FeatureSpace,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    dataset
        .pairs
        .iter()
        .filter_map(|p| Some((p.winner()?, p.loser()?)))
        .map(|(w, l)| Ok((space.normalize(w)?, space.normalize(l)?)))
        .collect()
}

/// Trains a fresh network on the labeled pairs of `dataset`. Features are
/// the grid's active parameters, min-max normalized to the grid bounds.
/// Dropout masks are drawn independently for the two branches of a pair.
pub fn train(dataset: &Dataset, grid: &ParamGrid, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let space = grid.feature_space();
    if space.dim() == 0 {
        return Err(Error::InvalidGrid("grid has no varying parameter".into()));
    }
    let mut examples = preference_features(dataset, &space)?;
    if examples.is_empty() {
        return Err(Error::InsufficientData("dataset has no labeled pairs".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    examples.shuffle(&mut rng);
    let n_val = if examples.len() >= 2 {
        ((examples.len() as f64 * cfg.validation_fraction).round() as usize).min(examples.len() - 1)
    } else {
        0
    };
    let validation = examples.split_off(examples.len() - n_val);
    let mut train_set = examples;
    let batch = cfg.resolve_batch(train_set.len())?;

    let mut net = Mlp::new(space.dim(), &cfg.hidden, &mut rng);
    let mut opt = Adadelta::new(&net, cfg.rho, cfg.eps);
    let mut grads = Gradients::zeros_like(&net);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best = (f64::INFINITY, 0usize, net.clone());

    for epoch in 0..cfg.epochs {
        let lr = cfg.rate_at(epoch);
        if batch < train_set.len() {
            train_set.shuffle(&mut rng);
        }
        for chunk in train_set.chunks(batch) {
            grads.clear();
            let scale = 1.0 / chunk.len() as f64;
            for (plus, minus) in chunk {
                let tp = net.forward_train(plus, cfg.dropout, &mut rng);
                let tm = net.forward_train(minus, cfg.dropout, &mut rng);
                let loss = pair_loss(tp.output, tm.output, cfg.margin);
                if loss > 0.0 {
                    net.backward(&tp, -scale, &mut grads);
                    net.backward(&tm, scale, &mut grads);
                }
            }
            opt.step(&mut net, &grads, lr);
        }
        let train_loss = net.pairwise_loss(&train_set, cfg.margin);
        let validation_loss = (!validation.is_empty()).then(|| net.pairwise_loss(&validation, cfg.margin));
        ensure_finite(epoch, lr, train_loss, validation_loss)?;
        let tracked = validation_loss.unwrap_or(train_loss);
        if tracked < best.0 {
            best = (tracked, epoch, net.clone());
        }
        log::debug!("epoch {epoch}: train {train_loss:.5} validation {validation_loss:?}");
        history.push(EpochLoss {
            epoch,
            learning_rate: lr,
            train_loss,
            validation_loss,
        });
    }

    Ok(TrainOutcome {
        model: ScoringModel::new(space, best.2, cfg.dropout, cfg.clone()),
        history,
        best_epoch: best.1,
    })
}

fn ensure_finite(epoch: usize, lr: f64, train_loss: f64, validation_loss: Option<f64>) -> Result<()> {
    if !train_loss.is_finite() || validation_loss.is_some_and(|v| !v.is_finite()) {
        return Err(Error::Diverged(format!(
            "loss became non-finite at epoch {epoch} (learning rate {lr}): \
             train {train_loss}, validation {validation_loss:?}"
        )));
    }
    Ok(())
}

/// A trained network together with its feature normalization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoringModel {
    pub version: u32,
    pub features: FeatureSpace,
    pub network: Mlp,
    pub dropout: f64,
    pub config: TrainConfig,
}

impl ScoringModel {
    pub fn new(features: FeatureSpace, network: Mlp, dropout: f64, config: TrainConfig) -> Self {
        ScoringModel {
            version: MODEL_VERSION,
            features,
            network,
            dropout,
            config,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MODEL_VERSION {
            return Err(Error::UnsupportedVersion(self.version));
        }
        if !self.network.shapes_chain() || self.network.input_dim() != self.features.dim() {
            return Err(Error::InvalidArgument("model layer shapes do not chain".into()));
        }
        if self
            .features
            .features
            .iter()
            .any(|f| !f.min.is_finite() || !f.max.is_finite() || f.max <= f.min)
        {
            return Err(Error::InvalidArgument("normalization bounds must be finite".into()));
        }
        Ok(())
    }

    pub fn score(&self, params: &LayoutParams) -> Result<f64> {
        Ok(self.network.forward(&self.features.normalize(params)?))
    }

    /// The strictly higher-scoring side; exact ties go to `a`.
    pub fn predict_pair(&self, a: &LayoutParams, b: &LayoutParams) -> Result<Side> {
        Ok(prefer(self.score(a)?, self.score(b)?))
    }

    /// Shifts every score by `delta`.
    pub fn shift_output(&mut self, delta: f64) {
        if let Some(last) = self.network.layers.last_mut() {
            last.bias[0] += delta;
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let model: ScoringModel = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }
}

impl Scorer for ScoringModel {
    fn score(&self, params: &LayoutParams) -> Result<f64> {
        ScoringModel::score(self, params)
    }
}

impl FeatureScorer for ScoringModel {
    fn feature_space(&self) -> &FeatureSpace {
        &self.features
    }

    fn score_features(&self, features: &[f64]) -> f64 {
        self.network.forward(features)
    }
}

impl PairPredictor for ScoringModel {
    fn predict(&self, pair: &ComparisonPair) -> Result<Side> {
        self.predict_pair(&pair.a, &pair.b)
    }
}

/// Largest relative error between the analytic gradient of the mean pair
/// loss and central finite differences, over every weight and bias.
/// Relative error is `|a − n| / max(|a| + |n|, floor)`.
pub fn gradient_check(net: &Mlp, pairs: &[(Vec<f64>, Vec<f64>)], margin: f64, h: f64) -> f64 {
    const FLOOR: f64 = 1e-6;
    let (_, mut analytic) = net.pairwise_loss_and_gradient(pairs, margin);
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for li in 0..net.layers.len() {
        let n_w = net.layers[li].weights.len();
        for k in 0..n_w + net.layers[li].bias.len() {
            let orig = *slot(&mut probe.layers, li, k);
            *slot(&mut probe.layers, li, k) = orig + h;
            let up = probe.pairwise_loss(pairs, margin);
            *slot(&mut probe.layers, li, k) = orig - h;
            let down = probe.pairwise_loss(pairs, margin);
            *slot(&mut probe.layers, li, k) = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = *slot(&mut analytic.layers, li, k);
            worst = worst.max((a - numeric).abs() / (a.abs() + numeric.abs()).max(FLOOR));
        }
    }
    worst
}

fn slot(layers: &mut [Dense], layer: usize, k: usize) -> &mut f64 {
    let l = &mut layers[layer];
    let n_w = l.weights.len();
    if k < n_w {
        &mut l.weights[k]
    } else {
        &mut l.bias[k - n_w]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairs::Provenance;
    use crate::params::{default_grid, Experiment, Param};
    use crate::render::ChartData;
    use rand::Rng;

    #[test]
    fn hinge_values() {
        assert_eq!(pair_loss(0.5, 0.3, 0.12), 0.0);
        assert!((pair_loss(0.3, 0.5, 0.12) - 0.32).abs() < 1e-12);
        assert_eq!(pair_loss(0.4, 0.4, 0.12), 0.12);
    }

    fn micro_pairs(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
        (0..n)
            .map(|_| {
                let a: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.0..1.0)).collect();
                let b: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.0..1.0)).collect();
                (a, b)
            })
            .collect()
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Mlp::new(3, &[6], &mut rng);
        let pairs = micro_pairs(&mut rng, 12, 3);
        // a large margin keeps every hinge active, away from its kink
        let err = gradient_check(&net, &pairs, 10.0, 1e-5);
        assert!(err <= 1e-4, "relative error {err}");
    }

    #[test]
    fn satisfied_margins_give_zero_loss_and_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let net = Mlp::new(2, &[4], &mut rng);
        let pairs: Vec<_> = micro_pairs(&mut rng, 20, 2)
            .into_iter()
            .map(|(a, b)| if net.forward(&a) >= net.forward(&b) { (a, b) } else { (b, a) })
            .filter(|(a, b)| net.forward(a) - net.forward(b) >= 0.01)
            .collect();
        let (loss, g) = net.pairwise_loss_and_gradient(&pairs, 0.01);
        assert_eq!(loss, 0.0);
        assert_eq!(g, Gradients::zeros_like(&net));
        let (loss, _) = net.pairwise_loss_and_gradient(&pairs, 100.0);
        assert!(loss > 0.0);
    }

    fn linear_dataset(n: usize, seed: u64) -> (Dataset, ParamGrid) {
        let grid = default_grid(Experiment::Exp1);
        let space = grid.feature_space();
        let truth = |p: &LayoutParams| {
            let x = space.normalize(p).unwrap();
            x.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * v).sum::<f64>()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = ChartData::new(vec!["a".into()], vec![1.0]).unwrap();
        let mut pairs = Vec::new();
        while pairs.len() < n {
            let a = grid.sample(&mut rng);
            let b = grid.sample(&mut rng);
            let (sa, sb) = (truth(&a), truth(&b));
            if (sa - sb).abs() < 1e-9 {
                continue;
            }
            pairs.push(ComparisonPair {
                id: format!("uni-{:06}", pairs.len()),
                experiment: Experiment::Exp1,
                provenance: Provenance::Uniform,
                data: data.clone(),
                a,
                b,
                label: Some(if sa > sb { Side::A } else { Side::B }),
                desk_reject: None,
            });
        }
        (Dataset::new(Experiment::Exp1, pairs).unwrap(), grid)
    }

    #[test]
    fn learns_a_separable_linear_ranking() {
        let (ds, grid) = linear_dataset(200, 1);
        let out = train(&ds, &grid, &TrainConfig::default()).unwrap();
        let correct = ds
            .pairs
            .iter()
            .filter(|p| out.model.predict(p).unwrap() == p.label.unwrap())
            .count();
        assert!(correct as f64 / 200.0 >= 0.95, "accuracy {}", correct as f64 / 200.0);
        let first: f64 = out.history[..10].iter().map(|e| e.train_loss).sum();
        let last: f64 = out.history[out.history.len() - 10..].iter().map(|e| e.train_loss).sum();
        assert!(last <= first);
        assert_eq!(out.history.len(), 200);
        assert_eq!(out.history[30].learning_rate, 0.5);
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let (ds, grid) = linear_dataset(60, 2);
        let cfg = TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        };
        let a = train(&ds, &grid, &cfg).unwrap().model;
        let b = train(&ds, &grid, &cfg).unwrap().model;
        assert_eq!(a, b);
        let c = train(&ds, &grid, &TrainConfig { seed: 9, ..cfg }).unwrap().model;
        assert_ne!(a, c);
    }

    #[test]
    fn batch_larger_than_dataset_is_rejected() {
        let (ds, grid) = linear_dataset(20, 3);
        let cfg = TrainConfig {
            batch_size: Some(64),
            ..TrainConfig::default()
        };
        assert!(matches!(train(&ds, &grid, &cfg), Err(Error::InsufficientData(_))));
        assert!(train(&Dataset::empty(Experiment::Exp1), &grid, &TrainConfig::default()).is_err());
    }

    #[test]
    fn non_finite_loss_is_reported() {
        assert!(ensure_finite(3, 1.0, 0.2, Some(0.3)).is_ok());
        assert!(matches!(ensure_finite(3, 1.0, f64::NAN, None), Err(Error::Diverged(_))));
        assert!(matches!(
            ensure_finite(3, 1.0, 0.2, Some(f64::INFINITY)),
            Err(Error::Diverged(_))
        ));
    }

    fn small_model(seed: u64) -> ScoringModel {
        let grid = default_grid(Experiment::Exp1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let space = grid.feature_space();
        let net = Mlp::new(space.dim(), &[8, 4], &mut rng);
        ScoringModel::new(space, net, 0.1, TrainConfig::default())
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let m = small_model(3);
        let back = ScoringModel::from_json_str(&m.to_json_string()).unwrap();
        assert_eq!(back, m);
        let grid = default_grid(Experiment::Exp1);
        for p in grid.cells().step_by(37) {
            assert_eq!(m.score(&p).unwrap().to_bits(), back.score(&p).unwrap().to_bits());
        }
    }

    #[test]
    fn bad_model_files_are_rejected() {
        let mut m = small_model(4);
        m.version = 7;
        assert!(matches!(
            ScoringModel::from_json_str(&m.to_json_string()),
            Err(Error::UnsupportedVersion(7))
        ));
        let mut m = small_model(4);
        m.network.layers[1].inputs = 3;
        assert!(ScoringModel::from_json_str(&m.to_json_string()).is_err());
    }

    #[test]
    fn out_of_bounds_params_are_range_errors() {
        let m = small_model(5);
        let mut p = default_grid(Experiment::Exp1).cell(0);
        p.bandwidth = 1.5;
        assert!(matches!(
            m.score(&p),
            Err(Error::OutOfRange {
                param: Param::Bandwidth,
                ..
            })
        ));
    }

    #[test]
    fn bias_shift_moves_scores_not_decisions() {
        let m = small_model(6);
        let mut shifted = m.clone();
        shifted.shift_output(2.5);
        let grid = default_grid(Experiment::Exp1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let (a, b) = (grid.sample(&mut rng), grid.sample(&mut rng));
            let d = shifted.score(&a).unwrap() - m.score(&a).unwrap();
            assert!((d - 2.5).abs() < 1e-12);
            assert_eq!(m.predict_pair(&a, &b).unwrap(), shifted.predict_pair(&a, &b).unwrap());
        }
    }

    #[test]
    fn predict_pair_is_antisymmetric() {
        let m = small_model(7);
        let grid = default_grid(Experiment::Exp1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let (a, b) = (grid.sample(&mut rng), grid.sample(&mut rng));
            if m.score(&a).unwrap() == m.score(&b).unwrap() {
                assert_eq!(m.predict_pair(&a, &b).unwrap(), Side::A);
                continue;
            }
            let first = *if m.predict_pair(&a, &b).unwrap() == Side::A { &a } else { &b };
            let second = *if m.predict_pair(&b, &a).unwrap() == Side::A { &b } else { &a };
            assert_eq!(first, second);
        }
    }
}
