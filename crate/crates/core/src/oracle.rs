//! Synthetic stand-in for crowd raters.
//!
//! A hidden ground-truth quality function scores each configuration; every
//! simulated rater then prefers side `a` with probability
//! `σ(β · (score(a) − score(b)))`. With the default unanimous policy only
//! pairs on which all raters agree receive a label.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{LabelRotation, LayoutParams, Orientation};
use crate::scoring::Scorer;

/// Agreement rate among three raters reported for the crowd study.
pub const TARGET_UNANIMITY: f64 = 0.456;

/// Argmax of the rulebook over the default Experiment-1 grid:
/// `(num_bars, aspect_ratio, bandwidth)`.
pub const RULEBOOK_EXP1_OPTIMUM: (u32, f64, f64) = (2, 4.0, 0.85);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GroundTruth {
    /// Hand-written quality function encoding the qualitative findings of
    /// the crowd study (see [`rulebook_score`]).
    Rulebook,
    /// A seeded random smooth function, for tests that must not depend on
    /// the rulebook's shape.
    RandomSmooth { seed: u64 },
}

impl GroundTruth {
    pub fn score(&self, p: &LayoutParams) -> f64 {
        match *self {
            GroundTruth::Rulebook => rulebook_score(p),
            GroundTruth::RandomSmooth { seed } => random_smooth_score(p, seed),
        }
    }
}

impl Scorer for GroundTruth {
    fn score(&self, params: &LayoutParams) -> Result<f64> {
        Ok(GroundTruth::score(self, params))
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Rulebook ground truth in `[0, 1]`: a weighted mean of
///
/// * bandwidth: Gaussian bump of width 0.25 peaking at 0.8 (vertical) or
///   0.675 (horizontal);
/// * aspect ratio: logistic rise centred at 1.0, plateauing from about 1.5;
/// * bar count: `exp(-(n - 2) / 15)`;
/// * label rotation: 1.0 / 0.75 / 0.45 for 0° / 45° / 90°;
/// * label length: linear penalty, stronger for vertical charts.
pub fn rulebook_score(p: &LayoutParams) -> f64 {
    let vertical = p.orientation == Orientation::Vertical;
    let peak = if vertical { 0.8 } else { 0.675 };
    let bandwidth = (-((p.bandwidth - peak) / 0.25).powi(2)).exp();
    let aspect = logistic((p.aspect_ratio - 1.0) / 0.2);
    let bars = (-(f64::from(p.num_bars) - 2.0) / 15.0).exp();
    let rotation = match p.label_rotation {
        LabelRotation::Deg0 => 1.0,
        LabelRotation::Deg45 => 0.75,
        LabelRotation::Deg90 => 0.45,
    };
    let slope = if vertical { 0.5 } else { 0.2 };
    let length = (1.0 - slope * (f64::from(p.max_label_length) - 1.0) / 19.0).max(0.0);

    const W: [f64; 5] = [0.45, 0.25, 0.30, 0.25, 0.15];
    let total: f64 = W.iter().sum();
    (W[0] * bandwidth + W[1] * aspect + W[2] * bars + W[3] * rotation + W[4] * length) / total
}

fn random_smooth_score(p: &LayoutParams, seed: u64) -> f64 {
    let x = [
        f64::from(p.num_bars) / 30.0,
        p.aspect_ratio / 4.0,
        p.bandwidth,
        f64::from(p.max_label_length) / 20.0,
        f64::from(p.label_rotation.degrees()) / 90.0,
        p.orientation.code(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = 0.0;
    for _ in 0..6 {
        let amp: f64 = rng.gen_range(0.3..1.0);
        let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let dot: f64 = x.iter().map(|xi| xi * rng.gen_range(-4.0..4.0)).sum();
        acc += amp * (dot + phase).cos();
    }
    logistic(acc)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgreementPolicy {
    Unanimous,
    Majority,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Judgement {
    AUnanimous,
    BUnanimous,
    /// Majority winner under [`AgreementPolicy::Majority`].
    AMajority,
    BMajority,
    Discarded,
}

impl Judgement {
    pub fn winner(self) -> Option<crate::pairs::Side> {
        use crate::pairs::Side;
        match self {
            Judgement::AUnanimous | Judgement::AMajority => Some(Side::A),
            Judgement::BUnanimous | Judgement::BMajority => Some(Side::B),
            Judgement::Discarded => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default = "default_truth")]
    pub truth: GroundTruth,
    /// Choice temperature β.
    pub beta: f64,
    #[serde(default = "default_raters")]
    pub raters: u32,
    #[serde(default = "default_agreement")]
    pub agreement: AgreementPolicy,
    #[serde(default)]
    pub seed: u64,
}

fn default_truth() -> GroundTruth {
    GroundTruth::Rulebook
}

fn default_raters() -> u32 {
    3
}

fn default_agreement() -> AgreementPolicy {
    AgreementPolicy::Unanimous
}

impl OracleConfig {
    pub fn new(truth: GroundTruth, beta: f64, seed: u64) -> Self {
        OracleConfig {
            truth,
            beta,
            raters: 3,
            agreement: AgreementPolicy::Unanimous,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta.is_nan() || self.beta <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "oracle beta must be positive, got {}",
                self.beta
            )));
        }
        if self.raters == 0 {
            return Err(Error::InvalidArgument("oracle needs at least one rater".into()));
        }
        Ok(())
    }

    pub fn true_score(&self, p: &LayoutParams) -> f64 {
        self.truth.score(p)
    }

    /// Probability that a single rater prefers `a`.
    pub fn prefer_a_probability(&self, a: &LayoutParams, b: &LayoutParams) -> f64 {
        choice_probability(self.beta, self.true_score(a) - self.true_score(b))
    }

    pub fn judge_pair<R: Rng + ?Sized>(
        &self,
        a: &LayoutParams,
        b: &LayoutParams,
        rng: &mut R,
    ) -> Judgement {
        let q = self.prefer_a_probability(a, b);
        let votes_a = (0..self.raters).filter(|_| rng.gen::<f64>() < q).count() as u32;
        let votes_b = self.raters - votes_a;
        match self.agreement {
            AgreementPolicy::Unanimous if votes_b == 0 => Judgement::AUnanimous,
            AgreementPolicy::Unanimous if votes_a == 0 => Judgement::BUnanimous,
            AgreementPolicy::Unanimous => Judgement::Discarded,
            AgreementPolicy::Majority if votes_b == 0 => Judgement::AUnanimous,
            AgreementPolicy::Majority if votes_a == 0 => Judgement::BUnanimous,
            AgreementPolicy::Majority if votes_a > votes_b => Judgement::AMajority,
            AgreementPolicy::Majority if votes_b > votes_a => Judgement::BMajority,
            AgreementPolicy::Majority => Judgement::Discarded,
        }
    }

    /// Judges one pair with a generator seeded from the config seed and a
    /// per-pair salt.
    pub fn judge_pair_seeded(&self, a: &LayoutParams, b: &LayoutParams, salt: u64) -> Judgement {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(salt);
        self.judge_pair(a, b, &mut rng)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("oracle config serializes")
    }
}

/// `σ(β·Δ)`, with the noiseless limit handled explicitly.
pub fn choice_probability(beta: f64, delta: f64) -> f64 {
    if beta.is_infinite() {
        return match delta.partial_cmp(&0.0) {
            Some(std::cmp::Ordering::Greater) => 1.0,
            Some(std::cmp::Ordering::Less) => 0.0,
            _ => 0.5,
        };
    }
    logistic(beta * delta)
}

/// Probability that all `raters` agree when each prefers `a` with
/// probability `q`.
pub fn unanimity_probability(q: f64, raters: u32) -> f64 {
    q.powi(raters as i32) + (1.0 - q).powi(raters as i32)
}

/// Mean unanimity probability over score gaps at temperature `beta`.
pub fn expected_unanimity(beta: f64, gaps: &[f64], raters: u32) -> f64 {
    if gaps.is_empty() {
        return 0.0;
    }
    gaps.iter()
        .map(|&d| unanimity_probability(choice_probability(beta, d), raters))
        .sum::<f64>()
        / gaps.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub truth: GroundTruth,
    pub target: f64,
    pub beta: f64,
    /// Mean closed-form unanimity probability at `beta`.
    pub expected_unanimity: f64,
    /// Realized unanimity rate when the pairs are actually judged.
    pub empirical_unanimity: f64,
    pub pairs: usize,
    pub iterations: u32,
    pub seed: u64,
}

/// Finds β such that the mean unanimity probability over `pairs` equals
/// `target`, by bisection on `ln β`.
pub fn calibrate_beta(
    truth: GroundTruth,
    pairs: &[(LayoutParams, LayoutParams)],
    target: f64,
    raters: u32,
    seed: u64,
) -> Result<CalibrationReport> {
    if pairs.is_empty() {
        return Err(Error::InsufficientData("calibration needs at least one pair".into()));
    }
    let floor = 0.5f64.powi(raters as i32 - 1);
    let gaps: Vec<f64> = pairs
        .iter()
        .map(|(a, b)| truth.score(a) - truth.score(b))
        .collect();
    let ceiling = expected_unanimity(f64::INFINITY, &gaps, raters);
    if !(target > floor && target < ceiling) {
        return Err(Error::InvalidArgument(format!(
            "target unanimity {target} is outside the attainable range ({floor}, {ceiling})"
        )));
    }
    let (mut lo, mut hi) = (1e-3f64.ln(), 1e5f64.ln());
    let mut iterations = 0;
    while hi - lo > 1e-10 && iterations < 200 {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        if expected_unanimity(mid.exp(), &gaps, raters) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let beta = (0.5 * (lo + hi)).exp();
    let cfg = OracleConfig {
        truth,
        beta,
        raters,
        agreement: AgreementPolicy::Unanimous,
        seed,
    };
    let unanimous = pairs
        .iter()
        .enumerate()
        .filter(|(i, (a, b))| cfg.judge_pair_seeded(a, b, *i as u64) != Judgement::Discarded)
        .count();
    Ok(CalibrationReport {
        truth,
        target,
        beta,
        expected_unanimity: expected_unanimity(beta, &gaps, raters),
        empirical_unanimity: unanimous as f64 / pairs.len() as f64,
        pairs: pairs.len(),
        iterations,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{default_grid, Experiment};

    #[test]
    fn rulebook_prefers_bandwidth_near_08() {
        let base = LayoutParams::default();
        let good = LayoutParams {
            bandwidth: 0.8,
            ..base
        };
        let bad = LayoutParams {
            bandwidth: 0.3,
            ..base
        };
        assert!(rulebook_score(&good) > rulebook_score(&bad));
        assert_eq!(rulebook_score(&good), rulebook_score(&good));
    }

    #[test]
    fn rulebook_shape() {
        let base = LayoutParams::default();
        let rot = |r| rulebook_score(&LayoutParams {
            label_rotation: r,
            ..base
        });
        assert!(rot(LabelRotation::Deg0) > rot(LabelRotation::Deg45));
        assert!(rot(LabelRotation::Deg45) > rot(LabelRotation::Deg90));
        let bars = |n| rulebook_score(&LayoutParams {
            num_bars: n,
            ..base
        });
        assert!(bars(3) > bars(10) && bars(10) > bars(25));
        // horizontal peak sits lower than the vertical one
        let h = |bw| rulebook_score(&LayoutParams {
            bandwidth: bw,
            orientation: Orientation::Horizontal,
            ..base
        });
        assert!(h(0.675) > h(0.8));
        for p in default_grid(Experiment::Exp2).cells().step_by(97) {
            let s = rulebook_score(&p);
            assert!((0.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn rulebook_exp1_argmax_matches_documented_optimum() {
        let g = default_grid(Experiment::Exp1);
        let best = g
            .cells()
            .max_by(|a, b| rulebook_score(a).total_cmp(&rulebook_score(b)))
            .unwrap();
        let (n, ar, bw) = RULEBOOK_EXP1_OPTIMUM;
        assert_eq!((best.num_bars, best.aspect_ratio, best.bandwidth), (n, ar, bw));
    }

    #[test]
    fn random_smooth_is_deterministic_and_bounded() {
        let t = GroundTruth::RandomSmooth { seed: 9 };
        let p = LayoutParams::default();
        assert_eq!(t.score(&p), t.score(&p));
        assert!((0.0..1.0).contains(&t.score(&p)));
        assert_ne!(t.score(&p), GroundTruth::RandomSmooth { seed: 10 }.score(&p));
    }

    #[test]
    fn noiseless_oracle_picks_better_side() {
        let cfg = OracleConfig::new(GroundTruth::Rulebook, f64::INFINITY, 0);
        let a = LayoutParams {
            bandwidth: 0.8,
            ..LayoutParams::default()
        };
        let b = LayoutParams {
            bandwidth: 0.1,
            ..a
        };
        for salt in 0..50 {
            assert_eq!(cfg.judge_pair_seeded(&a, &b, salt), Judgement::AUnanimous);
            assert_eq!(cfg.judge_pair_seeded(&b, &a, salt), Judgement::BUnanimous);
        }
    }

    #[test]
    fn tied_scores_are_unanimous_a_quarter_of_the_time() {
        assert!((unanimity_probability(0.5, 3) - 0.25).abs() < 1e-15);
        let cfg = OracleConfig::new(GroundTruth::Rulebook, 7.0, 5);
        let p = LayoutParams::default();
        let n = 40_000;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let hits = (0..n)
            .filter(|_| cfg.judge_pair(&p, &p, &mut rng) != Judgement::Discarded)
            .count() as f64;
        let sd = (0.25 * 0.75 / n as f64).sqrt();
        assert!((hits / n as f64 - 0.25).abs() < 4.0 * sd);
    }

    #[test]
    fn swapped_pairs_have_mirrored_outcomes() {
        let cfg = OracleConfig::new(GroundTruth::Rulebook, 6.0, 3);
        let a = LayoutParams::default();
        let b = LayoutParams {
            num_bars: 12,
            bandwidth: 0.4,
            ..a
        };
        let n = 20_000u64;
        let count = |x: &LayoutParams, y: &LayoutParams, want: Judgement| {
            (0..n).filter(|&s| cfg.judge_pair_seeded(x, y, s) == want).count() as f64 / n as f64
        };
        let fwd = count(&a, &b, Judgement::AUnanimous);
        let rev = count(&b, &a, Judgement::BUnanimous);
        assert!((fwd - rev).abs() < 0.03, "{fwd} vs {rev}");
    }

    #[test]
    fn majority_policy_never_discards_odd_panels() {
        let cfg = OracleConfig {
            agreement: AgreementPolicy::Majority,
            ..OracleConfig::new(GroundTruth::Rulebook, 2.0, 0)
        };
        let p = LayoutParams::default();
        for s in 0..100 {
            assert_ne!(cfg.judge_pair_seeded(&p, &p, s), Judgement::Discarded);
        }
    }

    #[test]
    fn unanimity_grows_with_beta() {
        let g = default_grid(Experiment::Exp1);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pairs: Vec<_> = (0..2000).map(|_| (g.sample(&mut rng), g.sample(&mut rng))).collect();
        let rate = |beta: f64| {
            let cfg = OracleConfig::new(GroundTruth::Rulebook, beta, 12);
            pairs
                .iter()
                .enumerate()
                .filter(|(i, (a, b))| cfg.judge_pair_seeded(a, b, *i as u64) != Judgement::Discarded)
                .count()
        };
        let rates: Vec<usize> = [0.5, 2.0, 8.0, 32.0].into_iter().map(rate).collect();
        for w in rates.windows(2) {
            assert!(w[0] <= w[1], "{rates:?}");
        }
    }

    #[test]
    fn calibration_hits_target() {
        let g = default_grid(Experiment::Exp1);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pairs: Vec<_> = (0..5000).map(|_| (g.sample(&mut rng), g.sample(&mut rng))).collect();
        let r = calibrate_beta(GroundTruth::Rulebook, &pairs, TARGET_UNANIMITY, 3, 1).unwrap();
        assert!((r.expected_unanimity - TARGET_UNANIMITY).abs() < 1e-6);
        assert!((r.empirical_unanimity - TARGET_UNANIMITY).abs() < 0.03);
        assert!(calibrate_beta(GroundTruth::Rulebook, &pairs, 0.2, 3, 1).is_err());
    }

    #[test]
    fn config_json_defaults() {
        let cfg: OracleConfig = serde_json::from_str(r#"{"beta": 4.5}"#).unwrap();
        assert_eq!(cfg.raters, 3);
        assert_eq!(cfg.truth, GroundTruth::Rulebook);
        let back: OracleConfig = serde_json::from_str(&cfg.to_json_string()).unwrap();
        assert_eq!(back, cfg);
        assert!(OracleConfig::new(GroundTruth::Rulebook, -1.0, 0).validate().is_err());
    }
}
