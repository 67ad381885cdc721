//! Comparison-pair generation, desk-reject auto-labelling, simulated crowd
//! labelling and the two offline resampling strategies.
//!
//! Dataset files are JSONL: one [`ComparisonPair`] per line, fields in
//! declaration order.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{Judgement, OracleConfig};
use crate::params::{sample_index, Experiment, LayoutParams, Param, ParamGrid};
use crate::render::{desk_reject, layout, ChartData, DeskRules, RejectReason, Verdict};
use crate::scoring::FeatureScorer;

/// Base height used when rendering charts for desk-reject checks. Verdicts
/// do not depend on it.
pub const DESK_BASE_HEIGHT: u32 = 300;

const MAX_SIDE_ATTEMPTS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Uniform,
    Importance,
    Gradient,
    Human,
}

impl Provenance {
    fn prefix(self) -> &'static str {
        match self {
            Provenance::Uniform => "uni",
            Provenance::Importance => "imp",
            Provenance::Gradient => "grd",
            Provenance::Human => "hum",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonPair {
    pub id: String,
    pub experiment: Experiment,
    pub provenance: Provenance,
    pub data: ChartData,
    pub a: LayoutParams,
    pub b: LayoutParams,
    /// The preferred side, once known.
    pub label: Option<Side>,
    /// Set when the label came from a desk-reject rule on the losing side.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub desk_reject: Option<RejectReason>,
}

impl ComparisonPair {
    pub fn side(&self, side: Side) -> &LayoutParams {
        match side {
            Side::A => &self.a,
            Side::B => &self.b,
        }
    }

    pub fn winner(&self) -> Option<&LayoutParams> {
        self.label.map(|s| self.side(s))
    }

    pub fn loser(&self) -> Option<&LayoutParams> {
        self.label.map(|s| self.side(s.other()))
    }

    /// The same pair with sides exchanged and the label flipped.
    pub fn swapped(&self) -> ComparisonPair {
        ComparisonPair {
            a: self.b,
            b: self.a,
            label: self.label.map(Side::other),
            ..self.clone()
        }
    }

    /// Data fitted to one side's bar count.
    pub fn data_for(&self, side: Side) -> ChartData {
        self.data.fitted(self.side(side).num_bars as usize)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub experiment: Experiment,
    pub pairs: Vec<ComparisonPair>,
}

impl Dataset {
    pub fn new(experiment: Experiment, pairs: Vec<ComparisonPair>) -> Result<Self> {
        let ds = Dataset { experiment, pairs };
        ds.validate()?;
        Ok(ds)
    }

    pub fn empty(experiment: Experiment) -> Self {
        Dataset {
            experiment,
            pairs: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for p in &self.pairs {
            if !ids.insert(p.id.as_str()) {
                return Err(Error::InvalidData(format!("duplicate pair id {}", p.id)));
            }
            if p.experiment != self.experiment {
                return Err(Error::InvalidData(format!(
                    "pair {} belongs to {}, dataset is {}",
                    p.id,
                    p.experiment.name(),
                    self.experiment.name()
                )));
            }
            if p.a == p.b {
                return Err(Error::InvalidData(format!("pair {} has identical sides", p.id)));
            }
        }
        Ok(())
    }

    /// Pairs that carry a label.
    pub fn labeled(&self) -> Dataset {
        Dataset {
            experiment: self.experiment,
            pairs: self.pairs.iter().filter(|p| p.label.is_some()).cloned().collect(),
        }
    }

    /// Appends `other`, rejecting id collisions.
    pub fn merge(mut self, other: Dataset) -> Result<Dataset> {
        if other.experiment != self.experiment {
            return Err(Error::InvalidData("cannot merge datasets of different experiments".into()));
        }
        self.pairs.extend(other.pairs);
        self.validate()?;
        Ok(self)
    }

    /// Seeded random split; the first part holds `round(fraction × n)` pairs.
    pub fn split(&self, fraction: f64, seed: u64) -> (Dataset, Dataset) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let k = ((self.len() as f64) * fraction).round() as usize;
        let pick = |ix: &[usize]| Dataset {
            experiment: self.experiment,
            pairs: ix.iter().map(|&i| self.pairs[i].clone()).collect(),
        };
        (pick(&idx[..k]), pick(&idx[k..]))
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for p in &self.pairs {
            out.push_str(&serde_json::to_string(p).expect("pairs serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Dataset> {
        Self::read(BufReader::new(text.as_bytes()))
    }

    fn read(reader: impl BufRead) -> Result<Dataset> {
        let mut pairs = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<dataset>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let pair: ComparisonPair =
                serde_json::from_str(&line).map_err(|source| Error::Parse { line: i + 1, source })?;
            pairs.push(pair);
        }
        let experiment = pairs.first().map(|p| p.experiment).unwrap_or(Experiment::Exp1);
        Dataset::new(experiment, pairs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Dataset> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(f))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

const LETTERS: &[u8] = b"abcdefghijklmnopqrstuvwxyz";

fn token<R: Rng + ?Sized>(rng: &mut R, len: usize) -> String {
    (0..len)
        .map(|i| {
            let c = LETTERS[rng.gen_range(0..LETTERS.len())] as char;
            if i == 0 {
                c.to_ascii_uppercase()
            } else {
                c
            }
        })
        .collect()
}

/// Synthetic chart data: values uniform on `[1, 100]` (two decimals).
/// Experiment 1 uses meaningless two-character tokens; Experiment 2 uses
/// pseudo-words of 4–20 letters, truncated at render time.
pub fn synthetic_data<R: Rng + ?Sized>(n: usize, experiment: Experiment, rng: &mut R) -> ChartData {
    let mut categories = Vec::with_capacity(n);
    let mut seen = HashSet::new();
    while categories.len() < n {
        let len = match experiment {
            Experiment::Exp1 => 2,
            Experiment::Exp2 => rng.gen_range(4..=20),
        };
        let t = token(rng, len);
        if seen.insert(t.clone()) {
            categories.push(t);
        }
    }
    let values = (0..n)
        .map(|_| (rng.gen_range(1.0..=100.0f64) * 100.0).round() / 100.0)
        .collect();
    ChartData { categories, values }
}

/// Desk-reject verdict for one side of a pair.
pub fn side_verdict(data: &ChartData, params: &LayoutParams, rules: DeskRules) -> Result<Verdict> {
    if rules == DeskRules::NONE {
        return Ok(Verdict::Pass);
    }
    let chart = layout(&data.fitted(params.num_bars as usize), params, DESK_BASE_HEIGHT)?;
    Ok(desk_reject(&chart, params, rules))
}

/// Streams unlabeled (or desk-reject-labelled) pairs from a grid.
pub struct PairGenerator<'g> {
    grid: &'g ParamGrid,
    rng: ChaCha8Rng,
    provenance: Provenance,
    rules: DeskRules,
    next_id: usize,
    /// Pairs dropped because both sides failed the desk reject.
    pub discarded: usize,
}

impl<'g> PairGenerator<'g> {
    pub fn new(grid: &'g ParamGrid, seed: u64, provenance: Provenance) -> Result<Self> {
        let free = Param::ALL
            .iter()
            .filter(|&&p| p != Param::NumBars)
            .map(|&p| grid.dim(p).probabilities.iter().filter(|&&q| q > 0.0).count())
            .product::<usize>();
        if free < 2 {
            return Err(Error::GridTooSmall(
                "every parameter besides num_bars has a single candidate, sides cannot differ".into(),
            ));
        }
        Ok(PairGenerator {
            grid,
            rng: ChaCha8Rng::seed_from_u64(seed),
            provenance,
            rules: DeskRules::for_experiment(grid.experiment()),
            next_id: 0,
            discarded: 0,
        })
    }

    pub fn with_rules(mut self, rules: DeskRules) -> Self {
        self.rules = rules;
        self
    }

    pub fn with_first_id(mut self, id: usize) -> Self {
        self.next_id = id;
        self
    }

    fn draw_side(&mut self, num_bars: u32) -> LayoutParams {
        let mut p = self.grid.sample(&mut self.rng);
        p.num_bars = num_bars;
        p
    }

    /// Draws candidate pairs until one survives the desk reject.
    pub fn next_pair(&mut self) -> Result<ComparisonPair> {
        loop {
            let nb_dim = self.grid.dim(Param::NumBars);
            let num_bars = nb_dim.values[sample_index(&nb_dim.probabilities, &mut self.rng)] as u32;
            let data = synthetic_data(num_bars as usize, self.grid.experiment(), &mut self.rng);
            let a = self.draw_side(num_bars);
            let mut b = self.draw_side(num_bars);
            let mut attempts = 0;
            while b == a {
                attempts += 1;
                if attempts > MAX_SIDE_ATTEMPTS {
                    return Err(Error::GridTooSmall("could not draw two distinct sides".into()));
                }
                b = self.draw_side(num_bars);
            }
            let va = side_verdict(&data, &a, self.rules)?;
            let vb = side_verdict(&data, &b, self.rules)?;
            let (label, desk) = match (va, vb) {
                (Verdict::Fail(_), Verdict::Fail(_)) => {
                    self.discarded += 1;
                    continue;
                }
                (Verdict::Fail(r), Verdict::Pass) => (Some(Side::B), Some(r)),
                (Verdict::Pass, Verdict::Fail(r)) => (Some(Side::A), Some(r)),
                (Verdict::Pass, Verdict::Pass) => (None, None),
            };
            let id = format!("{}-{:06}", self.provenance.prefix(), self.next_id);
            self.next_id += 1;
            return Ok(ComparisonPair {
                id,
                experiment: self.grid.experiment(),
                provenance: self.provenance,
                data,
                a,
                b,
                label,
                desk_reject: desk,
            });
        }
    }
}

/// Generates `n` pairs that survive the desk reject.
pub fn generate_pairs(grid: &ParamGrid, n: usize, seed: u64) -> Result<Vec<ComparisonPair>> {
    generate_pairs_from(grid, n, seed, Provenance::Uniform)
}

pub fn generate_pairs_from(
    grid: &ParamGrid,
    n: usize,
    seed: u64,
    provenance: Provenance,
) -> Result<Vec<ComparisonPair>> {
    if n == 0 {
        return Err(Error::InvalidArgument("pair count must be at least 1".into()));
    }
    let mut gen = PairGenerator::new(grid, seed, provenance)?;
    (0..n).map(|_| gen.next_pair()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelReport {
    /// Pairs sent to the simulated raters.
    pub judged: usize,
    /// Judged pairs that received a label.
    pub kept: usize,
    pub discarded: usize,
    /// Pairs already labelled by the desk reject.
    pub desk_labeled: usize,
}

impl LabelReport {
    pub fn kept_fraction(&self) -> f64 {
        if self.judged == 0 {
            0.0
        } else {
            self.kept as f64 / self.judged as f64
        }
    }
}

/// Labels pairs with the simulated raters and keeps agreed outcomes.
/// Desk-reject labels pass through untouched. The rater stream for each
/// pair is keyed by its position, so labelling is deterministic.
pub fn label_pairs(
    pairs: &[ComparisonPair],
    oracle: &OracleConfig,
) -> Result<(Dataset, LabelReport)> {
    oracle.validate()?;
    let experiment = pairs.first().map(|p| p.experiment).unwrap_or(Experiment::Exp1);
    let judgements: Vec<Option<Judgement>> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            if p.desk_reject.is_some() && p.label.is_some() {
                None
            } else {
                Some(oracle.judge_pair_seeded(&p.a, &p.b, i as u64))
            }
        })
        .collect();
    let mut report = LabelReport {
        judged: 0,
        kept: 0,
        discarded: 0,
        desk_labeled: 0,
    };
    let mut kept = Vec::new();
    for (p, j) in pairs.iter().zip(judgements) {
        match j {
            None => {
                report.desk_labeled += 1;
                kept.push(p.clone());
            }
            Some(j) => {
                report.judged += 1;
                match j.winner() {
                    Some(side) => {
                        report.kept += 1;
                        kept.push(ComparisonPair {
                            label: Some(side),
                            ..p.clone()
                        });
                    }
                    None => report.discarded += 1,
                }
            }
        }
    }
    Ok((Dataset::new(experiment, kept)?, report))
}

/// Generates and labels pairs until `target` labelled pairs exist.
pub fn generate_labeled(
    grid: &ParamGrid,
    oracle: &OracleConfig,
    target: usize,
    seed: u64,
    provenance: Provenance,
) -> Result<(Dataset, LabelReport)> {
    let mut gen = PairGenerator::new(grid, seed, provenance)?;
    let mut dataset = Dataset::empty(grid.experiment());
    let mut total = LabelReport {
        judged: 0,
        kept: 0,
        discarded: 0,
        desk_labeled: 0,
    };
    let mut round = 0u64;
    while dataset.len() < target {
        let need = target - dataset.len();
        let chunk: Vec<ComparisonPair> = (0..need.max(16) * 2)
            .map(|_| gen.next_pair())
            .collect::<Result<_>>()?;
        let cfg = OracleConfig {
            seed: oracle.seed.wrapping_add(round.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            ..oracle.clone()
        };
        let (labeled, report) = label_pairs(&chunk, &cfg)?;
        for p in labeled.pairs {
            if dataset.len() == target {
                break;
            }
            match (p.desk_reject.is_some(), p.label.is_some()) {
                (true, _) => total.desk_labeled += 1,
                (false, true) => total.kept += 1,
                _ => {}
            }
            dataset.pairs.push(p);
        }
        total.judged += report.judged;
        total.discarded += report.discarded;
        round += 1;
    }
    Ok((dataset, total))
}

/// Capped importance weights: `P(v_j) = min(w_j, T) / Σ_k min(w_k, T)`.
/// All-zero counts fall back to uniform.
pub fn capped_probabilities(wins: &[u64], cap: u32) -> Vec<f64> {
    let capped: Vec<f64> = wins.iter().map(|&w| w.min(u64::from(cap)) as f64).collect();
    let total: f64 = capped.iter().sum();
    if total == 0.0 {
        return vec![1.0 / wins.len() as f64; wins.len()];
    }
    capped.iter().map(|c| c / total).collect()
}

/// Counts wins per candidate value over the winning sides of `dataset` and
/// re-weights sampling probabilities with [`capped_probabilities`].
pub fn importance_resample(grid: &ParamGrid, dataset: &Dataset, cap: u32) -> Result<ParamGrid> {
    let winners: Vec<&LayoutParams> = dataset.pairs.iter().filter_map(|p| p.winner()).collect();
    if winners.is_empty() {
        return Err(Error::InsufficientData("importance resampling needs labelled pairs".into()));
    }
    if cap == 0 {
        return Err(Error::InvalidArgument("exploration cap must be positive".into()));
    }
    let mut out = grid.clone();
    out.exploration_cap = cap;
    for param in Param::ALL {
        let dim = out.dim_mut(param);
        let mut wins = vec![0u64; dim.len()];
        for w in &winners {
            if let Some(j) = dim.position(w.get(param)) {
                wins[j] += 1;
            }
        }
        dim.probabilities = capped_probabilities(&wins, cap);
        dim.wins = wins;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum GradientThreshold {
    Absolute(f64),
    /// Quantile of the gradient norms observed over the grid.
    Quantile(f64),
}

impl Default for GradientThreshold {
    fn default() -> Self {
        GradientThreshold::Quantile(0.2)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientRefinement {
    pub grid: ParamGrid,
    pub threshold: f64,
    pub flagged_cells: usize,
}

const FD_STEP: f64 = 1e-4;

/// Central-difference gradient of `model` over the numeric learned
/// dimensions at normalized point `x`.
pub fn numeric_gradient(model: &dyn FeatureScorer, x: &[f64]) -> Vec<f64> {
    let space = model.feature_space();
    let mut probe = x.to_vec();
    space
        .features
        .iter()
        .enumerate()
        .filter(|(_, f)| f.param.is_numeric())
        .map(|(k, _)| {
            let orig = probe[k];
            probe[k] = orig + FD_STEP;
            let up = model.score_features(&probe);
            probe[k] = orig - FD_STEP;
            let down = model.score_features(&probe);
            probe[k] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Inserts values at `step / refine_factor` around every candidate value
/// that belongs to a flat cell (gradient norm below the threshold).
/// Integer parameters only receive points that round to new integers.
/// Probabilities of the refined grid are reset to uniform.
pub fn gradient_resample(
    grid: &ParamGrid,
    model: &dyn FeatureScorer,
    threshold: GradientThreshold,
    refine_factor: u32,
) -> Result<GradientRefinement> {
    if refine_factor < 2 {
        return Err(Error::InvalidArgument("refine factor must be at least 2".into()));
    }
    match threshold {
        GradientThreshold::Absolute(t) if !(t > 0.0) => {
            return Err(Error::InvalidArgument(format!("threshold must be positive, got {t}")))
        }
        GradientThreshold::Quantile(q) if !(q > 0.0 && q < 1.0) => {
            return Err(Error::InvalidArgument(format!("quantile must lie in (0, 1), got {q}")))
        }
        _ => {}
    }
    let space = model.feature_space();
    let norms: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let x = space.normalize(&grid.cell(i))?;
            Ok(numeric_gradient(model, &x).iter().map(|g| g * g).sum::<f64>().sqrt())
        })
        .collect::<Result<_>>()?;
    let threshold = match threshold {
        GradientThreshold::Absolute(t) => t,
        GradientThreshold::Quantile(q) => {
            let mut sorted = norms.clone();
            sorted.sort_by(f64::total_cmp);
            let k = ((sorted.len() - 1) as f64 * q).round() as usize;
            // strict "<" below; nudge so the quantile cell itself is flagged
            let t = sorted[k];
            if t > 0.0 { t * (1.0 + 1e-12) } else { f64::MIN_POSITIVE }
        }
    };

    let refinable: Vec<Param> = space
        .features
        .iter()
        .map(|f| f.param)
        .filter(|p| p.is_numeric() && grid.dim(*p).len() > 1)
        .collect();
    let mut flagged: Vec<Vec<bool>> = refinable.iter().map(|p| vec![false; grid.dim(*p).len()]).collect();
    let mut flagged_cells = 0;
    for (i, &n) in norms.iter().enumerate() {
        if n < threshold {
            flagged_cells += 1;
            let cell = grid.cell(i);
            for (k, &p) in refinable.iter().enumerate() {
                if let Some(j) = grid.dim(p).position(cell.get(p)) {
                    flagged[k][j] = true;
                }
            }
        }
    }

    let mut out = grid.clone();
    for (k, &p) in refinable.iter().enumerate() {
        let values = &grid.dim(p).values;
        let mut refined = values.clone();
        for (j, _) in flagged[k].iter().enumerate().filter(|(_, f)| **f) {
            let mut intervals = Vec::new();
            if j > 0 {
                intervals.push((values[j - 1], values[j]));
            }
            if j + 1 < values.len() {
                intervals.push((values[j], values[j + 1]));
            }
            for (lo, hi) in intervals {
                for s in 1..refine_factor {
                    let mut v = lo + (hi - lo) * f64::from(s) / f64::from(refine_factor);
                    v = if p.is_integer() {
                        v.round()
                    } else {
                        (v * 1e9).round() / 1e9
                    };
                    if v > lo && v < hi {
                        refined.push(v);
                    }
                }
            }
        }
        refined.sort_by(f64::total_cmp);
        refined.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        if refined.len() != values.len() {
            out = out.with_values(p, refined)?;
        }
    }
    Ok(GradientRefinement {
        grid: out.uniform_probabilities(),
        threshold,
        flagged_cells,
    })
}
