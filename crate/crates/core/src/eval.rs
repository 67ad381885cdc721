//! Monte-Carlo cross-validation, score correlations and analysis exports.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{train_ranksvm, FeatureSet, RankSvmConfig};
use crate::error::{Error, Result};
use crate::model::{train, TrainConfig};
use crate::pairs::Dataset;
use crate::params::{Param, ParamGrid};
use crate::scoring::{PairPredictor, Scorer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Neural,
    RankSvm(FeatureSet),
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Neural,
        Method::RankSvm(FeatureSet::Params),
        Method::RankSvm(FeatureSet::WhiteSpace),
        Method::RankSvm(FeatureSet::Scale),
        Method::RankSvm(FeatureSet::Unity),
        Method::RankSvm(FeatureSet::Balance),
        Method::RankSvm(FeatureSet::All),
    ];

    pub fn id(self) -> &'static str {
        match self {
            Method::Neural => "neural",
            Method::RankSvm(FeatureSet::Params) => "ranksvm",
            Method::RankSvm(set) => set.id(),
        }
    }

    pub fn from_id(id: &str) -> Result<Method> {
        Method::ALL
            .into_iter()
            .find(|m| m.id() == id)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method id {id:?}")))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.id())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let id = String::deserialize(d)?;
        Method::from_id(&id).map_err(serde::de::Error::custom)
    }
}

/// Fraction of labeled pairs whose winner the predictor names.
pub fn accuracy(predictor: &dyn PairPredictor, dataset: &Dataset) -> Result<f64> {
    let mut total = 0usize;
    let mut correct = 0usize;
    for p in &dataset.pairs {
        if let Some(label) = p.label {
            total += 1;
            if predictor.predict(p)? == label {
                correct += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::InsufficientData("no labeled pairs to score".into()));
    }
    Ok(correct as f64 / total as f64)
}

/// Trains `method` on `train_set` and returns it as a predictor.
pub fn fit_method(
    method: Method,
    train_set: &Dataset,
    grid: &ParamGrid,
    train_cfg: &TrainConfig,
    svm_cfg: &RankSvmConfig,
) -> Result<Box<dyn PairPredictor + Send + Sync>> {
    Ok(match method {
        Method::Neural => Box::new(train(train_set, grid, train_cfg)?.model),
        Method::RankSvm(set) => Box::new(train_ranksvm(train_set, grid, set, svm_cfg)?),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MccvConfig {
    pub runs: usize,
    pub train_fraction: f64,
    pub seed: u64,
    /// Scores each run on its own training split instead of the held-out part.
    pub evaluate_on_train: bool,
    pub train: TrainConfig,
    pub ranksvm: RankSvmConfig,
}

impl Default for MccvConfig {
    fn default() -> Self {
        MccvConfig {
            runs: 10,
            train_fraction: 0.8,
            seed: 0,
            evaluate_on_train: false,
            train: TrainConfig::default(),
            ranksvm: RankSvmConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run: usize,
    pub split_seed: u64,
    pub model_seed: u64,
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MccvReport {
    pub method: Method,
    pub seed: u64,
    pub runs: Vec<RunResult>,
    pub mean: f64,
    /// Sample standard deviation across runs.
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

/// Repeated random train/test splits. Per-run seeds are drawn from the
/// master seed, so the whole report is reproducible.
pub fn mccv(dataset: &Dataset, grid: &ParamGrid, method: Method, cfg: &MccvConfig) -> Result<MccvReport> {
    let labeled = dataset.labeled();
    if labeled.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "cross-validation needs at least 10 labeled pairs, got {}",
            labeled.len()
        )));
    }
    if cfg.runs == 0 || !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        return Err(Error::InvalidArgument("need runs >= 1 and 0 < train fraction < 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let seeds: Vec<(u64, u64)> = (0..cfg.runs).map(|_| (rng.gen(), rng.gen())).collect();
    let runs = seeds
        .par_iter()
        .enumerate()
        .map(|(run, &(split_seed, model_seed))| {
            let (train_set, test_set) = labeled.split(cfg.train_fraction, split_seed);
            let train_cfg = TrainConfig {
                seed: model_seed,
                ..cfg.train.clone()
            };
            let model = fit_method(method, &train_set, grid, &train_cfg, &cfg.ranksvm)?;
            let scored = if cfg.evaluate_on_train { &train_set } else { &test_set };
            Ok(RunResult {
                run,
                split_seed,
                model_seed,
                train_pairs: train_set.len(),
                test_pairs: test_set.len(),
                accuracy: accuracy(model.as_ref(), scored)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let accs: Vec<f64> = runs.iter().map(|r| r.accuracy).collect();
    let n = accs.len() as f64;
    let mean = accs.iter().sum::<f64>() / n;
    let sd = if accs.len() > 1 {
        (accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(MccvReport {
        method,
        seed: cfg.seed,
        mean: mean.clamp(
            accs.iter().copied().fold(f64::INFINITY, f64::min),
            accs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ),
        sd,
        min: accs.iter().copied().fold(f64::INFINITY, f64::min),
        max: accs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        runs,
    })
}

/// Scores of every grid cell, indexed like [`ParamGrid::cell`].
pub fn score_grid(scorer: &dyn Scorer, grid: &ParamGrid) -> Result<Vec<f64>> {
    (0..grid.len())
        .into_par_iter()
        .map(|i| scorer.score(&grid.cell(i)))
        .collect()
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 1e-300 || syy <= 1e-24 * (1.0 + my * my) * n as f64 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub param: Param,
    pub r: Option<f64>,
}

/// Pearson r between the score and each raw parameter value over the full
/// grid; orientation is coded vertical = 0, horizontal = 1.
pub fn correlations(scorer: &dyn Scorer, grid: &ParamGrid) -> Result<Vec<Correlation>> {
    let scores = score_grid(scorer, grid)?;
    Ok(correlations_from(grid, &scores))
}

pub fn correlations_from(grid: &ParamGrid, scores: &[f64]) -> Vec<Correlation> {
    let cells: Vec<_> = grid.cells().collect();
    Param::ALL
        .into_iter()
        .map(|param| {
            let xs: Vec<f64> = cells.iter().map(|c| c.get(param)).collect();
            Correlation {
                param,
                r: pearson(&xs, scores),
            }
        })
        .collect()
}

/// Mean score over every cell with `(rows, cols)` fixed at each value pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatGrid {
    pub rows: Param,
    pub cols: Param,
    pub row_values: Vec<f64>,
    pub col_values: Vec<f64>,
    pub mean: Vec<Vec<f64>>,
    pub cells: Vec<Vec<usize>>,
}

pub fn heat_grid(grid: &ParamGrid, scores: &[f64], rows: Param, cols: Param) -> HeatGrid {
    let (rd, cd) = (grid.dim(rows), grid.dim(cols));
    let mut sum = vec![vec![0.0; cd.len()]; rd.len()];
    let mut count = vec![vec![0usize; cd.len()]; rd.len()];
    for (i, cell) in grid.cells().enumerate() {
        let r = rd.position(cell.get(rows)).expect("cell value on grid");
        let c = cd.position(cell.get(cols)).expect("cell value on grid");
        sum[r][c] += scores[i];
        count[r][c] += 1;
    }
    let mean = sum
        .iter()
        .zip(&count)
        .map(|(s, n)| s.iter().zip(n).map(|(s, &n)| s / n as f64).collect())
        .collect();
    HeatGrid {
        rows,
        cols,
        row_values: rd.values.clone(),
        col_values: cd.values.clone(),
        mean,
        cells: count,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxRow {
    pub param: Param,
    pub value: f64,
    pub sample: usize,
    pub score: f64,
}

/// For every active parameter value, `samples` random grid cells with that
/// value pinned, scored.
pub fn box_table(scorer: &dyn Scorer, grid: &ParamGrid, samples: usize, seed: u64) -> Result<Vec<BoxRow>> {
    let uniform = grid.clone().uniform_probabilities();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for param in grid.active_params() {
        for &value in &grid.dim(param).values {
            for sample in 0..samples {
                let mut cell = uniform.sample(&mut rng);
                cell.set(param, value)?;
                rows.push(BoxRow {
                    param,
                    value,
                    sample,
                    score: scorer.score(&cell)?,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub pairs: usize,
    pub labeled: usize,
    pub by_provenance: BTreeMap<String, usize>,
    pub desk_labeled: usize,
    /// Fraction of labeled pairs whose winner the model names.
    pub model_agreement: Option<f64>,
}

pub fn agreement_report(dataset: &Dataset, predictor: &dyn PairPredictor) -> Result<AgreementReport> {
    let mut by_provenance = BTreeMap::new();
    for p in &dataset.pairs {
        let key = serde_json::to_value(p.provenance)?
            .as_str()
            .unwrap_or_default()
            .to_string();
        *by_provenance.entry(key).or_insert(0) += 1;
    }
    let labeled = dataset.pairs.iter().filter(|p| p.label.is_some()).count();
    Ok(AgreementReport {
        pairs: dataset.len(),
        labeled,
        by_provenance,
        desk_labeled: dataset.pairs.iter().filter(|p| p.desk_reject.is_some()).count(),
        model_agreement: if labeled > 0 { Some(accuracy(predictor, dataset)?) } else { None },
    })
}

#[derive(Clone, Copy, Debug)]
pub struct ExportOptions {
    pub box_samples: usize,
    pub seed: u64,
}

impl Default for ExportOptions {
    fn default() -> Self {
        ExportOptions {
            box_samples: 50,
            seed: 0,
        }
    }
}

/// Files written by [`export_analysis`], relative to the output directory.
pub const EXPORT_FILES: [&str; 4] = ["box.csv", "heat.csv", "correlations.csv", "agreement.json"];

/// Writes the interpretation tables into `out_dir`:
///
/// * `box.csv`: `param,value,sample,score`
/// * `heat.csv`: `row_param,row_value,col_param,col_value,mean_score,cells`
///   for every pair of active parameters
/// * `correlations.csv`: `param,r` (empty `r` when undefined)
/// * `agreement.json`: the [`AgreementReport`] when a dataset is given
pub fn export_analysis<M>(
    model: &M,
    grid: &ParamGrid,
    dataset: Option<&Dataset>,
    out_dir: impl AsRef<Path>,
    opts: ExportOptions,
) -> Result<()>
where
    M: Scorer + PairPredictor,
{
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let writer = |name: &str| {
        let path = dir.join(name);
        csv::Writer::from_path(&path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(&path, io),
            other => Error::InvalidArgument(format!("{other:?}")),
        })
    };

    let mut w = writer("box.csv")?;
    w.write_record(["param", "value", "sample", "score"])?;
    for row in box_table(model, grid, opts.box_samples, opts.seed)? {
        w.write_record([
            row.param.name().to_string(),
            row.value.to_string(),
            row.sample.to_string(),
            row.score.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(dir.join("box.csv"), e))?;

    let scores = score_grid(model, grid)?;
    let active = grid.active_params();
    let mut w = writer("heat.csv")?;
    w.write_record(["row_param", "row_value", "col_param", "col_value", "mean_score", "cells"])?;
    for (i, &rows) in active.iter().enumerate() {
        for &cols in &active[i + 1..] {
            let h = heat_grid(grid, &scores, rows, cols);
            for (ri, rv) in h.row_values.iter().enumerate() {
                for (ci, cv) in h.col_values.iter().enumerate() {
                    w.write_record([
                        rows.name().to_string(),
                        rv.to_string(),
                        cols.name().to_string(),
                        cv.to_string(),
                        h.mean[ri][ci].to_string(),
                        h.cells[ri][ci].to_string(),
                    ])?;
                }
            }
        }
    }
    w.flush().map_err(|e| Error::io(dir.join("heat.csv"), e))?;

    let mut w = writer("correlations.csv")?;
    w.write_record(["param", "r"])?;
    for c in correlations_from(grid, &scores) {
        w.write_record([c.param.name().to_string(), c.r.map(|r| r.to_string()).unwrap_or_default()])?;
    }
    w.flush().map_err(|e| Error::io(dir.join("correlations.csv"), e))?;

    if let Some(ds) = dataset {
        let report = agreement_report(ds, model)?;
        let path = dir.join("agreement.json");
        std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")
            .map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
