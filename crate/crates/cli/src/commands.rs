use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{ArgAction, Args, ValueEnum};
use layoutrank::baselines::{train_ranksvm, LinearRankModel, RankSvmConfig};
use layoutrank::eval::{correlations, export_analysis, mccv, ExportOptions, MccvConfig, Method};
use layoutrank::optimize::{optimize as run_optimize, Candidate, Constraints};
use layoutrank::oracle::{calibrate_beta, AgreementPolicy, GroundTruth, OracleConfig};
use layoutrank::pairs::{
    gradient_resample, importance_resample, label_pairs, synthetic_data, GradientThreshold, PairGenerator,
    Provenance,
};
use layoutrank::params::FeatureSpace;
use layoutrank::render::{render, ChartData};
use layoutrank::{default_grid, train as train_model, Dataset, Experiment, LayoutParams, Param, ParamGrid};
use layoutrank::{Scorer, ScoringModel, TrainConfig};
use layoutrank_service::{serve as run_service, system_clock, AppState, Store, StoreConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::resolve;

fn is_false(b: &bool) -> bool {
    !*b
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| anyhow!("missing required setting --{flag}"))
}

fn parse_experiment(s: &str) -> Result<Experiment> {
    s.parse::<Experiment>().map_err(|e| anyhow!(e))
}

/// `--grid` wins over `--exp`; without either, `fallback` picks a default grid.
fn load_grid(exp: Option<&str>, grid: Option<&Path>, fallback: Experiment) -> Result<ParamGrid> {
    if let Some(path) = grid {
        return Ok(ParamGrid::load(path)?);
    }
    let exp = exp.map(parse_experiment).transpose()?.unwrap_or(fallback);
    Ok(default_grid(exp))
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::load(path).with_context(|| format!("cannot load pairs from {}", path.display()))
}

/// `rulebook` or `random-smooth:SEED`.
fn parse_truth(s: &str) -> Result<GroundTruth> {
    match s.split_once(':') {
        None if s == "rulebook" => Ok(GroundTruth::Rulebook),
        Some(("random-smooth", seed)) => Ok(GroundTruth::RandomSmooth {
            seed: seed.parse().with_context(|| format!("bad seed in truth {s:?}"))?,
        }),
        _ => bail!("unknown ground truth {s:?} (expected rulebook or random-smooth:SEED)"),
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// Writes the artifact to `out` or stdout, and the summary to the other stream.
fn emit(out: Option<&Path>, artifact: &str, summary: &Value) -> Result<()> {
    match out {
        Some(path) => {
            write_file(path, artifact)?;
            println!("{summary}");
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(artifact.as_bytes())?;
            if !artifact.ends_with('\n') {
                stdout.write_all(b"\n")?;
            }
            stdout.flush()?;
            eprintln!("{summary}");
        }
    }
    Ok(())
}

fn pretty<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn infer_experiment(space: &FeatureSpace) -> Experiment {
    let exp2_only = [Param::MaxLabelLength, Param::LabelRotation, Param::Orientation];
    if space.params().iter().any(|p| exp2_only.contains(p)) {
        Experiment::Exp2
    } else {
        Experiment::Exp1
    }
}

enum LoadedModel {
    Neural(ScoringModel),
    Linear(LinearRankModel),
}

fn load_model(path: &Path) -> Result<LoadedModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read model {}", path.display()))?;
    let raw: Value = serde_json::from_str(&text).with_context(|| format!("model {} is not JSON", path.display()))?;
    let model = if raw.get("network").is_some() {
        LoadedModel::Neural(ScoringModel::from_json_str(&text)?)
    } else if raw.get("weights").is_some() {
        LoadedModel::Linear(LinearRankModel::from_json_str(&text)?)
    } else {
        bail!("{} is neither a neural nor a RankSVM model", path.display());
    };
    Ok(model)
}

fn load_neural(path: &Path) -> Result<ScoringModel> {
    match load_model(path)? {
        LoadedModel::Neural(m) => Ok(m),
        LoadedModel::Linear(_) => bail!("{} is a RankSVM model; this command needs a neural model", path.display()),
    }
}

// gen-pairs -----------------------------------------------------------------

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenPairsArgs {
    /// Default grid to sample from: exp1 or exp2.
    #[arg(long)]
    pub exp: Option<String>,
    /// Grid JSON file, e.g. the output of `resample`.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Number of pairs [default: 100].
    #[arg(short = 'n', long)]
    pub count: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// uniform, importance, gradient or human [default: uniform].
    #[arg(long)]
    pub provenance: Option<String>,
    /// Numeric suffix of the first pair id [default: 0].
    #[arg(long)]
    pub first_id: Option<usize>,
    /// Output JSONL.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

pub fn gen_pairs(args: GenPairsArgs, config: Option<&Path>) -> Result<()> {
    let a: GenPairsArgs = resolve(&args, config, "gen-pairs")?;
    let grid = load_grid(a.exp.as_deref(), a.grid.as_deref(), Experiment::Exp1)?;
    let provenance: Provenance = match &a.provenance {
        Some(p) => serde_json::from_value(json!(p)).map_err(|_| anyhow!("unknown provenance {p:?}"))?,
        None => Provenance::Uniform,
    };
    let count = a.count.unwrap_or(100);
    let mut gen = PairGenerator::new(&grid, a.seed.unwrap_or(0), provenance)?.with_first_id(a.first_id.unwrap_or(0));
    let pairs = (0..count).map(|_| gen.next_pair()).collect::<layoutrank::Result<Vec<_>>>()?;
    let ds = Dataset::new(grid.experiment(), pairs)?;
    let desk = ds.pairs.iter().filter(|p| p.label.is_some()).count();
    emit(
        a.out.as_deref(),
        &ds.to_jsonl(),
        &json!({ "pairs": ds.len(), "desk_labeled": desk, "experiment": grid.experiment().name() }),
    )
}

// label / calibrate-oracle --------------------------------------------------

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelArgs {
    /// Input pairs, JSONL.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Oracle JSON, as written by `calibrate-oracle`.
    #[arg(long)]
    pub oracle: Option<PathBuf>,
    /// Choice temperature; calibrated on the input pairs when absent.
    #[arg(long)]
    pub beta: Option<f64>,
    /// rulebook or random-smooth:SEED [default: rulebook].
    #[arg(long)]
    pub truth: Option<String>,
    /// [default: 3]
    #[arg(long)]
    pub raters: Option<u32>,
    /// unanimous or majority [default: unanimous].
    #[arg(long)]
    pub agreement: Option<String>,
    /// Rater seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Unanimity rate used when calibrating [default: 0.456].
    #[arg(long)]
    pub target: Option<f64>,
    /// Output labeled JSONL; unanimously rejected pairs are dropped.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Write the labeling report JSON here as well.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

pub const UNANIMITY_TARGET: f64 = 0.456;

pub fn label(args: LabelArgs, config: Option<&Path>) -> Result<()> {
    let a: LabelArgs = resolve(&args, config, "label")?;
    let ds = load_dataset(&required(a.pairs.clone(), "pairs")?)?;
    let mut oracle = match &a.oracle {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            serde_json::from_str::<OracleConfig>(&text).with_context(|| format!("bad oracle file {}", path.display()))?
        }
        None => OracleConfig::new(GroundTruth::Rulebook, f64::NAN, 0),
    };
    if let Some(t) = &a.truth {
        oracle.truth = parse_truth(t)?;
    }
    if let Some(r) = a.raters {
        oracle.raters = r;
    }
    if let Some(p) = &a.agreement {
        oracle.agreement =
            serde_json::from_value::<AgreementPolicy>(json!(p)).map_err(|_| anyhow!("unknown agreement policy {p:?}"))?;
    }
    if let Some(s) = a.seed {
        oracle.seed = s;
    }
    if let Some(b) = a.beta {
        oracle.beta = b;
    }
    let calibration = if oracle.beta.is_nan() {
        let open: Vec<(LayoutParams, LayoutParams)> =
            ds.pairs.iter().filter(|p| p.label.is_none()).map(|p| (p.a, p.b)).collect();
        let report = calibrate_beta(
            oracle.truth,
            &open,
            a.target.unwrap_or(UNANIMITY_TARGET),
            oracle.raters,
            oracle.seed,
        )?;
        oracle.beta = report.beta;
        Some(report)
    } else {
        None
    };
    let (labeled, report) = label_pairs(&ds.pairs, &oracle)?;
    let summary = json!({ "oracle": oracle, "calibration": calibration, "label": report });
    if let Some(path) = &a.report {
        write_file(path, &pretty(&summary)?)?;
    }
    emit(a.out.as_deref(), &labeled.to_jsonl(), &summary)
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub exp: Option<String>,
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Calibration pairs drawn from the grid [default: 2000].
    #[arg(short = 'n', long)]
    pub count: Option<usize>,
    /// Seed for the calibration pairs and the oracle [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// [default: 0.456]
    #[arg(long)]
    pub target: Option<f64>,
    /// [default: 3]
    #[arg(long)]
    pub raters: Option<u32>,
    /// [default: rulebook]
    #[arg(long)]
    pub truth: Option<String>,
    /// Output oracle JSON, usable as `label --oracle`.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

pub fn calibrate(args: CalibrateArgs, config: Option<&Path>) -> Result<()> {
    let a: CalibrateArgs = resolve(&args, config, "calibrate-oracle")?;
    let grid = load_grid(a.exp.as_deref(), a.grid.as_deref(), Experiment::Exp1)?;
    let seed = a.seed.unwrap_or(0);
    let truth = a.truth.as_deref().map(parse_truth).transpose()?.unwrap_or(GroundTruth::Rulebook);
    let raters = a.raters.unwrap_or(3);
    let mut gen = PairGenerator::new(&grid, seed, Provenance::Uniform)?;
    let wanted = a.count.unwrap_or(2000);
    let mut pairs = Vec::with_capacity(wanted);
    let mut drawn = 0usize;
    while pairs.len() < wanted {
        let p = gen.next_pair()?;
        drawn += 1;
        if p.label.is_none() {
            pairs.push((p.a, p.b));
        } else if drawn > 100 * wanted.max(1) {
            bail!("the grid yields almost only desk-rejected pairs");
        }
    }
    let report = calibrate_beta(truth, &pairs, a.target.unwrap_or(UNANIMITY_TARGET), raters, seed)?;
    let oracle = OracleConfig {
        raters,
        ..OracleConfig::new(truth, report.beta, seed)
    };
    emit(a.out.as_deref(), &pretty(&oracle)?, &serde_json::to_value(&report)?)
}

// resample ------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleMode {
    Importance,
    Gradient,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResampleArgs {
    #[arg(value_enum)]
    pub mode: Option<ResampleMode>,
    #[arg(long)]
    pub exp: Option<String>,
    /// Grid to resample [default: the default grid of the data or model].
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Labeled pairs (importance).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Exploration cap T (importance) [default: the grid's cap].
    #[arg(long)]
    pub cap: Option<u32>,
    /// Neural model (gradient).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Absolute gradient-norm threshold (gradient).
    #[arg(long, conflicts_with = "quantile")]
    pub threshold: Option<f64>,
    /// Threshold as a quantile of grid gradient norms (gradient) [default: 0.2].
    #[arg(long)]
    pub quantile: Option<f64>,
    /// New points per step: spacing becomes step / refine (gradient) [default: 3].
    #[arg(long)]
    pub refine: Option<u32>,
    /// Output grid JSON.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

pub fn resample(args: ResampleArgs, config: Option<&Path>) -> Result<()> {
    let a: ResampleArgs = resolve(&args, config, "resample")?;
    match required(a.mode, "mode (importance or gradient)")? {
        ResampleMode::Importance => {
            let ds = load_dataset(&required(a.data.clone(), "data")?)?;
            let grid = load_grid(a.exp.as_deref(), a.grid.as_deref(), ds.experiment)?;
            let cap = a.cap.unwrap_or(grid.exploration_cap);
            let out = importance_resample(&grid, &ds, cap)?;
            let probabilities: serde_json::Map<String, Value> = out
                .dims()
                .iter()
                .filter(|d| d.len() > 1)
                .map(|d| (d.param.name().to_string(), json!(d.probabilities)))
                .collect();
            emit(
                a.out.as_deref(),
                &out.to_json_string(),
                &json!({ "mode": "importance", "cap": cap, "probabilities": probabilities }),
            )
        }
        ResampleMode::Gradient => {
            let model = load_neural(&required(a.model.clone(), "model")?)?;
            let grid = load_grid(a.exp.as_deref(), a.grid.as_deref(), infer_experiment(&model.features))?;
            let threshold = match a.threshold {
                Some(t) => GradientThreshold::Absolute(t),
                None => GradientThreshold::Quantile(a.quantile.unwrap_or(0.2)),
            };
            let refined = gradient_resample(&grid, &model, threshold, a.refine.unwrap_or(3))?;
            emit(
                a.out.as_deref(),
                &refined.grid.to_json_string(),
                &json!({
                    "mode": "gradient",
                    "threshold": refined.threshold,
                    "flagged_cells": refined.flagged_cells,
                    "cells_before": grid.len(),
                    "cells_after": refined.grid.len(),
                }),
            )
        }
    }
}

// train / eval --------------------------------------------------------------

/// Neural training knobs shared by `train` and `eval`.
struct Knobs<'a> {
    epochs: Option<usize>,
    batch_size: Option<usize>,
    margin: Option<f64>,
    learning_rate: Option<f64>,
    dropout: Option<f64>,
    hidden: &'a Option<Vec<usize>>,
    validation_fraction: Option<f64>,
    seed: Option<u64>,
    lambda: Option<f64>,
    iterations: Option<usize>,
}

impl Knobs<'_> {
    fn train_config(&self) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: match self.batch_size {
                Some(0) => None,
                Some(b) => Some(b),
                None => d.batch_size,
            },
            margin: self.margin.unwrap_or(d.margin),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            dropout: self.dropout.unwrap_or(d.dropout),
            hidden: self.hidden.clone().unwrap_or(d.hidden.clone()),
            validation_fraction: self.validation_fraction.unwrap_or(d.validation_fraction),
            seed: self.seed.unwrap_or(d.seed),
            ..d
        }
    }

    fn svm_config(&self) -> RankSvmConfig {
        let d = RankSvmConfig::default();
        RankSvmConfig {
            lambda: self.lambda.unwrap_or(d.lambda),
            iterations: self.iterations.unwrap_or(d.iterations),
        }
    }
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainArgs {
    /// Labeled pairs, JSONL.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub exp: Option<String>,
    /// Grid whose bounds define feature normalization.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// neural, ranksvm, whitespace, scale, unity, balance or all [default: neural].
    #[arg(long)]
    pub method: Option<String>,
    /// [default: 200]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Mini-batch size, 0 for full batch [default: 32].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Hinge margin [default: 0.12].
    #[arg(long)]
    pub margin: Option<f64>,
    /// Initial Adadelta rate, halved every 30 epochs [default: 1].
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// [default: 0.1]
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Hidden widths, comma separated [default: 64,64,32,32,16,8].
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Held-out share used to pick the best epoch [default: 0.2].
    #[arg(long)]
    pub validation_fraction: Option<f64>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// RankSVM penalty [default: 1].
    #[arg(long)]
    pub lambda: Option<f64>,
    /// RankSVM subgradient steps [default: 3000].
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Output model JSON.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Per-epoch loss CSV (neural only).
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
}

impl TrainArgs {
    fn knobs(&self) -> Knobs<'_> {
        Knobs {
            epochs: self.epochs,
            batch_size: self.batch_size,
            margin: self.margin,
            learning_rate: self.learning_rate,
            dropout: self.dropout,
            hidden: &self.hidden,
            validation_fraction: self.validation_fraction,
            seed: self.seed,
            lambda: self.lambda,
            iterations: self.iterations,
        }
    }
}

pub fn train(args: TrainArgs, config: Option<&Path>) -> Result<()> {
    let a: TrainArgs = resolve(&args, config, "train")?;
    let ds = load_dataset(&required(a.data.clone(), "data")?)?;
    let grid = load_grid(a.exp.as_deref(), a.grid.as_deref(), ds.experiment)?;
    let method = Method::from_id(a.method.as_deref().unwrap_or("neural"))?;
    match method {
        Method::Neural => {
            let cfg = a.knobs().train_config();
            let outcome = train_model(&ds, &grid, &cfg)?;
            if let Some(path) = &a.loss_csv {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(["epoch", "learning_rate", "train_loss", "validation_loss"])?;
                for e in &outcome.history {
                    w.write_record([
                        e.epoch.to_string(),
                        e.learning_rate.to_string(),
                        e.train_loss.to_string(),
                        e.validation_loss.map(|v| v.to_string()).unwrap_or_default(),
                    ])?;
                }
                write_file(path, &String::from_utf8(w.into_inner()?)?)?;
            }
            let last = outcome.history.last();
            emit(
                a.out.as_deref(),
                &outcome.model.to_json_string(),
                &json!({
                    "method": method,
                    "pairs": ds.labeled().len(),
                    "best_epoch": outcome.best_epoch,
                    "final_train_loss": last.map(|e| e.train_loss),
                    "final_validation_loss": last.and_then(|e| e.validation_loss),
                }),
            )
        }
        Method::RankSvm(set) => {
            if a.loss_csv.is_some() {
                bail!("--loss-csv is only produced by the neural method");
            }
            let model = train_ranksvm(&ds, &grid, set, &a.knobs().svm_config())?;
            emit(
                a.out.as_deref(),
                &model.to_json_string(),
                &json!({
                    "method": method,
                    "pairs": ds.labeled().len(),
                    "features": model.feature_names,
                    "weights": model.weights,
                }),
            )
        }
    }
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalArgs {
    /// Labeled pairs, JSONL.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub exp: Option<String>,
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Comma-separated method ids [default: neural].
    #[arg(long, value_delimiter = ',')]
    pub method: Option<Vec<String>>,
    /// Random splits [default: 10].
    #[arg(long)]
    pub runs: Option<usize>,
    /// [default: 0.8]
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Master seed for splits and model seeds [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Score runs on their own training split.
    #[arg(long, action = ArgAction::SetTrue)]
    #[serde(skip_serializing_if = "is_false")]
    pub on_train: bool,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub validation_fraction: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Output report JSON.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

pub fn eval(args: EvalArgs, config: Option<&Path>) -> Result<()> {
    let a: EvalArgs = resolve(&args, config, "eval")?;
    let ds = load_dataset(&required(a.data.clone(), "data")?)?;
    let grid = load_grid(a.exp.as_deref(), a.grid.as_deref(), ds.experiment)?;
    let methods = match &a.method {
        Some(ids) => ids.iter().map(|m| Method::from_id(m)).collect::<layoutrank::Result<Vec<_>>>()?,
        None => vec![Method::Neural],
    };
    let knobs = Knobs {
        epochs: a.epochs,
        batch_size: a.batch_size,
        margin: a.margin,
        learning_rate: a.learning_rate,
        dropout: a.dropout,
        hidden: &a.hidden,
        validation_fraction: a.validation_fraction,
        seed: None,
        lambda: a.lambda,
        iterations: a.iterations,
    };
    let d = MccvConfig::default();
    let cfg = MccvConfig {
        runs: a.runs.unwrap_or(d.runs),
        train_fraction: a.train_fraction.unwrap_or(d.train_fraction),
        seed: a.seed.unwrap_or(d.seed),
        evaluate_on_train: a.on_train,
        train: knobs.train_config(),
        ranksvm: knobs.svm_config(),
    };
    let reports = methods
        .iter()
        .map(|&m| mccv(&ds, &grid, m, &cfg))
        .collect::<layoutrank::Result<Vec<_>>>()?;
    let summary: Vec<Value> = reports
        .iter()
        .map(|r| json!({ "method": r.method, "mean": r.mean, "sd": r.sd }))
        .collect();
    emit(
        a.out.as_deref(),
        &pretty(&json!({ "config": cfg, "reports": reports }))?,
        &json!({ "pairs": ds.labeled().len(), "results": summary }),
    )
}

// analyze -------------------------------------------------------------------

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeArgs {
    /// Neural model JSON.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub exp: Option<String>,
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Labeled pairs for the agreement report.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Directory for box.csv, heat.csv, correlations.csv and agreement.json.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Random contexts per value in box.csv [default: 50].
    #[arg(long)]
    pub box_samples: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn analyze(args: AnalyzeArgs, config: Option<&Path>) -> Result<()> {
    let a: AnalyzeArgs = resolve(&args, config, "analyze")?;
    let model = load_neural(&required(a.model.clone(), "model")?)?;
    let grid = load_grid(a.exp.as_deref(), a.grid.as_deref(), infer_experiment(&model.features))?;
    let ds = a.data.as_deref().map(load_dataset).transpose()?;
    let out_dir = required(a.out_dir.clone(), "out-dir")?;
    let d = ExportOptions::default();
    let opts = ExportOptions {
        box_samples: a.box_samples.unwrap_or(d.box_samples),
        seed: a.seed.unwrap_or(d.seed),
    };
    export_analysis(&model, &grid, ds.as_ref(), &out_dir, opts)?;
    let corr: serde_json::Map<String, Value> = correlations(&model, &grid)?
        .into_iter()
        .map(|c| (c.param.name().to_string(), json!(c.r)))
        .collect();
    println!("{}", json!({ "out_dir": out_dir, "correlations": corr }));
    Ok(())
}

// optimize ------------------------------------------------------------------

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeArgs {
    /// Trained model JSON, neural or RankSVM.
    #[arg(long, conflicts_with = "oracle")]
    pub model: Option<PathBuf>,
    /// Score with a ground truth instead: rulebook or random-smooth:SEED.
    #[arg(long)]
    pub oracle: Option<String>,
    #[arg(long)]
    pub exp: Option<String>,
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Data table: CSV with category,value columns, or JSON {categories, values}.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Synthetic data size when --data is absent [default: 10].
    #[arg(long)]
    pub bars: Option<usize>,
    /// Seed for synthetic data [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Let num_bars vary instead of pinning it to the data length.
    #[arg(long, action = ArgAction::SetTrue)]
    #[serde(skip_serializing_if = "is_false")]
    pub free_bars: bool,
    /// Maximum canvas width in pixels at the base height.
    #[arg(long)]
    pub max_width: Option<f64>,
    /// Plot height in pixels [default: 300].
    #[arg(long)]
    pub base_height: Option<u32>,
    /// Fix a parameter, e.g. --pin bandwidth=0.85 (repeatable).
    #[arg(long, value_name = "PARAM=VALUE")]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub pin: Vec<String>,
    /// Rows in top.csv [default: 10].
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Directory for best.json, top.csv and best.svg.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn parse_pin(s: &str) -> Result<(Param, f64)> {
    let (name, value) = s.split_once('=').ok_or_else(|| anyhow!("pin {s:?} must look like param=value"))?;
    let param = Param::from_name(name.trim()).ok_or_else(|| anyhow!("unknown parameter {name:?} in pin"))?;
    let value: f64 = value.trim().parse().with_context(|| format!("pin value in {s:?} is not a number"))?;
    Ok((param, value))
}

fn read_chart_data(path: &Path) -> Result<ChartData> {
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let data = if is_json {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        serde_json::from_str::<ChartData>(&text).with_context(|| format!("bad chart data in {}", path.display()))?
    } else {
        let mut rdr = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
        let (mut categories, mut values) = (Vec::new(), Vec::new());
        for (line, row) in rdr.records().enumerate() {
            let row = row?;
            if row.len() < 2 {
                bail!("{} row {}: expected category,value", path.display(), line + 2);
            }
            categories.push(row[0].to_string());
            values.push(
                row[1]
                    .trim()
                    .parse::<f64>()
                    .with_context(|| format!("{} row {}: value is not a number", path.display(), line + 2))?,
            );
        }
        ChartData { categories, values }
    };
    data.validate()?;
    if data.is_empty() {
        bail!("{} holds no rows", path.display());
    }
    Ok(data)
}

/// A RankSVM model bound to one data table.
struct BoundLinear<'a> {
    model: &'a LinearRankModel,
    data: &'a ChartData,
}

impl Scorer for BoundLinear<'_> {
    fn score(&self, params: &LayoutParams) -> layoutrank::Result<f64> {
        self.model.score_layout(self.data, params)
    }
}

fn candidate_json(c: &Candidate) -> Value {
    json!({ "params": c.params, "score": c.score, "width": c.width })
}

pub fn optimize(args: OptimizeArgs, config: Option<&Path>) -> Result<()> {
    let a: OptimizeArgs = resolve(&args, config, "optimize")?;
    if a.model.is_some() == a.oracle.is_some() {
        bail!("give exactly one of --model and --oracle");
    }
    let model = a.model.as_deref().map(load_model).transpose()?;
    let fallback = match &model {
        Some(LoadedModel::Neural(m)) => infer_experiment(&m.features),
        Some(LoadedModel::Linear(m)) => infer_experiment(&m.features),
        None => Experiment::Exp1,
    };
    let grid = load_grid(a.exp.as_deref(), a.grid.as_deref(), fallback)?;
    let data = match &a.data {
        Some(path) => read_chart_data(path)?,
        None => synthetic_data(
            a.bars.unwrap_or(10),
            grid.experiment(),
            &mut ChaCha8Rng::seed_from_u64(a.seed.unwrap_or(0)),
        ),
    };
    let d = Constraints::default();
    let constraints = Constraints {
        base_height: a.base_height.unwrap_or(d.base_height),
        max_width_px: a.max_width,
        pinned: a.pin.iter().map(|p| parse_pin(p)).collect::<Result<_>>()?,
        pin_num_bars_to_data: !a.free_bars,
        rules: None,
        top_k: a.top_k.unwrap_or(d.top_k),
    };
    let truth = a.oracle.as_deref().map(parse_truth).transpose()?;
    let result = match (&model, &truth) {
        (Some(LoadedModel::Neural(m)), _) => run_optimize(m, &grid, &data, &constraints)?,
        (Some(LoadedModel::Linear(m)), _) => {
            run_optimize(&BoundLinear { model: m, data: &data }, &grid, &data, &constraints)?
        }
        (None, Some(t)) => run_optimize(t, &grid, &data, &constraints)?,
        (None, None) => unreachable!(),
    };
    let best = result.best;
    let summary = json!({
        "best": candidate_json(&best),
        "enumerated": result.enumerated,
        "feasible": result.feasible,
    });
    if let Some(dir) = &a.out_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        write_file(&dir.join("best.json"), &pretty(&summary)?)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["rank".to_string()];
        header.extend(Param::ALL.iter().map(|p| p.name().to_string()));
        header.extend(["score".to_string(), "width".to_string()]);
        w.write_record(&header)?;
        for (i, c) in result.top.iter().enumerate() {
            let mut row = vec![(i + 1).to_string()];
            row.extend(Param::ALL.iter().map(|&p| c.params.get(p).to_string()));
            row.extend([c.score.to_string(), c.width.to_string()]);
            w.write_record(&row)?;
        }
        write_file(&dir.join("top.csv"), &String::from_utf8(w.into_inner()?)?)?;
        let (_, svg) = render(&data.fitted(best.params.num_bars as usize), &best.params, constraints.base_height)?;
        write_file(&dir.join("best.svg"), &svg)?;
    }
    println!("{summary}");
    Ok(())
}

// serve ---------------------------------------------------------------------

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeArgs {
    /// Pool of pairs to label, JSONL; already labeled pairs are skipped.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Append-only choice log; replayed at startup.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// [default: 127.0.0.1:8080]
    #[arg(long)]
    pub addr: Option<String>,
    /// Batch lease before pairs return to the queue [default: 10].
    #[arg(long)]
    pub lease_minutes: Option<u64>,
    /// Pairs per batch, before the duplicate [default: 10].
    #[arg(long)]
    pub batch_pairs: Option<usize>,
    /// Sessions per pair [default: 3].
    #[arg(long)]
    pub raters: Option<usize>,
    /// [default: 300]
    #[arg(long)]
    pub base_height: Option<u32>,
    /// Seed for batch composition [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn serve(args: ServeArgs, config: Option<&Path>) -> Result<()> {
    let a: ServeArgs = resolve(&args, config, "serve")?;
    let pool = load_dataset(&required(a.pairs.clone(), "pairs")?)?;
    let d = StoreConfig::default();
    let cfg = StoreConfig {
        batch_pairs: a.batch_pairs.unwrap_or(d.batch_pairs),
        raters: a.raters.unwrap_or(d.raters),
        lease_ms: a.lease_minutes.map_or(d.lease_ms, |m| m * 60_000),
        base_height: a.base_height.unwrap_or(d.base_height),
        seed: a.seed.unwrap_or(d.seed),
    };
    let addr: SocketAddr = a
        .addr
        .as_deref()
        .unwrap_or("127.0.0.1:8080")
        .parse()
        .context("--addr must look like HOST:PORT")?;
    let store = Store::open(&pool, a.log.as_deref(), cfg)?;
    eprintln!("{}", json!({ "listening": addr.to_string(), "progress": store.progress() }));
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(run_service(AppState::new(store, system_clock()), addr))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truth_and_pin_parsing() {
        assert_eq!(parse_truth("rulebook").unwrap(), GroundTruth::Rulebook);
        assert_eq!(parse_truth("random-smooth:4").unwrap(), GroundTruth::RandomSmooth { seed: 4 });
        assert!(parse_truth("nope").is_err());
        assert_eq!(parse_pin("bandwidth=0.85").unwrap(), (Param::Bandwidth, 0.85));
        assert!(parse_pin("bandwidth").is_err());
        assert!(parse_pin("width=3").is_err());
    }

    #[test]
    fn csv_data_tables() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "category,value\nalpha,3\nbeta,1.5\n").unwrap();
        let d = read_chart_data(&path).unwrap();
        assert_eq!(d.categories, ["alpha", "beta"]);
        assert_eq!(d.values, [3.0, 1.5]);
        std::fs::write(&path, "category,value\nalpha,x\n").unwrap();
        assert!(format!("{:#}", read_chart_data(&path).unwrap_err()).contains("row 2"));
    }
}
