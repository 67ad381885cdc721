//! Linear ranking baselines: a RankSVM over the layout parameters and over
//! hand-crafted layout metrics computed from the rendered geometry.
//!
//! Metric definitions, with *element* meaning a bar or a tick-label box:
//!
//! | set        | features |
//! |------------|----------|
//! | whitespace | `1 − min(1, Σ element area / canvas area)`, `1 − Σ bar area / plot area` |
//! | scale      | mean element area / canvas area, smallest / largest element area |
//! | unity      | coefficient of variation of the gaps along the band axis (plot edges included), `1 / (1 + CV of label areas)` |
//! | balance    | `|x̄ − W/2| / W`, `|ȳ − H/2| / H` for the area-weighted element centroid |
//! | all        | the four sets concatenated |
//!
//! Every metric is a ratio of lengths or areas, so a uniform rescale of the
//! canvas leaves it unchanged.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pairs::{ComparisonPair, Dataset, Side, DESK_BASE_HEIGHT};
use crate::params::{FeatureSpace, Orientation, ParamGrid};
use crate::render::{layout, ChartData, Rect, RenderedChart};
use crate::scoring::{prefer, PairPredictor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    Params,
    #[serde(rename = "whitespace")]
    WhiteSpace,
    Scale,
    Unity,
    Balance,
    All,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 6] = [
        FeatureSet::Params,
        FeatureSet::WhiteSpace,
        FeatureSet::Scale,
        FeatureSet::Unity,
        FeatureSet::Balance,
        FeatureSet::All,
    ];

    pub fn id(self) -> &'static str {
        match self {
            FeatureSet::Params => "params",
            FeatureSet::WhiteSpace => "whitespace",
            FeatureSet::Scale => "scale",
            FeatureSet::Unity => "unity",
            FeatureSet::Balance => "balance",
            FeatureSet::All => "all",
        }
    }

    pub fn from_id(id: &str) -> Option<FeatureSet> {
        FeatureSet::ALL.into_iter().find(|s| s.id() == id)
    }

    /// Names of the metric features; empty for [`FeatureSet::Params`].
    pub fn metric_names(self) -> Vec<&'static str> {
        match self {
            FeatureSet::Params => vec![],
            FeatureSet::WhiteSpace => vec!["canvas_free", "plot_free"],
            FeatureSet::Scale => vec!["mean_area", "area_range"],
            FeatureSet::Unity => vec!["gap_cv", "label_homogeneity"],
            FeatureSet::Balance => vec!["x_offset", "y_offset"],
            FeatureSet::All => [
                FeatureSet::WhiteSpace,
                FeatureSet::Scale,
                FeatureSet::Unity,
                FeatureSet::Balance,
            ]
            .into_iter()
            .flat_map(|s| s.metric_names())
            .collect(),
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

fn elements(chart: &RenderedChart) -> impl Iterator<Item = &Rect> {
    chart.bars.iter().chain(chart.labels.iter().map(|l| &l.bbox))
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn cv(xs: &[f64]) -> f64 {
    let (mean, sd) = mean_sd(xs);
    if mean.abs() < 1e-12 {
        0.0
    } else {
        sd / mean
    }
}

fn whitespace(chart: &RenderedChart) -> [f64; 2] {
    let canvas = chart.width * chart.height;
    let ink: f64 = elements(chart).map(Rect::area).sum();
    let bars: f64 = chart.bars.iter().map(Rect::area).sum();
    [1.0 - (ink / canvas).min(1.0), 1.0 - (bars / chart.plot.area()).min(1.0)]
}

fn scale(chart: &RenderedChart) -> [f64; 2] {
    let canvas = chart.width * chart.height;
    let areas: Vec<f64> = elements(chart).map(Rect::area).collect();
    let (mean, _) = mean_sd(&areas);
    let max = areas.iter().copied().fold(0.0, f64::max);
    let min = areas.iter().copied().fold(f64::INFINITY, f64::min);
    [mean / canvas, if max > 0.0 { min / max } else { 0.0 }]
}

fn unity(chart: &RenderedChart) -> [f64; 2] {
    let (lo, hi, spans): (f64, f64, Vec<(f64, f64)>) = match chart.orientation {
        Orientation::Vertical => (
            chart.plot.x,
            chart.plot.right(),
            chart.bars.iter().map(|b| (b.x, b.right())).collect(),
        ),
        Orientation::Horizontal => (
            chart.plot.y,
            chart.plot.bottom(),
            chart.bars.iter().map(|b| (b.y, b.bottom())).collect(),
        ),
    };
    let mut spans = spans;
    spans.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut gaps = Vec::with_capacity(spans.len() + 1);
    let mut cursor = lo;
    for (start, end) in &spans {
        gaps.push((start - cursor).max(0.0));
        cursor = *end;
    }
    gaps.push((hi - cursor).max(0.0));
    let label_areas: Vec<f64> = chart.labels.iter().map(|l| l.bbox.area()).collect();
    [cv(&gaps), 1.0 / (1.0 + cv(&label_areas))]
}

fn balance(chart: &RenderedChart) -> [f64; 2] {
    let (mut sx, mut sy, mut total) = (0.0, 0.0, 0.0);
    for r in elements(chart) {
        let (cx, cy) = r.center();
        let a = r.area();
        sx += a * cx;
        sy += a * cy;
        total += a;
    }
    if total <= 0.0 {
        return [0.0, 0.0];
    }
    [
        (sx / total - chart.width / 2.0).abs() / chart.width,
        (sy / total - chart.height / 2.0).abs() / chart.height,
    ]
}

/// Layout metrics of a rendered chart. [`FeatureSet::Params`] has no
/// metric form and yields an empty vector.
pub fn metric_features(chart: &RenderedChart, set: FeatureSet) -> Vec<f64> {
    match set {
        FeatureSet::Params => vec![],
        FeatureSet::WhiteSpace => whitespace(chart).to_vec(),
        FeatureSet::Scale => scale(chart).to_vec(),
        FeatureSet::Unity => unity(chart).to_vec(),
        FeatureSet::Balance => balance(chart).to_vec(),
        FeatureSet::All => [whitespace(chart), scale(chart), unity(chart), balance(chart)].concat(),
    }
}

/// Feature vector of one side of a pair.
pub fn side_features(
    set: FeatureSet,
    space: &FeatureSpace,
    pair: &ComparisonPair,
    side: Side,
) -> Result<Vec<f64>> {
    side_features_for(set, space, &pair.data_for(side), pair.side(side))
}

fn side_features_for(
    set: FeatureSet,
    space: &FeatureSpace,
    data: &ChartData,
    params: &crate::params::LayoutParams,
) -> Result<Vec<f64>> {
    match set {
        FeatureSet::Params => space.normalize(params),
        _ => Ok(metric_features(&layout(data, params, DESK_BASE_HEIGHT)?, set)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankSvmConfig {
    /// Weight of the `‖w‖²` penalty.
    pub lambda: f64,
    pub iterations: usize,
}

impl Default for RankSvmConfig {
    fn default() -> Self {
        RankSvmConfig {
            lambda: 1.0,
            iterations: 3000,
        }
    }
}

/// `Σ max(0, 1 − w·d) + λ‖w‖²` over difference vectors `d = x⁺ − x⁻`.
pub fn ranksvm_objective(w: &[f64], diffs: &[Vec<f64>], lambda: f64) -> f64 {
    let hinge: f64 = diffs
        .iter()
        .map(|d| (1.0 - dot(w, d)).max(0.0))
        .sum();
    hinge + lambda * dot(w, w)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes [`ranksvm_objective`] by full-batch subgradient descent on the
/// per-pair objective with step `1/√t`, returning the best iterate.
pub fn fit_ranksvm(diffs: &[Vec<f64>], lambda: f64, iterations: usize) -> Vec<f64> {
    let dim = diffs.first().map_or(0, Vec::len);
    let n = diffs.len().max(1) as f64;
    let mut w = vec![0.0; dim];
    let mut best = (ranksvm_objective(&w, diffs, lambda), w.clone());
    let mut g = vec![0.0; dim];
    for t in 1..=iterations {
        for (gi, wi) in g.iter_mut().zip(&w) {
            *gi = 2.0 * lambda * wi / n;
        }
        for d in diffs {
            if dot(&w, d) < 1.0 {
                for (gi, di) in g.iter_mut().zip(d) {
                    *gi -= di / n;
                }
            }
        }
        let step = 1.0 / (t as f64).sqrt();
        for (wi, gi) in w.iter_mut().zip(&g) {
            *wi -= step * gi;
        }
        let obj = ranksvm_objective(&w, diffs, lambda);
        if obj < best.0 {
            best = (obj, w.clone());
        }
    }
    best.1
}

/// A bias-free linear comparison model over one feature set. Raw features
/// are divided by `scales` before the dot product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearRankModel {
    pub feature_set: FeatureSet,
    pub feature_names: Vec<String>,
    pub features: FeatureSpace,
    pub scales: Vec<f64>,
    pub weights: Vec<f64>,
    pub config: RankSvmConfig,
}

impl LinearRankModel {
    pub fn score_features(&self, raw: &[f64]) -> f64 {
        raw.iter()
            .zip(&self.scales)
            .zip(&self.weights)
            .map(|((x, s), w)| w * x / s)
            .sum()
    }

    pub fn score_side(&self, pair: &ComparisonPair, side: Side) -> Result<f64> {
        Ok(self.score_features(&side_features(self.feature_set, &self.features, pair, side)?))
    }

    /// Score of one layout for a given data table.
    pub fn score_layout(&self, data: &ChartData, params: &crate::params::LayoutParams) -> Result<f64> {
        let fitted = data.fitted(params.num_bars as usize);
        let x = side_features_for(self.feature_set, &self.features, &fitted, params)?;
        Ok(self.score_features(&x))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("rank model serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let m: LinearRankModel = serde_json::from_str(text)?;
        if m.weights.len() != m.scales.len() || m.weights.len() != m.feature_names.len() {
            return Err(Error::InvalidArgument("rank model arity mismatch".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }
}

impl PairPredictor for LinearRankModel {
    fn predict(&self, pair: &ComparisonPair) -> Result<Side> {
        Ok(prefer(self.score_side(pair, Side::A)?, self.score_side(pair, Side::B)?))
    }
}

/// Trains a RankSVM on the labeled pairs. Features are divided by their
/// standard deviation over all training sides; constant features get zero
/// weight.
pub fn train_ranksvm(
    dataset: &Dataset,
    grid: &ParamGrid,
    set: FeatureSet,
    cfg: &RankSvmConfig,
) -> Result<LinearRankModel> {
    if !(cfg.lambda >= 0.0) || cfg.iterations == 0 {
        return Err(Error::InvalidArgument("ranksvm needs lambda >= 0 and iterations >= 1".into()));
    }
    let space = grid.feature_space();
    let labeled: Vec<&ComparisonPair> = dataset.pairs.iter().filter(|p| p.label.is_some()).collect();
    if labeled.is_empty() {
        return Err(Error::InsufficientData("dataset has no labeled pairs".into()));
    }
    let feature_names: Vec<String> = match set {
        FeatureSet::Params => space.params().iter().map(|p| p.name().to_string()).collect(),
        _ => set.metric_names().iter().map(|s| s.to_string()).collect(),
    };
    let mut sides = Vec::with_capacity(labeled.len());
    for p in &labeled {
        let win = p.label.expect("filtered");
        sides.push((
            side_features(set, &space, p, win)?,
            side_features(set, &space, p, win.other())?,
        ));
    }
    let dim = feature_names.len();
    let all: Vec<&Vec<f64>> = sides.iter().flat_map(|(a, b)| [a, b]).collect();
    let scales: Vec<f64> = (0..dim)
        .map(|k| {
            let col: Vec<f64> = all.iter().map(|x| x[k]).collect();
            let (_, sd) = mean_sd(&col);
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    let constant: Vec<bool> = (0..dim)
        .map(|k| {
            let first = all[0][k];
            all.iter().all(|x| (x[k] - first).abs() <= 1e-12)
        })
        .collect();
    let weights = if constant.iter().all(|&c| c) {
        log::warn!("ranksvm[{set}]: every feature is constant; returning zero weights");
        vec![0.0; dim]
    } else {
        let diffs: Vec<Vec<f64>> = sides
            .iter()
            .map(|(w, l)| {
                (0..dim)
                    .map(|k| if constant[k] { 0.0 } else { (w[k] - l[k]) / scales[k] })
                    .collect()
            })
            .collect();
        fit_ranksvm(&diffs, cfg.lambda, cfg.iterations)
    };
    Ok(LinearRankModel {
        feature_set: set,
        feature_names,
        features: space,
        scales,
        weights,
        config: *cfg,
    })
}
