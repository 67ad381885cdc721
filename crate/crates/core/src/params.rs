//! The layout design space: parameter vectors, candidate grids and the
//! min-max feature map shared by every learned model.
//!
//! Feature order is fixed to [`Param::ALL`] restricted to the grid's
//! *active* dimensions (those with more than one candidate value). For the
//! default Experiment-1 grid that is `[num_bars, aspect_ratio, bandwidth]`;
//! for Experiment 2 it is all six parameters.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exploration cap `T` used by importance resampling unless overridden.
pub const DEFAULT_EXPLORATION_CAP: u32 = 5;

const RANGE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    NumBars,
    AspectRatio,
    Bandwidth,
    MaxLabelLength,
    LabelRotation,
    Orientation,
}

impl Param {
    pub const ALL: [Param; 6] = [
        Param::NumBars,
        Param::AspectRatio,
        Param::Bandwidth,
        Param::MaxLabelLength,
        Param::LabelRotation,
        Param::Orientation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Param::NumBars => "num_bars",
            Param::AspectRatio => "aspect_ratio",
            Param::Bandwidth => "bandwidth",
            Param::MaxLabelLength => "max_label_length",
            Param::LabelRotation => "label_rotation",
            Param::Orientation => "orientation",
        }
    }

    pub fn from_name(name: &str) -> Option<Param> {
        Param::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Numeric parameters have meaningful midpoints; rotation and
    /// orientation are categorical.
    pub fn is_numeric(self) -> bool {
        matches!(
            self,
            Param::NumBars | Param::AspectRatio | Param::Bandwidth | Param::MaxLabelLength
        )
    }

    pub fn is_integer(self) -> bool {
        matches!(self, Param::NumBars | Param::MaxLabelLength)
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Vertical,
    Horizontal,
}

impl Orientation {
    pub fn code(self) -> f64 {
        match self {
            Orientation::Vertical => 0.0,
            Orientation::Horizontal => 1.0,
        }
    }

    fn from_code(code: f64) -> Option<Self> {
        if code == 0.0 {
            Some(Orientation::Vertical)
        } else if code == 1.0 {
            Some(Orientation::Horizontal)
        } else {
            None
        }
    }
}

/// Tick-label rotation in degrees.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum LabelRotation {
    Deg0,
    Deg45,
    Deg90,
}

impl LabelRotation {
    pub fn degrees(self) -> u32 {
        match self {
            LabelRotation::Deg0 => 0,
            LabelRotation::Deg45 => 45,
            LabelRotation::Deg90 => 90,
        }
    }
}

impl TryFrom<u32> for LabelRotation {
    type Error = String;

    fn try_from(deg: u32) -> std::result::Result<Self, Self::Error> {
        match deg {
            0 => Ok(LabelRotation::Deg0),
            45 => Ok(LabelRotation::Deg45),
            90 => Ok(LabelRotation::Deg90),
            other => Err(format!("label rotation must be 0, 45 or 90, got {other}")),
        }
    }
}

impl From<LabelRotation> for u32 {
    fn from(r: LabelRotation) -> u32 {
        r.degrees()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    /// Three parameters, two-character tokens, no desk-reject rules.
    Exp1,
    /// Six parameters with both desk-reject rules active.
    Exp2,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Exp1 => "exp1",
            Experiment::Exp2 => "exp2",
        }
    }
}

impl std::str::FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "exp1" => Ok(Experiment::Exp1),
            "exp2" => Ok(Experiment::Exp2),
            other => Err(format!("unknown experiment '{other}' (expected exp1 or exp2)")),
        }
    }
}

/// One point in the layout design space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutParams {
    pub num_bars: u32,
    pub aspect_ratio: f64,
    pub bandwidth: f64,
    pub max_label_length: u32,
    pub label_rotation: LabelRotation,
    pub orientation: Orientation,
}

impl Default for LayoutParams {
    fn default() -> Self {
        LayoutParams {
            num_bars: 5,
            aspect_ratio: 1.0,
            bandwidth: 0.85,
            max_label_length: 2,
            label_rotation: LabelRotation::Deg0,
            orientation: Orientation::Vertical,
        }
    }
}

impl LayoutParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_bars < 2 {
            return Err(Error::InvalidParams(format!(
                "num_bars must be at least 2, got {}",
                self.num_bars
            )));
        }
        if !(self.aspect_ratio.is_finite() && self.aspect_ratio > 0.0) {
            return Err(Error::InvalidParams(format!(
                "aspect_ratio must be positive, got {}",
                self.aspect_ratio
            )));
        }
        if !(self.bandwidth > 0.0 && self.bandwidth <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "bandwidth must lie in (0, 1], got {}",
                self.bandwidth
            )));
        }
        if self.max_label_length < 1 {
            return Err(Error::InvalidParams("max_label_length must be at least 1".into()));
        }
        Ok(())
    }

    /// Raw numeric value of one parameter; rotation in degrees,
    /// orientation coded vertical = 0, horizontal = 1.
    pub fn get(&self, param: Param) -> f64 {
        match param {
            Param::NumBars => self.num_bars as f64,
            Param::AspectRatio => self.aspect_ratio,
            Param::Bandwidth => self.bandwidth,
            Param::MaxLabelLength => self.max_label_length as f64,
            Param::LabelRotation => self.label_rotation.degrees() as f64,
            Param::Orientation => self.orientation.code(),
        }
    }

    /// Sets one parameter and re-validates the whole tuple.
    pub fn set(&mut self, param: Param, value: f64) -> Result<()> {
        let bad = || Error::InvalidParams(format!("{value} is not a valid {param}"));
        match param {
            Param::NumBars => {
                if value.fract() != 0.0 || value < 0.0 {
                    return Err(bad());
                }
                self.num_bars = value as u32;
            }
            Param::AspectRatio => self.aspect_ratio = value,
            Param::Bandwidth => self.bandwidth = value,
            Param::MaxLabelLength => {
                if value.fract() != 0.0 || value < 0.0 {
                    return Err(bad());
                }
                self.max_label_length = value as u32;
            }
            Param::LabelRotation => {
                if value.fract() != 0.0 || value < 0.0 {
                    return Err(bad());
                }
                self.label_rotation = LabelRotation::try_from(value as u32).map_err(|_| bad())?;
            }
            Param::Orientation => {
                self.orientation = Orientation::from_code(value).ok_or_else(bad)?;
            }
        }
        self.validate()
    }

    /// The parameter tuple in [`Param::ALL`] order.
    pub fn key(&self) -> [f64; 6] {
        Param::ALL.map(|p| self.get(p))
    }

    /// Lexicographic order over [`LayoutParams::key`].
    pub fn lex_cmp(&self, other: &LayoutParams) -> std::cmp::Ordering {
        let (a, b) = (self.key(), other.key());
        for (x, y) in a.iter().zip(b.iter()) {
            match x.total_cmp(y) {
                std::cmp::Ordering::Equal => continue,
                ord => return ord,
            }
        }
        std::cmp::Ordering::Equal
    }
}

/// Candidate values of one parameter with their sampling probabilities and
/// win counters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub param: Param,
    pub values: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub wins: Vec<u64>,
}

impl Dimension {
    pub fn uniform(param: Param, values: Vec<f64>) -> Self {
        let n = values.len();
        Dimension {
            param,
            probabilities: vec![1.0 / n as f64; n],
            wins: vec![0; n],
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Position of `value` in the candidate list.
    pub fn position(&self, value: f64) -> Option<usize> {
        self.values
            .iter()
            .position(|v| (v - value).abs() <= RANGE_TOLERANCE)
    }

    fn validate(&self) -> Result<()> {
        let name = self.param;
        if self.values.is_empty() {
            return Err(Error::InvalidGrid(format!("{name} has no candidate values")));
        }
        if self.probabilities.len() != self.values.len() || self.wins.len() != self.values.len()
        {
            return Err(Error::InvalidGrid(format!(
                "{name}: probability/win lists must match the value list length"
            )));
        }
        if self.values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidGrid(format!("{name} values must be strictly increasing")));
        }
        let mut probe = LayoutParams::default();
        for &v in &self.values {
            probe.set(name, v)?;
        }
        if self.probabilities.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidGrid(format!("{name} has a negative probability")));
        }
        let total: f64 = self.probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidGrid(format!(
                "{name} probabilities sum to {total}, expected 1"
            )));
        }
        Ok(())
    }
}

/// Per-parameter candidate lists forming a Cartesian design space.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrid {
    experiment: Experiment,
    dims: Vec<Dimension>,
    /// Exploration cap `T` for importance resampling.
    pub exploration_cap: u32,
}

impl ParamGrid {
    /// Builds a grid from one dimension per parameter, in any order.
    pub fn new(experiment: Experiment, dims: Vec<Dimension>, exploration_cap: u32) -> Result<Self> {
        let mut slots: Vec<Option<Dimension>> = vec![None; Param::ALL.len()];
        for d in dims {
            let i = d.param.index();
            if slots[i].is_some() {
                return Err(Error::InvalidGrid(format!("{} declared twice", d.param)));
            }
            slots[i] = Some(d);
        }
        let dims = slots
            .into_iter()
            .zip(Param::ALL)
            .map(|(d, p)| d.ok_or_else(|| Error::InvalidGrid(format!("missing dimension {p}"))))
            .collect::<Result<Vec<_>>>()?;
        if exploration_cap == 0 {
            return Err(Error::InvalidGrid("exploration cap must be positive".into()));
        }
        let grid = ParamGrid {
            experiment,
            dims,
            exploration_cap,
        };
        for d in &grid.dims {
            d.validate()?;
        }
        Ok(grid)
    }

    pub fn experiment(&self) -> Experiment {
        self.experiment
    }

    pub fn dims(&self) -> &[Dimension] {
        &self.dims
    }

    pub fn dim(&self, param: Param) -> &Dimension {
        &self.dims[param.index()]
    }

    pub(crate) fn dim_mut(&mut self, param: Param) -> &mut Dimension {
        &mut self.dims[param.index()]
    }

    /// Replaces one dimension's value list, resetting it to uniform.
    pub fn with_values(mut self, param: Param, values: Vec<f64>) -> Result<Self> {
        self.dims[param.index()] = Dimension::uniform(param, values);
        self.dims[param.index()].validate()?;
        Ok(self)
    }

    /// Parameters with more than one candidate value, in feature order.
    pub fn active_params(&self) -> Vec<Param> {
        self.dims
            .iter()
            .filter(|d| d.len() > 1)
            .map(|d| d.param)
            .collect()
    }

    /// Number of configurations in the Cartesian product.
    pub fn len(&self) -> usize {
        self.dims.iter().map(Dimension::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Decodes a mixed-radix cell index; the last parameter varies fastest.
    pub fn cell(&self, mut index: usize) -> LayoutParams {
        let mut p = LayoutParams::default();
        for d in self.dims.iter().rev() {
            let j = index % d.len();
            index /= d.len();
            p.set(d.param, d.values[j]).expect("grid values are validated");
        }
        p
    }

    pub fn cells(&self) -> impl Iterator<Item = LayoutParams> + '_ {
        (0..self.len()).map(|i| self.cell(i))
    }

    /// Whether every parameter of `p` is one of the grid's candidates.
    pub fn contains(&self, p: &LayoutParams) -> bool {
        self.dims.iter().all(|d| d.position(p.get(d.param)).is_some())
    }

    pub fn feature_space(&self) -> FeatureSpace {
        FeatureSpace {
            features: self
                .active_params()
                .into_iter()
                .map(|p| {
                    let d = self.dim(p);
                    FeatureBound {
                        param: p,
                        min: d.min(),
                        max: d.max(),
                    }
                })
                .collect(),
        }
    }

    /// Draws one configuration, each parameter independently from its
    /// probability list.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> LayoutParams {
        let mut p = LayoutParams::default();
        for d in &self.dims {
            let v = d.values[sample_index(&d.probabilities, rng)];
            p.set(d.param, v).expect("grid values are validated");
        }
        p
    }

    pub fn sample_params(&self, seed: u64) -> LayoutParams {
        self.sample(&mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn uniform_probabilities(mut self) -> Self {
        for d in &mut self.dims {
            let n = d.len();
            d.probabilities = vec![1.0 / n as f64; n];
        }
        self
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: GridFile = serde_json::from_str(text)?;
        file.into_grid()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&GridFile::from_grid(self)).expect("grid serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string() + "\n").map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn sample_index<R: Rng + ?Sized>(probabilities: &[f64], rng: &mut R) -> usize {
    if probabilities.len() == 1 {
        return 0;
    }
    WeightedIndex::new(probabilities)
        .expect("validated probabilities have positive mass")
        .sample(rng)
}

/// Built-in design space for one experiment.
///
/// Experiment 1: 25 bar counts × 9 aspect ratios × 7 bandwidths = 1,575.
/// Experiment 2: 26 bar counts × 8 aspect ratios (capped at 2) × 7
/// bandwidths × 10 label lengths × 3 rotations × 2 orientations = 87,360.
pub fn default_grid(experiment: Experiment) -> ParamGrid {
    let bandwidth = vec![0.10, 0.25, 0.40, 0.55, 0.70, 0.85, 1.00];
    let dims = match experiment {
        Experiment::Exp1 => vec![
            Dimension::uniform(Param::NumBars, (2..=26).map(f64::from).collect()),
            Dimension::uniform(
                Param::AspectRatio,
                vec![0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0],
            ),
            Dimension::uniform(Param::Bandwidth, bandwidth),
            Dimension::uniform(Param::MaxLabelLength, vec![2.0]),
            Dimension::uniform(Param::LabelRotation, vec![0.0]),
            Dimension::uniform(Param::Orientation, vec![0.0]),
        ],
        Experiment::Exp2 => vec![
            Dimension::uniform(Param::NumBars, (5..=30).map(f64::from).collect()),
            Dimension::uniform(
                Param::AspectRatio,
                vec![0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0],
            ),
            Dimension::uniform(Param::Bandwidth, bandwidth),
            Dimension::uniform(
                Param::MaxLabelLength,
                (1..=10).map(|k| f64::from(2 * k)).collect(),
            ),
            Dimension::uniform(Param::LabelRotation, vec![0.0, 45.0, 90.0]),
            Dimension::uniform(Param::Orientation, vec![0.0, 1.0]),
        ],
    };
    let grid = ParamGrid::new(experiment, dims, DEFAULT_EXPLORATION_CAP)
        .expect("built-in grids are valid");
    let expected = match experiment {
        Experiment::Exp1 => 1_575,
        Experiment::Exp2 => 87_360,
    };
    assert_eq!(grid.len(), expected, "default {} grid size", experiment.name());
    grid
}

/// Min-max bounds of one learned feature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureBound {
    pub param: Param,
    pub min: f64,
    pub max: f64,
}

/// Ordered min-max normalization from layout parameters to `[0, 1]^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpace {
    pub features: Vec<FeatureBound>,
}

impl FeatureSpace {
    pub fn dim(&self) -> usize {
        self.features.len()
    }

    pub fn params(&self) -> Vec<Param> {
        self.features.iter().map(|f| f.param).collect()
    }

    pub fn normalize(&self, p: &LayoutParams) -> Result<Vec<f64>> {
        self.features
            .iter()
            .map(|f| {
                let v = p.get(f.param);
                if v < f.min - RANGE_TOLERANCE || v > f.max + RANGE_TOLERANCE || !v.is_finite() {
                    return Err(Error::OutOfRange {
                        param: f.param,
                        value: v,
                        min: f.min,
                        max: f.max,
                    });
                }
                Ok(((v - f.min) / (f.max - f.min)).clamp(0.0, 1.0))
            })
            .collect()
    }

    /// Inverse of [`FeatureSpace::normalize`] for the learned dimensions;
    /// inactive parameters are taken from `base`.
    pub fn denormalize(&self, features: &[f64], base: &LayoutParams) -> Result<LayoutParams> {
        let mut p = *base;
        for (f, &x) in self.features.iter().zip(features) {
            let mut v = f.min + x * (f.max - f.min);
            if f.param.is_integer() || matches!(f.param, Param::LabelRotation | Param::Orientation)
            {
                v = v.round();
            }
            p.set(f.param, v)?;
        }
        Ok(p)
    }
}

/// Free-function form of [`FeatureSpace::normalize`] over a grid's bounds.
pub fn normalize(params: &LayoutParams, grid: &ParamGrid) -> Result<Vec<f64>> {
    grid.feature_space().normalize(params)
}

/// On-disk grid schema: `{"num_bars": [...], ..., "probabilities": {...}}`.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    experiment: Option<Experiment>,
    num_bars: Vec<u32>,
    aspect_ratio: Vec<f64>,
    bandwidth: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_label_length: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label_rotation: Option<Vec<LabelRotation>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    orientation: Option<Vec<Orientation>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    probabilities: Option<BTreeMap<String, Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    wins: Option<BTreeMap<String, Vec<u64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    exploration_cap: Option<u32>,
}

impl GridFile {
    fn from_grid(grid: &ParamGrid) -> Self {
        let d = |p: Param| grid.dim(p);
        let ints = |p: Param| d(p).values.iter().map(|v| *v as u32).collect::<Vec<_>>();
        let mut probabilities = BTreeMap::new();
        let mut wins = BTreeMap::new();
        for dim in grid.dims() {
            let uniform = dim
                .probabilities
                .iter()
                .all(|p| (p - 1.0 / dim.len() as f64).abs() < 1e-15);
            if !uniform {
                probabilities.insert(dim.param.name().to_string(), dim.probabilities.clone());
            }
            if dim.wins.iter().any(|&w| w > 0) {
                wins.insert(dim.param.name().to_string(), dim.wins.clone());
            }
        }
        GridFile {
            experiment: Some(grid.experiment()),
            num_bars: ints(Param::NumBars),
            aspect_ratio: d(Param::AspectRatio).values.clone(),
            bandwidth: d(Param::Bandwidth).values.clone(),
            max_label_length: Some(ints(Param::MaxLabelLength)),
            label_rotation: Some(
                ints(Param::LabelRotation)
                    .into_iter()
                    .map(|deg| LabelRotation::try_from(deg).expect("validated"))
                    .collect(),
            ),
            orientation: Some(
                d(Param::Orientation)
                    .values
                    .iter()
                    .map(|&c| Orientation::from_code(c).expect("validated"))
                    .collect(),
            ),
            probabilities: (!probabilities.is_empty()).then_some(probabilities),
            wins: (!wins.is_empty()).then_some(wins),
            exploration_cap: Some(grid.exploration_cap),
        }
    }

    fn into_grid(self) -> Result<ParamGrid> {
        let as_f64 = |v: Vec<u32>| v.into_iter().map(f64::from).collect::<Vec<_>>();
        let mut dims = vec![
            Dimension::uniform(Param::NumBars, as_f64(self.num_bars)),
            Dimension::uniform(Param::AspectRatio, self.aspect_ratio),
            Dimension::uniform(Param::Bandwidth, self.bandwidth),
            Dimension::uniform(
                Param::MaxLabelLength,
                as_f64(self.max_label_length.unwrap_or_else(|| vec![2])),
            ),
            Dimension::uniform(
                Param::LabelRotation,
                self.label_rotation
                    .unwrap_or_else(|| vec![LabelRotation::Deg0])
                    .into_iter()
                    .map(|r| r.degrees() as f64)
                    .collect(),
            ),
            Dimension::uniform(
                Param::Orientation,
                self.orientation
                    .unwrap_or_else(|| vec![Orientation::Vertical])
                    .into_iter()
                    .map(Orientation::code)
                    .collect(),
            ),
        ];
        for (name, probs) in self.probabilities.unwrap_or_default() {
            let p = Param::from_name(&name)
                .ok_or_else(|| Error::InvalidGrid(format!("unknown parameter '{name}'")))?;
            dims[p.index()].probabilities = probs;
        }
        for (name, wins) in self.wins.unwrap_or_default() {
            let p = Param::from_name(&name)
                .ok_or_else(|| Error::InvalidGrid(format!("unknown parameter '{name}'")))?;
            dims[p.index()].wins = wins;
        }
        let experiment = self.experiment.unwrap_or_else(|| {
            let extended = [Param::MaxLabelLength, Param::LabelRotation, Param::Orientation]
                .iter()
                .any(|p| dims[p.index()].len() > 1);
            if extended {
                Experiment::Exp2
            } else {
                Experiment::Exp1
            }
        });
        ParamGrid::new(
            experiment,
            dims,
            self.exploration_cap.unwrap_or(DEFAULT_EXPLORATION_CAP),
        )
    }
}
