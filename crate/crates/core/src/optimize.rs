//! Brute-force layout recommendation over a parameter grid.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{LayoutParams, Param, ParamGrid};
use crate::render::{desk_reject, layout, ChartData, DeskRules};
use crate::scoring::Scorer;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Constraints {
    /// Height of the plot rectangle in pixels.
    pub base_height: u32,
    /// Upper bound on the full canvas width, labels included.
    pub max_width_px: Option<f64>,
    /// Parameters fixed to one value.
    pub pinned: Vec<(Param, f64)>,
    /// Fixes `num_bars` to the data length.
    pub pin_num_bars_to_data: bool,
    /// Hard rules; `None` uses the grid experiment's rules.
    pub rules: Option<DeskRules>,
    pub top_k: usize,
}

impl Default for Constraints {
    fn default() -> Self {
        Constraints {
            base_height: 300,
            max_width_px: None,
            pinned: vec![],
            pin_num_bars_to_data: true,
            rules: None,
            top_k: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub params: LayoutParams,
    pub score: f64,
    /// Canvas width at the constraint's base height.
    pub width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResult {
    pub best: Candidate,
    pub top: Vec<Candidate>,
    pub enumerated: usize,
    pub feasible: usize,
}

/// Higher score first, then the lexicographically smallest parameter tuple.
pub fn rank_order(a: &Candidate, b: &Candidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.params.lex_cmp(&b.params))
}

fn passes_pins(cell: &LayoutParams, pins: &[(Param, f64)]) -> bool {
    pins.iter().all(|&(p, v)| (cell.get(p) - v).abs() <= 1e-9)
}

/// Scores every feasible cell and returns the argmax. A cell is feasible
/// when it matches the pins, passes the desk-reject rules for `data`, and
/// fits `max_width_px`.
pub fn optimize(
    scorer: &dyn Scorer,
    grid: &ParamGrid,
    data: &ChartData,
    constraints: &Constraints,
) -> Result<OptimizeResult> {
    data.validate()?;
    let mut pins = constraints.pinned.clone();
    if constraints.pin_num_bars_to_data {
        pins.push((Param::NumBars, data.len() as f64));
    }
    let rules = constraints
        .rules
        .unwrap_or_else(|| DeskRules::for_experiment(grid.experiment()));
    let candidates: Vec<Candidate> = (0..grid.len())
        .into_par_iter()
        .filter_map(|i| {
            let params = grid.cell(i);
            if !passes_pins(&params, &pins) {
                return None;
            }
            Some(evaluate(scorer, &params, data, constraints, rules))
        })
        .filter_map(|r| r.transpose())
        .collect::<Result<Vec<_>>>()?;
    let enumerated = grid.len();
    let feasible = candidates.len();
    let k = constraints.top_k.max(1);
    let mut top = candidates
        .into_par_iter()
        .fold(Vec::new, |acc, c| push_top(acc, c, k))
        .reduce(Vec::new, |a, b| b.into_iter().fold(a, |acc, c| push_top(acc, c, k)));
    top.sort_by(rank_order);
    let best = *top.first().ok_or(Error::NoSolution)?;
    Ok(OptimizeResult {
        best,
        top,
        enumerated,
        feasible,
    })
}

fn push_top(mut acc: Vec<Candidate>, c: Candidate, k: usize) -> Vec<Candidate> {
    let pos = acc.partition_point(|x| rank_order(x, &c) == Ordering::Less);
    if pos < k {
        acc.insert(pos, c);
        acc.truncate(k);
    }
    acc
}

fn evaluate(
    scorer: &dyn Scorer,
    params: &LayoutParams,
    data: &ChartData,
    constraints: &Constraints,
    rules: DeskRules,
) -> Result<Option<Candidate>> {
    let fitted = data.fitted(params.num_bars as usize);
    let chart = layout(&fitted, params, constraints.base_height)?;
    if !desk_reject(&chart, params, rules).passed() {
        return Ok(None);
    }
    if constraints.max_width_px.is_some_and(|w| chart.width > w) {
        return Ok(None);
    }
    Ok(Some(Candidate {
        params: *params,
        score: scorer.score(params)?,
        width: chart.width,
    }))
}
