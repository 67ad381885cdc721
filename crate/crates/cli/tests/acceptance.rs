//! Acceptance suite: one PASS/FAIL line per criterion. Failures make the
//! process exit nonzero only with `ACCEPTANCE_STRICT=1`. Run alone with
//! `cargo test -p layoutrank-cli --test acceptance -- --nocapture`.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use anyhow::{ensure, Context, Result};
use layoutrank::baselines::FeatureSet;
use layoutrank::error::Error;
use layoutrank::eval::{correlations, mccv, MccvConfig, MccvReport, Method};
use layoutrank::model::{gradient_check, pair_loss, Mlp, DEFAULT_HIDDEN};
use layoutrank::optimize::{optimize, Constraints};
use layoutrank::oracle::{calibrate_beta, GroundTruth, OracleConfig};
use layoutrank::pairs::{capped_probabilities, generate_labeled, generate_pairs, synthetic_data, Provenance};
use layoutrank::params::{LabelRotation, Orientation};
use layoutrank::render::{desk_reject, layout, DeskRules, Rect};
use layoutrank::{default_grid, train, Dataset, Experiment, LayoutParams, Param, ParamGrid, Scorer};
use layoutrank::{ScoringModel, Side, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const UNANIMITY: f64 = 0.456;
const UNANIMITY_TOL: f64 = 0.01;
const LABELED_PAIRS: usize = 1200;
const MIN_ACCURACY: f64 = 0.85;
const SEED: u64 = 2024;

struct Shared {
    data: Dataset,
    neural: MccvReport,
}

fn oracle_recovery() -> Result<(bool, String, Shared)> {
    let started = Instant::now();
    let grid = default_grid(Experiment::Exp1);
    let calib: Vec<(LayoutParams, LayoutParams)> =
        generate_pairs(&grid, 2000, SEED)?.iter().map(|p| (p.a, p.b)).collect();
    let report = calibrate_beta(GroundTruth::Rulebook, &calib, UNANIMITY, 3, SEED)?;
    let oracle = OracleConfig::new(GroundTruth::Rulebook, report.beta, SEED);
    let (data, labels) = generate_labeled(&grid, &oracle, LABELED_PAIRS, SEED + 1, Provenance::Uniform)?;
    let realized = labels.kept as f64 / labels.judged as f64;
    let bayes = data
        .pairs
        .iter()
        .filter(|p| {
            let truth = if oracle.true_score(&p.b) > oracle.true_score(&p.a) { Side::B } else { Side::A };
            p.label == Some(truth)
        })
        .count() as f64
        / data.len() as f64;
    let cfg = MccvConfig {
        seed: SEED,
        ..MccvConfig::default()
    };
    let neural = mccv(&data, &grid, Method::Neural, &cfg)?;
    let secs = started.elapsed().as_secs_f64();
    let calibrated = (report.expected_unanimity - UNANIMITY).abs() <= UNANIMITY_TOL
        && (realized - UNANIMITY).abs() <= UNANIMITY_TOL;
    let pass = calibrated && data.len() == LABELED_PAIRS && neural.mean >= MIN_ACCURACY && secs < 120.0;
    let detail = format!(
        "beta {:.3}, unanimity {:.4} expected / {:.4} while labeling / {:.4} on the calibration sample; \
         {} pairs; MCCV {} runs mean {:.4} (sd {:.4}) vs >= {MIN_ACCURACY}; Bayes accuracy {:.4}; {:.1}s < 120s",
        report.beta,
        report.expected_unanimity,
        realized,
        report.empirical_unanimity,
        data.len(),
        neural.runs.len(),
        neural.mean,
        neural.sd,
        bayes,
        secs
    );
    Ok((pass, detail, Shared { data, neural }))
}

fn baseline_ordering(shared: &Shared) -> Result<(bool, String)> {
    let grid = default_grid(Experiment::Exp1);
    let cfg = MccvConfig {
        seed: SEED,
        ..MccvConfig::default()
    };
    let svm = mccv(&shared.data, &grid, Method::RankSvm(FeatureSet::Params), &cfg)?;
    Ok((
        shared.neural.mean > svm.mean,
        format!("neural {:.4} > ranksvm on parameters {:.4}", shared.neural.mean, svm.mean),
    ))
}

fn gradient_correctness() -> Result<(bool, String)> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let net = Mlp::new(3, &[8, 6], &mut rng);
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..16)
        .map(|_| {
            let a = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
            let b = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
            (a, b)
        })
        .collect();
    // a margin this large keeps every hinge active, away from its kink
    let err = gradient_check(&net, &pairs, 10.0, 1e-5);
    let secs = started.elapsed().as_secs_f64();
    Ok((
        err <= 1e-4 && secs < 1.0,
        format!("{} parameters, max relative error {err:.2e} <= 1e-4, {secs:.3}s < 1s", net.param_count()),
    ))
}

fn capped_weights() -> Result<(bool, String)> {
    let close = |got: &[f64], want: &[f64]| got.len() == want.len() && got.iter().zip(want).all(|(g, w)| (g - w).abs() <= 1e-12);
    let example = capped_probabilities(&[5, 1, 0], 3);
    ensure!(close(&example, &[0.75, 0.25, 0.0]), "{{5,1,0}}, T=3 gave {example:?}");
    let uniform = capped_probabilities(&[4, 4, 4, 4], 3);
    ensure!(close(&uniform, &[0.25; 4]), "uniform wins gave {uniform:?}");
    let binding = capped_probabilities(&[10, 2, 7], 5);
    ensure!(close(&binding, &[5.0 / 12.0, 2.0 / 12.0, 5.0 / 12.0]), "cap-binding case gave {binding:?}");
    let zeros = capped_probabilities(&[0, 0], 4);
    ensure!(close(&zeros, &[0.5, 0.5]), "all-zero wins gave {zeros:?}");
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    for _ in 0..2000 {
        let n = rng.gen_range(1..40);
        let wins: Vec<u64> = (0..n).map(|_| rng.gen_range(0..1000)).collect();
        let sum: f64 = capped_probabilities(&wins, rng.gen_range(1..200)).iter().sum();
        worst = worst.max((sum - 1.0).abs());
    }
    ensure!(worst <= 1e-9, "probabilities sum off by {worst:e}");
    Ok((true, format!("exact cases hold; max |sum - 1| over 2000 random vectors {worst:.1e}")))
}

fn random_model(grid: &ParamGrid, seed: u64) -> ScoringModel {
    let space = grid.feature_space();
    let net = Mlp::new(space.dim(), &DEFAULT_HIDDEN, &mut ChaCha8Rng::seed_from_u64(seed));
    ScoringModel::new(space, net, 0.0, TrainConfig::default())
}

fn loss_semantics() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    // dyadic values keep the comparison exact
    let dyadic = |rng: &mut ChaCha8Rng| rng.gen_range(-128i32..=128) as f64 / 64.0;
    for _ in 0..20_000 {
        let (sp, sm, m) = (dyadic(&mut rng), dyadic(&mut rng), dyadic(&mut rng).abs());
        ensure!((pair_loss(sp, sm, m) == 0.0) == (sp >= sm + m), "hinge zero set wrong at ({sp}, {sm}, {m})");
    }
    for _ in 0..1000 {
        let s: f64 = rng.gen_range(-5.0..5.0);
        let m: f64 = rng.gen_range(0.0..1.0);
        ensure!(pair_loss(s, s, m) == m, "tie at {s} did not return the margin {m}");
    }
    let grid = default_grid(Experiment::Exp2);
    let pairs = generate_pairs(&grid, 500, SEED)?;
    let mut flips = 0;
    for seed in 0..5 {
        let model = random_model(&grid, seed);
        for delta in [-2.5, 0.75, 10.0] {
            let mut shifted = model.clone();
            shifted.shift_output(delta);
            for p in &pairs {
                if model.predict_pair(&p.a, &p.b)? != shifted.predict_pair(&p.a, &p.b)? {
                    flips += 1;
                }
            }
        }
    }
    ensure!(flips == 0, "{flips} decisions changed under a constant shift");
    Ok((true, "hinge zero iff S+ >= S- + m on 20000 cases; ties return m; 7500 decisions shift-invariant".into()))
}

/// Plain sequential argmax over every cell, written without the optimizer.
fn rescan(scorer: &dyn Scorer, grid: &ParamGrid, data: &layoutrank::render::ChartData, c: &Constraints) -> Result<Option<(LayoutParams, f64)>> {
    let rules = DeskRules::for_experiment(grid.experiment());
    let mut best: Option<(LayoutParams, f64)> = None;
    for cell in grid.cells() {
        if c.pin_num_bars_to_data && cell.num_bars as usize != data.len() {
            continue;
        }
        if c.pinned.iter().any(|&(p, v)| cell.get(p) != v) {
            continue;
        }
        let chart = layout(&data.fitted(cell.num_bars as usize), &cell, c.base_height)?;
        if !desk_reject(&chart, &cell, rules).passed() || c.max_width_px.is_some_and(|w| chart.width > w) {
            continue;
        }
        let s = scorer.score(&cell)?;
        let better = match &best {
            None => true,
            Some((bp, bs)) => s > *bs || (s == *bs && cell.key() < bp.key()),
        };
        if better {
            best = Some((cell, s));
        }
    }
    Ok(best)
}

fn optimizer_soundness() -> Result<(bool, String)> {
    let mut matched = 0;
    let mut infeasible = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED + seed);
        let exp = if seed % 2 == 0 { Experiment::Exp1 } else { Experiment::Exp2 };
        let grid = default_grid(exp);
        let model = random_model(&grid, seed);
        let bars = rng.gen_range(5..=26);
        let data = synthetic_data(bars, exp, &mut rng);
        let mut c = Constraints {
            pin_num_bars_to_data: seed % 5 != 0,
            max_width_px: rng.gen_bool(0.5).then(|| rng.gen_range(400.0..1500.0)),
            ..Constraints::default()
        };
        if seed % 3 == 0 {
            let dim = grid.dim(Param::AspectRatio);
            c.pinned.push((Param::AspectRatio, dim.values[rng.gen_range(0..dim.len())]));
        }
        let fast = match optimize(&model, &grid, &data, &c) {
            Ok(r) => Some((r.best.params, r.best.score)),
            Err(Error::NoSolution) => None,
            Err(e) => return Err(e.into()),
        };
        let slow = rescan(&model, &grid, &data, &c)?;
        ensure!(fast == slow, "seed {seed}: optimizer {fast:?} but rescan {slow:?}");
        matched += 1;
        infeasible += usize::from(slow.is_none());
    }
    let grid = default_grid(Experiment::Exp2);
    let model = random_model(&grid, 99);
    let data = synthetic_data(12, Experiment::Exp2, &mut ChaCha8Rng::seed_from_u64(SEED));
    let free = Constraints {
        pin_num_bars_to_data: false,
        ..Constraints::default()
    };
    let started = Instant::now();
    let res = optimize(&model, &grid, &data, &free)?;
    let secs = started.elapsed().as_secs_f64();
    Ok((
        matched == 20 && res.enumerated == 87_360 && secs < 5.0,
        format!(
            "{matched}/20 models match the rescan ({infeasible} with no feasible cell); exp2 enumerated {} cells in {secs:.2}s < 5s",
            res.enumerated
        ),
    ))
}

fn boxes_intersect(a: &Rect, b: &Rect) -> bool {
    let w = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let h = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    w > 0.0 && h > 0.0
}

fn desk_parity() -> Result<(bool, String)> {
    let grid = default_grid(Experiment::Exp2);
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut agree, mut overlaps, mut rotated) = (0, 0, 0);
    for _ in 0..500 {
        let p = grid.sample(&mut rng);
        let data = synthetic_data(p.num_bars as usize, Experiment::Exp2, &mut rng);
        let chart = layout(&data, &p, 300)?;
        let rotated_horizontal = p.orientation == Orientation::Horizontal && p.label_rotation != LabelRotation::Deg0;
        let any_overlap = (0..chart.labels.len())
            .any(|i| (i + 1..chart.labels.len()).any(|j| boxes_intersect(&chart.labels[i].bbox, &chart.labels[j].bbox)));
        let expected_pass = !rotated_horizontal && !any_overlap;
        overlaps += usize::from(any_overlap);
        rotated += usize::from(rotated_horizontal);
        if desk_reject(&chart, &p, DeskRules::ALL).passed() == expected_pass {
            agree += 1;
        }
    }
    let mut always = true;
    for _ in 0..200 {
        let mut p = grid.sample(&mut rng);
        p.orientation = Orientation::Horizontal;
        p.label_rotation = if rng.gen_bool(0.5) { LabelRotation::Deg45 } else { LabelRotation::Deg90 };
        let chart = layout(&synthetic_data(p.num_bars as usize, Experiment::Exp2, &mut rng), &p, 300)?;
        always &= !desk_reject(&chart, &p, DeskRules::ALL).passed();
    }
    Ok((
        agree == 500 && always,
        format!(
            "{agree}/500 verdicts match the all-pairs oracle ({overlaps} with overlapping labels, {rotated} rotated horizontal); \
             200/200 forced horizontal+rotated charts {}",
            if always { "fail" } else { "NOT all failing" }
        ),
    ))
}

fn grid_counts() -> Result<(bool, String)> {
    let n1 = default_grid(Experiment::Exp1).cells().count();
    let n2 = default_grid(Experiment::Exp2).cells().count();
    Ok((n1 == 1_575 && n2 == 87_360, format!("exp1 {n1} (want 1575), exp2 {n2} (want 87360)")))
}

fn correlation_signs(shared: &Shared) -> Result<(bool, String)> {
    let grid = default_grid(Experiment::Exp1);
    let model = train(
        &shared.data,
        &grid,
        &TrainConfig {
            seed: SEED,
            ..TrainConfig::default()
        },
    )?
    .model;
    let r = |param| -> Result<f64> {
        correlations(&model, &grid)?
            .into_iter()
            .find(|c| c.param == param)
            .and_then(|c| c.r)
            .context("correlation undefined")
    };
    let (nb, ar, bw) = (r(Param::NumBars)?, r(Param::AspectRatio)?, r(Param::Bandwidth)?);
    let truth = correlations(&GroundTruth::Rulebook, &grid)?
        .into_iter()
        .find(|c| c.param == Param::NumBars)
        .and_then(|c| c.r)
        .context("correlation undefined")?;
    let pass = nb < 0.0 && ar > 0.0 && bw > 0.0;
    let mut detail = format!("r(num_bars) {nb:.3} < 0, r(aspect_ratio) {ar:.3} > 0, r(bandwidth) {bw:.3} > 0");
    if nb >= 0.0 {
        detail += &format!(
            " (rulebook r(num_bars) {truth:.3}; both sides of a pair share num_bars, so labels carry no num_bars signal)"
        );
    }
    Ok((pass, detail))
}

fn pipeline(dir: &Path) -> Result<Vec<(String, Vec<u8>)>> {
    let bin = env!("CARGO_BIN_EXE_layoutrank");
    let steps: [&[&str]; 4] = [
        &["gen-pairs", "--exp", "exp1", "-n", "300", "--seed", "7", "-o", "pairs.jsonl"],
        &["label", "--pairs", "pairs.jsonl", "--seed", "3", "-o", "labeled.jsonl", "--report", "label.json"],
        &["train", "--data", "labeled.jsonl", "--epochs", "40", "--seed", "5", "-o", "model.json", "--loss-csv", "loss.csv"],
        &["eval", "--data", "labeled.jsonl", "--method", "neural,ranksvm", "--runs", "3", "--epochs", "20", "--seed", "9", "-o", "eval.json"],
    ];
    let mut artifacts = Vec::new();
    for (i, args) in steps.iter().enumerate() {
        let out = Command::new(bin).args(*args).current_dir(dir).output()?;
        ensure!(out.status.success(), "{} failed: {}", args[0], String::from_utf8_lossy(&out.stderr));
        artifacts.push((format!("stdout of step {i}"), out.stdout));
    }
    for name in ["pairs.jsonl", "labeled.jsonl", "label.json", "model.json", "loss.csv", "eval.json"] {
        artifacts.push((name.to_string(), std::fs::read(dir.join(name))?));
    }
    Ok(artifacts)
}

fn determinism() -> Result<(bool, String)> {
    let (a, b) = (tempfile::tempdir()?, tempfile::tempdir()?);
    let first = pipeline(a.path())?;
    let second = pipeline(b.path())?;
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.as_str())
        .collect();
    let bytes: usize = first.iter().map(|(_, b)| b.len()).sum();
    Ok((
        differing.is_empty(),
        if differing.is_empty() {
            format!("gen-pairs, label, train, eval: {} artifacts ({bytes} bytes) identical across two runs", first.len())
        } else {
            format!("differing artifacts: {differing:?}")
        },
    ))
}

fn main() {
    // `cargo test -- --list` and filters are passed to every harness
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    if args.iter().any(|a| !a.starts_with('-') && !"acceptance".contains(a.as_str())) {
        return;
    }
    let mut failures = 0;
    let mut report = |name: &str, result: Result<(bool, String)>| {
        let (pass, detail) = result.unwrap_or_else(|e| (false, format!("error: {e:#}")));
        failures += usize::from(!pass);
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    };
    let shared = match oracle_recovery() {
        Ok((pass, detail, shared)) => {
            report("oracle recovery", Ok((pass, detail)));
            Some(shared)
        }
        Err(e) => {
            report("oracle recovery", Err(e));
            None
        }
    };
    let missing = || anyhow::anyhow!("needs the oracle recovery dataset");
    report("baseline ordering", shared.as_ref().ok_or_else(missing).and_then(baseline_ordering));
    report("gradient correctness", gradient_correctness());
    report("capped importance weights", capped_weights());
    report("loss semantics", loss_semantics());
    report("optimizer soundness", optimizer_soundness());
    report("desk-reject parity", desk_parity());
    report("grid counts", grid_counts());
    report("correlation signs", shared.as_ref().ok_or_else(missing).and_then(correlation_signs));
    report("determinism", determinism());
    println!("{} of 10 criteria passed", 10 - failures);
    if failures > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
        std::process::exit(1);
    }
}
