use layoutrank::model::{pair_loss, Mlp, DEFAULT_HIDDEN};
use layoutrank::optimize::{optimize, Constraints};
use layoutrank::oracle::{GroundTruth, OracleConfig};
use layoutrank::pairs::{capped_probabilities, generate_pairs, label_pairs, synthetic_data};
use layoutrank::params::{LabelRotation, Orientation};
use layoutrank::render::{desk_reject, layout, DeskRules};
use layoutrank::{default_grid, Dataset, Experiment, Param, ParamGrid, ScoringModel, Side, TrainConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_model(grid: &ParamGrid, seed: u64) -> ScoringModel {
    let space = grid.feature_space();
    let net = Mlp::new(space.dim(), &DEFAULT_HIDDEN, &mut ChaCha8Rng::seed_from_u64(seed));
    ScoringModel::new(space, net, 0.0, TrainConfig::default())
}

fn exp1_data(n: usize, seed: u64) -> layoutrank::render::ChartData {
    synthetic_data(n, Experiment::Exp1, &mut ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn capped_probabilities_are_a_distribution(wins in prop::collection::vec(0u64..500, 1..30), cap in 1u32..100) {
        let p = capped_probabilities(&wins, cap);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        // values at or above the cap are equally likely
        let capped: Vec<f64> = wins.iter().zip(&p).filter(|(w, _)| **w >= u64::from(cap)).map(|(_, p)| *p).collect();
        prop_assert!(capped.windows(2).all(|w| (w[0] - w[1]).abs() <= 1e-12));
    }

    #[test]
    fn hinge_is_zero_exactly_past_the_margin(sp in -4.0f64..4.0, sm in -4.0f64..4.0, m in 0.0f64..1.0, shift in -10.0f64..10.0) {
        let l = pair_loss(sp, sm, m);
        prop_assert!(l >= 0.0);
        prop_assert_eq!(l == 0.0, sm - sp + m <= 0.0);
        prop_assert!((pair_loss(sp + shift, sm + shift, m) - l).abs() <= 1e-9);
    }

    #[test]
    fn optimum_dominates_and_constraints_only_lower_it(seed in 0u64..1000, bars in 2usize..=26, width in 300.0f64..2000.0) {
        let grid = default_grid(Experiment::Exp1);
        let model = random_model(&grid, seed);
        let data = exp1_data(bars, seed);
        let free = optimize(&model, &grid, &data, &Constraints::default()).unwrap();
        prop_assert!(free.top.iter().all(|c| c.score <= free.best.score));
        let capped = Constraints { max_width_px: Some(width), ..Constraints::default() };
        if let Ok(res) = optimize(&model, &grid, &data, &capped) {
            prop_assert!(res.best.score <= free.best.score);
            prop_assert!(res.best.width <= width);
        }
        let pinned = Constraints { pinned: vec![(Param::Bandwidth, 0.4)], ..Constraints::default() };
        prop_assert!(optimize(&model, &grid, &data, &pinned).unwrap().best.score <= free.best.score);
    }

    #[test]
    fn optimum_ignores_reduction_order(seed in 0u64..1000, bars in 2usize..=26, threads in 2usize..8) {
        let grid = default_grid(Experiment::Exp1);
        let model = random_model(&grid, seed);
        let data = exp1_data(bars, seed);
        let c = Constraints { top_k: 25, ..Constraints::default() };
        let run = |n: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
            pool.install(|| optimize(&model, &grid, &data, &c).unwrap())
        };
        prop_assert_eq!(run(1), run(threads));
    }

    #[test]
    fn charts_respect_their_parameters(seed in any::<u64>()) {
        let grid = default_grid(Experiment::Exp2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = grid.sample(&mut rng);
        let data = synthetic_data(p.num_bars as usize, Experiment::Exp2, &mut rng);
        let chart = layout(&data, &p, 300).unwrap();
        prop_assert_eq!(chart.bars.len(), p.num_bars as usize);
        let thickness = |b: &layoutrank::render::Rect| match p.orientation {
            Orientation::Vertical => b.w,
            Orientation::Horizontal => b.h,
        };
        for b in &chart.bars {
            prop_assert!((thickness(b) - p.bandwidth * chart.band_step()).abs() <= 1e-9);
        }
        let inside = |r: &layoutrank::render::Rect| {
            r.x >= -1e-9 && r.y >= -1e-9 && r.right() <= chart.width + 1e-9 && r.bottom() <= chart.height + 1e-9
        };
        prop_assert!(chart.bars.iter().all(inside));
        prop_assert!(chart.labels.iter().all(|l| inside(&l.bbox)));
        if p.orientation == Orientation::Horizontal && p.label_rotation != LabelRotation::Deg0 {
            prop_assert!(!desk_reject(&chart, &p, DeskRules::ALL).passed());
        }
    }

    #[test]
    fn pairs_share_data_and_bar_count(seed in any::<u64>()) {
        for exp in [Experiment::Exp1, Experiment::Exp2] {
            for p in generate_pairs(&default_grid(exp), 20, seed).unwrap() {
                prop_assert!(p.a != p.b);
                prop_assert_eq!(p.a.num_bars, p.b.num_bars);
                prop_assert_eq!(p.data.len(), p.a.num_bars as usize);
            }
        }
    }

    #[test]
    fn labeling_is_pure_in_inputs_and_seed(seed in any::<u64>()) {
        let pairs = generate_pairs(&default_grid(Experiment::Exp1), 60, seed).unwrap();
        let oracle = OracleConfig::new(GroundTruth::Rulebook, 7.0, seed);
        let (a, ra) = label_pairs(&pairs, &oracle).unwrap();
        let (b, rb) = label_pairs(&pairs, &oracle).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(ra, rb);
        prop_assert_eq!(Dataset::from_jsonl(&a.to_jsonl()).unwrap(), a);
    }

    #[test]
    fn decisions_flip_with_the_pair(seed in 0u64..1000) {
        let grid = default_grid(Experiment::Exp2);
        let model = random_model(&grid, seed);
        for p in generate_pairs(&grid, 20, seed).unwrap() {
            let ab = model.predict_pair(&p.a, &p.b).unwrap();
            let ba = model.predict_pair(&p.b, &p.a).unwrap();
            if model.score(&p.a).unwrap() != model.score(&p.b).unwrap() {
                prop_assert_eq!(ab, ba.other());
            } else {
                prop_assert_eq!((ab, ba), (Side::A, Side::A));
            }
        }
    }
}
