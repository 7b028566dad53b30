use elicit_core::model::{FeedbackKind, GroundTruth};
use elicit_core::prelude::*;
use elicit_core::serial;
use elicit_core::sim::*;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn spec(n: usize, m: usize, m_star: usize, seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        n,
        m,
        m_star,
        psi2: 1.0,
        sigma2: 1.0,
        test_size: 1000,
        seed,
    }
}

#[test]
fn synthetic_shapes_and_sparsity() {
    let p = generate_synthetic(&spec(10, 12, 10, 4));
    assert_eq!((p.train.n(), p.train.m()), (10, 12));
    assert_eq!((p.test.n(), p.test.m()), (1000, 12));
    assert_eq!(p.truth.w.iter().filter(|w| **w != 0.0).count(), 10);
    assert_eq!(p.truth.gamma.iter().filter(|g| **g).count(), 10);
    for (w, g) in p.truth.w.iter().zip(&p.truth.gamma) {
        assert_eq!(*w != 0.0, *g);
    }
}

#[test]
fn synthetic_is_deterministic_per_seed() {
    let a = generate_synthetic(&spec(10, 20, 5, 9));
    let b = generate_synthetic(&spec(10, 20, 5, 9));
    let c = generate_synthetic(&spec(10, 20, 5, 10));
    assert_eq!(a, b);
    assert_ne!(a.train, c.train);
}

#[test]
fn synthetic_respects_noise_level() {
    // With the true coefficients, the residual variance is sigma2.
    let mut s = spec(10, 15, 5, 2);
    s.sigma2 = 0.25;
    s.test_size = 20_000;
    let p = generate_synthetic(&s);
    let w = DVector::from_column_slice(&p.truth.w);
    let resid = p.test.y() - p.test.x() * w;
    let var = resid.norm_squared() / resid.len() as f64;
    assert!((var - 0.25).abs() < 0.02, "{var}");
}

#[test]
fn pure_noise_targets_cannot_beat_sigma2() {
    let p = generate_synthetic(&spec(50, 5, 0, 3));
    assert!(p.truth.w.iter().all(|w| *w == 0.0));
    let h = Hyperparameters::synthetic(5, 1);
    let fit = fit_posterior(&p.train, &FeedbackLog::new(), &h, &EpConfig::default()).unwrap();
    let err = mse(&fit.posterior, &p.test).unwrap();
    assert!(err > 0.9 && err < 1.3, "{err}");
}

#[test]
fn pool_shares_the_truth() {
    let s = spec(10, 8, 3, 5);
    let (p, pool) = generate_with_pool(&s, 40);
    assert_eq!(p, generate_synthetic(&s));
    assert_eq!(pool.n(), 40);
    assert_eq!(pool.m(), 8);
}

fn truth(w: Vec<f64>) -> GroundTruth {
    let gamma = w.iter().map(|v| *v != 0.0).collect();
    GroundTruth { m_star: 0, w, gamma }
}

#[test]
fn value_user_noise() {
    let t = truth(vec![0.0, 1.5]);
    let exact = SimulatedUser::value_oracle(&t, 0.0, 1);
    assert_eq!(exact.answer(1).unwrap(), Feedback::value(1, 1.5));

    let draws = 10_000;
    let mut sum = 0.0;
    for seed in 0..draws {
        let user = SimulatedUser::value_oracle(&t, 0.1, seed);
        let FeedbackKind::Value { value } = user.answer(0).unwrap().kind else {
            panic!("value oracle gave a non-value answer");
        };
        assert!(value.abs() <= 0.5);
        sum += value;
    }
    assert!((sum / draws as f64).abs() < 3.0 * 0.1 / 100.0);
}

#[test]
fn relevance_user_accuracy() {
    let t = truth(vec![0.0, 2.0]);
    let perfect = SimulatedUser::relevance_oracle(&t, 1.0, 5);
    assert_eq!(perfect.answer(0).unwrap(), Feedback::relevance(0, false));
    assert_eq!(perfect.answer(1).unwrap(), Feedback::relevance(1, true));

    let draws = 10_000;
    let mut correct = 0;
    let mut flipped_zero = false;
    for seed in 0..draws {
        let user = SimulatedUser::relevance_oracle(&t, 0.95, seed);
        let a = user.answer(0).unwrap();
        if a == Feedback::relevance(0, false) {
            correct += 1;
        } else {
            assert_eq!(a, Feedback::relevance(0, true));
            flipped_zero = true;
        }
    }
    let rate = correct as f64 / draws as f64;
    assert!((0.94..=0.96).contains(&rate), "{rate}");
    assert!(flipped_zero);
}

#[test]
fn answers_do_not_depend_on_query_order() {
    let t = truth(vec![0.3, 0.0, -1.0, 0.0]);
    let user = SimulatedUser::value_oracle(&t, 0.1, 77);
    let forward: Vec<_> = (0..4).map(|j| user.answer(j).unwrap()).collect();
    let backward: Vec<_> = (0..4).rev().map(|j| user.answer(j).unwrap()).collect();
    assert_eq!(forward, backward.into_iter().rev().collect::<Vec<_>>());
    assert!(user.answer(4).is_err());
}

#[test]
fn data_driven_thresholds() {
    let user = SimulatedUser {
        model: UserModel::DataDrivenRelevance {
            inclusion_probs: vec![0.95, 0.05, 0.5],
            pi: 0.9,
        },
        seed: 0,
    };
    assert_eq!(user.answer(0).unwrap(), Feedback::relevance(0, true));
    assert_eq!(user.answer(1).unwrap(), Feedback::relevance(1, false));
    assert_eq!(user.answer(2).unwrap(), Feedback::uncertain(2));
}

fn review_like_data(seed: u64, n: usize, m: usize, strong: &[usize]) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    // Duplicate the first strong feature into the second slot.
    if strong.len() == 2 {
        let col = x.column(strong[0]).into_owned();
        x.set_column(strong[1], &col);
    }
    let mut y = DVector::from_fn(n, |_, _| 0.5 * rng.sample::<f64, _>(StandardNormal));
    if let Some(&j) = strong.first() {
        y += x.column(j) * 1.0;
    }
    Dataset::with_default_names(x, y).unwrap()
}

#[test]
fn data_driven_user_on_noise_is_mostly_uncertain() {
    let data = review_like_data(1, 200, 10, &[]);
    let h = Hyperparameters::review_data();
    let (user, diag) = build_data_driven_user(&data, &h, &EpConfig::default()).unwrap();
    assert!(diag.converged);
    let uncertain = (0..10)
        .filter(|&j| user.answer(j).unwrap() == Feedback::uncertain(j))
        .count();
    assert!(uncertain >= 7, "{uncertain}");
}

#[test]
fn data_driven_user_spots_a_duplicated_strong_feature() {
    let data = review_like_data(2, 300, 8, &[3, 6]);
    let h = Hyperparameters::review_data();
    let (user, _) = build_data_driven_user(&data, &h, &EpConfig::default()).unwrap();
    let UserModel::DataDrivenRelevance { inclusion_probs, .. } = &user.model else {
        unreachable!()
    };
    assert!(inclusion_probs[3] > 0.9, "{inclusion_probs:?}");
    assert!(inclusion_probs[6] > 0.9, "{inclusion_probs:?}");
    let (again, _) = build_data_driven_user(&data, &h, &EpConfig::default()).unwrap();
    assert_eq!(user, again);
}

#[test]
fn data_driven_user_needs_rows() {
    let data = Dataset::with_default_names(DMatrix::zeros(0, 3), DVector::zeros(0)).unwrap();
    let h = Hyperparameters::review_data();
    assert!(build_data_driven_user(&data, &h, &EpConfig::default()).is_err());
}

#[test]
fn mse_examples() {
    let data = Dataset::with_default_names(DMatrix::zeros(0, 2), DVector::zeros(0)).unwrap();
    let h = Hyperparameters::synthetic(2, 1);
    let post = PosteriorApprox::initial(&data, &h).unwrap();
    // The prior mean is zero, so predictions are all zero.
    let rows = |ys: &[f64]| {
        Dataset::with_default_names(DMatrix::zeros(ys.len(), 2), DVector::from_column_slice(ys)).unwrap()
    };
    assert_eq!(mse(&post, &rows(&[0.0, 0.0, 0.0])).unwrap(), 0.0);
    assert_eq!(mse(&post, &rows(&[1.0, -1.0, 1.0])).unwrap(), 1.0);
    assert_eq!(mse(&post, &rows(&[2.0])).unwrap(), 4.0);
    assert!(mse(&post, &data).is_err());
}

struct Bench {
    problem: SyntheticProblem,
    h: Hyperparameters,
    cfg: EpConfig,
}

impl Bench {
    fn new(n: usize, m: usize, seed: u64) -> Self {
        Self {
            problem: generate_synthetic(&spec(n, m, 10.min(m), seed)),
            h: Hyperparameters::synthetic(m, 10.min(m)),
            cfg: EpConfig::default(),
        }
    }

    fn run(&self, strategy: Strategy, user: &SimulatedUser, kind: QueryKind, rounds: usize, seed: u64) -> StrategyRunResult {
        let setup = RunSetup {
            train: &self.problem.train,
            test: Some(&self.problem.test),
            user,
            relevant: &self.problem.truth.gamma,
            h: &self.h,
            cfg: &self.cfg,
            kind,
            warm_start: false,
        };
        run_strategy(strategy, &setup, rounds, seed).unwrap()
    }
}

#[test]
fn zero_rounds_gives_the_baseline_only() {
    let b = Bench::new(10, 12, 1);
    let user = SimulatedUser::value_oracle(&b.problem.truth, 0.1, 1);
    let r = b.run(Strategy::Random, &user, QueryKind::Value, 0, 1);
    assert_eq!(r.test_mse.len(), 1);
    assert_eq!(r.train_mse.len(), 1);
    assert_eq!(r.relevant_found, vec![0]);
    assert!(r.queries.is_empty());
}

#[test]
fn run_vectors_share_length_and_queries_are_distinct() {
    let b = Bench::new(10, 15, 2);
    let user = SimulatedUser::relevance_oracle(&b.problem.truth, 0.95, 2);
    for strategy in Strategy::ALL {
        let r = b.run(strategy, &user, QueryKind::Relevance, 15, 2);
        assert_eq!(r.test_mse.len(), 16);
        assert_eq!(r.train_mse.len(), 16);
        assert_eq!(r.relevant_found.len(), 16);
        assert_eq!(r.fit_sweeps.len(), 16);
        assert_eq!(r.selection_seconds.len(), 15);
        let mut q = r.queries.clone();
        q.sort_unstable();
        assert_eq!(q, (0..15).collect::<Vec<_>>());
        assert_eq!(*r.relevant_found.last().unwrap(), 10);
    }
}

#[test]
fn rounds_are_capped_at_m() {
    let b = Bench::new(10, 6, 2);
    let user = SimulatedUser::value_oracle(&b.problem.truth, 0.1, 2);
    let r = b.run(Strategy::Sequential, &user, QueryKind::Value, 50, 2);
    assert_eq!(r.queries.len(), 6);
}

#[test]
fn oracle_first_queries_relevant_features_first() {
    let b = Bench::new(10, 30, 3);
    let user = SimulatedUser::value_oracle(&b.problem.truth, 0.1, 3);
    let r = b.run(Strategy::OracleFirst, &user, QueryKind::Value, 12, 3);
    assert!(r.queries[..10].iter().all(|&j| b.problem.truth.gamma[j]));
    assert_eq!(r.relevant_found[10], 10);
    assert_eq!(r.relevant_found[12], 10);
}

#[test]
fn sequential_and_nonsequential_share_the_first_query() {
    let b = Bench::new(10, 40, 4);
    let user = SimulatedUser::value_oracle(&b.problem.truth, 0.1, 4);
    for kind in [QueryKind::Value, QueryKind::Relevance] {
        let s = b.run(Strategy::Sequential, &user, kind, 1, 4);
        let ns = b.run(Strategy::NonSequential, &user, kind, 1, 4);
        assert_eq!(s.queries[0], ns.queries[0]);
    }
}

#[test]
fn runs_are_deterministic() {
    let b = Bench::new(10, 20, 5);
    let user = SimulatedUser::relevance_oracle(&b.problem.truth, 0.95, 5);
    for strategy in Strategy::ALL {
        let a = b.run(strategy, &user, QueryKind::Relevance, 8, 11);
        let c = b.run(strategy, &user, QueryKind::Relevance, 8, 11);
        assert_eq!(a.queries, c.queries);
        assert_eq!(a.answers, c.answers);
        assert_eq!(a.test_mse, c.test_mse);
    }
}

#[test]
fn sequential_beats_random_at_round_twenty() {
    let runs = 50;
    let mut seq = Vec::new();
    let mut rnd = Vec::new();
    for r in 0..runs {
        let b = Bench::new(10, 30, 1000 + r);
        let user = SimulatedUser::value_oracle(&b.problem.truth, 0.1, r);
        seq.push(b.run(Strategy::Sequential, &user, QueryKind::Value, 20, r).test_mse[20]);
        rnd.push(b.run(Strategy::Random, &user, QueryKind::Value, 20, r).test_mse[20]);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!("round 20: sequential {:.4} random {:.4}", mean(&seq), mean(&rnd));
    assert!(mean(&seq) < mean(&rnd));
}

#[test]
fn mean_curves_average_pointwise() {
    let b = Bench::new(10, 12, 6);
    let user = SimulatedUser::value_oracle(&b.problem.truth, 0.1, 6);
    let r1 = b.run(Strategy::Random, &user, QueryKind::Value, 4, 1);
    let r2 = b.run(Strategy::Random, &user, QueryKind::Value, 4, 2);
    let c = MeanCurves::from_runs(&[r1.clone(), r2.clone()]).unwrap();
    for t in 0..5 {
        assert!((c.test_mse[t] - 0.5 * (r1.test_mse[t] + r2.test_mse[t])).abs() < 1e-15);
    }
    let s = b.run(Strategy::Sequential, &user, QueryKind::Value, 4, 1);
    assert!(MeanCurves::from_runs(&[r1, s]).is_err());
    assert!(MeanCurves::from_runs(&[]).is_err());
}

#[test]
fn crossings() {
    let curve = [3.0, 2.5, 2.0, 1.0];
    assert_eq!(first_crossing(&curve, 4.0), Crossing::Reached(0));
    assert_eq!(first_crossing(&curve, 2.0), Crossing::Reached(2));
    assert_eq!(first_crossing(&curve, 0.5), Crossing::Beyond(3));
    assert_eq!(Crossing::Beyond(3).to_string(), ">3");
    assert_eq!(serde_json::to_string(&Crossing::Beyond(3)).unwrap(), "\">3\"");
    assert_eq!(serde_json::to_string(&Crossing::Reached(2)).unwrap(), "2");
    let back: Crossing = serde_json::from_str("\">3\"").unwrap();
    assert_eq!(back, Crossing::Beyond(3));
}

#[test]
fn feedbacks_vs_samples_table() {
    let mut owned = Vec::new();
    for r in 0..3u64 {
        let (p, pool) = generate_with_pool(&spec(10, 20, 5, 300 + r), 15);
        let user = SimulatedUser::value_oracle(&p.truth, 0.1, r);
        owned.push((p, pool, user));
    }
    let instances: Vec<SampleInstance<'_>> = owned
        .iter()
        .map(|(p, pool, user)| SampleInstance {
            train: &p.train,
            pool,
            test: &p.test,
            user,
            relevant: &p.truth.gamma,
        })
        .collect();
    let settings = SampleSettings {
        h: Hyperparameters::synthetic(20, 5),
        cfg: EpConfig::default(),
        kind: QueryKind::Value,
        cap: 15,
        level_fractions: vec![1.5, 0.8, 1e-6],
        seed: 1,
    };
    let table = feedbacks_vs_samples(&instances, &settings).unwrap();
    assert_eq!(table.random_feedback_curve.len(), 16);
    assert_eq!(table.added_samples_curve.len(), 16);
    assert_eq!(table.rows[0].random_feedback, Crossing::Reached(0));
    assert_eq!(table.rows[0].sequential_feedback, Crossing::Reached(0));
    assert_eq!(table.rows[0].added_samples, Crossing::Reached(0));
    assert_eq!(table.rows[2].sequential_feedback, Crossing::Beyond(15));
    assert_eq!(table.rows[2].added_samples, Crossing::Beyond(15));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("table.csv");
    write_sample_table_csv(&path, &table).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("level,random_feedback,sequential_feedback,added_samples\n"));
    assert!(text.contains(">15"));
}

#[test]
fn pool_must_cover_the_cap() {
    let (p, pool) = generate_with_pool(&spec(10, 5, 2, 1), 3);
    let h = Hyperparameters::synthetic(5, 2);
    assert!(added_samples_curve(&p.train, &pool, &p.test, &h, &EpConfig::default(), 4, 0).is_err());
}

#[test]
fn run_record_and_curves_round_trip() {
    let b = Bench::new(10, 12, 7);
    let user = SimulatedUser::value_oracle(&b.problem.truth, 0.1, 7);
    let result = b.run(Strategy::Sequential, &user, QueryKind::Value, 3, 7);
    let record = RunRecord::new(spec(10, 12, 10, 7), b.h, b.cfg, 0.1, 7, 3, result.clone());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    serial::save(&record, &path).unwrap();
    let back: RunRecord = serial::load(&path).unwrap();
    assert_eq!(back, record);

    let curves = MeanCurves::from_runs(&[result]).unwrap();
    let csv_path = dir.path().join("curves.csv");
    write_curves_csv(&csv_path, &[curves]).unwrap();
    let text = std::fs::read_to_string(csv_path).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.starts_with("strategy,round,test_mse,train_mse,relevant_found\nsequential,0,"));
}

#[test]
fn strategy_names_parse() {
    for s in Strategy::ALL {
        assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
    }
    assert_eq!("non-sequential".parse::<Strategy>().unwrap(), Strategy::NonSequential);
    assert!("greedy".parse::<Strategy>().is_err());
}

#[test]
fn inclusion_threshold_for_oracle_set() {
    assert_eq!(relevant_from_inclusion(&[0.9, 0.7, 0.2], 0.7), vec![true, false, false]);
}
