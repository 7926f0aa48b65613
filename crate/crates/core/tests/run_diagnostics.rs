//! Diagnostics over a real (small) search run: growth-rate statistics must
//! reflect the trainer's per-layer preferences, and the run must respect its
//! evaluation budget.

use blockswarm_core::analysis::{convergence_trace, grouped_cv, growth_rate_stats};
use blockswarm_core::history::HistoryStore;
use blockswarm_core::oracle::SyntheticOracle;
use blockswarm_core::search::{run_search, SearchConfig, SearchState};
use blockswarm_core::surrogate::FeatureSpec;
use blockswarm_core::svm::SvmConfig;

static RUN: std::sync::OnceLock<(SearchConfig<f64>, HistoryStore<f64>, Vec<SearchState<f64>>)> =
    std::sync::OnceLock::new();

fn small_run() -> &'static (SearchConfig<f64>, HistoryStore<f64>, Vec<SearchState<f64>>) {
    RUN.get_or_init(|| {
        let mut cfg = SearchConfig::<f64>::default();
        cfg.pso.population_size = 14;
        cfg.pso.generations = 14;
        cfg.pso.rng_seed = 33;
        cfg.surrogate.max_pairs = 500;
        cfg.parallel_evaluations = 2;
        let oracle = SyntheticOracle::<f64>::default();
        let store = HistoryStore::new();
        let mut states = Vec::new();
        run_search(&cfg, &oracle, &store, |state| {
            states.push(state.clone());
            Ok(())
        })
        .unwrap();
        (cfg, store, states)
    })
}

/// Spearman rank correlation between two equal-length samples.
fn rank_correlation(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(values: &[f64]) -> Vec<f64> {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
        let mut out = vec![0.0; values.len()];
        for (rank, &idx) in order.iter().enumerate() {
            out[idx] = rank as f64;
        }
        out
    }
    let ra = ranks(a);
    let rb = ranks(b);
    let n = a.len() as f64;
    let mean = (n - 1.0) / 2.0;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for i in 0..a.len() {
        cov += (ra[i] - mean) * (rb[i] - mean);
        va += (ra[i] - mean).powi(2);
        vb += (rb[i] - mean).powi(2);
    }
    cov / (va.sqrt() * vb.sqrt())
}

#[test]
fn growth_medians_follow_the_trainer_layer_preferences() {
    let (cfg, store, _) = small_run();
    let oracle = SyntheticOracle::<f64>::default();
    let stats = growth_rate_stats(&store, &cfg.encoding).unwrap();
    let sampled: Vec<&blockswarm_core::analysis::LayerStats<f64>> =
        stats.iter().filter(|s| s.count > 0).collect();
    assert!(sampled.len() >= 8, "most layer slots should carry samples");
    let medians: Vec<f64> = sampled.iter().map(|s| s.median).collect();
    let preferred: Vec<f64> = sampled
        .iter()
        .map(|s| oracle.config.layer_optimum(s.layer))
        .collect();
    let rho = rank_correlation(&medians, &preferred);
    assert!(
        rho > 0.0,
        "median growth per layer should track the preference profile, rho = {rho}"
    );
}

#[test]
fn full_evaluations_stay_within_the_budget_and_trace_is_complete() {
    let (cfg, _, states) = small_run();
    let log = &states.last().unwrap().log;
    assert!(
        log.total_full_evaluations <= cfg.pso.population_size * cfg.pso.generations,
        "{} full evaluations exceed the population x generations budget",
        log.total_full_evaluations
    );
    let swarms: Vec<_> = states.iter().map(|s| s.swarm.clone()).collect();
    let rows = convergence_trace(&swarms).unwrap();
    assert_eq!(rows.len(), cfg.pso.population_size * cfg.pso.generations);
}

#[test]
fn swarm_best_dominates_every_personal_best() {
    let (_, _, states) = small_run();
    for state in states {
        for p in &state.swarm.particles {
            assert!(
                state.swarm.gbest_fitness >= p.pbest_fitness,
                "generation {}: particle {} pbest {} exceeds gbest {}",
                state.swarm.generation,
                p.id,
                p.pbest_fitness,
                state.swarm.gbest_fitness
            );
        }
    }
}

#[test]
fn ablation_and_baseline_are_pure_functions_of_store_and_seed() {
    use blockswarm_core::analysis::{feature_ablation, tenth_epoch_baseline};
    let (_, store, _) = small_run();
    let a = feature_ablation(
        &store,
        &FeatureSpec::default(),
        &SvmConfig::default(),
        5,
        500,
        3,
    )
    .unwrap();
    let b = feature_ablation(
        &store,
        &FeatureSpec::default(),
        &SvmConfig::default(),
        5,
        500,
        3,
    )
    .unwrap();
    assert_eq!(a, b);
    assert_eq!(
        tenth_epoch_baseline(&store).unwrap(),
        tenth_epoch_baseline(&store).unwrap()
    );
}

#[test]
fn grouped_cv_runs_on_real_history() {
    let (cfg, store, _) = small_run();
    let scores = grouped_cv(
        &store,
        &FeatureSpec::default(),
        &SvmConfig::default(),
        5,
        cfg.surrogate.max_pairs,
        7,
    )
    .unwrap();
    assert!(!scores.is_empty());
    for s in &scores {
        assert!((0.0..=1.0).contains(s));
    }
}
