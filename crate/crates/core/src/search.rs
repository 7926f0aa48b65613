//! The surrogate-assisted evolutionary loop and final stacking step.
//!
//! Generation 0 evaluates every particle's initial position in full; there is
//! no history yet, so nothing can be gated. Every later generation refits the
//! surrogate on the history, applies the swarm update against the global best
//! frozen at the end of the previous generation, and then decides per
//! particle: while the surrogate is active, a candidate predicted not to beat
//! the particle's personal best is assigned fitness 0 without training;
//! everything else is evaluated in full. Full evaluations inside a generation
//! run on a bounded thread pool and their records are appended in particle
//! order, which keeps runs byte-for-byte reproducible and makes a generation
//! atomic: a trainer failure loses at most the generation in flight, and a
//! resumed run replays it identically.
//!
//! After the last generation the winning block is stacked 1..=max_stack times
//! and each candidate is evaluated on the full dataset descriptor; the best
//! accuracy wins, ties going to the smaller stack.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blockmodel::StackPlan;
use crate::dataset::{make_surrogate_dataset, DatasetDescriptor, ReductionConfig, ReductionError};
use crate::encoding::{decode, BlockSpec, EncodingConfig};
use crate::evaluator::{EvalError, Evaluator, Trainer, TrainingCurves, DEFAULT_MAX_EPOCHS};
use crate::hashing::mix;
use crate::history::HistoryStore;
use crate::pso::{initialize_swarm, record_fitness, update_particle, PsoConfig, Swarm};
use crate::surrogate::{predict_better, refresh, SurrogateConfig, SurrogateError, SurrogateState};
use crate::Scalar;

const TAG_INIT: u64 = 0x01;
const TAG_UPDATE: u64 = 0x02;
const TAG_SURROGATE: u64 = 0x03;
const TAG_REDUCE: u64 = 0x04;
const TAG_TRAIN: u64 = 0x05;

/// Everything a search run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "F: crate::Scalar"))]
pub struct SearchConfig<F> {
    pub pso: PsoConfig<F>,
    pub encoding: EncodingConfig,
    pub surrogate: SurrogateConfig<F>,
    pub reduction: ReductionConfig,
    /// The full fitness-evaluation dataset; the search itself runs on its
    /// reduced form.
    pub dataset: DatasetDescriptor<F>,
    pub max_epochs: usize,
    /// Largest stack size tried by the final selection step.
    pub max_stack: u32,
    /// Bound on concurrent full evaluations (and stacking candidates).
    pub parallel_evaluations: usize,
}

impl<F: Scalar> Default for SearchConfig<F> {
    fn default() -> Self {
        Self {
            pso: PsoConfig::default(),
            encoding: EncodingConfig::default(),
            surrogate: SurrogateConfig::default(),
            reduction: ReductionConfig::default(),
            dataset: DatasetDescriptor::default(),
            max_epochs: DEFAULT_MAX_EPOCHS,
            max_stack: 5,
            parallel_evaluations: 4,
        }
    }
}

impl<F: Scalar> SearchConfig<F> {
    pub fn validate(&self) -> Result<(), SearchError> {
        self.pso
            .validate()
            .map_err(|e| SearchError::Config(e.into()))?;
        self.reduction.validate()?;
        if self.max_epochs == 0 {
            return Err(SearchError::Config("max_epochs must be at least 1".into()));
        }
        if self.max_stack == 0 {
            return Err(SearchError::Config("max_stack must be at least 1".into()));
        }
        if self.parallel_evaluations == 0 {
            return Err(SearchError::Config(
                "parallel_evaluations must be at least 1".into(),
            ));
        }
        self.surrogate
            .feature_spec
            .validate()
            .map_err(|e| SearchError::Config(e.to_string()))?;
        Ok(())
    }
}

/// One generation's bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats<F> {
    pub generation: usize,
    /// Particles whose candidate was rejected by the surrogate.
    pub filtered: usize,
    /// Particles evaluated in full.
    pub trained: usize,
    pub surrogate_active: bool,
    pub surrogate_cv_mean: Option<F>,
    pub gbest_fitness: F,
    /// Full evaluations this generation.
    pub full_evaluations: usize,
    /// Trainer epochs spent producing candidate features this generation.
    pub candidate_feature_epochs: u64,
    /// Trainer epochs consumed so far across the whole run.
    pub trainer_epochs_total: u64,
}

/// Outcome of the stacking step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackingOutcome<F> {
    /// Held-out accuracy per stack size, index 0 being one repeat.
    pub accuracies: Vec<F>,
    pub best_repeats: u32,
}

/// Run artifacts: one row per generation plus the final selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog<F> {
    pub generations: Vec<GenerationStats<F>>,
    pub best_block: Option<BlockSpec>,
    pub best_fitness: F,
    pub total_full_evaluations: usize,
    pub stacking: Option<StackingOutcome<F>>,
}

impl<F: Scalar> RunLog<F> {
    fn empty() -> Self {
        Self {
            generations: Vec::new(),
            best_block: None,
            best_fitness: F::zero(),
            total_full_evaluations: 0,
            stacking: None,
        }
    }
}

/// Resumable search position: the swarm after `swarm.generation` completed
/// generations plus the log so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchState<F> {
    pub swarm: Swarm<F>,
    pub next_generation: usize,
    pub log: RunLog<F>,
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search config: {0}")]
    Config(String),
    #[error(transparent)]
    Reduction(#[from] ReductionError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error("persisting run artifacts failed: {0}")]
    Io(#[from] std::io::Error),
}

/// Fresh state for a run: the initialized swarm, nothing evaluated yet.
pub fn initial_state<F: Scalar>(cfg: &SearchConfig<F>) -> SearchState<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.pso.rng_seed, TAG_INIT));
    SearchState {
        swarm: initialize_swarm(&cfg.pso, &cfg.encoding, &mut rng),
        next_generation: 0,
        log: RunLog::empty(),
    }
}

/// Runs the search from scratch. `observer` fires after every completed
/// generation with the current resumable state.
pub fn run_search<F: Scalar>(
    cfg: &SearchConfig<F>,
    trainer: &dyn Trainer<F>,
    store: &HistoryStore<F>,
    observer: impl FnMut(&SearchState<F>) -> Result<(), SearchError>,
) -> Result<(BlockSpec, RunLog<F>), SearchError> {
    resume_search(cfg, trainer, store, initial_state(cfg), observer)
}

/// Continues a search from a checkpointed state. With a deterministic trainer
/// and the matching history store this reproduces the uninterrupted run
/// exactly.
pub fn resume_search<F: Scalar>(
    cfg: &SearchConfig<F>,
    trainer: &dyn Trainer<F>,
    store: &HistoryStore<F>,
    mut state: SearchState<F>,
    mut observer: impl FnMut(&SearchState<F>) -> Result<(), SearchError>,
) -> Result<(BlockSpec, RunLog<F>), SearchError> {
    cfg.validate()?;
    let seed = cfg.pso.rng_seed;
    let surrogate_ds = make_surrogate_dataset(&cfg.dataset, &cfg.reduction, mix(seed, TAG_REDUCE))?;
    let evaluator = Evaluator::new(
        trainer,
        store,
        cfg.encoding,
        cfg.max_epochs,
        mix(seed, TAG_TRAIN),
    );
    // Align the epoch meter with what a fresh run would have consumed so far.
    let epochs_before_resume = store.epochs_total();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallel_evaluations)
        .build()
        .map_err(|e| SearchError::Config(e.to_string()))?;

    for generation in state.next_generation..cfg.pso.generations {
        let mut filtered = 0usize;
        let mut trained_count = 0usize;
        let mut surrogate_active = false;
        let mut surrogate_cv_mean = None;
        let mut candidate_feature_epochs = 0u64;

        let to_train: Vec<usize>;
        if generation == 0 {
            // Initial generation: evaluate everyone as they stand.
            to_train = (0..state.swarm.particles.len()).collect();
        } else {
            let surrogate = refresh_for_generation(cfg, store, seed, generation)?;
            surrogate_active = surrogate.active;
            surrogate_cv_mean = surrogate.cv_mean();

            let frozen_gbest = state.swarm.gbest_position.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(mix(mix(seed, TAG_UPDATE), generation as u64));
            for particle in &mut state.swarm.particles {
                update_particle(particle, &frozen_gbest, &cfg.pso, &mut rng);
            }

            let mut train_list = Vec::new();
            for idx in 0..state.swarm.particles.len() {
                let candidate = decode(&state.swarm.particles[idx].position, &cfg.encoding);
                if surrogate.active {
                    let pbest = decode(&state.swarm.particles[idx].pbest_position, &cfg.encoding);
                    let before = evaluator.epochs_consumed();
                    let beats = predict_better(
                        &surrogate,
                        &candidate,
                        &pbest,
                        &evaluator,
                        &surrogate_ds,
                        &cfg.surrogate.feature_spec,
                    )?;
                    candidate_feature_epochs += evaluator.epochs_consumed() - before;
                    if beats == 1 {
                        train_list.push(idx);
                    } else {
                        filtered += 1;
                        // Rejected candidate: fitness 0, no training.
                        record_fitness(&mut state.swarm.particles[idx], F::zero());
                    }
                } else {
                    train_list.push(idx);
                }
            }
            to_train = train_list;
        }

        // Full evaluations, concurrent but appended in particle order.
        let specs: Vec<BlockSpec> = to_train
            .iter()
            .map(|&idx| decode(&state.swarm.particles[idx].position, &cfg.encoding))
            .collect();
        let curves: Vec<Result<TrainingCurves<F>, EvalError>> = pool.install(|| {
            specs
                .par_iter()
                .map(|spec| evaluator.train_full(spec, &surrogate_ds))
                .collect()
        });
        for ((idx, spec), curves) in to_train.iter().zip(&specs).zip(curves) {
            let curves = curves?;
            evaluator.record_full(spec, &surrogate_ds, &curves)?;
            record_fitness(&mut state.swarm.particles[*idx], curves.best_accuracy);
            trained_count += 1;
        }
        state.swarm.refresh_gbest();
        state.swarm.generation = generation;

        state.log.total_full_evaluations += trained_count;
        state.log.generations.push(GenerationStats {
            generation,
            filtered,
            trained: trained_count,
            surrogate_active,
            surrogate_cv_mean,
            gbest_fitness: state.swarm.gbest_fitness,
            full_evaluations: trained_count,
            candidate_feature_epochs,
            trainer_epochs_total: epochs_before_resume + evaluator.epochs_consumed(),
        });
        state.next_generation = generation + 1;
        observer(&state)?;
    }

    let best_block = decode(&state.swarm.gbest_position, &cfg.encoding);
    state.log.best_block = Some(best_block.clone());
    state.log.best_fitness = state.swarm.gbest_fitness;
    Ok((best_block, state.log))
}

fn refresh_for_generation<F: Scalar>(
    cfg: &SearchConfig<F>,
    store: &HistoryStore<F>,
    seed: u64,
    generation: usize,
) -> Result<SurrogateState<F>, SearchError> {
    // A threshold above 1 can never activate; skip the fitting work.
    if cfg.surrogate.threshold > F::one() {
        return Ok(SurrogateState::inactive(cfg.surrogate.threshold));
    }
    Ok(refresh(
        store,
        &cfg.surrogate,
        mix(mix(seed, TAG_SURROGATE), generation as u64),
    )?)
}

/// Stacks `block` 1..=max_stack times, evaluates every candidate on the full
/// dataset, and returns the accuracies plus the winning repeat count (ties
/// broken toward the smaller stack).
pub fn stack_and_select<F: Scalar>(
    block: &BlockSpec,
    dataset: &DatasetDescriptor<F>,
    trainer: &dyn Trainer<F>,
    store: &HistoryStore<F>,
    cfg: &SearchConfig<F>,
) -> Result<StackingOutcome<F>, SearchError> {
    assert!(cfg.max_stack >= 1);
    let evaluator = Evaluator::new(
        trainer,
        store,
        cfg.encoding,
        cfg.max_epochs,
        mix(cfg.pso.rng_seed, TAG_TRAIN),
    );
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallel_evaluations)
        .build()
        .map_err(|e| SearchError::Config(e.to_string()))?;
    let plans: Vec<StackPlan<F>> = (1..=cfg.max_stack)
        .map(|t| StackPlan::stacked(block.clone(), t))
        .collect();
    let curves: Vec<Result<TrainingCurves<F>, EvalError>> = pool.install(|| {
        plans
            .par_iter()
            .map(|plan| evaluator.evaluate_plan(plan, dataset))
            .collect()
    });
    let mut accuracies = Vec::with_capacity(plans.len());
    for c in curves {
        accuracies.push(c?.best_accuracy);
    }
    let mut best_repeats = 1u32;
    let mut best_acc = accuracies[0];
    for (i, &acc) in accuracies.iter().enumerate().skip(1) {
        if acc > best_acc {
            best_acc = acc;
            best_repeats = i as u32 + 1;
        }
    }
    Ok(StackingOutcome {
        accuracies,
        best_repeats,
    })
}
