//! Fitness evaluation with adaptive early stopping.
//!
//! A trainer is anything that can turn a stack plan and a dataset descriptor
//! into a resumable stream of per-epoch (loss, accuracy) pairs. Evaluation
//! trains epoch by epoch and keeps going while the latest accuracy still ties
//! or beats the best seen, or while fewer than five epochs have passed since
//! the best epoch; a configurable hard cap bounds runs whose accuracy never
//! degrades. Every completed evaluation lands in the history store; partial
//! runs cut at the feature-cutting epoch are stored too, flagged as partial,
//! so surrogate feature extraction never retrains a block it has seen.

use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

use crate::blockmodel::StackPlan;
use crate::dataset::DatasetDescriptor;
use crate::encoding::{block_vector, BlockSpec, EncodingConfig};
use crate::hashing::{fnv1a64, mix};
use crate::history::{HistoryError, HistoryStore, NewRecord, TrainingRecord};
use crate::Scalar;

/// Epochs allowed without improvement before an evaluation stops.
pub const EARLY_STOP_PATIENCE: usize = 5;

/// Default hard cap on epochs per evaluation.
pub const DEFAULT_MAX_EPOCHS: usize = 60;

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error("trainer init failed: {0}")]
    Init(String),
    #[error("trainer epoch failed: {0}")]
    Epoch(String),
}

/// Evaluation failure carrying whatever curves were produced before it.
#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{source} (after {epochs_completed} epochs)")]
    TrainerFailed {
        source: TrainerError,
        epochs_completed: usize,
    },
    #[error("trainer returned an invalid measurement: {0}")]
    InvalidMeasurement(String),
    #[error(transparent)]
    History(#[from] HistoryError),
}

/// One in-progress training run.
pub trait TrainerSession<F>: Send {
    /// Trains one more epoch and reports (training loss, test accuracy).
    fn train_epoch(&mut self) -> Result<(F, F), TrainerError>;
}

/// Factory for training sessions. Sessions must be deterministic given
/// (plan, dataset, seed), and resumable: training `e` epochs and continuing
/// equals training `e + k` epochs in one session.
pub trait Trainer<F>: Send + Sync {
    fn start(
        &self,
        plan: &StackPlan<F>,
        dataset: &DatasetDescriptor<F>,
        seed: u64,
    ) -> Result<Box<dyn TrainerSession<F>>, TrainerError>;
}

/// Curves of one completed training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingCurves<F> {
    pub losses: Vec<F>,
    pub accuracies: Vec<F>,
    pub best_accuracy: F,
    /// 1-based epoch where the best accuracy first appeared.
    pub best_epoch: usize,
}

/// Runs the early-stopped training loop against an open session.
///
/// The loop continues exactly while `acc >= best` or fewer than
/// [`EARLY_STOP_PATIENCE`] epochs have passed since the best epoch, and never
/// beyond `max_epochs`.
pub fn train_with_early_stop<F: Scalar>(
    session: &mut dyn TrainerSession<F>,
    max_epochs: usize,
) -> Result<TrainingCurves<F>, EvalError> {
    assert!(max_epochs >= 1);
    let mut losses = Vec::new();
    let mut accuracies = Vec::new();
    let mut best = F::zero();
    let mut best_epoch = 0usize;
    let mut epoch = 0usize;
    let mut acc = F::zero();
    while (acc >= best || epoch - best_epoch < EARLY_STOP_PATIENCE) && epoch < max_epochs {
        let (loss, a) = step(session, epoch)?;
        epoch += 1;
        losses.push(loss);
        accuracies.push(a);
        acc = a;
        if acc > best {
            best = acc;
            best_epoch = epoch;
        }
    }
    Ok(TrainingCurves {
        losses,
        accuracies,
        best_accuracy: best,
        best_epoch,
    })
}

/// Trains for exactly `epochs` epochs, no early stopping.
pub fn train_fixed_epochs<F: Scalar>(
    session: &mut dyn TrainerSession<F>,
    epochs: usize,
) -> Result<TrainingCurves<F>, EvalError> {
    assert!(epochs >= 1);
    let mut losses = Vec::with_capacity(epochs);
    let mut accuracies = Vec::with_capacity(epochs);
    let mut best = F::zero();
    let mut best_epoch = 0usize;
    for epoch in 0..epochs {
        let (loss, a) = step(session, epoch)?;
        losses.push(loss);
        accuracies.push(a);
        if a > best {
            best = a;
            best_epoch = epoch + 1;
        }
    }
    Ok(TrainingCurves {
        losses,
        accuracies,
        best_accuracy: best,
        best_epoch,
    })
}

fn step<F: Scalar>(
    session: &mut dyn TrainerSession<F>,
    epochs_completed: usize,
) -> Result<(F, F), EvalError> {
    let (loss, acc) = session
        .train_epoch()
        .map_err(|source| EvalError::TrainerFailed {
            source,
            epochs_completed,
        })?;
    if !loss.is_finite() || loss < F::zero() {
        return Err(EvalError::InvalidMeasurement(format!(
            "loss {loss} is not a finite non-negative number"
        )));
    }
    if !acc.is_finite() || acc < F::zero() || acc > F::one() {
        return Err(EvalError::InvalidMeasurement(format!(
            "accuracy {acc} is outside [0, 1]"
        )));
    }
    Ok((loss, acc))
}

/// Ties a trainer, a history store and the encoding together and hands out
/// deterministic per-block training seeds.
pub struct Evaluator<'a, F> {
    trainer: &'a dyn Trainer<F>,
    store: &'a HistoryStore<F>,
    encoding: EncodingConfig,
    max_epochs: usize,
    base_seed: u64,
    epochs_meter: AtomicU64,
}

impl<'a, F: Scalar> Evaluator<'a, F> {
    pub fn new(
        trainer: &'a dyn Trainer<F>,
        store: &'a HistoryStore<F>,
        encoding: EncodingConfig,
        max_epochs: usize,
        base_seed: u64,
    ) -> Self {
        Self {
            trainer,
            store,
            encoding,
            max_epochs,
            base_seed,
            epochs_meter: AtomicU64::new(0),
        }
    }

    pub fn store(&self) -> &HistoryStore<F> {
        self.store
    }

    pub fn encoding(&self) -> &EncodingConfig {
        &self.encoding
    }

    /// Trainer epochs consumed through this evaluator so far.
    pub fn epochs_consumed(&self) -> u64 {
        self.epochs_meter.load(Ordering::Relaxed)
    }

    /// Seed for training a given plan on a given dataset: stable, so partial
    /// and full runs of the same block see identical curves.
    pub fn train_seed(&self, plan: &StackPlan<F>, dataset: &DatasetDescriptor<F>) -> u64 {
        let mut h = mix(self.base_seed, fnv1a64(dataset.dataset_id.as_bytes()));
        h = mix(h, dataset.split_seed);
        h = mix(h, u64::from(plan.repeats));
        for &g in &plan.block.growth_rates {
            h = mix(h, u64::from(g));
        }
        h
    }

    /// Runs one full early-stopped evaluation and returns the curves without
    /// touching the store. `record_full` persists them.
    pub fn train_full(
        &self,
        spec: &BlockSpec,
        dataset: &DatasetDescriptor<F>,
    ) -> Result<TrainingCurves<F>, EvalError> {
        let plan = StackPlan::single(spec.clone());
        let seed = self.train_seed(&plan, dataset);
        let mut session = self.trainer.start(&plan, dataset, seed).map_err(|source| {
            EvalError::TrainerFailed {
                source,
                epochs_completed: 0,
            }
        })?;
        let curves = train_with_early_stop(session.as_mut(), self.max_epochs)?;
        self.epochs_meter
            .fetch_add(curves.losses.len() as u64, Ordering::Relaxed);
        Ok(curves)
    }

    /// Appends the curves of a full evaluation as a non-partial record.
    pub fn record_full(
        &self,
        spec: &BlockSpec,
        dataset: &DatasetDescriptor<F>,
        curves: &TrainingCurves<F>,
    ) -> Result<TrainingRecord<F>, EvalError> {
        let record = self.store.append(NewRecord {
            block_vector: block_vector(spec, &self.encoding),
            losses: curves.losses.clone(),
            accuracies: curves.accuracies.clone(),
            best_accuracy: curves.best_accuracy,
            best_epoch: curves.best_epoch,
            dataset_id: dataset.dataset_id.clone(),
            partial: false,
        })?;
        Ok(record)
    }

    /// Full evaluation: trains with early stopping, records the run, returns
    /// the best accuracy observed.
    pub fn evaluate_fitness(
        &self,
        spec: &BlockSpec,
        dataset: &DatasetDescriptor<F>,
    ) -> Result<F, EvalError> {
        let curves = self.train_full(spec, dataset)?;
        self.record_full(spec, dataset, &curves)?;
        Ok(curves.best_accuracy)
    }

    /// First `cutting_epoch` losses and accuracies for a block.
    ///
    /// Reuses any stored record with at least that many epochs without
    /// touching the trainer; otherwise trains exactly that many epochs and
    /// stores the result as a partial record.
    pub fn partial_train(
        &self,
        spec: &BlockSpec,
        dataset: &DatasetDescriptor<F>,
        cutting_epoch: usize,
    ) -> Result<(Vec<F>, Vec<F>), EvalError> {
        assert!(cutting_epoch >= 1);
        let key = block_vector(spec, &self.encoding);
        if let Some(record) = self.store.lookup(&key) {
            if record.epochs_run >= cutting_epoch {
                return Ok((
                    record.losses[..cutting_epoch].to_vec(),
                    record.accuracies[..cutting_epoch].to_vec(),
                ));
            }
        }
        let plan = StackPlan::single(spec.clone());
        let seed = self.train_seed(&plan, dataset);
        let mut session = self.trainer.start(&plan, dataset, seed).map_err(|source| {
            EvalError::TrainerFailed {
                source,
                epochs_completed: 0,
            }
        })?;
        let curves = train_fixed_epochs(session.as_mut(), cutting_epoch)?;
        self.epochs_meter
            .fetch_add(cutting_epoch as u64, Ordering::Relaxed);
        self.store.append(NewRecord {
            block_vector: key,
            losses: curves.losses.clone(),
            accuracies: curves.accuracies.clone(),
            best_accuracy: curves.best_accuracy,
            best_epoch: curves.best_epoch,
            dataset_id: dataset.dataset_id.clone(),
            partial: true,
        })?;
        Ok((curves.losses, curves.accuracies))
    }

    /// Early-stopped evaluation of a stacked candidate. Stacked runs are not
    /// block history; the curves are returned without being stored.
    pub fn evaluate_plan(
        &self,
        plan: &StackPlan<F>,
        dataset: &DatasetDescriptor<F>,
    ) -> Result<TrainingCurves<F>, EvalError> {
        let seed = self.train_seed(plan, dataset);
        let mut session =
            self.trainer
                .start(plan, dataset, seed)
                .map_err(|source| EvalError::TrainerFailed {
                    source,
                    epochs_completed: 0,
                })?;
        let curves = train_with_early_stop(session.as_mut(), self.max_epochs)?;
        self.epochs_meter
            .fetch_add(curves.losses.len() as u64, Ordering::Relaxed);
        Ok(curves)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Trainer replaying a scripted accuracy sequence; losses mirror it.
    struct Scripted {
        accuracies: Vec<f64>,
    }

    struct ScriptedSession {
        accuracies: Vec<f64>,
        next: usize,
    }

    impl Trainer<f64> for Scripted {
        fn start(
            &self,
            _plan: &StackPlan<f64>,
            _dataset: &DatasetDescriptor<f64>,
            _seed: u64,
        ) -> Result<Box<dyn TrainerSession<f64>>, TrainerError> {
            Ok(Box::new(ScriptedSession {
                accuracies: self.accuracies.clone(),
                next: 0,
            }))
        }
    }

    impl TrainerSession<f64> for ScriptedSession {
        fn train_epoch(&mut self) -> Result<(f64, f64), TrainerError> {
            let acc = *self
                .accuracies
                .get(self.next)
                .ok_or_else(|| TrainerError::Epoch("script exhausted".into()))?;
            self.next += 1;
            Ok((1.0 - acc, acc))
        }
    }

    fn eval_with<'a>(
        trainer: &'a Scripted,
        store: &'a HistoryStore<f64>,
        max_epochs: usize,
    ) -> Evaluator<'a, f64> {
        Evaluator::new(trainer, store, EncodingConfig::default(), max_epochs, 7)
    }

    fn spec() -> BlockSpec {
        BlockSpec::new(vec![14, 20, 26])
    }

    fn dataset() -> DatasetDescriptor<f64> {
        DatasetDescriptor::default()
    }

    #[test]
    fn early_stop_follows_the_hand_simulated_trace() {
        let trainer = Scripted {
            accuracies: vec![0.50, 0.60, 0.55, 0.54, 0.53, 0.52, 0.51, 0.50],
        };
        let store = HistoryStore::new();
        let ev = eval_with(&trainer, &store, 60);
        let fitness = ev.evaluate_fitness(&spec(), &dataset()).unwrap();
        assert_eq!(fitness, 0.60);
        let record = store.records().pop().unwrap();
        assert_eq!(record.epochs_run, 7);
        assert_eq!(record.best_epoch, 2);
        assert_eq!(record.best_accuracy, 0.60);
        assert!(!record.partial);
        assert_eq!(ev.epochs_consumed(), 7);
    }

    #[test]
    fn monotone_accuracy_runs_to_the_cap() {
        let accs: Vec<f64> = (1..=100).map(|e| e as f64 / 200.0).collect();
        let trainer = Scripted { accuracies: accs };
        let store = HistoryStore::new();
        let ev = eval_with(&trainer, &store, 60);
        let fitness = ev.evaluate_fitness(&spec(), &dataset()).unwrap();
        assert_eq!(fitness, 60.0 / 200.0);
        assert_eq!(store.records()[0].epochs_run, 60);
    }

    #[test]
    fn flat_accuracy_ties_keep_training_until_the_cap() {
        let trainer = Scripted {
            accuracies: vec![0.5; 100],
        };
        let store = HistoryStore::new();
        let ev = eval_with(&trainer, &store, 25);
        ev.evaluate_fitness(&spec(), &dataset()).unwrap();
        assert_eq!(store.records()[0].epochs_run, 25);
    }

    #[test]
    fn trainer_failure_surfaces_and_nothing_is_appended() {
        let trainer = Scripted {
            accuracies: vec![0.5, 0.6],
        };
        let store = HistoryStore::new();
        let ev = eval_with(&trainer, &store, 60);
        let err = ev.evaluate_fitness(&spec(), &dataset()).unwrap_err();
        match err {
            EvalError::TrainerFailed {
                epochs_completed, ..
            } => assert_eq!(epochs_completed, 2),
            other => panic!("unexpected error {other:?}"),
        }
        assert!(store.is_empty());
    }

    #[test]
    fn partial_train_reuses_long_enough_records() {
        let trainer = Scripted {
            accuracies: vec![
                0.3, 0.4, 0.5, 0.6, 0.61, 0.62, 0.63, 0.64, 0.65, 0.66, 0.67, 0.68,
            ],
        };
        let store = HistoryStore::new();
        let ev = eval_with(&trainer, &store, 12);
        ev.evaluate_fitness(&spec(), &dataset()).unwrap();
        assert_eq!(store.records()[0].epochs_run, 12);
        let consumed_before = ev.epochs_consumed();
        let (losses, accs) = ev.partial_train(&spec(), &dataset(), 10).unwrap();
        assert_eq!(ev.epochs_consumed(), consumed_before, "no retraining");
        assert_eq!(accs.len(), 10);
        assert_eq!(losses.len(), 10);
        assert_eq!(accs, store.records()[0].accuracies[..10].to_vec());
        assert_eq!(store.len(), 1, "prefix reuse appends nothing");
    }

    #[test]
    fn partial_train_trains_exactly_c_epochs_for_fresh_blocks() {
        let trainer = Scripted {
            accuracies: (1..=30).map(|e| e as f64 / 40.0).collect(),
        };
        let store = HistoryStore::new();
        let ev = eval_with(&trainer, &store, 60);
        let (losses, accs) = ev.partial_train(&spec(), &dataset(), 10).unwrap();
        assert_eq!(losses.len(), 10);
        assert_eq!(accs.len(), 10);
        assert_eq!(ev.epochs_consumed(), 10);
        let record = store.records().pop().unwrap();
        assert!(record.partial);
        assert_eq!(record.epochs_run, 10);
        assert_eq!(record.best_epoch, 10);
    }

    #[test]
    fn partial_then_full_agree_on_the_shared_prefix() {
        let trainer = Scripted {
            accuracies: (1..=40).map(|e| (e as f64 / 50.0).min(0.7)).collect(),
        };
        let store = HistoryStore::new();
        let ev = eval_with(&trainer, &store, 30);
        let (partial_losses, partial_accs) = ev.partial_train(&spec(), &dataset(), 10).unwrap();
        ev.evaluate_fitness(&spec(), &dataset()).unwrap();
        let full = store.lookup(&block_vector(&spec(), ev.encoding())).unwrap();
        assert!(!full.partial);
        assert_eq!(full.losses[..10], partial_losses[..]);
        assert_eq!(full.accuracies[..10], partial_accs[..]);
    }

    #[test]
    fn fitness_equals_the_maximum_recorded_accuracy_on_random_curves() {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        for _ in 0..200 {
            let len = rng.gen_range(8..40);
            let accs: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..1.0)).collect();
            let trainer = Scripted { accuracies: accs };
            let store = HistoryStore::new();
            let ev = eval_with(&trainer, &store, len);
            if let Ok(fitness) = ev.evaluate_fitness(&spec(), &dataset()) {
                let record = store.records().pop().unwrap();
                let max = record
                    .accuracies
                    .iter()
                    .cloned()
                    .fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(fitness, max);
                assert_eq!(record.best_accuracy, max);
            }
        }
    }

    // Independent restatement of the loop guard, fuzzed over random curves:
    // training continues at epoch e exactly when acc(e) >= best(e) or
    // e - best_epoch(e) < 5.
    #[test]
    fn early_stop_guard_matches_an_independent_simulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..10_000 {
            let len = rng.gen_range(1..50);
            let accs: Vec<f64> = (0..len)
                .map(|_| (rng.gen_range(0..100) as f64) / 100.0)
                .collect();
            let cap = rng.gen_range(1..60);

            // Oracle: walk the sequence applying the guard literally.
            let mut best = 0.0f64;
            let mut best_epoch = 0usize;
            let mut epoch = 0usize;
            let mut acc = 0.0f64;
            while (acc >= best || epoch - best_epoch < EARLY_STOP_PATIENCE)
                && epoch < cap
                && epoch < accs.len()
            {
                acc = accs[epoch];
                epoch += 1;
                if acc > best {
                    best = acc;
                    best_epoch = epoch;
                }
            }
            let expected = epoch;
            let stopped_by_guard_or_cap =
                !(acc >= best || epoch - best_epoch < EARLY_STOP_PATIENCE) || epoch >= cap;
            if !stopped_by_guard_or_cap {
                // The oracle ran out of script; the real loop would error.
                continue;
            }

            let trainer = Scripted { accuracies: accs };
            let store = HistoryStore::new();
            let ev = eval_with(&trainer, &store, cap);
            let result = ev.evaluate_fitness(&spec(), &dataset());
            match result {
                Ok(_) => {
                    let record = store.records().pop().unwrap();
                    assert_eq!(record.epochs_run, expected);
                    assert_eq!(record.best_accuracy, best);
                }
                Err(EvalError::TrainerFailed { .. }) => {
                    panic!("guard kept training past the oracle's stop point")
                }
                Err(other) => panic!("unexpected error {other:?}"),
            }
        }
    }

    #[test]
    fn training_seed_distinguishes_blocks_datasets_and_repeats() {
        let trainer = Scripted { accuracies: vec![] };
        let store = HistoryStore::new();
        let ev = eval_with(&trainer, &store, 10);
        let d1 = dataset();
        let mut d2 = dataset();
        d2.dataset_id = "other".into();
        let p1 = StackPlan::single(BlockSpec::new(vec![12, 13]));
        let p2 = StackPlan::single(BlockSpec::new(vec![13, 12]));
        let p3 = StackPlan::stacked(BlockSpec::new(vec![12, 13]), 2);
        let s = ev.train_seed(&p1, &d1);
        assert_eq!(s, ev.train_seed(&p1, &d1));
        assert_ne!(s, ev.train_seed(&p2, &d1));
        assert_ne!(s, ev.train_seed(&p1, &d2));
        assert_ne!(s, ev.train_seed(&p3, &d1));
    }
}
