//! Pairwise-comparison surrogate over the block training history.
//!
//! Rather than predicting a block's accuracy directly, the surrogate answers
//! a binary question: given two blocks, does the first reach a higher best
//! accuracy? Training data comes from ordering every pair of fully evaluated
//! history rows; each example concatenates the two rows' features (padded
//! block vector, first `c` losses, first `c` accuracies) and is labeled 1
//! exactly when the first row's best accuracy is strictly higher. The SVM is
//! refitted after every generation and only gates evaluations while its mean
//! cross-validation accuracy clears the activation threshold; anything else
//! falls back to full evaluation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DatasetDescriptor;
use crate::encoding::{block_vector, BlockSpec};
use crate::evaluator::{EvalError, Evaluator};
use crate::hashing::mix;
use crate::history::{HistoryStore, TrainingRecord};
use crate::svm::{self, SvmConfig, SvmError, SvmModel};
use crate::Scalar;

/// Which history fields become surrogate features, and how many leading
/// epochs of the curves are used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureSpec {
    /// Feature-cutting epoch: number of leading epochs taken from the curves.
    pub cutting_epoch: usize,
    pub include_params: bool,
    pub include_losses: bool,
    pub include_accuracies: bool,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self {
            cutting_epoch: 10,
            include_params: true,
            include_losses: true,
            include_accuracies: true,
        }
    }
}

impl FeatureSpec {
    pub fn validate(&self) -> Result<(), SurrogateError> {
        if self.cutting_epoch == 0 {
            return Err(SurrogateError::InvalidFeatureSpec(
                "cutting_epoch must be at least 1",
            ));
        }
        if !(self.include_params || self.include_losses || self.include_accuracies) {
            return Err(SurrogateError::InvalidFeatureSpec(
                "at least one feature group must be enabled",
            ));
        }
        Ok(())
    }

    /// Feature length contributed by one block.
    pub fn per_block_len(&self, max_layers: usize) -> usize {
        let mut len = 0;
        if self.include_params {
            len += max_layers;
        }
        if self.include_losses {
            len += self.cutting_epoch;
        }
        if self.include_accuracies {
            len += self.cutting_epoch;
        }
        len
    }
}

/// One surrogate training instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairExample<F> {
    pub features: Vec<F>,
    /// 1 when the first block outperforms the second; ties are 0.
    pub label: u8,
}

/// Everything the surrogate needs besides the history itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "F: crate::Scalar"))]
pub struct SurrogateConfig<F> {
    pub feature_spec: FeatureSpec,
    pub svm: SvmConfig<F>,
    /// Mean CV accuracy required to activate gating.
    pub threshold: F,
    /// Cap on the pair dataset size; larger sets are subsampled uniformly.
    pub max_pairs: usize,
    pub cv_folds: usize,
}

impl<F: Scalar> Default for SurrogateConfig<F> {
    fn default() -> Self {
        Self {
            feature_spec: FeatureSpec::default(),
            svm: SvmConfig::default(),
            threshold: F::from_f64_lossy(0.90),
            max_pairs: 1200,
            cv_folds: 10,
        }
    }
}

/// Fitted (or dormant) surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateState<F> {
    pub model: Option<SvmModel<F>>,
    pub cv_scores: Vec<F>,
    pub active: bool,
    pub threshold: F,
}

impl<F: Scalar> SurrogateState<F> {
    /// Dormant state: no model, gating off.
    pub fn inactive(threshold: F) -> Self {
        Self {
            model: None,
            cv_scores: Vec::new(),
            active: false,
            threshold,
        }
    }

    pub fn cv_mean(&self) -> Option<F> {
        if self.cv_scores.is_empty() {
            None
        } else {
            Some(svm::mean(&self.cv_scores))
        }
    }
}

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error("invalid feature spec: {0}")]
    InvalidFeatureSpec(&'static str),
    #[error("surrogate is inactive; check `active` before predicting")]
    Inactive,
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Svm(#[from] SvmError),
}

/// Features of one history row: padded block vector, then the first `c`
/// losses, then the first `c` accuracies, honoring the include flags. Curves
/// shorter than `c` epochs are padded with their last value.
pub fn record_features<F: Scalar>(record: &TrainingRecord<F>, fs: &FeatureSpec) -> Vec<F> {
    let mut out = Vec::with_capacity(fs.per_block_len(record.block_vector.len()));
    if fs.include_params {
        out.extend(record.block_vector.iter().map(|&g| F::from_u32(g).unwrap()));
    }
    if fs.include_losses {
        pad_prefix(&record.losses, fs.cutting_epoch, &mut out);
    }
    if fs.include_accuracies {
        pad_prefix(&record.accuracies, fs.cutting_epoch, &mut out);
    }
    out
}

fn pad_prefix<F: Scalar>(curve: &[F], len: usize, out: &mut Vec<F>) {
    debug_assert!(!curve.is_empty());
    for e in 0..len {
        out.push(if e < curve.len() {
            curve[e]
        } else {
            curve[curve.len() - 1]
        });
    }
}

/// Builds the ordered-pair dataset from the non-partial history rows, in
/// append order: one example per (i, j), i != j.
pub fn build_pair_dataset<F: Scalar>(
    store: &HistoryStore<F>,
    fs: &FeatureSpec,
) -> Vec<PairExample<F>> {
    let records = store.full_records();
    let features: Vec<Vec<F>> = records.iter().map(|r| record_features(r, fs)).collect();
    let mut pairs = Vec::with_capacity(
        records
            .len()
            .saturating_mul(records.len().saturating_sub(1)),
    );
    for (i, ri) in records.iter().enumerate() {
        for (j, rj) in records.iter().enumerate() {
            if i == j {
                continue;
            }
            let mut f = Vec::with_capacity(features[i].len() * 2);
            f.extend_from_slice(&features[i]);
            f.extend_from_slice(&features[j]);
            pairs.push(PairExample {
                features: f,
                label: u8::from(ri.best_accuracy > rj.best_accuracy),
            });
        }
    }
    pairs
}

/// Uniform subsample without replacement down to `max_pairs`, preserving the
/// original order; identity when the set already fits.
pub fn subsample_pairs<F: Scalar>(
    pairs: Vec<PairExample<F>>,
    max_pairs: usize,
    seed: u64,
) -> Vec<PairExample<F>> {
    if pairs.len() <= max_pairs || max_pairs == 0 {
        return pairs;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = rand::seq::index::sample(&mut rng, pairs.len(), max_pairs).into_vec();
    keep.sort_unstable();
    let mut keep_iter = keep.into_iter().peekable();
    pairs
        .into_iter()
        .enumerate()
        .filter_map(|(i, p)| {
            if keep_iter.peek() == Some(&i) {
                keep_iter.next();
                Some(p)
            } else {
                None
            }
        })
        .collect()
}

/// Rebuilds the surrogate from the current history: constructs the pair
/// dataset, cross-validates, fits on everything, and activates gating when
/// the mean CV accuracy clears the threshold. Any degenerate dataset (too
/// small, single class) leaves the surrogate inactive.
pub fn refresh<F: Scalar>(
    store: &HistoryStore<F>,
    cfg: &SurrogateConfig<F>,
    seed: u64,
) -> Result<SurrogateState<F>, SurrogateError> {
    cfg.feature_spec.validate()?;
    let pairs = subsample_pairs(
        build_pair_dataset(store, &cfg.feature_spec),
        cfg.max_pairs,
        mix(seed, 1),
    );
    if pairs.len() < 2 {
        return Ok(SurrogateState::inactive(cfg.threshold));
    }
    let x: Vec<Vec<F>> = pairs.iter().map(|p| p.features.clone()).collect();
    let y: Vec<u8> = pairs.iter().map(|p| p.label).collect();
    if y.iter().all(|&l| l == 0) || y.iter().all(|&l| l == 1) {
        return Ok(SurrogateState::inactive(cfg.threshold));
    }
    let cv_scores = svm::cross_validate(&x, &y, &cfg.svm, cfg.cv_folds, mix(seed, 2))?;
    let model = svm::fit(&x, &y, &cfg.svm)?;
    let active = svm::mean(&cv_scores) >= cfg.threshold;
    Ok(SurrogateState {
        model: Some(model),
        cv_scores,
        active,
        threshold: cfg.threshold,
    })
}

/// Predicts whether `first` outperforms `second` (1) or not (0).
///
/// Features come from the history when a block has any record, padded to the
/// cutting epoch; blocks never seen before are trained for exactly the
/// cutting epoch through the evaluator, which stores the partial record.
pub fn predict_better<F: Scalar>(
    state: &SurrogateState<F>,
    first: &BlockSpec,
    second: &BlockSpec,
    evaluator: &Evaluator<'_, F>,
    dataset: &DatasetDescriptor<F>,
    fs: &FeatureSpec,
) -> Result<u8, SurrogateError> {
    let model = match (&state.model, state.active) {
        (Some(m), true) => m,
        _ => return Err(SurrogateError::Inactive),
    };
    let mut features = block_features(first, evaluator, dataset, fs)?;
    features.extend(block_features(second, evaluator, dataset, fs)?);
    Ok(svm::predict(model, &features)?)
}

fn block_features<F: Scalar>(
    spec: &BlockSpec,
    evaluator: &Evaluator<'_, F>,
    dataset: &DatasetDescriptor<F>,
    fs: &FeatureSpec,
) -> Result<Vec<F>, SurrogateError> {
    let key = block_vector(spec, evaluator.encoding());
    if let Some(record) = evaluator.store().lookup(&key) {
        return Ok(record_features(&record, fs));
    }
    let (losses, accuracies) = evaluator.partial_train(spec, dataset, fs.cutting_epoch)?;
    let mut out = Vec::with_capacity(fs.per_block_len(key.len()));
    if fs.include_params {
        out.extend(key.iter().map(|&g| F::from_u32(g).unwrap()));
    }
    if fs.include_losses {
        pad_prefix(&losses, fs.cutting_epoch, &mut out);
    }
    if fs.include_accuracies {
        pad_prefix(&accuracies, fs.cutting_epoch, &mut out);
    }
    Ok(out)
}

/// Pair dataset as CSV: feature columns then the label.
pub fn pairs_to_csv<F: Scalar>(pairs: &[PairExample<F>]) -> String {
    let mut out = String::new();
    let width = pairs.first().map_or(0, |p| p.features.len());
    for i in 0..width {
        out.push_str(&format!("feature_{i},"));
    }
    out.push_str("label\n");
    for p in pairs {
        for v in &p.features {
            out.push_str(&format!("{v},"));
        }
        out.push_str(&format!("{}\n", p.label));
    }
    out
}
