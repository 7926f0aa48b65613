//! Run diagnostics: position-convergence traces through PCA, surrogate
//! feature ablation, the single-feature baseline, and growth-rate statistics.
//!
//! Everything here reads frozen run artifacts (history store, swarm
//! checkpoints, run log) and produces small tables meant for external
//! plotting. PCA runs on a hand-rolled cyclic Jacobi eigendecomposition of
//! the covariance matrix; the feature spaces involved are at most a few
//! dozen dimensions wide, so nothing heavier is warranted.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::EncodingConfig;
use crate::hashing::mix;
use crate::history::HistoryStore;
use crate::pso::Swarm;
use crate::surrogate::{build_pair_dataset, record_features, subsample_pairs, FeatureSpec};
use crate::svm::{self, SvmConfig, SvmError};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("not enough data: {0}")]
    NotEnoughData(&'static str),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Svm(#[from] SvmError),
}

/// Principal components of a mean-centered data matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel<F> {
    /// Orthonormal component rows, highest variance first.
    pub components: Vec<Vec<F>>,
    /// Eigenvalues matching the components, non-increasing.
    pub explained_variance: Vec<F>,
    pub feature_means: Vec<F>,
}

impl<F: Scalar> PcaModel<F> {
    /// Projects rows onto the components.
    pub fn transform(&self, x: &[Vec<F>]) -> Vec<Vec<F>> {
        x.iter()
            .map(|row| {
                self.components
                    .iter()
                    .map(|comp| {
                        let mut dot = F::zero();
                        for ((&v, &m), &c) in row.iter().zip(&self.feature_means).zip(comp) {
                            dot = dot + (v - m) * c;
                        }
                        dot
                    })
                    .collect()
            })
            .collect()
    }
}

/// Fits a k-component PCA by eigendecomposition of the sample covariance and
/// returns the model plus the projected input rows.
pub fn pca_fit_transform<F: Scalar>(
    x: &[Vec<F>],
    k: usize,
) -> Result<(PcaModel<F>, Vec<Vec<F>>), AnalysisError> {
    let rows = x.len();
    if rows < 2 {
        return Err(AnalysisError::NotEnoughData("PCA needs at least 2 rows"));
    }
    let dims = x[0].len();
    if x.iter().any(|r| r.len() != dims) {
        return Err(AnalysisError::InvalidInput("ragged matrix".into()));
    }
    if k == 0 || k > dims.min(rows) {
        return Err(AnalysisError::InvalidInput(format!(
            "k = {k} outside 1..=min(rows, cols) = {}",
            dims.min(rows)
        )));
    }
    let mut means = vec![F::zero(); dims];
    for row in x {
        for (m, &v) in means.iter_mut().zip(row) {
            *m = *m + v;
        }
    }
    let n = F::from_usize(rows).unwrap();
    for m in &mut means {
        *m = *m / n;
    }
    // Sample covariance.
    let denom = F::from_usize(rows - 1).unwrap();
    let mut cov = vec![vec![F::zero(); dims]; dims];
    for row in x {
        let centered: Vec<F> = row.iter().zip(&means).map(|(&v, &m)| v - m).collect();
        for i in 0..dims {
            for j in i..dims {
                cov[i][j] = cov[i][j] + centered[i] * centered[j];
            }
        }
    }
    for i in 0..dims {
        for j in i..dims {
            cov[i][j] = cov[i][j] / denom;
            cov[j][i] = cov[i][j];
        }
    }
    let (eigenvalues, eigenvectors) = jacobi_eigen(cov);
    let mut order: Vec<usize> = (0..dims).collect();
    order.sort_by(|&a, &b| eigenvalues[b].partial_cmp(&eigenvalues[a]).unwrap());
    let mut components = Vec::with_capacity(k);
    let mut explained = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let mut comp: Vec<F> = (0..dims).map(|r| eigenvectors[r][idx]).collect();
        fix_sign(&mut comp);
        components.push(comp);
        explained.push(eigenvalues[idx]);
    }
    let model = PcaModel {
        components,
        explained_variance: explained,
        feature_means: means,
    };
    let scores = model.transform(x);
    Ok((model, scores))
}

/// Largest-magnitude entry made positive; first index wins ties.
fn fix_sign<F: Scalar>(comp: &mut [F]) {
    let mut lead = 0usize;
    for (i, v) in comp.iter().enumerate() {
        if v.abs() > comp[lead].abs() {
            lead = i;
        }
    }
    if comp[lead] < F::zero() {
        for v in comp.iter_mut() {
            *v = -*v;
        }
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// (eigenvalues, eigenvector columns).
fn jacobi_eigen<F: Scalar>(mut a: Vec<Vec<F>>) -> (Vec<F>, Vec<Vec<F>>) {
    let n = a.len();
    let mut v = vec![vec![F::zero(); n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = F::one();
    }
    let eps = F::from_f64_lossy(1e-14);
    for _sweep in 0..100 {
        let mut off = F::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off = off + a[p][q] * a[p][q];
            }
        }
        if off.sqrt() <= eps {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() <= eps {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (F::from_f64_lossy(2.0) * a[p][q]);
                let t = {
                    let sign = if theta >= F::zero() {
                        F::one()
                    } else {
                        -F::one()
                    };
                    sign / (theta.abs() + (theta * theta + F::one()).sqrt())
                };
                let c = F::one() / (t * t + F::one()).sqrt();
                let s = t * c;
                for r in 0..n {
                    let arp = a[r][p];
                    let arq = a[r][q];
                    a[r][p] = c * arp - s * arq;
                    a[r][q] = s * arp + c * arq;
                }
                for col in 0..n {
                    let apc = a[p][col];
                    let aqc = a[q][col];
                    a[p][col] = c * apc - s * aqc;
                    a[q][col] = s * apc + c * aqc;
                }
                for r in 0..n {
                    let vrp = v[r][p];
                    let vrq = v[r][q];
                    v[r][p] = c * vrp - s * vrq;
                    v[r][q] = s * vrp + c * vrq;
                }
            }
        }
    }
    let values = (0..n).map(|i| a[i][i]).collect();
    (values, v)
}

/// One projected particle position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow<F> {
    pub generation: usize,
    pub particle: usize,
    pub pc1: F,
    pub pc2: F,
}

/// Projects every checkpointed particle position onto the two leading
/// components of the pooled position cloud.
pub fn convergence_trace<F: Scalar>(
    checkpoints: &[Swarm<F>],
) -> Result<Vec<TraceRow<F>>, AnalysisError> {
    if checkpoints.len() < 2 {
        return Err(AnalysisError::NotEnoughData(
            "convergence trace needs at least 2 checkpoints",
        ));
    }
    let mut pooled = Vec::new();
    for swarm in checkpoints {
        for p in &swarm.particles {
            pooled.push(p.position.0.clone());
        }
    }
    let dims = pooled[0].len();
    let k = 2.min(dims);
    let (model, _) = pca_fit_transform(&pooled, k)?;
    let mut out = Vec::with_capacity(pooled.len());
    for swarm in checkpoints {
        for p in &swarm.particles {
            let scores = model.transform(std::slice::from_ref(&p.position.0));
            let row = &scores[0];
            out.push(TraceRow {
                generation: swarm.generation,
                particle: p.id,
                pc1: row[0],
                pc2: if k > 1 { row[1] } else { F::zero() },
            });
        }
    }
    Ok(out)
}

pub fn trace_to_csv<F: Scalar>(rows: &[TraceRow<F>]) -> String {
    let mut out = String::from("generation,particle,pc1,pc2\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.generation, r.particle, r.pc1, r.pc2
        ));
    }
    out
}

/// Mean CV accuracy of one feature combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow<F> {
    pub combination: String,
    pub mean_cv_accuracy: F,
}

/// The five standard feature combinations, in reporting order.
fn ablation_specs(base: &FeatureSpec) -> Vec<(String, FeatureSpec)> {
    let combo = |params: bool, losses: bool, accs: bool| FeatureSpec {
        cutting_epoch: base.cutting_epoch,
        include_params: params,
        include_losses: losses,
        include_accuracies: accs,
    };
    vec![
        ("losses".into(), combo(false, true, false)),
        ("accuracies".into(), combo(false, false, true)),
        ("block_parameters".into(), combo(true, false, false)),
        ("losses+accuracies".into(), combo(false, true, true)),
        (
            "losses+accuracies+block_parameters".into(),
            combo(true, true, true),
        ),
    ]
}

/// Cross-validates the surrogate under each feature combination.
pub fn feature_ablation<F: Scalar>(
    store: &HistoryStore<F>,
    base: &FeatureSpec,
    svm_cfg: &SvmConfig<F>,
    folds: usize,
    max_pairs: usize,
    seed: u64,
) -> Result<Vec<AblationRow<F>>, AnalysisError> {
    if store.full_records().len() < 2 {
        return Err(AnalysisError::NotEnoughData(
            "feature ablation needs at least 2 full records",
        ));
    }
    let mut rows = Vec::with_capacity(5);
    for (name, fs) in ablation_specs(base) {
        let pairs = subsample_pairs(build_pair_dataset(store, &fs), max_pairs, mix(seed, 1));
        let x: Vec<Vec<F>> = pairs.iter().map(|p| p.features.clone()).collect();
        let y: Vec<u8> = pairs.iter().map(|p| p.label).collect();
        let single = y.iter().all(|&l| l == 0) || y.iter().all(|&l| l == 1);
        let mean_cv = if single {
            F::zero()
        } else {
            svm::mean(&svm::cross_validate(&x, &y, svm_cfg, folds, mix(seed, 2))?)
        };
        rows.push(AblationRow {
            combination: name,
            mean_cv_accuracy: mean_cv,
        });
    }
    Ok(rows)
}

pub fn ablation_to_csv<F: Scalar>(rows: &[AblationRow<F>]) -> String {
    let mut out = String::from("features,mean_cv_accuracy\n");
    for r in rows {
        out.push_str(&format!("{},{}\n", r.combination, r.mean_cv_accuracy));
    }
    out
}

/// Group-aware cross-validation: whole history rows are assigned to folds,
/// the test fold only scores pairs built within it, and training pairs come
/// only from the remaining rows. This closes the channel where the two
/// orderings of one pair land on opposite sides of a naive split.
pub fn grouped_cv<F: Scalar>(
    store: &HistoryStore<F>,
    fs: &FeatureSpec,
    svm_cfg: &SvmConfig<F>,
    folds: usize,
    max_pairs: usize,
    seed: u64,
) -> Result<Vec<F>, AnalysisError> {
    let records = store.full_records();
    if records.len() < folds.max(4) {
        return Err(AnalysisError::NotEnoughData(
            "grouped CV needs at least one record per fold",
        ));
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let fold_of: Vec<usize> = {
        let mut assignment = vec![0usize; records.len()];
        for (k, &idx) in order.iter().enumerate() {
            assignment[idx] = k % folds;
        }
        assignment
    };
    let features: Vec<Vec<F>> = records.iter().map(|r| record_features(r, fs)).collect();
    let pair = |i: usize, j: usize| -> (Vec<F>, u8) {
        let mut f = features[i].clone();
        f.extend_from_slice(&features[j]);
        (
            f,
            u8::from(records[i].best_accuracy > records[j].best_accuracy),
        )
    };

    let mut scores = Vec::with_capacity(folds);
    for fold in 0..folds {
        let mut train_x = Vec::new();
        let mut train_y = Vec::new();
        let mut test = Vec::new();
        for i in 0..records.len() {
            for j in 0..records.len() {
                if i == j {
                    continue;
                }
                if fold_of[i] == fold && fold_of[j] == fold {
                    test.push(pair(i, j));
                } else if fold_of[i] != fold && fold_of[j] != fold {
                    let (f, l) = pair(i, j);
                    train_x.push(f);
                    train_y.push(l);
                }
            }
        }
        if test.is_empty() {
            continue;
        }
        // Cap training pairs the same way the live surrogate does.
        let capped = subsample_pairs(
            train_x
                .into_iter()
                .zip(train_y)
                .map(|(features, label)| crate::surrogate::PairExample { features, label })
                .collect(),
            max_pairs,
            mix(seed, fold as u64 + 10),
        );
        let train_x: Vec<Vec<F>> = capped.iter().map(|p| p.features.clone()).collect();
        let train_y: Vec<u8> = capped.iter().map(|p| p.label).collect();
        let single = train_y.iter().all(|&l| l == 0) || train_y.iter().all(|&l| l == 1);
        let correct = if single || train_y.len() < 2 {
            let majority = if train_y.iter().filter(|&&l| l == 1).count() * 2 > train_y.len() {
                1
            } else {
                0
            };
            test.iter().filter(|(_, l)| *l == majority).count()
        } else {
            let model = svm::fit(&train_x, &train_y, svm_cfg)?;
            test.iter()
                .filter(|(f, l)| svm::predict(&model, f).map(|p| p == *l).unwrap_or(false))
                .count()
        };
        scores.push(F::from_usize(correct).unwrap() / F::from_usize(test.len()).unwrap());
    }
    if scores.is_empty() {
        return Err(AnalysisError::NotEnoughData(
            "grouped CV produced no scorable folds",
        ));
    }
    Ok(scores)
}

/// Agreement between ordering by the accuracy at one early epoch and ordering
/// by best accuracy, over all ordered pairs of full records with at least
/// that many epochs.
pub fn tenth_epoch_baseline<F: Scalar>(store: &HistoryStore<F>) -> Result<F, AnalysisError> {
    epoch_indicator_baseline(store, 10)
}

pub fn epoch_indicator_baseline<F: Scalar>(
    store: &HistoryStore<F>,
    epoch: usize,
) -> Result<F, AnalysisError> {
    assert!(epoch >= 1);
    let records: Vec<_> = store
        .full_records()
        .into_iter()
        .filter(|r| r.epochs_run >= epoch)
        .collect();
    if records.len() < 2 {
        return Err(AnalysisError::NotEnoughData(
            "baseline needs at least 2 records reaching the probe epoch",
        ));
    }
    let mut agree = 0usize;
    let mut total = 0usize;
    for (i, ri) in records.iter().enumerate() {
        for (j, rj) in records.iter().enumerate() {
            if i == j {
                continue;
            }
            let predicted = u8::from(ri.accuracies[epoch - 1] > rj.accuracies[epoch - 1]);
            let truth = u8::from(ri.best_accuracy > rj.best_accuracy);
            agree += usize::from(predicted == truth);
            total += 1;
        }
    }
    Ok(F::from_usize(agree).unwrap() / F::from_usize(total).unwrap())
}

/// Distribution of the growth rates chosen for one layer slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStats<F> {
    /// 1-based layer slot in the padded block vector.
    pub layer: usize,
    /// Records in which this slot was enabled.
    pub count: usize,
    pub median: F,
    pub q1: F,
    pub q3: F,
    /// 20 equal-width bins over the growth range.
    pub histogram: Vec<usize>,
}

pub const GROWTH_HISTOGRAM_BINS: usize = 20;

/// Per-layer growth-rate histograms and quartiles over all full records;
/// disabled slots do not contribute to their layer's sample.
pub fn growth_rate_stats<F: Scalar>(
    store: &HistoryStore<F>,
    enc: &EncodingConfig,
) -> Result<Vec<LayerStats<F>>, AnalysisError> {
    let records = store.full_records();
    if records.is_empty() {
        return Err(AnalysisError::NotEnoughData("no full records"));
    }
    let sv = enc.special_value();
    let lo = enc.growth_lower as f64;
    let hi = enc.growth_upper as f64;
    let width = (hi - lo) / GROWTH_HISTOGRAM_BINS as f64;
    let mut out = Vec::with_capacity(enc.max_layers);
    for layer in 0..enc.max_layers {
        let mut sample: Vec<f64> = records
            .iter()
            .filter_map(|r| {
                let g = *r.block_vector.get(layer)?;
                (g != sv).then_some(f64::from(g))
            })
            .collect();
        sample.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut histogram = vec![0usize; GROWTH_HISTOGRAM_BINS];
        for &g in &sample {
            let bin = (((g - lo) / width) as usize).min(GROWTH_HISTOGRAM_BINS - 1);
            histogram[bin] += 1;
        }
        let quantile = |p: f64| -> F {
            if sample.is_empty() {
                return F::zero();
            }
            let pos = p * (sample.len() - 1) as f64;
            let base = pos.floor() as usize;
            let frac = pos - base as f64;
            let v = if base + 1 < sample.len() {
                sample[base] * (1.0 - frac) + sample[base + 1] * frac
            } else {
                sample[base]
            };
            F::from_f64_lossy(v)
        };
        out.push(LayerStats {
            layer: layer + 1,
            count: sample.len(),
            median: quantile(0.5),
            q1: quantile(0.25),
            q3: quantile(0.75),
            histogram,
        });
    }
    Ok(out)
}

pub fn growth_stats_to_csv<F: Scalar>(rows: &[LayerStats<F>]) -> String {
    let mut out = String::from("layer,count,q1,median,q3");
    for b in 0..GROWTH_HISTOGRAM_BINS {
        out.push_str(&format!(",bin_{b}"));
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}",
            r.layer, r.count, r.q1, r.median, r.q3
        ));
        for c in &r.histogram {
            out.push_str(&format!(",{c}"));
        }
        out.push('\n');
    }
    out
}
