//! Soft-margin kernel SVM binary classifier, solved by sequential pairwise
//! optimization of the dual.
//!
//! The solver repeatedly picks a pair of dual variables violating the KKT
//! conditions beyond the configured tolerance, solves the two-variable
//! subproblem analytically, and maintains an error cache across updates.
//! Pair selection is fully deterministic (first violator in index order,
//! partner maximizing the error gap), so a fit is reproducible bit for bit.
//! Features are standardized inside fit and predict by default, since the
//! surrogate mixes losses, accuracies and growth rates whose scales differ
//! wildly. Stratified shuffled k-fold cross-validation lives here too.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Rbf,
    Linear,
}

/// RBF bandwidth: a fixed value or `scale`, resolved at fit time to
/// `1 / (num_features * feature_variance)` of the standardized data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gamma<F> {
    Scale,
    Fixed(F),
}

impl<F: Serialize> Serialize for Gamma<F> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Gamma::Scale => s.serialize_str("scale"),
            Gamma::Fixed(v) => v.serialize(s),
        }
    }
}

impl<'de, F: Deserialize<'de>> Deserialize<'de> for Gamma<F> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw<F> {
            Name(String),
            Value(F),
        }
        match Raw::deserialize(d)? {
            Raw::Name(s) if s == "scale" => Ok(Gamma::Scale),
            Raw::Name(s) => Err(serde::de::Error::custom(format!(
                "unknown gamma setting {s:?}, expected \"scale\" or a number"
            ))),
            Raw::Value(v) => Ok(Gamma::Fixed(v)),
        }
    }
}

/// SVM hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "F: crate::Scalar"))]
pub struct SvmConfig<F> {
    pub c: F,
    pub kernel: KernelKind,
    pub gamma: Gamma<F>,
    /// KKT violation tolerance that ends optimization.
    pub kkt_tolerance: F,
    /// Hard cap on optimization passes over the data.
    pub max_passes: usize,
    /// Standardize features inside fit/predict.
    pub standardize: bool,
}

impl<F: Scalar> Default for SvmConfig<F> {
    fn default() -> Self {
        Self {
            c: F::one(),
            kernel: KernelKind::Rbf,
            gamma: Gamma::Scale,
            kkt_tolerance: F::from_f64_lossy(1e-3),
            max_passes: 60,
            standardize: true,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SvmError {
    #[error("need at least 2 training examples, got {0}")]
    TooFewExamples(usize),
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("feature length {got} does not match the trained length {expected}")]
    FeatureLengthMismatch { expected: usize, got: usize },
}

/// Fitted classifier. Support vectors are stored in standardized coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel<F> {
    pub kernel: KernelKind,
    pub gamma: F,
    pub c: F,
    pub support_vectors: Vec<Vec<F>>,
    /// `alpha_i * y_i` per support vector, with y in {-1, +1}.
    pub dual_coefficients: Vec<F>,
    /// `alpha_i` per support vector.
    pub alphas: Vec<F>,
    pub bias: F,
    pub feature_means: Vec<F>,
    pub feature_stddevs: Vec<F>,
    pub training_size: usize,
}

impl<F: Scalar> SvmModel<F> {
    pub fn num_features(&self) -> usize {
        self.feature_means.len()
    }

    /// Decision value for one example; positive means class 1.
    pub fn decision_value(&self, x: &[F]) -> Result<F, SvmError> {
        if x.len() != self.num_features() {
            return Err(SvmError::FeatureLengthMismatch {
                expected: self.num_features(),
                got: x.len(),
            });
        }
        let xs = standardize_one(x, &self.feature_means, &self.feature_stddevs);
        let mut f = self.bias;
        for (sv, &coef) in self.support_vectors.iter().zip(&self.dual_coefficients) {
            f = f + coef * kernel(self.kernel, self.gamma, sv, &xs);
        }
        Ok(f)
    }

    /// Dual objective of the stored solution; variables at zero contribute
    /// nothing, so the support vectors determine it completely.
    pub fn dual_objective(&self) -> F {
        let mut obj = F::zero();
        for &a in &self.alphas {
            obj = obj + a;
        }
        let mut quad = F::zero();
        for (i, svi) in self.support_vectors.iter().enumerate() {
            for (j, svj) in self.support_vectors.iter().enumerate() {
                quad = quad
                    + self.dual_coefficients[i]
                        * self.dual_coefficients[j]
                        * kernel(self.kernel, self.gamma, svi, svj);
            }
        }
        obj - quad / F::from_f64_lossy(2.0)
    }
}

/// Predicts the class of one example.
pub fn predict<F: Scalar>(model: &SvmModel<F>, x: &[F]) -> Result<u8, SvmError> {
    Ok(if model.decision_value(x)? > F::zero() {
        1
    } else {
        0
    })
}

/// Fits the classifier on rows `x` with labels in {0, 1}.
pub fn fit<F: Scalar>(x: &[Vec<F>], y: &[u8], cfg: &SvmConfig<F>) -> Result<SvmModel<F>, SvmError> {
    let n = x.len();
    if n < 2 {
        return Err(SvmError::TooFewExamples(n));
    }
    if y.len() != n {
        return Err(SvmError::InvalidInput(format!(
            "{} rows but {} labels",
            n,
            y.len()
        )));
    }
    let dims = x[0].len();
    if dims == 0 {
        return Err(SvmError::InvalidInput("examples have no features".into()));
    }
    for row in x {
        if row.len() != dims {
            return Err(SvmError::InvalidInput("ragged feature matrix".into()));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(SvmError::InvalidInput("non-finite feature value".into()));
        }
    }
    if y.iter().any(|&l| l > 1) {
        return Err(SvmError::InvalidInput("labels must be 0 or 1".into()));
    }
    if y.iter().all(|&l| l == 0) || y.iter().all(|&l| l == 1) {
        return Err(SvmError::SingleClass);
    }

    let (xs, means, stds) = if cfg.standardize {
        standardize(x)
    } else {
        (x.to_vec(), vec![F::zero(); dims], vec![F::one(); dims])
    };
    let gamma = resolve_gamma(cfg, &xs);
    let targets: Vec<F> = y
        .iter()
        .map(|&l| if l == 1 { F::one() } else { -F::one() })
        .collect();

    let mut solver = Solver {
        x: &xs,
        y: &targets,
        kernel: cfg.kernel,
        gamma,
        c: cfg.c,
        tol: cfg.kkt_tolerance,
        alphas: vec![F::zero(); n],
        errors: targets.iter().map(|&t| -t).collect(),
        bias: F::zero(),
        diag: (0..n)
            .map(|i| kernel(cfg.kernel, gamma, &xs[i], &xs[i]))
            .collect(),
    };
    solver.run(cfg.max_passes);

    let mut support_vectors = Vec::new();
    let mut dual_coefficients = Vec::new();
    let mut alphas = Vec::new();
    for i in 0..n {
        if solver.alphas[i] > F::zero() {
            support_vectors.push(xs[i].clone());
            dual_coefficients.push(solver.alphas[i] * targets[i]);
            alphas.push(solver.alphas[i]);
        }
    }
    Ok(SvmModel {
        kernel: cfg.kernel,
        gamma,
        c: cfg.c,
        support_vectors,
        dual_coefficients,
        alphas,
        bias: solver.bias,
        feature_means: means,
        feature_stddevs: stds,
        training_size: n,
    })
}

/// Stratified shuffled k-fold cross-validation; returns per-fold held-out
/// accuracy. Folds whose training split collapses to one class fall back to
/// majority voting. When there are fewer examples than folds, the fold count
/// drops to the example count.
pub fn cross_validate<F: Scalar>(
    x: &[Vec<F>],
    y: &[u8],
    cfg: &SvmConfig<F>,
    folds: usize,
    seed: u64,
) -> Result<Vec<F>, SvmError> {
    let n = x.len();
    if n < 2 {
        return Err(SvmError::TooFewExamples(n));
    }
    if folds < 2 {
        return Err(SvmError::InvalidInput("need at least 2 folds".into()));
    }
    let folds = folds.min(n);
    let assignment = stratified_folds(y, folds, seed);

    let accuracies: Vec<Result<F, SvmError>> = (0..folds)
        .into_par_iter()
        .map(|fold| {
            let mut train_x = Vec::new();
            let mut train_y = Vec::new();
            let mut test_idx = Vec::new();
            for i in 0..n {
                if assignment[i] == fold {
                    test_idx.push(i);
                } else {
                    train_x.push(x[i].clone());
                    train_y.push(y[i]);
                }
            }
            if test_idx.is_empty() {
                return Ok(F::one());
            }
            let single_class = train_y.iter().all(|&l| l == 0) || train_y.iter().all(|&l| l == 1);
            let correct: usize = if single_class || train_y.len() < 2 {
                let majority = majority_label(&train_y);
                test_idx.iter().filter(|&&i| y[i] == majority).count()
            } else {
                let model = fit(&train_x, &train_y, cfg)?;
                let mut c = 0;
                for &i in &test_idx {
                    if predict(&model, &x[i])? == y[i] {
                        c += 1;
                    }
                }
                c
            };
            Ok(F::from_usize(correct).unwrap() / F::from_usize(test_idx.len()).unwrap())
        })
        .collect();
    accuracies.into_iter().collect()
}

/// Mean of per-fold accuracies.
pub fn mean<F: Scalar>(scores: &[F]) -> F {
    if scores.is_empty() {
        return F::zero();
    }
    let mut sum = F::zero();
    for &s in scores {
        sum = sum + s;
    }
    sum / F::from_usize(scores.len()).unwrap()
}

fn majority_label(y: &[u8]) -> u8 {
    let ones = y.iter().filter(|&&l| l == 1).count();
    u8::from(ones * 2 > y.len())
}

/// Shuffles each class separately and deals examples round-robin, keeping
/// the label balance of every fold close to the global one.
fn stratified_folds(y: &[u8], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; y.len()];
    for class in [0u8, 1u8] {
        let mut members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        members.shuffle(&mut rng);
        for (k, &i) in members.iter().enumerate() {
            assignment[i] = k % folds;
        }
    }
    assignment
}

fn standardize<F: Scalar>(x: &[Vec<F>]) -> (Vec<Vec<F>>, Vec<F>, Vec<F>) {
    let n = F::from_usize(x.len()).unwrap();
    let dims = x[0].len();
    let mut means = vec![F::zero(); dims];
    for row in x {
        for (m, &v) in means.iter_mut().zip(row) {
            *m = *m + v;
        }
    }
    for m in &mut means {
        *m = *m / n;
    }
    let mut stds = vec![F::zero(); dims];
    for row in x {
        for ((s, &v), &m) in stds.iter_mut().zip(row).zip(&means) {
            let d = v - m;
            *s = *s + d * d;
        }
    }
    for s in &mut stds {
        *s = (*s / n).sqrt();
        if *s <= F::zero() {
            *s = F::one();
        }
    }
    let xs = x
        .iter()
        .map(|row| standardize_one(row, &means, &stds))
        .collect();
    (xs, means, stds)
}

fn standardize_one<F: Scalar>(row: &[F], means: &[F], stds: &[F]) -> Vec<F> {
    row.iter()
        .zip(means)
        .zip(stds)
        .map(|((&v, &m), &s)| (v - m) / s)
        .collect()
}

fn resolve_gamma<F: Scalar>(cfg: &SvmConfig<F>, xs: &[Vec<F>]) -> F {
    match cfg.gamma {
        Gamma::Fixed(g) => g,
        Gamma::Scale => {
            let dims = xs[0].len();
            let count = F::from_usize(xs.len() * dims).unwrap();
            let mut mean = F::zero();
            for row in xs {
                for &v in row {
                    mean = mean + v;
                }
            }
            mean = mean / count;
            let mut var = F::zero();
            for row in xs {
                for &v in row {
                    let d = v - mean;
                    var = var + d * d;
                }
            }
            var = var / count;
            if var <= F::zero() {
                var = F::one();
            }
            F::one() / (F::from_usize(dims).unwrap() * var)
        }
    }
}

fn kernel<F: Scalar>(kind: KernelKind, gamma: F, a: &[F], b: &[F]) -> F {
    match kind {
        KernelKind::Linear => {
            let mut dot = F::zero();
            for (&u, &v) in a.iter().zip(b) {
                dot = dot + u * v;
            }
            dot
        }
        KernelKind::Rbf => {
            let mut dist = F::zero();
            for (&u, &v) in a.iter().zip(b) {
                let d = u - v;
                dist = dist + d * d;
            }
            (-gamma * dist).exp()
        }
    }
}

/// Working state of the pairwise dual solver.
struct Solver<'a, F> {
    x: &'a [Vec<F>],
    y: &'a [F],
    kernel: KernelKind,
    gamma: F,
    c: F,
    tol: F,
    alphas: Vec<F>,
    /// Error cache: decision(x_i) - y_i for every training point.
    errors: Vec<F>,
    bias: F,
    diag: Vec<F>,
}

impl<F: Scalar> Solver<'_, F> {
    fn run(&mut self, max_passes: usize) {
        let n = self.x.len();
        let mut examine_all = true;
        let mut passes = 0usize;
        loop {
            let mut changed = 0usize;
            for i in 0..n {
                if examine_all || self.is_free(i) {
                    changed += usize::from(self.examine(i));
                }
            }
            passes += 1;
            if passes >= max_passes {
                break;
            }
            if examine_all {
                if changed == 0 {
                    break;
                }
                examine_all = false;
            } else if changed == 0 {
                examine_all = true;
            }
        }
    }

    fn is_free(&self, i: usize) -> bool {
        self.alphas[i] > F::zero() && self.alphas[i] < self.c
    }

    /// Checks the KKT condition of point `i` and tries to improve the pair
    /// (i, j) for increasingly exhaustive choices of j.
    fn examine(&mut self, i: usize) -> bool {
        let r = self.errors[i] * self.y[i];
        let violated = (r < -self.tol && self.alphas[i] < self.c)
            || (r > self.tol && self.alphas[i] > F::zero());
        if !violated {
            return false;
        }
        // Partner maximizing the error gap among free points.
        let mut best_j = None;
        let mut best_gap = F::zero();
        for j in 0..self.x.len() {
            if j != i && self.is_free(j) {
                let gap = (self.errors[i] - self.errors[j]).abs();
                if gap > best_gap {
                    best_gap = gap;
                    best_j = Some(j);
                }
            }
        }
        if let Some(j) = best_j {
            if self.take_step(i, j) {
                return true;
            }
        }
        for j in 0..self.x.len() {
            if j != i && self.is_free(j) && self.take_step(i, j) {
                return true;
            }
        }
        for j in 0..self.x.len() {
            if j != i && self.take_step(i, j) {
                return true;
            }
        }
        false
    }

    fn take_step(&mut self, i: usize, j: usize) -> bool {
        debug_assert_ne!(i, j);
        let (yi, yj) = (self.y[i], self.y[j]);
        let (ai_old, aj_old) = (self.alphas[i], self.alphas[j]);
        let (ei, ej) = (self.errors[i], self.errors[j]);
        let s = yi * yj;
        let (lo, hi) = if yi != yj {
            let d = aj_old - ai_old;
            (d.max(F::zero()), (self.c + d).min(self.c))
        } else {
            let sum = ai_old + aj_old;
            ((sum - self.c).max(F::zero()), sum.min(self.c))
        };
        if lo >= hi {
            return false;
        }
        let kii = self.diag[i];
        let kjj = self.diag[j];
        let kij = kernel(self.kernel, self.gamma, &self.x[i], &self.x[j]);
        let eta = kii + kjj - kij - kij;
        let mut aj_new;
        if eta > F::zero() {
            aj_new = aj_old + yj * (ei - ej) / eta;
            aj_new = aj_new.max(lo).min(hi);
        } else {
            // Flat or concave direction: evaluate the objective at both ends.
            let half = F::from_f64_lossy(0.5);
            let f_lo = yj * (ei - ej) * lo - eta * lo * lo * half;
            let f_hi = yj * (ei - ej) * hi - eta * hi * hi * half;
            let eps = F::from_f64_lossy(1e-12);
            aj_new = if f_lo > f_hi + eps {
                lo
            } else if f_hi > f_lo + eps {
                hi
            } else {
                return false;
            };
        }
        let eps = F::from_f64_lossy(1e-12);
        if (aj_new - aj_old).abs() <= eps * (aj_new + aj_old + eps) {
            return false;
        }
        let ai_new = ai_old + s * (aj_old - aj_new);
        let di = yi * (ai_new - ai_old);
        let dj = yj * (aj_new - aj_old);

        let b_old = self.bias;
        let b1 = b_old - ei - di * kii - dj * kij;
        let b2 = b_old - ej - di * kij - dj * kjj;
        let new_bias = if ai_new > F::zero() && ai_new < self.c {
            b1
        } else if aj_new > F::zero() && aj_new < self.c {
            b2
        } else {
            (b1 + b2) / F::from_f64_lossy(2.0)
        };
        let db = new_bias - b_old;

        self.alphas[i] = ai_new;
        self.alphas[j] = aj_new;
        self.bias = new_bias;

        let (kind, gamma) = (self.kernel, self.gamma);
        let xi = &self.x[i];
        let xj = &self.x[j];
        let x = self.x;
        if x.len() >= 1024 {
            self.errors.par_iter_mut().enumerate().for_each(|(k, e)| {
                *e = *e
                    + di * kernel(kind, gamma, xi, &x[k])
                    + dj * kernel(kind, gamma, xj, &x[k])
                    + db;
            });
        } else {
            for (k, e) in self.errors.iter_mut().enumerate() {
                *e = *e
                    + di * kernel(kind, gamma, xi, &x[k])
                    + dj * kernel(kind, gamma, xj, &x[k])
                    + db;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rbf_cfg(c: f64, gamma: f64) -> SvmConfig<f64> {
        SvmConfig {
            c,
            kernel: KernelKind::Rbf,
            gamma: Gamma::Fixed(gamma),
            kkt_tolerance: 1e-6,
            max_passes: 1000,
            standardize: true,
        }
    }

    #[test]
    fn symmetric_pair_puts_the_boundary_at_zero() {
        let x = vec![vec![-1.0], vec![1.0]];
        let y = vec![0u8, 1u8];
        let cfg: SvmConfig<f64> = SvmConfig {
            kernel: KernelKind::Linear,
            gamma: Gamma::Fixed(1.0),
            standardize: false,
            ..SvmConfig::default()
        };
        let model = fit(&x, &y, &cfg).unwrap();
        assert!(model.bias.abs() < 1e-9);
        assert_eq!(predict(&model, &[-1.0]).unwrap(), 0);
        assert_eq!(predict(&model, &[1.0]).unwrap(), 1);
        assert_eq!(predict(&model, &[-0.25]).unwrap(), 0);
        assert_eq!(predict(&model, &[0.25]).unwrap(), 1);
    }

    #[test]
    fn xor_with_rbf_reaches_full_training_accuracy() {
        let x = vec![
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
        ];
        let y = vec![0u8, 1, 1, 0];
        let model = fit(&x, &y, &rbf_cfg(10.0, 1.0)).unwrap();
        for (xi, &yi) in x.iter().zip(&y) {
            assert_eq!(predict(&model, xi).unwrap(), yi);
        }
    }

    #[test]
    fn support_vectors_classify_as_their_own_label() {
        let x = vec![
            vec![-2.0, 0.0],
            vec![-1.5, 0.3],
            vec![2.0, 0.1],
            vec![1.7, -0.2],
        ];
        let y = vec![0u8, 0, 1, 1];
        let model = fit(&x, &y, &rbf_cfg(5.0, 0.7)).unwrap();
        for (xi, &yi) in x.iter().zip(&y) {
            assert_eq!(predict(&model, xi).unwrap(), yi);
        }
    }

    #[test]
    fn box_constraints_and_balance_hold_after_fit() {
        let x: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let t = i as f64 / 5.0;
                vec![t.sin() + if i % 2 == 0 { 2.0 } else { -2.0 }, t.cos()]
            })
            .collect();
        let y: Vec<u8> = (0..40).map(|i| (i % 2) as u8).collect();
        let cfg = rbf_cfg(1.0, 0.5);
        let model = fit(&x, &y, &cfg).unwrap();
        let mut balance = 0.0;
        for (&a, &coef) in model.alphas.iter().zip(&model.dual_coefficients) {
            assert!(a >= -1e-12 && a <= cfg.c + 1e-12, "alpha {a} outside box");
            balance += coef;
        }
        assert!(balance.abs() < 1e-6, "sum alpha_i y_i = {balance}");
    }

    #[test]
    fn duplicate_non_support_points_do_not_change_predictions() {
        let mut x = vec![
            vec![-3.0, 0.0],
            vec![-2.0, 0.5],
            vec![2.0, -0.5],
            vec![3.0, 0.0],
        ];
        let mut y = vec![0u8, 0, 1, 1];
        let cfg = SvmConfig {
            c: 10.0,
            kernel: KernelKind::Rbf,
            gamma: Gamma::Fixed(0.3),
            kkt_tolerance: 1e-6,
            max_passes: 1000,
            standardize: false,
        };
        let base = fit(&x, &y, &cfg).unwrap();
        // A point far inside its class region is not a support vector.
        x.push(vec![-6.0, 0.0]);
        y.push(0);
        x.push(vec![-6.0, 0.0]);
        y.push(0);
        let widened = fit(&x, &y, &cfg).unwrap();
        let probes = [
            vec![-1.0, 0.0],
            vec![1.0, 0.0],
            vec![-4.0, 1.0],
            vec![4.0, -1.0],
        ];
        for p in &probes {
            assert_eq!(
                predict(&base, p).unwrap(),
                predict(&widened, p).unwrap(),
                "prediction moved at {p:?}"
            );
        }
    }

    #[test]
    fn single_class_and_bad_inputs_are_rejected() {
        let x = vec![vec![0.0], vec![1.0]];
        assert_eq!(
            fit(&x, &[1, 1], &SvmConfig::default()),
            Err(SvmError::SingleClass)
        );
        assert_eq!(
            fit(&x[..1], &[1], &SvmConfig::default()),
            Err(SvmError::TooFewExamples(1))
        );
        let nan = vec![vec![f64::NAN], vec![1.0]];
        assert!(matches!(
            fit(&nan, &[0, 1], &SvmConfig::default()),
            Err(SvmError::InvalidInput(_))
        ));
        let model = fit(&x, &[0, 1], &SvmConfig::default()).unwrap();
        assert_eq!(
            predict(&model, &[0.0, 1.0]),
            Err(SvmError::FeatureLengthMismatch {
                expected: 1,
                got: 2
            })
        );
    }

    #[test]
    fn wide_margin_data_cross_validates_perfectly() {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..30 {
            let jitter = (i as f64) * 0.01;
            x.push(vec![-5.0 - jitter, jitter]);
            y.push(0u8);
            x.push(vec![5.0 + jitter, -jitter]);
            y.push(1u8);
        }
        let scores = cross_validate(&x, &y, &SvmConfig::default(), 10, 3).unwrap();
        assert_eq!(scores.len(), 10);
        assert!(scores.iter().all(|&s| s == 1.0), "scores {scores:?}");
    }

    #[test]
    fn ten_folds_on_100_examples_hold_out_ten_each() {
        let y: Vec<u8> = (0..100).map(|i| (i % 2) as u8).collect();
        let assignment = stratified_folds(&y, 10, 42);
        for fold in 0..10 {
            let members = assignment.iter().filter(|&&f| f == fold).count();
            assert_eq!(members, 10);
            // Stratification keeps the class balance per fold.
            let ones = (0..100)
                .filter(|&i| assignment[i] == fold && y[i] == 1)
                .count();
            assert_eq!(ones, 5);
        }
    }

    #[test]
    fn cross_validation_is_deterministic_per_seed() {
        let x: Vec<Vec<f64>> = (0..24)
            .map(|i| vec![(i as f64 * 0.7).sin(), (i as f64 * 1.3).cos()])
            .collect();
        let y: Vec<u8> = (0..24).map(|i| u8::from(i % 3 == 0)).collect();
        let a = cross_validate(&x, &y, &SvmConfig::default(), 6, 5).unwrap();
        let b = cross_validate(&x, &y, &SvmConfig::default(), 6, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fewer_examples_than_folds_reduces_the_fold_count() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        let y = vec![0u8, 0, 1, 1];
        let scores = cross_validate(&x, &y, &SvmConfig::default(), 10, 1).unwrap();
        assert_eq!(scores.len(), 4);
    }

    #[test]
    fn randomized_labels_score_near_chance() {
        use rand::{Rng, SeedableRng};
        use rand_chacha::ChaCha8Rng;
        let mut grand = 0.0;
        let seeds = 20;
        for seed in 0..seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let x: Vec<Vec<f64>> = (0..60)
                .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let y: Vec<u8> = (0..60).map(|_| rng.gen_range(0..2) as u8).collect();
            let scores = cross_validate(&x, &y, &SvmConfig::default(), 10, seed).unwrap();
            grand += mean(&scores);
        }
        grand /= seeds as f64;
        assert!(
            (0.4..=0.6).contains(&grand),
            "chance-level mean CV accuracy was {grand}"
        );
    }

    #[test]
    fn gamma_serde_accepts_scale_and_numbers() {
        let scale: Gamma<f64> = serde_json::from_str("\"scale\"").unwrap();
        assert_eq!(scale, Gamma::Scale);
        let fixed: Gamma<f64> = serde_json::from_str("0.25").unwrap();
        assert_eq!(fixed, Gamma::Fixed(0.25));
        assert_eq!(
            serde_json::to_string(&Gamma::<f64>::Scale).unwrap(),
            "\"scale\""
        );
        assert!(serde_json::from_str::<Gamma<f64>>("\"banana\"").is_err());
    }

    #[test]
    fn model_serializes_for_audit() {
        let x = vec![
            vec![-1.0, 0.0],
            vec![1.0, 0.5],
            vec![-2.0, 1.0],
            vec![2.0, -1.0],
        ];
        let y = vec![0u8, 1, 0, 1];
        let model = fit(&x, &y, &SvmConfig::default()).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: SvmModel<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(model, back);
    }

    #[test]
    fn fits_in_f32_too() {
        let x = vec![vec![-1.0f32], vec![1.0f32]];
        let y = vec![0u8, 1];
        let model = fit(&x, &y, &SvmConfig::<f32>::default()).unwrap();
        assert_eq!(predict(&model, &[0.9f32]).unwrap(), 1);
    }
}
