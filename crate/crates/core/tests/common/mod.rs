//! Shared helpers for the integration and acceptance suites: an exact
//! brute-force solver for tiny SVM duals and a scripted trainer.

use blockswarm_core::blockmodel::StackPlan;
use blockswarm_core::dataset::DatasetDescriptor;
use blockswarm_core::evaluator::{Trainer, TrainerError, TrainerSession};

/// Maximizes the soft-margin dual
///   W(a) = sum a_i - 1/2 sum_ij a_i a_j y_i y_j K_ij
/// subject to 0 <= a_i <= c and sum a_i y_i = 0, by enumerating every
/// active-set hypothesis (each variable at 0, at c, or free), solving the
/// stationarity system on the free block, and keeping the best feasible
/// candidate. Exact for the handful of variables used in tests, and entirely
/// independent of the sequential pairwise solver under test.
pub fn brute_force_dual_max(kernel: &[Vec<f64>], y: &[f64], c: f64) -> f64 {
    let n = y.len();
    assert!(n <= 8, "enumeration oracle meant for tiny problems");
    let mut best = f64::NEG_INFINITY;
    // Each variable takes state 0 (at zero), 1 (at c), 2 (free).
    let total = 3usize.pow(n as u32);
    for assignment in 0..total {
        let mut state = Vec::with_capacity(n);
        let mut rem = assignment;
        for _ in 0..n {
            state.push(rem % 3);
            rem /= 3;
        }
        if let Some(alpha) = solve_hypothesis(kernel, y, c, &state) {
            let w = dual_objective(kernel, y, &alpha);
            if w > best {
                best = w;
            }
        }
    }
    best
}

pub fn dual_objective(kernel: &[Vec<f64>], y: &[f64], alpha: &[f64]) -> f64 {
    let n = y.len();
    let mut linear = 0.0;
    let mut quad = 0.0;
    for i in 0..n {
        linear += alpha[i];
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * kernel[i][j];
        }
    }
    linear - quad / 2.0
}

fn solve_hypothesis(kernel: &[Vec<f64>], y: &[f64], c: f64, state: &[usize]) -> Option<Vec<f64>> {
    let n = y.len();
    let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
    let mut alpha: Vec<f64> = state
        .iter()
        .map(|&s| match s {
            0 => 0.0,
            1 => c,
            _ => 0.0,
        })
        .collect();
    if free.is_empty() {
        let balance: f64 = (0..n).map(|i| alpha[i] * y[i]).sum();
        return (balance.abs() < 1e-9).then_some(alpha);
    }
    // Stationarity over the free block with the equality multiplier:
    // [Q_FF  y_F] [a_F]   [1 - Q_FB a_B]
    // [y_F^T  0 ] [l  ] = [  -y_B^T a_B]
    let m = free.len() + 1;
    let mut a = vec![vec![0.0; m + 1]; m];
    for (r, &i) in free.iter().enumerate() {
        for (col, &j) in free.iter().enumerate() {
            a[r][col] = y[i] * y[j] * kernel[i][j];
        }
        a[r][free.len()] = y[i];
        let mut rhs = 1.0;
        for j in 0..n {
            if state[j] == 1 {
                rhs -= y[i] * y[j] * kernel[i][j] * c;
            }
        }
        a[r][m] = rhs;
    }
    for (col, &j) in free.iter().enumerate() {
        a[free.len()][col] = y[j];
    }
    a[free.len()][free.len()] = 0.0;
    a[free.len()][m] = -(0..n)
        .filter(|&j| state[j] == 1)
        .map(|j| y[j] * c)
        .sum::<f64>();

    let solution = gaussian_solve(&mut a)?;
    for (idx, &i) in free.iter().enumerate() {
        let v = solution[idx];
        if !(-1e-9..=c + 1e-9).contains(&v) {
            return None;
        }
        alpha[i] = v.clamp(0.0, c);
    }
    Some(alpha)
}

/// Gaussian elimination with partial pivoting on an augmented matrix.
fn gaussian_solve(a: &mut [Vec<f64>]) -> Option<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let pivot =
            (col..n).max_by(|&r1, &r2| a[r1][col].abs().partial_cmp(&a[r2][col].abs()).unwrap())?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        for row in 0..n {
            if row != col {
                let factor = a[row][col] / a[col][col];
                for k in col..=n {
                    a[row][k] -= factor * a[col][k];
                }
            }
        }
    }
    Some((0..n).map(|i| a[i][n] / a[i][i]).collect())
}

/// Trainer that replays a fixed accuracy script; losses mirror accuracies.
pub struct ScriptedTrainer {
    pub accuracies: Vec<f64>,
}

struct ScriptedSession {
    accuracies: Vec<f64>,
    next: usize,
}

impl Trainer<f64> for ScriptedTrainer {
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
