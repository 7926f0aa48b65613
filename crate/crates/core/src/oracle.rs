//! Deterministic synthetic trainer with an inspectable quality function.
//!
//! Stands in for real network training so the whole pipeline can be run and
//! measured at desk scale. Every block gets a closed-form true quality:
//! a logistic squash of a per-layer gaussian preference profile (middle
//! layers prefer larger growth rates), a depth reward, and a parameter-count
//! penalty, scaled by a fidelity multiplier that shrinks with the example
//! count and resolution of the dataset descriptor. Learning curves approach
//! that quality exponentially, at a per-block speed derived by hashing the
//! block, and carry small counter-mode noise hashed from
//! (block, dataset id, seed, epoch) so partial and resumed runs agree
//! exactly. Stacked plans respond through a bell-shaped multiplier over the
//! repeat count.

use serde::{Deserialize, Serialize};

use crate::blockmodel::{parameter_count, StackPlan};
use crate::dataset::DatasetDescriptor;
use crate::encoding::BlockSpec;
use crate::evaluator::{Trainer, TrainerError, TrainerSession};
use crate::hashing::{fnv1a64, mix, unit_from_hash};
use crate::Scalar;

/// Shape of the synthetic quality landscape and its learning curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "F: crate::Scalar"))]
pub struct OracleConfig<F> {
    /// Growth-rate range the preference profile spans.
    pub growth_lower: u32,
    pub growth_upper: u32,
    /// Number of layer slots the bell profile is laid over.
    pub max_layers: usize,
    /// Width of the bell over layer positions.
    pub profile_width: F,
    /// Gaussian width around each layer's preferred growth rate.
    pub gauss_width: F,
    /// Weight of each layer's gaussian term in the quality score.
    pub layer_weight: F,
    /// Reward per enabled layer.
    pub depth_reward: F,
    /// Penalty per 1e5 parameters of the single block.
    pub complexity_penalty: F,
    /// Additive bias of the pre-squash score.
    pub quality_bias: F,
    /// Weight of the per-block pre-squash jitter, hashed from the block:
    /// quality variation that the curves reveal but the parameters alone
    /// cannot explain.
    pub quality_jitter: F,
    /// Stem width used for the parameter penalty.
    pub stem_channels: u64,
    /// Base time constant of the accuracy curve, in epochs.
    pub curve_time_constant: F,
    /// Per-block spread of the time constant, as a fraction of the base.
    pub trainability_spread: F,
    /// Amplitude of the per-epoch curve noise at full fidelity.
    pub noise_amplitude: F,
    /// Starting loss and the scale tying the loss floor to (1 - quality).
    pub loss_start: F,
    pub loss_floor_scale: F,
    /// Reference dataset shape mapping to fidelity 1.
    pub ref_examples: u64,
    pub ref_resolution: (u32, u32),
    /// Exponents of the fidelity quality multiplier.
    pub quality_exp_examples: F,
    pub quality_exp_pixels: F,
    /// Weight of the descriptor difficulty in the quality multiplier.
    pub difficulty_weight: F,
    /// Exponent of the fidelity noise multiplier.
    pub noise_exp: F,
    /// Stacking response: bell over the repeat count.
    pub stack_peak: F,
    pub stack_width: F,
    pub stack_floor: F,
}

impl<F: Scalar> Default for OracleConfig<F> {
    fn default() -> Self {
        let f = F::from_f64_lossy;
        Self {
            growth_lower: 12,
            growth_upper: 32,
            max_layers: 16,
            profile_width: f(4.0),
            gauss_width: f(6.0),
            layer_weight: f(0.2),
            depth_reward: f(0.06),
            complexity_penalty: f(0.08),
            quality_bias: f(-2.2),
            quality_jitter: f(0.35),
            stem_channels: 24,
            curve_time_constant: f(4.0),
            trainability_spread: f(0.5),
            noise_amplitude: f(0.004),
            loss_start: f(2.3),
            loss_floor_scale: f(0.8),
            ref_examples: 50_000,
            ref_resolution: (32, 32),
            quality_exp_examples: f(0.06),
            quality_exp_pixels: f(0.04),
            difficulty_weight: f(0.2),
            noise_exp: f(0.1),
            stack_peak: f(3.0),
            stack_width: f(1.2),
            stack_floor: f(0.85),
        }
    }
}

impl<F: Scalar> OracleConfig<F> {
    /// Preferred growth rate of the layer at 1-based position `layer`:
    /// a bell over positions, peaking mid-block at the upper growth bound.
    pub fn layer_optimum(&self, layer: usize) -> F {
        let center = F::from_usize(self.max_layers).unwrap() / F::from_f64_lossy(2.0)
            + F::from_f64_lossy(0.5);
        let pos = F::from_usize(layer).unwrap();
        let d = (pos - center) / self.profile_width;
        let bell = (-d * d / F::from_f64_lossy(2.0)).exp();
        let lo = F::from_u32(self.growth_lower).unwrap();
        let hi = F::from_u32(self.growth_upper).unwrap();
        lo + (hi - lo) * bell
    }

    /// Fidelity multipliers of a descriptor: (quality factor, noise factor).
    pub fn fidelity(&self, d: &DatasetDescriptor<F>) -> (F, F) {
        let one = F::one();
        let rel_n = (F::from_u64(d.num_examples).unwrap()
            / F::from_u64(self.ref_examples).unwrap())
        .min(one);
        let ref_pixels = u64::from(self.ref_resolution.0) * u64::from(self.ref_resolution.1);
        let pixels = u64::from(d.resolution.0) * u64::from(d.resolution.1);
        let rel_p = (F::from_u64(pixels).unwrap() / F::from_u64(ref_pixels).unwrap()).min(one);
        let quality = rel_n.powf(self.quality_exp_examples)
            * rel_p.powf(self.quality_exp_pixels)
            * (one - self.difficulty_weight * d.difficulty);
        let noise = (one / (rel_n * rel_p)).powf(self.noise_exp);
        (quality, noise)
    }

    /// Bell-shaped response to stacking the block `repeats` times.
    pub fn stack_factor(&self, repeats: u32) -> F {
        let t = F::from_u32(repeats).unwrap();
        let d = (t - self.stack_peak) / self.stack_width;
        self.stack_floor + (F::one() - self.stack_floor) * (-d * d / F::from_f64_lossy(2.0)).exp()
    }

    /// Per-block curve time constant: the base scaled by a hash of the block,
    /// so learning speed varies across architectures independently of their
    /// quality.
    pub fn time_constant(&self, spec: &BlockSpec) -> F {
        self.curve_time_constant
            * (F::one() + self.trainability_spread * block_unit(spec, b"trainability"))
    }

    /// Per-block quality jitter in [-1, 1), independent of the time constant.
    pub fn block_jitter(&self, spec: &BlockSpec) -> F {
        block_unit(spec, b"arch-lottery")
    }
}

/// Ground-truth quality of a single block on a dataset, in (0, 1).
pub fn true_quality<F: Scalar>(
    spec: &BlockSpec,
    d: &DatasetDescriptor<F>,
    cfg: &OracleConfig<F>,
) -> F {
    plan_quality(&single_plan(spec, cfg), d, cfg)
}

/// Ground-truth quality of a stacked candidate: the block quality times the
/// stacking response.
pub fn plan_quality<F: Scalar>(
    plan: &StackPlan<F>,
    d: &DatasetDescriptor<F>,
    cfg: &OracleConfig<F>,
) -> F {
    let two = F::from_f64_lossy(2.0);
    let mut layer_sum = F::zero();
    for (i, &g) in plan.block.growth_rates.iter().enumerate() {
        let mu = cfg.layer_optimum(i + 1);
        let dg = (F::from_u32(g).unwrap() - mu) / cfg.gauss_width;
        layer_sum = layer_sum + (-dg * dg / two).exp();
    }
    let depth = F::from_usize(plan.block.len()).unwrap();
    let params = parameter_count(&single_plan(&plan.block, cfg));
    let params_penalty =
        cfg.complexity_penalty * F::from_u64(params).unwrap() / F::from_f64_lossy(1e5);
    let z = cfg.quality_bias
        + cfg.layer_weight * layer_sum
        + cfg.depth_reward * depth
        + cfg.quality_jitter * cfg.block_jitter(&plan.block)
        - params_penalty;
    let base = F::one() / (F::one() + (-z).exp());
    let (fidelity_q, _) = cfg.fidelity(d);
    base * fidelity_q * cfg.stack_factor(plan.repeats)
}

fn block_unit<F: Scalar>(spec: &BlockSpec, tag: &[u8]) -> F {
    let mut h = fnv1a64(tag);
    for &g in &spec.growth_rates {
        h = mix(h, u64::from(g));
    }
    F::from_f64_lossy(unit_from_hash(h))
}

fn single_plan<F: Scalar>(spec: &BlockSpec, cfg: &OracleConfig<F>) -> StackPlan<F> {
    StackPlan {
        block: spec.clone(),
        repeats: 1,
        compression: F::from_f64_lossy(0.5),
        stem_channels: cfg.stem_channels,
    }
}

/// Loss and accuracy at 1-based epoch `epoch`; pure in all arguments.
pub fn epoch_curve<F: Scalar>(
    plan: &StackPlan<F>,
    d: &DatasetDescriptor<F>,
    seed: u64,
    cfg: &OracleConfig<F>,
    epoch: u64,
) -> (F, F) {
    debug_assert!(epoch >= 1);
    let q = plan_quality(plan, d, cfg);
    let tau = cfg.time_constant(&plan.block);
    let (_, noise_mult) = cfg.fidelity(d);
    let amp = cfg.noise_amplitude * noise_mult;
    let e = F::from_u64(epoch).unwrap();

    let acc_clean = q * (F::one() - (-e / tau).exp());
    let acc_noise = amp * noise_at(plan, d, seed, epoch, 1);
    let tiny = F::from_f64_lossy(1e-6);
    let acc = (acc_clean + acc_noise).max(tiny).min(F::one() - tiny);

    let floor = cfg.loss_floor_scale * (F::one() - q);
    let tau_loss = tau * F::from_f64_lossy(0.9);
    let loss_clean = floor + (cfg.loss_start - floor) * (-e / tau_loss).exp();
    let loss_noise = amp * F::from_f64_lossy(4.0) * noise_at(plan, d, seed, epoch, 2);
    let loss = (loss_clean + loss_noise).max(F::zero());
    (loss, acc)
}

/// Counter-mode noise in [-1, 1): a SplitMix64 chain over the seed, the
/// dataset id, the block growth rates, the repeat count, the epoch and a
/// stream tag.
fn noise_at<F: Scalar>(
    plan: &StackPlan<F>,
    d: &DatasetDescriptor<F>,
    seed: u64,
    epoch: u64,
    stream: u64,
) -> F {
    let mut h = mix(seed, fnv1a64(d.dataset_id.as_bytes()));
    for &g in &plan.block.growth_rates {
        h = mix(h, u64::from(g));
    }
    h = mix(h, u64::from(plan.repeats));
    h = mix(h, epoch);
    h = mix(h, stream);
    F::from_f64_lossy(unit_from_hash(h))
}

/// The synthetic trainer.
#[derive(Debug, Clone)]
pub struct SyntheticOracle<F> {
    pub config: OracleConfig<F>,
}

impl<F: Scalar> Default for SyntheticOracle<F> {
    fn default() -> Self {
        Self {
            config: OracleConfig::default(),
        }
    }
}

impl<F: Scalar> SyntheticOracle<F> {
    pub fn new(config: OracleConfig<F>) -> Self {
        Self { config }
    }
}

struct OracleSession<F> {
    plan: StackPlan<F>,
    dataset: DatasetDescriptor<F>,
    seed: u64,
    config: OracleConfig<F>,
    epoch: u64,
}

impl<F: Scalar> Trainer<F> for SyntheticOracle<F> {
    fn start(
        &self,
        plan: &StackPlan<F>,
        dataset: &DatasetDescriptor<F>,
        seed: u64,
    ) -> Result<Box<dyn TrainerSession<F>>, TrainerError> {
        Ok(Box::new(OracleSession {
            plan: plan.clone(),
            dataset: dataset.clone(),
            seed,
            config: self.config.clone(),
            epoch: 0,
        }))
    }
}

impl<F: Scalar> TrainerSession<F> for OracleSession<F> {
    fn train_epoch(&mut self) -> Result<(F, F), TrainerError> {
        self.epoch += 1;
        Ok(epoch_curve(
            &self.plan,
            &self.dataset,
            self.seed,
            &self.config,
            self.epoch,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{make_surrogate_dataset, ReductionConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> OracleConfig<f64> {
        OracleConfig::default()
    }

    fn dataset() -> DatasetDescriptor<f64> {
        DatasetDescriptor::default()
    }

    #[test]
    fn quality_stays_in_the_open_unit_interval() {
        let cfg = cfg();
        let d = dataset();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5000 {
            let layers = rng.gen_range(1..=16);
            let spec = BlockSpec::new((0..layers).map(|_| rng.gen_range(12..=32)).collect());
            let q = true_quality(&spec, &d, &cfg);
            assert!(q > 0.0 && q < 1.0, "quality {q} out of range");
        }
    }

    #[test]
    fn matching_the_layer_optima_maximises_the_layer_sum() {
        let mut cfg = cfg();
        cfg.quality_jitter = 0.0;
        let d = dataset();
        let mu: Vec<u32> = (1..=4)
            .map(|l| cfg.layer_optimum(l).round() as u32)
            .collect();
        let at_optimum = true_quality(&BlockSpec::new(mu.clone()), &d, &cfg);
        let mut shifted = mu.clone();
        shifted[0] -= 3;
        shifted[1] += 3;
        let q_shifted = true_quality(&BlockSpec::new(shifted), &d, &cfg);
        assert!(at_optimum > q_shifted);
    }

    #[test]
    fn reduced_datasets_lower_the_quality_of_every_spec() {
        let cfg = cfg();
        let full = dataset();
        let reduced = make_surrogate_dataset(&full, &ReductionConfig::default(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let layers = rng.gen_range(1..=16);
            let spec = BlockSpec::new((0..layers).map(|_| rng.gen_range(12..=32)).collect());
            assert!(true_quality(&spec, &reduced, &cfg) < true_quality(&spec, &full, &cfg));
        }
    }

    #[test]
    fn two_layer_argmax_matches_exhaustive_enumeration() {
        let mut cfg = cfg();
        cfg.complexity_penalty = 0.0;
        cfg.quality_jitter = 0.0;
        let d = dataset();
        let mut best = (0u32, 0u32);
        let mut best_q = f64::NEG_INFINITY;
        for g1 in 12..=32u32 {
            for g2 in 12..=32u32 {
                let q = true_quality(&BlockSpec::new(vec![g1, g2]), &d, &cfg);
                if q > best_q {
                    best_q = q;
                    best = (g1, g2);
                }
            }
        }
        let expected = (
            cfg.layer_optimum(1).round() as u32,
            cfg.layer_optimum(2).round() as u32,
        );
        assert_eq!(best, expected);
    }

    #[test]
    fn noiseless_curves_are_strictly_monotone() {
        let mut cfg = cfg();
        cfg.noise_amplitude = 0.0;
        let plan = StackPlan::single(BlockSpec::new(vec![14, 22, 30]));
        let d = dataset();
        let mut prev_acc = 0.0;
        let mut prev_loss = f64::INFINITY;
        for e in 1..=50u64 {
            let (loss, acc) = epoch_curve(&plan, &d, 11, &cfg, e);
            assert!(acc > prev_acc, "accuracy must rise at epoch {e}");
            assert!(loss < prev_loss, "loss must fall at epoch {e}");
            prev_acc = acc;
            prev_loss = loss;
        }
    }

    #[test]
    fn noiseless_accuracy_converges_to_the_true_quality() {
        let mut cfg = cfg();
        cfg.noise_amplitude = 0.0;
        cfg.curve_time_constant = 1.0;
        cfg.trainability_spread = 0.0;
        let spec = BlockSpec::new(vec![16, 24, 28]);
        let plan = StackPlan::single(spec.clone());
        let d = dataset();
        let q = true_quality(&spec, &d, &cfg);
        let (_, acc) = epoch_curve(&plan, &d, 3, &cfg, 20);
        assert!((acc - q).abs() < 1e-6);
    }

    #[test]
    fn curves_are_deterministic_and_resumable() {
        let oracle = SyntheticOracle::<f64>::default();
        let plan = StackPlan::single(BlockSpec::new(vec![15, 25]));
        let d = dataset();
        let run = |epochs: usize| -> Vec<(f64, f64)> {
            let mut s = oracle.start(&plan, &d, 42).unwrap();
            (0..epochs).map(|_| s.train_epoch().unwrap()).collect()
        };
        let short = run(5);
        let long = run(12);
        assert_eq!(short[..], long[..5]);
        assert_eq!(run(12), long);
    }

    #[test]
    fn quality_ignores_identity_only_descriptor_changes() {
        let cfg = cfg();
        let spec = BlockSpec::new(vec![18, 27]);
        let a = dataset();
        let mut b = dataset();
        b.dataset_id = "renamed".into();
        b.split_seed = 999;
        assert_eq!(true_quality(&spec, &a, &cfg), true_quality(&spec, &b, &cfg));
    }

    #[test]
    fn stack_response_peaks_at_the_configured_repeat_count() {
        let cfg = cfg();
        let factors: Vec<f64> = (1..=5).map(|t| cfg.stack_factor(t)).collect();
        let best = factors
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(best + 1, 3);
        assert!((factors[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn time_constants_spread_but_stay_positive() {
        let cfg = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut min_tau = f64::INFINITY;
        let mut max_tau = 0.0f64;
        for _ in 0..2000 {
            let layers = rng.gen_range(1..=16);
            let spec = BlockSpec::new((0..layers).map(|_| rng.gen_range(12..=32)).collect());
            let tau = cfg.time_constant(&spec);
            assert!(tau > 0.0);
            min_tau = min_tau.min(tau);
            max_tau = max_tau.max(tau);
        }
        assert!(min_tau < 2.5);
        assert!(max_tau > 5.5);
    }

    // Full early-stopped evaluations must rank pairs consistently with the
    // ground truth when the quality gap is at least 0.05.
    #[test]
    fn ranking_fidelity_against_full_evaluations() {
        use crate::encoding::EncodingConfig;
        use crate::evaluator::Evaluator;
        use crate::history::HistoryStore;

        let oracle = SyntheticOracle::<f64>::default();
        let store = HistoryStore::new();
        let ev = Evaluator::new(&oracle, &store, EncodingConfig::default(), 60, 40);
        let d = dataset();
        let cfg = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut checked = 0usize;
        let mut consistent = 0usize;
        while checked < 1000 {
            let a = random_spec(&mut rng);
            let b = random_spec(&mut rng);
            let qa = true_quality(&a, &d, &cfg);
            let qb = true_quality(&b, &d, &cfg);
            if (qa - qb).abs() < 0.05 {
                continue;
            }
            let fa = ev.evaluate_fitness(&a, &d).unwrap();
            let fb = ev.evaluate_fitness(&b, &d).unwrap();
            if (fa > fb) == (qa > qb) {
                consistent += 1;
            }
            checked += 1;
        }
        let rate = consistent as f64 / checked as f64;
        assert!(rate >= 0.95, "ranking consistency {rate} below 0.95");
    }

    fn random_spec(rng: &mut ChaCha8Rng) -> BlockSpec {
        let layers = rng.gen_range(1..=16);
        BlockSpec::new((0..layers).map(|_| rng.gen_range(12..=32)).collect())
    }
}
