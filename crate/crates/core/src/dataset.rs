//! Dataset descriptors and reduced-cost variants.
//!
//! Trainers never see pixels here; they see a descriptor carrying the dataset
//! identity, example count, resolution, a difficulty knob for the synthetic
//! trainer, and the seed of the 80/20 train/test split. The reduction step
//! shrinks a descriptor by keeping `percent`% of the examples and dividing
//! the resolution by a downsampling factor, which is what makes fitness
//! evaluation cheap during the search.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

/// Identity and shape of one evaluation dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "F: crate::Scalar"))]
pub struct DatasetDescriptor<F> {
    pub dataset_id: String,
    pub num_examples: u64,
    /// Image resolution (width, height).
    pub resolution: (u32, u32),
    /// Task difficulty in (0, 1]; only the synthetic trainer interprets it.
    pub difficulty: F,
    /// Seed of the train/test split, so the split is reproducible.
    pub split_seed: u64,
    /// Train and test fractions; they sum to one.
    pub split_fractions: (F, F),
}

impl<F: Scalar> DatasetDescriptor<F> {
    /// Descriptor with the conventional 80/20 split.
    pub fn new(dataset_id: impl Into<String>, num_examples: u64, resolution: (u32, u32)) -> Self {
        Self {
            dataset_id: dataset_id.into(),
            num_examples,
            resolution,
            difficulty: F::from_f64_lossy(0.5),
            split_seed: 0,
            split_fractions: (F::from_f64_lossy(0.8), F::from_f64_lossy(0.2)),
        }
    }
}

impl<F: Scalar> Default for DatasetDescriptor<F> {
    fn default() -> Self {
        // 50,000 training images at 32x32, the usual small-image benchmark shape.
        Self::new("cifar10-train", 50_000, (32, 32))
    }
}

/// How to shrink a dataset for cheap fitness evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReductionConfig {
    /// Percentage of examples kept, in (0, 100].
    pub data_reduction_percent: u32,
    /// Resolution divisor, at least 1.
    pub downsampling_factor: u32,
    /// Keep per-class proportions when sampling. Off by default: plain
    /// uniform sampling.
    pub stratified: bool,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        Self {
            data_reduction_percent: 10,
            downsampling_factor: 2,
            stratified: false,
        }
    }
}

impl ReductionConfig {
    pub fn validate(&self) -> Result<(), ReductionError> {
        if self.data_reduction_percent == 0 || self.data_reduction_percent > 100 {
            return Err(ReductionError::InvalidPercent(self.data_reduction_percent));
        }
        if self.downsampling_factor == 0 {
            return Err(ReductionError::InvalidFactor(self.downsampling_factor));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReductionError {
    #[error("data reduction percent must be in (0, 100], got {0}")]
    InvalidPercent(u32),
    #[error("downsampling factor must be at least 1, got {0}")]
    InvalidFactor(u32),
    #[error("reduction leaves {examples} examples at {width}x{height}, too little to train on")]
    TooAggressive {
        examples: u64,
        width: u32,
        height: u32,
    },
}

/// Builds the reduced descriptor used during the search.
///
/// Keeps `floor(num_examples * percent / 100)` examples (the sampling itself
/// is the trainer's business, pinned by `seed`) and divides the resolution by
/// the downsampling factor. With `percent == 100` and factor 1 the input
/// descriptor is returned unchanged.
pub fn make_surrogate_dataset<F: Scalar>(
    d: &DatasetDescriptor<F>,
    r: &ReductionConfig,
    seed: u64,
) -> Result<DatasetDescriptor<F>, ReductionError> {
    r.validate()?;
    if r.data_reduction_percent == 100 && r.downsampling_factor == 1 {
        return Ok(d.clone());
    }
    let num_examples = d.num_examples * u64::from(r.data_reduction_percent) / 100;
    let width = d.resolution.0 / r.downsampling_factor;
    let height = d.resolution.1 / r.downsampling_factor;
    if num_examples < 2 || width == 0 || height == 0 {
        return Err(ReductionError::TooAggressive {
            examples: num_examples,
            width,
            height,
        });
    }
    Ok(DatasetDescriptor {
        dataset_id: format!("{}-surrogate", d.dataset_id),
        num_examples,
        resolution: (width, height),
        difficulty: d.difficulty,
        split_seed: seed,
        split_fractions: d.split_fractions,
    })
}

/// Fraction of the original per-epoch training cost left after reduction:
/// `(1 / n^2) * (p / 100)` for downsampling factor `n` and kept percent `p`.
pub fn cost_factor<F: Scalar>(r: &ReductionConfig) -> F {
    let n = F::from_u32(r.downsampling_factor).unwrap();
    let p = F::from_u32(r.data_reduction_percent).unwrap();
    F::one() / (n * n) * (p / F::from_f64_lossy(100.0))
}
