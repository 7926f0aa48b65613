//! Encoding between fixed-length position vectors and variable-length blocks.
//!
//! A block is an ordered list of per-layer growth rates. Particles carry a
//! fixed-length real vector with one dimension per possible layer; a
//! component that rounds to the disable value (one below the growth lower
//! bound) switches its layer off, so the swarm can explore block depth and
//! per-layer growth rates at the same time.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

/// Bounds of the encoded search space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncodingConfig {
    /// Maximum number of layers a block may have (vector dimensionality).
    pub max_layers: usize,
    /// Smallest admissible growth rate.
    pub growth_lower: u32,
    /// Largest admissible growth rate.
    pub growth_upper: u32,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        // 16 layers, growth rates 12..=32, disable value 11.
        Self {
            max_layers: 16,
            growth_lower: 12,
            growth_upper: 32,
        }
    }
}

impl EncodingConfig {
    pub fn new(
        max_layers: usize,
        growth_lower: u32,
        growth_upper: u32,
    ) -> Result<Self, EncodingError> {
        if max_layers == 0 {
            return Err(EncodingError::InvalidConfig(
                "max_layers must be at least 1",
            ));
        }
        if growth_lower == 0 {
            return Err(EncodingError::InvalidConfig(
                "growth_lower must be positive",
            ));
        }
        if growth_lower >= growth_upper {
            return Err(EncodingError::InvalidConfig(
                "growth_lower must be below growth_upper",
            ));
        }
        Ok(Self {
            max_layers,
            growth_lower,
            growth_upper,
        })
    }

    /// Value that disables a layer: one below the growth lower bound.
    pub fn special_value(&self) -> u32 {
        self.growth_lower - 1
    }

    /// Inclusive component range `[special_value, growth_upper]` as scalars.
    pub fn component_range<F: Scalar>(&self) -> (F, F) {
        (
            F::from_u32(self.special_value()).unwrap(),
            F::from_u32(self.growth_upper).unwrap(),
        )
    }
}

/// Fixed-length real vector a particle flies through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PositionVector<F>(pub Vec<F>);

impl<F: Scalar> PositionVector<F> {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[F] {
        &self.0
    }
}

/// Decoded block: growth rates of the enabled layers, in layer order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BlockSpec {
    pub growth_rates: Vec<u32>,
}

impl BlockSpec {
    pub fn new(growth_rates: Vec<u32>) -> Self {
        Self { growth_rates }
    }

    /// Number of enabled layers.
    pub fn len(&self) -> usize {
        self.growth_rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.growth_rates.is_empty()
    }

    /// Checks every growth rate lies in `[growth_lower, growth_upper]` and the
    /// length fits the configured maximum.
    pub fn validate(&self, cfg: &EncodingConfig) -> Result<(), EncodingError> {
        if self.growth_rates.is_empty() {
            return Err(EncodingError::EmptyBlock);
        }
        if self.growth_rates.len() > cfg.max_layers {
            return Err(EncodingError::TooManyLayers {
                layers: self.growth_rates.len(),
                max_layers: cfg.max_layers,
            });
        }
        for &g in &self.growth_rates {
            if g < cfg.growth_lower || g > cfg.growth_upper {
                return Err(EncodingError::GrowthOutOfRange {
                    growth: g,
                    lower: cfg.growth_lower,
                    upper: cfg.growth_upper,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EncodingError {
    #[error("invalid encoding config: {0}")]
    InvalidConfig(&'static str),
    #[error("block has {layers} layers but the encoding allows at most {max_layers}")]
    TooManyLayers { layers: usize, max_layers: usize },
    #[error("growth rate {growth} outside [{lower}, {upper}]")]
    GrowthOutOfRange { growth: u32, lower: u32, upper: u32 },
    #[error("block must have at least one layer")]
    EmptyBlock,
}

/// Decodes a position into a block.
///
/// Components are clamped to `[special_value, growth_upper]` and rounded to
/// the nearest integer (ties away from zero). Components at or below the
/// disable value drop their layer; the survivors, in original order, become
/// the growth rates. A vector whose layers all decode to disabled is repaired
/// by enabling the layer with the largest clamped component at the lower
/// growth bound, so every real vector decodes to a usable block.
pub fn decode<F: Scalar>(position: &PositionVector<F>, cfg: &EncodingConfig) -> BlockSpec {
    assert_eq!(
        position.len(),
        cfg.max_layers,
        "position length must equal max_layers"
    );
    let (lo, hi) = cfg.component_range::<F>();
    let sv = cfg.special_value();
    let mut growth_rates = Vec::with_capacity(cfg.max_layers);
    for &raw in position.as_slice() {
        let clamped = clamp(raw, lo, hi);
        let rounded = clamped.round().to_u32().unwrap();
        if rounded > sv {
            growth_rates.push(rounded.min(cfg.growth_upper));
        }
    }
    if growth_rates.is_empty() {
        // Repair: enable the layer with the largest clamped component.
        let best = position
            .as_slice()
            .iter()
            .map(|&v| clamp(v, lo, hi))
            .enumerate()
            .fold(
                (0usize, lo),
                |acc, (i, v)| if v > acc.1 { (i, v) } else { acc },
            );
        let _ = best.0;
        growth_rates.push(cfg.growth_lower);
    }
    BlockSpec::new(growth_rates)
}

/// Inverse of [`decode`] for seeding and round-trips: growth rates fill the
/// leading dimensions, the rest sit at the disable value.
pub fn encode<F: Scalar>(
    spec: &BlockSpec,
    cfg: &EncodingConfig,
) -> Result<PositionVector<F>, EncodingError> {
    spec.validate(cfg)?;
    let sv = F::from_u32(cfg.special_value()).unwrap();
    let mut values = vec![sv; cfg.max_layers];
    for (slot, &g) in values.iter_mut().zip(spec.growth_rates.iter()) {
        *slot = F::from_u32(g).unwrap();
    }
    Ok(PositionVector(values))
}

/// Block vector as stored in training records: growth rates in the leading
/// positions, disabled layers as the special value.
pub fn block_vector(spec: &BlockSpec, cfg: &EncodingConfig) -> Vec<u32> {
    let mut v = vec![cfg.special_value(); cfg.max_layers];
    for (slot, &g) in v.iter_mut().zip(spec.growth_rates.iter()) {
        *slot = g;
    }
    v
}

fn clamp<F: Scalar>(v: F, lo: F, hi: F) -> F {
    if v < lo {
        lo
    } else if v > hi {
        hi
    } else {
        v
    }
}
