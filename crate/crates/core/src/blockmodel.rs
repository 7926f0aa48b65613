//! Channel and parameter accounting for dense blocks.
//!
//! Each composite layer concatenates its output feature maps onto everything
//! it received, so the input width of layer `l+1` is the block input width
//! plus the sum of the first `l` growth rates. Stacked plans insert a
//! compressing transition between consecutive blocks. The counts here feed
//! run reports and the synthetic trainer's complexity penalty; they are for
//! relative comparison, not for matching any published total.

use serde::{Deserialize, Serialize};

use crate::encoding::BlockSpec;
use crate::Scalar;

/// Per-layer input widths derived from the growth rates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelTrace {
    /// Feature maps entering the block.
    pub input_channels: u64,
    /// Input width of each layer, in layer order.
    pub per_layer_inputs: Vec<u64>,
    /// Feature maps leaving the block: input plus every growth rate.
    pub block_output_channels: u64,
}

/// A candidate network: one block repeated `repeats` times with transitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackPlan<F> {
    pub block: BlockSpec,
    pub repeats: u32,
    /// Transition compression in (0, 1); the transition keeps
    /// `floor(compression * channels)` feature maps.
    pub compression: F,
    /// Input width of the first block.
    pub stem_channels: u64,
}

impl<F: Scalar> StackPlan<F> {
    /// Single block with the default 0.5 compression and a 24-channel stem.
    pub fn single(block: BlockSpec) -> Self {
        Self::stacked(block, 1)
    }

    pub fn stacked(block: BlockSpec, repeats: u32) -> Self {
        Self {
            block,
            repeats,
            compression: F::from_f64_lossy(0.5),
            stem_channels: 24,
        }
    }
}

/// Walks the channel recurrence for one block.
pub fn channel_trace(spec: &BlockSpec, input_channels: u64) -> ChannelTrace {
    assert!(input_channels >= 1, "input_channels must be positive");
    let mut per_layer_inputs = Vec::with_capacity(spec.len());
    let mut width = input_channels;
    for &growth in &spec.growth_rates {
        per_layer_inputs.push(width);
        width += u64::from(growth);
    }
    ChannelTrace {
        input_channels,
        per_layer_inputs,
        block_output_channels: width,
    }
}

/// Weight count of a stacked plan.
///
/// Each composite layer is batch norm plus a 3x3 convolution making `growth`
/// maps from `n_in` (`3*3*n_in*growth + 2*n_in`; conv biases are omitted as
/// usual when batch norm follows). Each transition between blocks is batch
/// norm plus a 1x1 convolution down to `floor(compression * n_out)` maps.
pub fn parameter_count<F: Scalar>(plan: &StackPlan<F>) -> u64 {
    assert!(plan.repeats >= 1, "a plan repeats its block at least once");
    let mut total = 0u64;
    let mut input = plan.stem_channels;
    for repeat in 0..plan.repeats {
        let trace = channel_trace(&plan.block, input);
        for (n_in, &growth) in trace.per_layer_inputs.iter().zip(&plan.block.growth_rates) {
            total += 9 * n_in * u64::from(growth) + 2 * n_in;
        }
        let n_out = trace.block_output_channels;
        if repeat + 1 < plan.repeats {
            let compressed = compressed_channels(n_out, plan.compression);
            total += n_out * compressed + 2 * n_out;
            input = compressed;
        }
    }
    total
}

/// `floor(compression * channels)`, kept at least 1.
pub fn compressed_channels<F: Scalar>(channels: u64, compression: F) -> u64 {
    let scaled = F::from_u64(channels).unwrap() * compression;
    scaled.floor().to_u64().unwrap_or(0).max(1)
}
