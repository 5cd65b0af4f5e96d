//! Random patch masking; only the visible patches reach the encoder.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Result, SegError};

/// Disjoint, sorted partition of `0..num_patches`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaeMask {
    pub visible: Vec<usize>,
    pub masked: Vec<usize>,
}

/// Uniformly random partition with `round(mask_ratio * num_patches)` masked
/// patches, reproducible for a fixed seed.
pub fn mae_mask(num_patches: usize, mask_ratio: f64, seed: u64) -> Result<MaeMask> {
    if num_patches == 0 {
        return Err(SegError::InvalidArgument("num_patches must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&mask_ratio) {
        return Err(SegError::InvalidArgument(format!("mask ratio {mask_ratio} outside [0, 1)")));
    }
    let n_masked = (mask_ratio * num_patches as f64).round() as usize;
    let mut order: Vec<usize> = (0..num_patches).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut masked = order[..n_masked].to_vec();
    let mut visible = order[n_masked..].to_vec();
    masked.sort_unstable();
    visible.sort_unstable();
    Ok(MaeMask { visible, masked })
}
