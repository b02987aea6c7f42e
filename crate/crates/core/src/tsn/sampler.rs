use rand::Rng;

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SamplingMode {
    TrainRandom,
    TestCenter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SegmentSampler {
    pub num_segments: usize,
    pub mode: SamplingMode,
    /// Frames per snippet.
    pub stack_length: usize,
}

impl Default for SegmentSampler {
    fn default() -> Self {
        SegmentSampler {
            num_segments: 3,
            mode: SamplingMode::TestCenter,
            stack_length: 5,
        }
    }
}

impl SegmentSampler {
    pub fn with_mode(self, mode: SamplingMode) -> Self {
        SegmentSampler { mode, ..self }
    }
}

/// `K` contiguous `[start, end)` segments of `n / K` frames; the last one
/// absorbs the remainder.
pub fn segment_bounds(num_frames: usize, k: usize) -> Vec<(usize, usize)> {
    let len = num_frames / k;
    (0..k)
        .map(|j| (j * len, if j + 1 == k { num_frames } else { (j + 1) * len }))
        .collect()
}

/// One snippet start per segment. Training draws uniformly among the valid
/// starts `[s, e - L]`; testing takes the middle one, rounding up.
pub fn sample_segments(num_frames: usize, sampler: &SegmentSampler, seed_value: u64) -> Result<Vec<usize>> {
    let (k, l) = (sampler.num_segments, sampler.stack_length);
    if k == 0 || l == 0 {
        return Err(Error::invalid("num_segments and stack_length must be positive"));
    }
    if num_frames < k * l {
        return Err(Error::data(format!(
            "clip of {num_frames} frames is shorter than {k} segments x {l} frames"
        )));
    }
    let mut rng = seed::rng(seed_value);
    Ok(segment_bounds(num_frames, k)
        .into_iter()
        .map(|(s, e)| {
            let last = e - l;
            match sampler.mode {
                SamplingMode::TestCenter => s + (last - s).div_ceil(2),
                SamplingMode::TrainRandom => rng.random_range(s..=last),
            }
        })
        .collect())
}
