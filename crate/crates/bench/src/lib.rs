//! Deterministic inputs shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trailgrade::nn::Tensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("non-empty shape")
}

/// Input and kernel shapes of the three conv blocks for a window of
/// `window_points` and kernel length `kernel_len`.
pub fn conv_blocks(window_points: usize, kernel_len: usize) -> [([usize; 4], [usize; 4]); 3] {
    let h1 = window_points.div_ceil(2);
    let h2 = h1.div_ceil(2);
    [
        ([32, window_points, 4, 3], [kernel_len, 2, 3, 4]),
        ([32, h1, 4, 4], [kernel_len, 2, 4, 8]),
        ([32, h2, 4, 8], [kernel_len, 2, 8, 16]),
    ]
}
