//! Seeded random source shared by every stochastic operation.
//!
//! All randomness flows through [`RngStream`], a counter-based ChaCha8
//! generator addressed by a `(seed, stream_id)` pair. The same pair always
//! produces the same sample sequence, independent of platform word size or
//! thread count; parallel consumers get reproducibility by deriving one
//! stream per work item instead of sharing a generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::tensor::{Shape, Tensor};

/// A deterministic random stream identified by `(seed, stream_id)`.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A fresh stream for work item `index` under the same seed.
    ///
    /// Used for per-image noise during corpus processing and evaluation so
    /// that items can be processed in any order (or in parallel) while the
    /// result stays byte-identical.
    pub fn for_item(seed: u64, index: u64) -> Self {
        RngStream::new(seed, splitmix64(index.wrapping_add(1)))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.gen()
    }

    /// Uniform sample in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// One standard normal sample.
    pub fn next_normal(&mut self) -> f64 {
        // Finite sigma=1 never fails.
        Normal::new(0.0f64, 1.0).unwrap().sample(&mut self.rng)
    }

    /// Uniform integer in `[0, n)`.
    pub fn next_below(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }

    /// Tensor of i.i.d. normal samples. `sigma = 0` yields a constant tensor
    /// without consuming any stream state.
    pub fn normal_tensor(&mut self, shape: Shape, mean: f32, sigma: f32) -> Tensor {
        assert!(sigma >= 0.0, "sigma must be non-negative");
        if sigma == 0.0 {
            return Tensor::full(shape, mean);
        }
        let dist = Normal::new(mean as f64, sigma as f64).unwrap();
        let data = (0..shape.len())
            .map(|_| dist.sample(&mut self.rng) as f32)
            .collect();
        Tensor::from_vec(shape, data).expect("normal samples are finite")
    }

    /// Tensor of i.i.d. uniform samples in `[lo, hi)` (`lo` when degenerate).
    pub fn uniform_tensor(&mut self, shape: Shape, lo: f32, hi: f32) -> Tensor {
        assert!(lo <= hi, "lo must not exceed hi");
        if lo == hi {
            return Tensor::full(shape, lo);
        }
        let dist = Uniform::new(lo as f64, hi as f64);
        let data = (0..shape.len())
            .map(|_| dist.sample(&mut self.rng) as f32)
            .collect();
        Tensor::from_vec(shape, data).expect("uniform samples are finite")
    }

    /// Uniform sample in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if lo == hi {
            return lo;
        }
        self.rng.gen_range(lo..hi)
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.rng.gen_range(0..=i);
            items.swap(i, j);
        }
    }

    /// `count` distinct indices drawn without replacement from `[0, n)`.
    ///
    /// Partial Fisher-Yates: O(n) memory, O(count) swaps.
    pub fn sample_indices(&mut self, n: usize, count: usize) -> Vec<usize> {
        assert!(count <= n, "cannot sample {count} of {n} without replacement");
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..count {
            let j = self.rng.gen_range(i..n);
            pool.swap(i, j);
        }
        pool.truncate(count);
        pool
    }
}

/// SplitMix64 finalizer; used to spread work-item indices into stream ids.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
