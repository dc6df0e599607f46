//! Reproducible Brownian increment streams.
//!
//! Every trial owns a ChaCha8 keystream selected by `(master_seed, trial_index)`:
//! the key is expanded from `master_seed` and the 64-bit stream id is the
//! trial index. ChaCha is counter-based, so the `k`-th increment of trial
//! `i` depends only on `(master_seed, i, k)` and never on thread scheduling.
//! Each standard normal consumes one `u64`, mapped to the open unit
//! interval and pushed through the inverse normal CDF.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Something that produces the increments `dW_n` of a `K`-dimensional driver.
pub trait IncrementSource {
    fn noise_dim(&self) -> usize;
    /// Writes the next increment into `out` (length `noise_dim`).
    fn next_increment(&mut self, out: &mut [f64]);
}

impl<S: IncrementSource + ?Sized> IncrementSource for &mut S {
    fn noise_dim(&self) -> usize {
        (**self).noise_dim()
    }
    fn next_increment(&mut self, out: &mut [f64]) {
        (**self).next_increment(out)
    }
}

/// Inverse of the standard normal CDF (Wichura, AS241 `PPND16`), accurate
/// to about 1e-16 relative error on `(0, 1)`.
#[allow(clippy::inconsistent_digit_grouping, clippy::excessive_precision)]
pub fn inverse_normal_cdf(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((2509.080_928_730_122_7 * r + 33430.575_583_588_13) * r + 67265.770_927_008_7) * r
                + 45921.953_931_549_87)
                * r
                + 13731.693_765_509_461)
                * r
                + 1971.590_950_306_551_4)
                * r
                + 133.141_667_891_784_38)
                * r
                + 3.387_132_872_796_366_5)
            / (((((((5226.495_278_852_545 * r + 28729.085_735_721_943) * r + 39307.895_800_092_71) * r
                + 21213.794_301_586_597)
                * r
                + 5394.196_021_424_751)
                * r
                + 687.187_007_492_057_9)
                * r
                + 42.313_330_701_600_91)
                * r
                + 1.0);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let r = (-tail.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        (((((((7.745_450_142_783_414e-4 * r + 0.022_723_844_989_269_184) * r + 0.241_780_725_177_450_6) * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_545)
            * r
            + 1.423_437_110_749_683_5)
            / (((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
                + 0.015_198_666_563_616_457)
                * r
                + 0.148_103_976_427_480_08)
                * r
                + 0.689_767_334_985_1)
                * r
                + 1.676_384_830_183_803_8)
                * r
                + 2.053_191_626_637_758_8)
                * r
                + 1.0)
    } else {
        let r = r - 5.0;
        (((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r + 0.001_242_660_947_388_078_4)
            * r
            + 0.026_532_189_526_576_124)
            * r
            + 0.296_560_571_828_504_9)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103)
            / (((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
                + 1.846_318_317_510_054_8e-5)
                * r
                + 7.868_691_311_456_133e-4)
                * r
                + 0.014_875_361_290_850_615)
                * r
                + 0.136_929_880_922_735_8)
                * r
                + 0.599_832_206_555_888)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// Maps 53 random bits to `(0, 1)` (never 0 or 1) and applies the inverse CDF.
#[inline]
pub fn standard_normal_from_bits(bits: u64) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    inverse_normal_cdf(((bits >> 11) as f64 + 0.5) * SCALE)
}

/// i.i.d. `N(0, delta I_K)` increments for one trial.
#[derive(Debug, Clone)]
pub struct GaussianStream {
    master_seed: u64,
    trial_index: u64,
    noise_dim: usize,
    delta: f64,
    sqrt_delta: f64,
    rng: ChaCha8Rng,
}

impl GaussianStream {
    pub fn new(master_seed: u64, trial_index: u64, noise_dim: usize, delta: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(trial_index);
        Self { master_seed, trial_index, noise_dim, delta, sqrt_delta: delta.sqrt(), rng }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn trial_index(&self) -> u64 {
        self.trial_index
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Same seed and trial, new variance per increment; restarts the stream.
    pub fn with_delta(&self, delta: f64) -> Self {
        Self::new(self.master_seed, self.trial_index, self.noise_dim, delta)
    }

    /// Rewinds to the first increment.
    pub fn reset(&mut self) {
        self.rng.set_word_pos(0);
    }

    /// Positions the stream so the next increment is the `k`-th (0-based).
    pub fn seek_increment(&mut self, k: u64) {
        // one u64 (two 32-bit words) per coordinate
        self.rng.set_word_pos(2 * k as u128 * self.noise_dim as u128);
    }

    /// Fills `out` with independent `N(0, delta)` draws.
    pub fn fill(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.sqrt_delta * standard_normal_from_bits(self.rng.next_u64());
        }
    }
}

impl IncrementSource for GaussianStream {
    fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    fn next_increment(&mut self, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.noise_dim);
        self.fill(out);
    }
}

/// Sums `factor` consecutive increments of a finer source, giving the
/// Brownian increments over a grid `factor` times coarser.
#[derive(Debug, Clone)]
pub struct AggregatedStream<S> {
    inner: S,
    factor: usize,
    buf: Vec<f64>,
}

impl<S: IncrementSource> AggregatedStream<S> {
    pub fn new(inner: S, factor: usize) -> Self {
        assert!(factor >= 1, "aggregation factor must be positive");
        let k = inner.noise_dim();
        Self { inner, factor, buf: vec![0.0; k] }
    }

    pub fn into_inner(self) -> S {
        self.inner
    }
}

impl<S: IncrementSource> IncrementSource for AggregatedStream<S> {
    fn noise_dim(&self) -> usize {
        self.inner.noise_dim()
    }

    fn next_increment(&mut self, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for _ in 0..self.factor {
            self.inner.next_increment(&mut self.buf);
            out.iter_mut().zip(&self.buf).for_each(|(o, b)| *o += b);
        }
    }
}

/// A driver that never moves.
#[derive(Debug, Clone, Copy)]
pub struct ZeroIncrements {
    pub noise_dim: usize,
}

impl IncrementSource for ZeroIncrements {
    fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    fn next_increment(&mut self, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Replays a fixed list of increments.
///
/// # Panics
/// `next_increment` panics once the list is exhausted.
#[derive(Debug, Clone)]
pub struct ScriptedIncrements {
    increments: Vec<Vec<f64>>,
    pos: usize,
}

impl ScriptedIncrements {
    pub fn new(increments: Vec<Vec<f64>>) -> Self {
        Self { increments, pos: 0 }
    }

    /// One-dimensional convenience constructor.
    pub fn scalar(increments: &[f64]) -> Self {
        Self::new(increments.iter().map(|&v| vec![v]).collect())
    }
}

impl IncrementSource for ScriptedIncrements {
    fn noise_dim(&self) -> usize {
        self.increments.first().map_or(0, Vec::len)
    }

    fn next_increment(&mut self, out: &mut [f64]) {
        let inc = self.increments.get(self.pos).expect("scripted increments exhausted");
        out.copy_from_slice(inc);
        self.pos += 1;
    }
}
