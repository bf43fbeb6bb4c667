//! Iterative radix-2 FFT and line-wise transforms over tensor axes.
//!
//! Grids are restricted to power-of-two axis lengths, so a plain
//! Cooley-Tukey kernel with a precomputed twiddle table covers every
//! transform the crate needs. Transforms here are unnormalized; callers fold
//! the `1/n` or `1/sqrt(n)` factors into their own multipliers.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)] // std inherent methods shadow it when std is linked
use num_traits::Float;

use crate::C64;

/// Number of strided lines gathered together so that each cache line is
/// loaded once per batch.
const LINE_BATCH: usize = 8;

#[derive(Debug, Clone)]
pub struct FftPlan {
    n: usize,
    twiddles: Vec<C64>,
    bitrev: Vec<usize>,
}

impl FftPlan {
    /// Panics if `n` is not a power of two.
    pub fn new(n: usize) -> Self {
        assert!(n.is_power_of_two(), "FFT length {n} is not a power of two");
        let twiddles = (0..n / 2)
            .map(|k| {
                let theta = -2.0 * PI * (k as f64) / (n as f64);
                C64::new(theta.cos(), theta.sin())
            })
            .collect();
        let bits = n.trailing_zeros();
        let bitrev = (0..n)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) })
            .collect();
        Self { n, twiddles, bitrev }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `X_k = sum_j x_j exp(-2 pi i j k / n)`.
    pub fn forward(&self, buf: &mut [C64]) {
        self.run(buf, false);
    }

    /// `x_j = sum_k X_k exp(+2 pi i j k / n)`, without the `1/n`.
    pub fn backward(&self, buf: &mut [C64]) {
        self.run(buf, true);
    }

    fn run(&self, buf: &mut [C64], inverse: bool) {
        let n = self.n;
        debug_assert_eq!(buf.len(), n);
        for i in 0..n {
            let j = self.bitrev[i];
            if j > i {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let step = n / len;
            for start in (0..n).step_by(len) {
                let (lo, hi) = buf[start..start + len].split_at_mut(half);
                for k in 0..half {
                    let w = self.twiddles[k * step];
                    let w = if inverse { w.conj() } else { w };
                    let a = lo[k];
                    let b = hi[k] * w;
                    lo[k] = a + b;
                    hi[k] = a - b;
                }
            }
            len <<= 1;
        }
    }
}

/// Calls `f` on every line along `axis` of a row-major tensor with `rank`
/// axes of length `n`. Lines along strided axes are copied into a scratch
/// buffer and written back after `f` returns.
pub fn for_each_line<F>(values: &mut [C64], n: usize, rank: usize, axis: usize, mut f: F)
where
    F: FnMut(&mut [C64]),
{
    debug_assert!(axis < rank);
    let stride = n.pow((rank - 1 - axis) as u32);
    if stride == 1 {
        values.chunks_exact_mut(n).for_each(f);
        return;
    }
    let block = stride * n;
    let batch = LINE_BATCH.min(stride);
    let mut scratch = vec![C64::new(0.0, 0.0); n * batch];
    for chunk in values.chunks_exact_mut(block) {
        let mut i = 0;
        while i < stride {
            let b_len = batch.min(stride - i);
            for j in 0..n {
                let row = &chunk[j * stride + i..j * stride + i + b_len];
                for (b, v) in row.iter().enumerate() {
                    scratch[b * n + j] = *v;
                }
            }
            for line in scratch.chunks_exact_mut(n).take(b_len) {
                f(line);
            }
            for j in 0..n {
                let row = &mut chunk[j * stride + i..j * stride + i + b_len];
                for (b, v) in row.iter_mut().enumerate() {
                    *v = scratch[b * n + j];
                }
            }
            i += b_len;
        }
    }
}

/// Unitary transform along the listed axes: each 1-D transform is scaled by
/// `1/sqrt(n)`.
pub fn unitary_transform(
    plan: &FftPlan,
    values: &mut [C64],
    rank: usize,
    axes: core::ops::Range<usize>,
    inverse: bool,
) {
    let n = plan.len();
    let scale = 1.0 / (n as f64).sqrt();
    for axis in axes {
        for_each_line(values, n, rank, axis, |line| {
            if inverse {
                plan.backward(line);
            } else {
                plan.forward(line);
            }
            line.iter_mut().for_each(|v| *v *= scale);
        });
    }
}

/// Applies a Fourier multiplier that factorizes over axes:
/// for each axis, forward transform, multiply by `multipliers[axis]`, and
/// transform back. The multipliers must already contain the `1/n` factor.
pub fn apply_separable_multiplier(
    plan: &FftPlan,
    values: &mut [C64],
    rank: usize,
    multipliers: &[&[C64]],
) {
    debug_assert_eq!(multipliers.len(), rank);
    let n = plan.len();
    for (axis, mult) in multipliers.iter().enumerate() {
        for_each_line(values, n, rank, axis, |line| {
            plan.forward(line);
            line.iter_mut().zip(mult.iter()).for_each(|(v, m)| *v *= *m);
            plan.backward(line);
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn naive_dft(x: &[C64]) -> Vec<C64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, v)| {
                        let th = -2.0 * PI * ((j * k) % n) as f64 / n as f64;
                        *v * C64::new(th.cos(), th.sin())
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for &n in &[1usize, 2, 4, 8, 32, 128] {
            let x: Vec<C64> = (0..n)
                .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let mut y = x.clone();
            FftPlan::new(n).forward(&mut y);
            let z = naive_dft(&x);
            for (a, b) in y.iter().zip(&z) {
                assert!((a - b).norm() < 1e-11 * n as f64, "n={n}");
            }
            FftPlan::new(n).backward(&mut y);
            for (a, b) in y.iter().zip(&x) {
                assert!((a / n as f64 - b).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn strided_lines_visit_every_axis() {
        let n: usize = 4;
        let rank = 3;
        let mut v: Vec<C64> = (0..64).map(|i| C64::new(i as f64, 0.0)).collect();
        for axis in 0..rank {
            let stride = n.pow((rank - 1 - axis) as u32);
            let mut seen = Vec::new();
            for_each_line(&mut v, n, rank, axis, |line| {
                for w in line.windows(2) {
                    assert_eq!((w[1].re - w[0].re) as usize, stride);
                }
                seen.push(line[0].re as usize);
            });
            assert_eq!(seen.len(), 16);
        }
    }
}
