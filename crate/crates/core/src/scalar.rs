//! Scalar abstraction shared by the kernel, matching and metric code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type usable for kernel arithmetic: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal, rounding to the nearest representable value.
    fn of(v: f64) -> Self;

    /// Widens a stored `f32` embedding entry.
    fn of_f32(v: f32) -> Self;

    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn of_f32(v: f32) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }

    #[inline]
    fn of_f32(v: f32) -> Self {
        v as f64
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

const LEAF: usize = 8;

/// Pairwise (tree) summation of `f(i)` for `i` in `0..n`.
///
/// The split points depend only on `n`, so the result is independent of
/// how callers schedule work around it.
pub fn tree_sum<T: Scalar, F: Fn(usize) -> T>(n: usize, f: F) -> T {
    tree_sum_range(0, n, &f)
}

fn tree_sum_range<T: Scalar, F: Fn(usize) -> T>(lo: usize, hi: usize, f: &F) -> T {
    if hi - lo <= LEAF {
        let mut acc = T::zero();
        for i in lo..hi {
            acc = acc + f(i);
        }
        acc
    } else {
        let mid = lo + (hi - lo) / 2;
        tree_sum_range(lo, mid, f) + tree_sum_range(mid, hi, f)
    }
}

/// Pairwise summation of a slice.
pub fn pairwise_sum<T: Scalar>(xs: &[T]) -> T {
    tree_sum(xs.len(), |i| xs[i])
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        acc = acc + *x * *y;
    }
    acc
}

#[inline]
pub(crate) fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        let d = *x - *y;
        acc = acc + d * d;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_integers() {
        let xs: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 500_500.0);
        assert_eq!(pairwise_sum::<f64>(&[]), 0.0);
    }

    #[test]
    fn pairwise_beats_naive_on_small_terms() {
        // 1 + 1e-16 * n: the naive loop loses every small term.
        let n = 1 << 16;
        let mut xs = vec![1e-16f64; n];
        xs[0] = 1.0;
        let exact = 1.0 + 1e-16 * (n - 1) as f64;
        let naive: f64 = xs.iter().fold(0.0, |a, b| a + b);
        let tree = pairwise_sum(&xs);
        assert!((tree - exact).abs() < (naive - exact).abs());
    }
}
