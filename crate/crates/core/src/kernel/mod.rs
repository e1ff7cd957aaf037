//! RBF kernel, empirical kernel mean embeddings and RKHS distances between
//! weighted point mixtures.
//!
//! A weighted mixture `Σ_i w_i k(p_i, ·)` is represented by
//! [`WeightedKmePoints`]; inner products and squared distances between two
//! mixtures expand into pairwise kernel sums. All sums use pairwise
//! summation with split points fixed by the operand sizes, so results do not
//! depend on thread count.

mod reduced;

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{sq_dist, tree_sum, Scalar};
use crate::types::Embedding;

pub use reduced::{build_reduced_set, ReducedSetOptions};

pub const DEFAULT_GAMMA: f64 = 0.02;

/// RBF kernel `k(x, y) = exp(-gamma * |x - y|^2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernelConfig")]
pub struct KernelConfig {
    gamma: f64,
}

#[derive(Deserialize)]
struct RawKernelConfig {
    gamma: f64,
}

impl TryFrom<RawKernelConfig> for KernelConfig {
    type Error = Error;

    fn try_from(raw: RawKernelConfig) -> Result<Self> {
        KernelConfig::new(raw.gamma)
    }
}

impl KernelConfig {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidConfig(format!("gamma must be positive, got {gamma}")));
        }
        Ok(KernelConfig { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    #[inline]
    pub fn eval<T: Scalar>(&self, x: &[T], y: &[T]) -> T {
        rbf(x, y, T::of(self.gamma))
    }
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig { gamma: DEFAULT_GAMMA }
    }
}

#[inline]
pub fn rbf<T: Scalar>(x: &[T], y: &[T], gamma: T) -> T {
    (-gamma * sq_dist(x, y)).exp()
}

pub fn rbf_kernel(x: &Embedding, y: &Embedding, cfg: &KernelConfig) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            found: y.dim(),
        });
    }
    Ok(cfg.eval::<f64>(&x.widen(), &y.widen()))
}

/// Row-major set of points of equal dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> PointSet<T> {
    pub fn new(dim: usize, data: Vec<T>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidInput(format!(
                "{} values do not form rows of dimension {dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue("point set"));
        }
        Ok(PointSet { dim, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or(Error::EmptyInput("point set"))?;
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: r.len(),
            });
        }
        PointSet::new(dim, rows.concat())
    }

    pub fn from_embeddings(rows: &[Embedding]) -> Result<Self> {
        let dim = rows.first().map(Embedding::dim).ok_or(Error::EmptyInput("point set"))?;
        let mut data = Vec::with_capacity(dim * rows.len());
        for e in rows {
            if e.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: e.dim(),
                });
            }
            data.extend(e.values().iter().map(|&v| T::of_f32(v)));
        }
        Ok(PointSet { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.dim)
    }

    /// Symmetric Gram matrix, row-major `len x len`.
    pub fn gram(&self, cfg: &KernelConfig) -> Vec<T> {
        let n = self.len();
        let mut g = vec![T::zero(); n * n];
        for i in 0..n {
            g[i * n + i] = cfg.eval(self.row(i), self.row(i));
            for j in 0..i {
                let v = cfg.eval(self.row(i), self.row(j));
                g[i * n + j] = v;
                g[j * n + i] = v;
            }
        }
        g
    }

    /// `k(p_i, x)` for every row `p_i`.
    pub fn kernel_column(&self, x: &[T], cfg: &KernelConfig) -> Vec<T> {
        self.rows().map(|p| cfg.eval(p, x)).collect()
    }
}

/// Weighted mixture `Σ_i w_i k(p_i, ·)` in the RKHS.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedKmePoints<T> {
    points: PointSet<T>,
    weights: Vec<T>,
}

impl<T: Scalar> WeightedKmePoints<T> {
    pub fn new(points: PointSet<T>, weights: Vec<T>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::MismatchedLengths {
                what: "points/weights",
                left: points.len(),
                right: weights.len(),
            });
        }
        if weights.is_empty() {
            return Err(Error::EmptyInput("weighted points"));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFiniteValue("weights"));
        }
        Ok(WeightedKmePoints { points, weights })
    }

    /// Empirical KME: uniform weights `1/N`.
    pub fn uniform(points: PointSet<T>) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::EmptyInput("weighted points"));
        }
        let w = T::one() / T::of(n as f64);
        WeightedKmePoints::new(points, vec![w; n])
    }

    pub fn from_embeddings(points: &[Embedding], weights: Vec<T>) -> Result<Self> {
        WeightedKmePoints::new(PointSet::from_embeddings(points)?, weights)
    }

    pub fn single(point: Vec<T>, weight: T) -> Result<Self> {
        let dim = point.len();
        WeightedKmePoints::new(PointSet::new(dim, point)?, vec![weight])
    }

    pub fn points(&self) -> &PointSet<T> {
        &self.points
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }
}

fn check_dims<T: Scalar>(a: &WeightedKmePoints<T>, b: &WeightedKmePoints<T>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(())
}

/// `⟨a, b⟩_H = Σ_i Σ_j a.w_i b.w_j k(a.p_i, b.p_j)`.
pub fn kme_inner<T: Scalar>(a: &WeightedKmePoints<T>, b: &WeightedKmePoints<T>, cfg: &KernelConfig) -> Result<T> {
    check_dims(a, b)?;
    Ok(inner_unchecked(a, b, cfg))
}

fn inner_unchecked<T: Scalar>(a: &WeightedKmePoints<T>, b: &WeightedKmePoints<T>, cfg: &KernelConfig) -> T {
    tree_sum(a.len(), |i| {
        let pi = a.points.row(i);
        a.weights[i] * tree_sum(b.len(), |j| b.weights[j] * cfg.eval(pi, b.points.row(j)))
    })
}

static CLAMP_EVENTS: AtomicU64 = AtomicU64::new(0);

/// Number of times [`kme_sq_distance`] clamped a negative rounding result
/// to zero in this process.
pub fn clamp_events() -> u64 {
    CLAMP_EVENTS.load(Ordering::Relaxed)
}

/// `⟨a,a⟩ - 2⟨a,b⟩ + ⟨b,b⟩` without clamping.
pub fn kme_sq_distance_unclamped<T: Scalar>(
    a: &WeightedKmePoints<T>,
    b: &WeightedKmePoints<T>,
    cfg: &KernelConfig,
) -> Result<T> {
    check_dims(a, b)?;
    let aa = inner_unchecked(a, a, cfg);
    let ab = inner_unchecked(a, b, cfg);
    let bb = inner_unchecked(b, b, cfg);
    Ok(aa - (ab + ab) + bb)
}

/// Squared RKHS distance between two mixtures, clamped at zero.
pub fn kme_sq_distance<T: Scalar>(a: &WeightedKmePoints<T>, b: &WeightedKmePoints<T>, cfg: &KernelConfig) -> Result<T> {
    kme_sq_distance_unclamped(a, b, cfg).map(clamp_nonnegative)
}

pub(crate) fn clamp_nonnegative<T: Scalar>(d: T) -> T {
    if d < T::zero() {
        CLAMP_EVENTS.fetch_add(1, Ordering::Relaxed);
        log::trace!("clamped negative squared distance {d}");
        T::zero()
    } else {
        d
    }
}
