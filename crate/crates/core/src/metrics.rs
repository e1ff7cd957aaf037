//! Evaluation metrics: top-k accuracy, average rank and Fréchet distance
//! between Gaussian fits of two feature sets.

use nalgebra::{DMatrix, DVector, RealField};
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::codec::FeatureMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn check_ranks(ranks: &[usize]) -> Result<()> {
    if ranks.is_empty() {
        return Err(Error::EmptyInput("ranks"));
    }
    if ranks.contains(&0) {
        return Err(Error::InvalidInput("ranks start at 1".into()));
    }
    Ok(())
}

/// Fraction of tasks whose true model ranks within the first `k`.
pub fn topk_accuracy(true_ranks: &[usize], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidK(k));
    }
    check_ranks(true_ranks)?;
    let hits = true_ranks.iter().filter(|&&r| r <= k).count();
    Ok(hits as f64 / true_ranks.len() as f64)
}

pub fn average_rank(true_ranks: &[usize]) -> Result<f64> {
    check_ranks(true_ranks)?;
    Ok(true_ranks.iter().map(|&r| r as f64).sum::<f64>() / true_ranks.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `accuracy[k - 1]` is the top-k accuracy.
    pub accuracy: Vec<f64>,
    pub average_rank: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fid: Option<f64>,
    pub task_count: usize,
}

impl EvalReport {
    pub fn from_ranks(true_ranks: &[usize], max_k: usize, fid: Option<f64>) -> Result<Self> {
        let accuracy = (1..=max_k)
            .map(|k| topk_accuracy(true_ranks, k))
            .collect::<Result<Vec<_>>>()?;
        Ok(EvalReport {
            accuracy,
            average_rank: average_rank(true_ranks)?,
            fid,
            task_count: true_ranks.len(),
        })
    }

    pub fn top1(&self) -> f64 {
        self.accuracy[0]
    }
}

/// Column means and unbiased (N-1) covariance of the rows of `x`.
pub fn mean_and_covariance<T: Scalar + RealField>(x: &DMatrix<T>) -> Result<(DVector<T>, DMatrix<T>)> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::DegenerateInput(format!("need at least 2 samples, got {n}")));
    }
    let nt = T::of(n as f64);
    let mean = DVector::from_fn(x.ncols(), |j, _| x.column(j).iter().copied().sum::<T>() / nt);
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v -= mean[j];
        }
    }
    let cov = centered.transpose() * &centered / T::of((n - 1) as f64);
    Ok((mean, cov))
}

/// Square root of a symmetric positive semi-definite matrix; negative
/// eigenvalues from rounding are clamped to zero.
pub fn psd_sqrt<T: Scalar + RealField>(m: &DMatrix<T>) -> Result<DMatrix<T>> {
    let sym = (m + m.transpose()) * T::of(0.5);
    if sym.iter().any(|v| !Float::is_finite(*v)) {
        return Err(Error::NumericalFailure("non-finite matrix entry".into()));
    }
    let eig = sym.symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| Float::sqrt(Float::max(l, T::zero())));
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}


/// `tr((A B)^{1/2})` for PSD `A`, `B`, through the symmetric matrix
/// `A^{1/2} B A^{1/2}`, which has the same eigenvalues as `A B`.
pub fn trace_sqrt_product<T: Scalar + RealField>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<T> {
    let sa = psd_sqrt(a)?;
    let inner = &sa * b * &sa;
    let root = psd_sqrt(&inner)?;
    let tr = root.trace();
    if !Float::is_finite(tr) {
        return Err(Error::NumericalFailure("trace of matrix square root is not finite".into()));
    }
    Ok(tr)
}

/// Explicit `(A B)^{1/2} = A^{1/2} (A^{1/2} B A^{1/2})^{1/2} A^{-1/2}`.
///
/// `A` gets an `eps = 1e-10` diagonal offset when it is near-singular.
pub fn sqrt_product<T: Scalar + RealField>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<DMatrix<T>> {
    let eps = T::of(1e-10);
    let mut a_reg = a.clone();
    let min_eig = (a + a.transpose()).scale(T::of(0.5)).symmetric_eigenvalues().min();
    if min_eig <= eps {
        for i in 0..a_reg.nrows() {
            a_reg[(i, i)] += eps;
        }
    }
    let sa = psd_sqrt(&a_reg)?;
    let inner = &sa * b * &sa;
    let root = psd_sqrt(&inner)?;
    let sa_inv = sa
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NumericalFailure("matrix square root is singular".into()))?;
    let s = &sa * root * sa_inv;
    if s.iter().any(|v| !Float::is_finite(*v)) {
        return Err(Error::NumericalFailure("matrix square root diverged".into()));
    }
    Ok(s)
}

/// Fréchet distance between two Gaussians.
pub fn frechet_distance_gaussians<T: Scalar + RealField>(
    mean_a: &DVector<T>,
    cov_a: &DMatrix<T>,
    mean_b: &DVector<T>,
    cov_b: &DMatrix<T>,
) -> Result<T> {
    if mean_a.len() != mean_b.len() || cov_a.nrows() != cov_b.nrows() || cov_a.nrows() != mean_a.len() {
        return Err(Error::DimensionMismatch {
            expected: mean_a.len(),
            found: mean_b.len(),
        });
    }
    let diff = mean_a - mean_b;
    let tr_sqrt = match trace_sqrt_product(cov_a, cov_b) {
        Ok(t) => t,
        Err(_) => {
            let eps = T::of(1e-10);
            let offset = DMatrix::<T>::identity(cov_a.nrows(), cov_a.ncols()) * eps;
            trace_sqrt_product(&(cov_a + &offset), &(cov_b + &offset))?
        }
    };
    let d = diff.dot(&diff) + cov_a.trace() + cov_b.trace() - (tr_sqrt + tr_sqrt);
    if !Float::is_finite(d) {
        return Err(Error::NumericalFailure("Fréchet distance is not finite".into()));
    }
    Ok(Float::max(d, T::zero()))
}

/// `‖μ_a − μ_b‖² + Tr(Σ_a + Σ_b − 2 (Σ_a Σ_b)^{1/2})` over the rows of two
/// feature matrices.
pub fn frechet_distance<T: Scalar + RealField>(features_a: &DMatrix<T>, features_b: &DMatrix<T>) -> Result<T> {
    if features_a.ncols() != features_b.ncols() {
        return Err(Error::DimensionMismatch {
            expected: features_a.ncols(),
            found: features_b.ncols(),
        });
    }
    let (ma, ca) = mean_and_covariance(features_a)?;
    let (mb, cb) = mean_and_covariance(features_b)?;
    frechet_distance_gaussians(&ma, &ca, &mb, &cb)
}

pub fn frechet_distance_features(a: &FeatureMatrix, b: &FeatureMatrix) -> Result<f64> {
    frechet_distance(&a.to_dmatrix(), &b.to_dmatrix())
}
