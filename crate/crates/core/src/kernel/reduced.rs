//! Reduced-set approximation of an empirical KME.
//!
//! Finds `size` weighted centers whose mixture is close in RKHS norm to the
//! uniform mixture over the samples. Weights are solved in closed form for
//! fixed centers; centers move by gradient steps with backtracking so the
//! objective never increases.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{KernelConfig, PointSet, WeightedKmePoints};
use crate::error::{Error, Result};
use crate::scalar::{tree_sum, Scalar};
use crate::types::Embedding;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReducedSetOptions {
    pub max_iter: usize,
    pub rel_tol: f64,
    pub ridge: f64,
    pub seed: u64,
}

impl Default for ReducedSetOptions {
    fn default() -> Self {
        ReducedSetOptions {
            max_iter: 200,
            rel_tol: 1e-8,
            ridge: 1e-10,
            seed: 0,
        }
    }
}

struct Problem<'a, T> {
    samples: &'a PointSet<T>,
    cfg: &'a KernelConfig,
    /// `1/N`
    u: T,
    /// `u^T K_xx u`
    self_term: T,
    ridge: T,
}

impl<T: Scalar> Problem<'_, T> {
    /// `K_cx u`: mean kernel of every center against the samples.
    fn center_targets(&self, centers: &PointSet<T>) -> Vec<T> {
        centers
            .rows()
            .map(|c| self.u * tree_sum(self.samples.len(), |s| self.cfg.eval(c, self.samples.row(s))))
            .collect()
    }

    fn solve_weights(&self, centers: &PointSet<T>) -> (Vec<T>, Vec<T>, Vec<T>) {
        let r = centers.len();
        let mut k = centers.gram(self.cfg);
        let target = self.center_targets(centers);
        for i in 0..r {
            k[i * r + i] = k[i * r + i] + self.ridge;
        }
        let w = solve(k.clone(), target.clone(), r);
        (w, k, target)
    }

    fn objective(&self, w: &[T], k: &[T], target: &[T]) -> T {
        let r = w.len();
        let quad = tree_sum(r, |a| w[a] * tree_sum(r, |b| k[a * r + b] * w[b]));
        let cross = tree_sum(r, |a| w[a] * target[a]);
        quad - (cross + cross) + self.self_term
    }

    fn evaluate(&self, centers: &PointSet<T>) -> (Vec<T>, T) {
        let (w, k, target) = self.solve_weights(centers);
        let j = self.objective(&w, &k, &target);
        (w, j)
    }

    /// Gradient of the objective with respect to each center, weights fixed.
    fn gradient(&self, centers: &PointSet<T>, w: &[T]) -> Vec<T> {
        let r = centers.len();
        let d = centers.dim();
        let two_gamma = T::of(2.0 * self.cfg.gamma());
        let mut grad = vec![T::zero(); r * d];
        for a in 0..r {
            let ca = centers.row(a);
            let g = &mut grad[a * d..(a + 1) * d];
            // ∂k(c, y)/∂c = -2γ (c - y) k(c, y)
            for b in 0..r {
                if b == a {
                    continue;
                }
                let cb = centers.row(b);
                let f = -two_gamma * w[b] * self.cfg.eval(ca, cb);
                for t in 0..d {
                    g[t] = g[t] + f * (ca[t] - cb[t]);
                }
            }
            for s in 0..self.samples.len() {
                let x = self.samples.row(s);
                let f = two_gamma * self.u * self.cfg.eval(ca, x);
                for t in 0..d {
                    g[t] = g[t] + f * (ca[t] - x[t]);
                }
            }
            let scale = T::of(2.0) * w[a];
            for v in g.iter_mut() {
                *v = *v * scale;
            }
        }
        grad
    }
}

/// Gaussian elimination with partial pivoting on a dense `n x n` system.
fn solve<T: Scalar>(mut a: Vec<T>, mut b: Vec<T>, n: usize) -> Vec<T> {
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().partial_cmp(&a[j * n + col].abs()).unwrap())
            .unwrap();
        if pivot != col {
            for t in 0..n {
                a.swap(col * n + t, pivot * n + t);
            }
            b.swap(col, pivot);
        }
        let p = a[col * n + col];
        if p.abs() <= T::min_positive_value() {
            continue;
        }
        for row in col + 1..n {
            let f = a[row * n + col] / p;
            if f == T::zero() {
                continue;
            }
            for t in col..n {
                a[row * n + t] = a[row * n + t] - f * a[col * n + t];
            }
            b[row] = b[row] - f * b[col];
        }
    }
    let mut x = vec![T::zero(); n];
    for row in (0..n).rev() {
        let p = a[row * n + row];
        if p.abs() <= T::min_positive_value() {
            continue;
        }
        let mut s = b[row];
        for t in row + 1..n {
            s = s - a[row * n + t] * x[t];
        }
        x[row] = s / p;
    }
    x
}

/// Index of the sample with the largest mean kernel to all samples: the
/// best single center for a one-point reduced set.
fn herding_pick<T: Scalar>(samples: &PointSet<T>, cfg: &KernelConfig) -> usize {
    let n = samples.len();
    let mut best = 0;
    let mut best_val = T::neg_infinity();
    for i in 0..n {
        let v = tree_sum(n, |s| cfg.eval(samples.row(i), samples.row(s)));
        if v > best_val {
            best_val = v;
            best = i;
        }
    }
    best
}

/// k-means++ seeding in feature space, where the squared RKHS distance
/// between two RBF feature maps is `2 - 2 k(x, y)`.
fn seed_centers<T: Scalar>(samples: &PointSet<T>, size: usize, cfg: &KernelConfig, seed: u64) -> PointSet<T> {
    let n = samples.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![herding_pick(samples, cfg)];
    let mut d2: Vec<f64> = (0..n)
        .map(|s| 2.0 - 2.0 * cfg.eval(samples.row(s), samples.row(chosen[0])).as_f64())
        .collect();
    while chosen.len() < size {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            // every remaining sample coincides with a chosen center
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        } else {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &v) in d2.iter().enumerate() {
                if target < v {
                    pick = i;
                    break;
                }
                target -= v;
            }
            pick
        };
        chosen.push(next);
        for s in 0..n {
            let v = 2.0 - 2.0 * cfg.eval(samples.row(s), samples.row(next)).as_f64();
            if v < d2[s] {
                d2[s] = v.max(0.0);
            }
        }
    }
    let data = chosen.iter().flat_map(|&i| samples.row(i).to_vec()).collect();
    PointSet::new(samples.dim(), data).expect("rows taken from a valid point set")
}

/// Builds a `size`-point weighted approximation of the uniform empirical
/// KME of `samples`. When `size >= samples.len()` the samples themselves
/// with uniform weights are returned (so at most `samples.len()` points).
pub fn build_reduced_set<T: Scalar>(
    samples: &[Embedding],
    size: usize,
    cfg: &KernelConfig,
    opts: &ReducedSetOptions,
) -> Result<WeightedKmePoints<T>> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("reduced set samples"));
    }
    if size == 0 {
        return Err(Error::InvalidInput("reduced set size must be at least 1".into()));
    }
    let points = PointSet::<T>::from_embeddings(samples)?;
    let n = points.len();
    if size >= n {
        // the samples themselves represent the empirical KME exactly
        return WeightedKmePoints::uniform(points);
    }

    let u = T::one() / T::of(n as f64);
    let self_term = u * u * tree_sum(n, |i| tree_sum(n, |j| cfg.eval(points.row(i), points.row(j))));
    let problem = Problem {
        samples: &points,
        cfg,
        u,
        self_term,
        ridge: T::of(opts.ridge),
    };

    let mut centers = seed_centers(&points, size, cfg, opts.seed);
    let (mut w, mut obj) = problem.evaluate(&centers);
    let mut step = T::one();
    for _ in 0..opts.max_iter {
        let grad = problem.gradient(&centers, &w);
        if grad.iter().all(|g| *g == T::zero()) {
            break;
        }
        let mut accepted = None;
        for _ in 0..40 {
            let mut trial = centers.clone();
            for a in 0..size {
                let row = trial.row_mut(a);
                for (t, v) in row.iter_mut().enumerate() {
                    *v = *v - step * grad[a * points.dim() + t];
                }
            }
            let (tw, tobj) = problem.evaluate(&trial);
            if tobj.is_finite() && tobj < obj {
                accepted = Some((trial, tw, tobj));
                break;
            }
            step = step * T::of(0.5);
        }
        let Some((c, tw, tobj)) = accepted else { break };
        let improvement = (obj - tobj) / obj.abs().max(T::min_positive_value());
        centers = c;
        w = tw;
        obj = tobj;
        step = step * T::of(2.0);
        if improvement < T::of(opts.rel_tol) {
            break;
        }
    }
    WeightedKmePoints::new(centers, w)
}
