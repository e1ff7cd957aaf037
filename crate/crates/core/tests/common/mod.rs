//! Independent reference implementations used as test oracles. They share
//! no code with the library beyond the input types.

#![allow(dead_code)]

use pmi_core::{Embedding, Requirement, Specification};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f32> {
    loop {
        let v: Vec<f32> = (0..dim).map(|_| (rng.random_range(-1.0..1.0) * scale) as f32).collect();
        if v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>() > 1e-4 {
            return v;
        }
    }
}

pub fn random_embeddings(rng: &mut ChaCha8Rng, n: usize, dim: usize, scale: f64) -> Vec<Embedding> {
    (0..n).map(|_| Embedding::new(random_vec(rng, dim, scale)).unwrap()).collect()
}

fn widen(e: &Embedding) -> Vec<f64> {
    e.values().iter().map(|&x| x as f64).collect()
}

pub fn rbf(x: &[f64], y: &[f64], gamma: f64) -> f64 {
    let mut s = 0.0;
    for i in 0..x.len() {
        let d = x[i] - y[i];
        s += d * d;
    }
    (-gamma * s).exp()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for i in 0..a.len() {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    ab / (aa.sqrt() * bb.sqrt())
}

/// Brute-force expansion of the task-specific RKHS distance: for every
/// example `i` with image `x_i` and caption `c_i`, weights `w_ij =
/// cos(q_j, c_i)` over the spec pairs `(z_j, q_j)`, and
/// `|| (1/N) sum_j w_ij phi(z_j) - phi(x_i) ||^2` expanded term by term,
/// averaged over examples. `uniform` forces every weight to 1.
pub fn pmi_oracle(spec: &Specification, req: &Requirement, gamma: f64, uniform: bool) -> f64 {
    let z: Vec<Vec<f64>> = spec.image_embeddings.iter().map(widen).collect();
    let q: Vec<Vec<f64>> = spec.prompt_embeddings.iter().map(widen).collect();
    let n = z.len() as f64;
    let mut total = 0.0;
    for (x, c) in req.image_embeddings.iter().zip(&req.caption_embeddings) {
        let x = widen(x);
        let c = widen(c);
        let w: Vec<f64> = q.iter().map(|qj| if uniform { 1.0 } else { cosine(qj, &c) }).collect();
        let mut quad = 0.0;
        for j in 0..z.len() {
            for l in 0..z.len() {
                quad += w[j] * w[l] * rbf(&z[j], &z[l], gamma);
            }
        }
        let mut cross = 0.0;
        for j in 0..z.len() {
            cross += w[j] * rbf(&z[j], &x, gamma);
        }
        total += quad / (n * n) - 2.0 * cross / n + rbf(&x, &x, gamma);
    }
    total / req.image_embeddings.len() as f64
}

/// `sum_i sum_j a_i b_j k(x_i, y_j)`.
pub fn kme_inner_oracle(xa: &[Vec<f64>], wa: &[f64], xb: &[Vec<f64>], wb: &[f64], gamma: f64) -> f64 {
    let mut s = 0.0;
    for i in 0..xa.len() {
        for j in 0..xb.len() {
            s += wa[i] * wb[j] * rbf(&xa[i], &xb[j], gamma);
        }
    }
    s
}

pub fn kme_sq_distance_oracle(xa: &[Vec<f64>], wa: &[f64], xb: &[Vec<f64>], wb: &[f64], gamma: f64) -> f64 {
    kme_inner_oracle(xa, wa, xa, wa, gamma) + kme_inner_oracle(xb, wb, xb, wb, gamma)
        - 2.0 * kme_inner_oracle(xa, wa, xb, wb, gamma)
}

/// Eigenvalues and eigenvectors (columns) of a symmetric matrix by cyclic
/// Jacobi rotations.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i][j] * m[i][j]).sum();
        let scale: f64 = (0..n).map(|i| m[i][i] * m[i][i]).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| m[i][i]).collect(), v)
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let k = b.len();
    let m = b[0].len();
    (0..n).map(|i| (0..m).map(|j| (0..k).map(|t| a[i][t] * b[t][j]).sum()).collect()).collect()
}

fn sym_sqrt(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (vals, vecs) = jacobi_eigen(a);
    let n = a.len();
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|k| vecs[i][k] * vals[k].max(0.0).sqrt() * vecs[j][k]).sum()).collect())
        .collect()
}

pub fn mean_cov(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = rows.len() as f64;
    let d = rows[0].len();
    let mu: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let cov = (0..d)
        .map(|a| (0..d).map(|b| rows.iter().map(|r| (r[a] - mu[a]) * (r[b] - mu[b])).sum::<f64>() / (n - 1.0)).collect())
        .collect();
    (mu, cov)
}

/// Fréchet distance via `Tr((A^{1/2} B A^{1/2})^{1/2})`, all square roots
/// from Jacobi eigendecompositions.
pub fn fid_oracle(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let (ma, ca) = mean_cov(a);
    let (mb, cb) = mean_cov(b);
    let sa = sym_sqrt(&ca);
    let mid = matmul(&matmul(&sa, &cb), &sa);
    let mid: Vec<Vec<f64>> = (0..mid.len()).map(|i| (0..mid.len()).map(|j| 0.5 * (mid[i][j] + mid[j][i])).collect()).collect();
    let (vals, _) = jacobi_eigen(&mid);
    let tr_sqrt: f64 = vals.iter().map(|v| v.max(0.0).sqrt()).sum();
    let diff: f64 = ma.iter().zip(&mb).map(|(x, y)| (x - y) * (x - y)).sum();
    let tr = |c: &Vec<Vec<f64>>| (0..c.len()).map(|i| c[i][i]).sum::<f64>();
    diff + tr(&ca) + tr(&cb) - 2.0 * tr_sqrt
}

pub fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, d: usize, shift: f64, mix: &[Vec<f64>]) -> Vec<Vec<f64>> {
    use rand_distr::{Distribution, StandardNormal};
    (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..d).map(|_| Distribution::<f64>::sample(&StandardNormal, rng)).collect();
            (0..d).map(|i| shift + (0..d).map(|j| mix[i][j] * z[j]).sum::<f64>()).collect()
        })
        .collect()
}

/// Ordinary least squares `y = a + b x`; returns `(a, b, r_squared)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(xi, yi)| (yi - a - b * xi).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|yi| (yi - my).powi(2)).sum();
    (a, b, 1.0 - ss_res / ss_tot)
}
