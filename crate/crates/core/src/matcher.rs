//! Task-specific matching and ranking.
//!
//! For a specification `{Z_m, Q_m}` and a requirement `{Z_τ, Q̂_τ}` the
//! matching distance is
//!
//! ```text
//! d(m, τ) = 1/N_τ Σ_i ‖ 1/N_m Σ_j w_ij k(z_j, ·) − k(z_i, ·) ‖²_H
//! w_ij    = cos(q_j, q̂_i)
//! ```
//!
//! Each term expands into `wᵀ K_m w / N_m² − 2 Σ_j w_j k(z_j, z_i) / N_m + k(z_i, z_i)`.
//! The Gram matrix `K_m` depends only on the specification and is computed
//! once per model by [`PreparedSpec`]. Lower distance is a better match;
//! API responses report `similarity = -distance`.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{clamp_nonnegative, kme_sq_distance, KernelConfig, PointSet, WeightedKmePoints};
use crate::scalar::{dot, tree_sum, Scalar};
use crate::types::{ModelRecord, RankedEntry, RankedResult, Requirement, Specification};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Task-specific weighted matching.
    Pmi,
    /// Same kernel distance with every weight fixed to 1 (ablation).
    Mms,
    /// Reduced-set KME of the spec images against the requirement images.
    Rkme,
    /// Download count, ignoring the requirement.
    #[serde(alias = "baseline")]
    DownloadBaseline,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Pmi, Method::Mms, Method::Rkme, Method::DownloadBaseline];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Pmi => "pmi",
            Method::Mms => "mms",
            Method::Rkme => "rkme",
            Method::DownloadBaseline => "baseline",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pmi" => Ok(Method::Pmi),
            "mms" | "pmi_unweighted" => Ok(Method::Mms),
            "rkme" => Ok(Method::Rkme),
            "baseline" | "download_baseline" | "downloads" => Ok(Method::DownloadBaseline),
            other => Err(Error::InvalidInput(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchOptions {
    /// Clamp negative cosine weights to zero. Off by default: negative
    /// weights push the mixture away from anti-matching prompts.
    #[serde(default)]
    pub clamp_weights: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Weighting {
    TaskSpecific { clamp: bool },
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchScore {
    pub model_id: String,
    pub distance: f64,
    pub method: Method,
}

/// Requirement widened to the kernel scalar, with caption norms cached.
#[derive(Clone, Debug)]
pub struct PreparedRequirement<T> {
    images: PointSet<T>,
    captions: PointSet<T>,
    caption_norms: Vec<T>,
}

impl<T: Scalar> PreparedRequirement<T> {
    pub fn new(req: &Requirement) -> Result<Self> {
        req.validate()?;
        let captions = PointSet::from_embeddings(&req.caption_embeddings)?;
        let caption_norms = captions.rows().map(|r: &[T]| dot(r, r).sqrt()).collect();
        Ok(PreparedRequirement {
            images: PointSet::from_embeddings(&req.image_embeddings)?,
            captions,
            caption_norms,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.images.dim()
    }

    pub fn images(&self) -> &PointSet<T> {
        &self.images
    }
}

/// Specification widened to the kernel scalar with its Gram matrix.
#[derive(Clone, Debug)]
pub struct PreparedSpec<T> {
    model_id: String,
    images: PointSet<T>,
    prompts: PointSet<T>,
    prompt_norms: Vec<T>,
    gram: Vec<T>,
    uniform_quad: T,
}

impl<T: Scalar> PreparedSpec<T> {
    pub fn new(spec: &Specification, cfg: &KernelConfig) -> Result<Self> {
        crate::types::validate_specification(spec)?;
        let images = PointSet::from_embeddings(&spec.image_embeddings)?;
        let prompts = PointSet::from_embeddings(&spec.prompt_embeddings)?;
        let prompt_norms = prompts.rows().map(|r: &[T]| dot(r, r).sqrt()).collect();
        let gram = images.gram(cfg);
        let ones = vec![T::one(); images.len()];
        let uniform_quad = quadratic_form(&gram, &ones);
        Ok(PreparedSpec {
            model_id: spec.model_id.clone(),
            images,
            prompts,
            prompt_norms,
            gram,
            uniform_quad,
        })
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.images.dim()
    }

    /// `w_j = cos(q_j, caption)` for every spec prompt.
    pub fn cosine_weights(&self, caption: &[T], caption_norm: T, clamp: bool) -> Vec<T> {
        self.prompts
            .rows()
            .zip(&self.prompt_norms)
            .map(|(q, &n)| {
                let w = dot(q, caption) / (n * caption_norm);
                if clamp && w < T::zero() {
                    T::zero()
                } else {
                    w
                }
            })
            .collect()
    }

    /// Distance term for one requirement example `i`.
    pub fn example_distance(
        &self,
        req: &PreparedRequirement<T>,
        i: usize,
        weighting: Weighting,
        cfg: &KernelConfig,
    ) -> T {
        let z = req.images.row(i);
        let n = T::of(self.len() as f64);
        let kz = self.images.kernel_column(z, cfg);
        let (quad, cross) = match weighting {
            Weighting::TaskSpecific { clamp } => {
                let w = self.cosine_weights(req.captions.row(i), req.caption_norms[i], clamp);
                (quadratic_form(&self.gram, &w), tree_sum(w.len(), |j| w[j] * kz[j]))
            }
            Weighting::Uniform => (self.uniform_quad, tree_sum(kz.len(), |j| kz[j])),
        };
        let d = quad / (n * n) - (cross + cross) / n + cfg.eval(z, z);
        clamp_nonnegative(d)
    }

    fn check_dim(&self, req: &PreparedRequirement<T>) -> Result<()> {
        if self.dim() != req.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: req.dim(),
            });
        }
        Ok(())
    }

    /// Mean of the per-example terms.
    pub fn distance(&self, req: &PreparedRequirement<T>, weighting: Weighting, cfg: &KernelConfig) -> Result<T> {
        self.check_dim(req)?;
        let terms: Vec<T> = (0..req.len()).map(|i| self.example_distance(req, i, weighting, cfg)).collect();
        Ok(mean_of_terms(&terms))
    }
}

/// Aggregates per-example distance terms into a requirement-level distance.
pub fn mean_of_terms<T: Scalar>(terms: &[T]) -> T {
    tree_sum(terms.len(), |i| terms[i]) / T::of(terms.len() as f64)
}

fn quadratic_form<T: Scalar>(gram: &[T], w: &[T]) -> T {
    let n = w.len();
    tree_sum(n, |a| w[a] * tree_sum(n, |b| gram[a * n + b] * w[b]))
}

pub fn weighting_for(method: Method, opts: &MatchOptions) -> Weighting {
    match method {
        Method::Mms => Weighting::Uniform,
        _ => Weighting::TaskSpecific {
            clamp: opts.clamp_weights,
        },
    }
}

/// Task-specific matching distance between a specification and a requirement.
pub fn pmi_score(spec: &Specification, req: &Requirement, cfg: &KernelConfig, opts: &MatchOptions) -> Result<f64> {
    let prepared = PreparedSpec::<f64>::new(spec, cfg)?;
    prepared.distance(&PreparedRequirement::new(req)?, weighting_for(Method::Pmi, opts), cfg)
}

/// [`pmi_score`] with every weight set to 1.
pub fn unweighted_score(spec: &Specification, req: &Requirement, cfg: &KernelConfig) -> Result<f64> {
    let prepared = PreparedSpec::<f64>::new(spec, cfg)?;
    prepared.distance(&PreparedRequirement::new(req)?, Weighting::Uniform, cfg)
}

/// Squared RKHS distance between a model's reduced-set KME and the uniform
/// empirical KME of the requirement images. Captions are not used.
pub fn rkme_score<T: Scalar>(reduced: &WeightedKmePoints<T>, req: &Requirement, cfg: &KernelConfig) -> Result<T> {
    let target = WeightedKmePoints::uniform(PointSet::from_embeddings(&req.image_embeddings)?)?;
    kme_sq_distance(reduced, &target, cfg)
}

/// Orders models by download count, most downloaded first; ties go to the
/// lower model id. Ranks are positions.
pub fn baseline_rank(records: &[ModelRecord]) -> Result<RankedResult> {
    if records.is_empty() {
        return Err(Error::EmptyRegistry);
    }
    let mut order: Vec<&ModelRecord> = records.iter().collect();
    order.sort_by(|a, b| {
        b.download_count
            .cmp(&a.download_count)
            .then_with(|| a.model_id.cmp(&b.model_id))
    });
    Ok(RankedResult {
        entries: order
            .iter()
            .enumerate()
            .map(|(pos, r)| RankedEntry {
                model_id: r.model_id.clone(),
                distance: -(r.download_count as f64),
                rank: pos + 1,
            })
            .collect(),
    })
}

/// Ranks by distance: `rank(m) = 1 + |{i : d_i < d_m}|`, so equal distances
/// share a rank. Output order is by `(distance, model_id)`.
pub fn rank_models(scores: &[MatchScore]) -> Result<RankedResult> {
    let mut seen = HashSet::with_capacity(scores.len());
    for s in scores {
        if !seen.insert(s.model_id.as_str()) {
            return Err(Error::DuplicateModelId(s.model_id.clone()));
        }
        if s.distance.is_nan() {
            return Err(Error::NonFiniteValue("match distance"));
        }
    }
    let mut order: Vec<&MatchScore> = scores.iter().collect();
    order.sort_by(|a, b| a.distance.total_cmp(&b.distance).then_with(|| a.model_id.cmp(&b.model_id)));
    let mut entries = Vec::with_capacity(order.len());
    let mut rank = 1;
    for (pos, s) in order.iter().enumerate() {
        if pos > 0 && s.distance != order[pos - 1].distance {
            rank = pos + 1;
        }
        entries.push(RankedEntry {
            model_id: s.model_id.clone(),
            distance: s.distance,
            rank,
        });
    }
    Ok(RankedResult { entries })
}

/// A hub model as seen by [`identify`].
pub trait Candidate {
    fn record(&self) -> &ModelRecord;

    fn prepared(&self) -> &PreparedSpec<f64>;

    fn reduced_set(&self, cfg: &KernelConfig) -> Result<&WeightedKmePoints<f64>>;
}

/// Scores every candidate, ranks and keeps the best `top_k`.
///
/// Work is one requirement preparation plus one scoring pass per model.
pub fn identify<C: Candidate>(
    req: &Requirement,
    candidates: &[C],
    method: Method,
    top_k: usize,
    cfg: &KernelConfig,
    opts: &MatchOptions,
) -> Result<RankedResult> {
    if candidates.is_empty() {
        return Err(Error::EmptyRegistry);
    }
    if top_k == 0 {
        return Err(Error::InvalidK(0));
    }
    let scores = score_candidates(req, candidates, method, cfg, opts)?;
    let ranked = match method {
        Method::DownloadBaseline => {
            let records: Vec<ModelRecord> = candidates.iter().map(|c| c.record().clone()).collect();
            baseline_rank(&records)?
        }
        _ => rank_models(&scores)?,
    };
    Ok(ranked.truncated(top_k))
}

/// One [`MatchScore`] per candidate, in candidate order.
pub fn score_candidates<C: Candidate>(
    req: &Requirement,
    candidates: &[C],
    method: Method,
    cfg: &KernelConfig,
    opts: &MatchOptions,
) -> Result<Vec<MatchScore>> {
    let score = |model_id: &str, distance: f64| MatchScore {
        model_id: model_id.to_owned(),
        distance,
        method,
    };
    match method {
        Method::Pmi | Method::Mms => {
            let prepared = PreparedRequirement::<f64>::new(req)?;
            let weighting = weighting_for(method, opts);
            candidates
                .iter()
                .map(|c| {
                    let d = c.prepared().distance(&prepared, weighting, cfg)?;
                    Ok(score(&c.record().model_id, d))
                })
                .collect()
        }
        Method::Rkme => {
            req.validate()?;
            candidates
                .iter()
                .map(|c| {
                    let d = rkme_score(c.reduced_set(cfg)?, req, cfg)?;
                    Ok(score(&c.record().model_id, d))
                })
                .collect()
        }
        Method::DownloadBaseline => Ok(candidates
            .iter()
            .map(|c| score(&c.record().model_id, -(c.record().download_count as f64)))
            .collect()),
    }
}
