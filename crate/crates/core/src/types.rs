//! Domain types shared by every stage of the hub: embeddings, prompt sets,
//! model specifications, user requirements and ranked results.
//!
//! All types are immutable once validated and can be shared across threads
//! freely.

use std::collections::HashSet;
use std::fmt;

use base64::Engine as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A point in the shared image/text matching space.
///
/// Stored as `f32`, widened to the kernel scalar on use. Entries are always
/// finite; zero vectors are representable but rejected by specification and
/// requirement validation.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f32>", into = "Vec<f32>")]
pub struct Embedding(Vec<f32>);

impl Embedding {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("embedding"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue("embedding"));
        }
        Ok(Embedding(values))
    }

    /// Builds an L2-normalized embedding. The norm is computed in `f64`.
    pub fn unit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("embedding"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue("embedding"));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroVector);
        }
        Ok(Embedding(values.iter().map(|v| (v / norm) as f32).collect()))
    }

    pub fn normalized(&self) -> Result<Self> {
        let wide: Vec<f64> = self.widen();
        Embedding::unit(&wide)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    pub fn widen<T: Scalar>(&self) -> Vec<T> {
        self.0.iter().map(|&v| T::of_f32(v)).collect()
    }

    /// Cosine similarity computed in `f64`.
    pub fn cosine(&self, other: &Embedding) -> f64 {
        let dot: f64 = self
            .0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum();
        dot / (self.norm() * other.norm())
    }
}

impl fmt::Debug for Embedding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Embedding(dim={}, {:?})", self.0.len(), &self.0[..self.0.len().min(4)])
    }
}

impl TryFrom<Vec<f32>> for Embedding {
    type Error = Error;

    fn try_from(values: Vec<f32>) -> Result<Self> {
        Embedding::new(values)
    }
}

impl From<Embedding> for Vec<f32> {
    fn from(e: Embedding) -> Self {
        e.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptOrigin {
    Default,
    DeveloperProvided,
}

/// An ordered, duplicate-free, non-empty list of prompts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPromptSet")]
pub struct PromptSet {
    prompts: Vec<String>,
    origin: PromptOrigin,
}

#[derive(Deserialize)]
struct RawPromptSet {
    prompts: Vec<String>,
    origin: PromptOrigin,
}

impl TryFrom<RawPromptSet> for PromptSet {
    type Error = Error;

    fn try_from(raw: RawPromptSet) -> Result<Self> {
        PromptSet::new(raw.prompts, raw.origin)
    }
}

impl PromptSet {
    pub fn new(prompts: Vec<String>, origin: PromptOrigin) -> Result<Self> {
        if prompts.is_empty() {
            return Err(Error::EmptyPromptSet);
        }
        let mut seen = HashSet::with_capacity(prompts.len());
        for p in &prompts {
            if !seen.insert(p.as_str()) {
                return Err(Error::DuplicatePrompt(p.clone()));
            }
        }
        Ok(PromptSet { prompts, origin })
    }

    pub fn prompts(&self) -> &[String] {
        &self.prompts
    }

    pub fn origin(&self) -> PromptOrigin {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }
}

/// Functionality summary of one model: paired image and prompt embeddings.
///
/// `image_embeddings[j]` was generated from the prompt whose embedding is
/// `prompt_embeddings[j]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Specification {
    pub model_id: String,
    pub image_embeddings: Vec<Embedding>,
    pub prompt_embeddings: Vec<Embedding>,
    pub prompt_origin: PromptOrigin,
    /// Whether every embedding was L2-normalized at ingestion.
    pub normalized: bool,
}

impl Specification {
    /// Validates and L2-normalizes the given pairs.
    pub fn ingest(
        model_id: impl Into<String>,
        image_embeddings: Vec<Embedding>,
        prompt_embeddings: Vec<Embedding>,
        prompt_origin: PromptOrigin,
    ) -> Result<Self> {
        let raw = Specification {
            model_id: model_id.into(),
            image_embeddings,
            prompt_embeddings,
            prompt_origin,
            normalized: false,
        };
        validate_specification(&raw)?;
        let norm = |v: Vec<Embedding>| v.iter().map(Embedding::normalized).collect::<Result<Vec<_>>>();
        Ok(Specification {
            image_embeddings: norm(raw.image_embeddings)?,
            prompt_embeddings: norm(raw.prompt_embeddings)?,
            normalized: true,
            ..raw
        })
    }

    /// Validates the pairs and keeps them as given.
    pub fn unnormalized(
        model_id: impl Into<String>,
        image_embeddings: Vec<Embedding>,
        prompt_embeddings: Vec<Embedding>,
        prompt_origin: PromptOrigin,
    ) -> Result<Self> {
        let spec = Specification {
            model_id: model_id.into(),
            image_embeddings,
            prompt_embeddings,
            prompt_origin,
            normalized: false,
        };
        validate_specification(&spec)?;
        Ok(spec)
    }

    pub fn len(&self) -> usize {
        self.image_embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image_embeddings.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.image_embeddings.first().map_or(0, Embedding::dim)
    }
}

fn check_pairs(what: &'static str, left: &[Embedding], right: &[Embedding]) -> Result<usize> {
    if left.len() != right.len() {
        return Err(Error::MismatchedLengths {
            what,
            left: left.len(),
            right: right.len(),
        });
    }
    let first = left.first().ok_or(Error::EmptyPromptSet)?;
    let dim = first.dim();
    for e in left.iter().chain(right) {
        if e.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: e.dim(),
            });
        }
        if e.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue(what));
        }
        if e.is_zero() {
            return Err(Error::ZeroVector);
        }
    }
    Ok(dim)
}

/// Checks every specification invariant.
pub fn validate_specification(spec: &Specification) -> Result<()> {
    if spec.model_id.is_empty() {
        return Err(Error::InvalidInput("empty model id".into()));
    }
    check_pairs("specification", &spec.image_embeddings, &spec.prompt_embeddings)?;
    Ok(())
}

/// User-side counterpart of a [`Specification`]: example image embeddings
/// and the embeddings of their generated captions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Requirement {
    pub image_embeddings: Vec<Embedding>,
    pub caption_embeddings: Vec<Embedding>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub captions: Option<Vec<String>>,
}

impl Requirement {
    pub fn new(image_embeddings: Vec<Embedding>, caption_embeddings: Vec<Embedding>) -> Result<Self> {
        let req = Requirement {
            image_embeddings,
            caption_embeddings,
            captions: None,
        };
        req.validate()?;
        Ok(req)
    }

    pub fn with_captions(mut self, captions: Vec<String>) -> Result<Self> {
        if captions.len() != self.len() {
            return Err(Error::MismatchedLengths {
                what: "captions",
                left: self.len(),
                right: captions.len(),
            });
        }
        self.captions = Some(captions);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        check_pairs("requirement", &self.image_embeddings, &self.caption_embeddings)
            .map_err(|e| match e {
                Error::EmptyPromptSet => Error::EmptyInput("requirement"),
                other => other,
            })?;
        if let Some(c) = &self.captions {
            if c.len() != self.len() {
                return Err(Error::MismatchedLengths {
                    what: "captions",
                    left: self.len(),
                    right: c.len(),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.image_embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image_embeddings.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.image_embeddings.first().map_or(0, Embedding::dim)
    }
}

/// Hub entry: metadata plus the assigned specification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub model_id: String,
    pub display_name: String,
    pub download_count: u64,
    #[serde(default)]
    pub tags: Vec<String>,
    pub specification: Specification,
}

/// Opaque encoded image bytes. Serialized as standard base64.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ImagePayload(pub Vec<u8>);

impl ImagePayload {
    pub fn bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn to_base64(&self) -> String {
        base64::engine::general_purpose::STANDARD.encode(&self.0)
    }

    pub fn from_base64(s: &str) -> Result<Self> {
        base64::engine::general_purpose::STANDARD
            .decode(s)
            .map(ImagePayload)
            .map_err(|e| Error::MalformedPayload(format!("base64: {e}")))
    }
}

impl fmt::Debug for ImagePayload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ImagePayload({} bytes)", self.0.len())
    }
}

impl Serialize for ImagePayload {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_base64())
    }
}

impl<'de> Deserialize<'de> for ImagePayload {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        ImagePayload::from_base64(&s).map_err(serde::de::Error::custom)
    }
}

/// One user example: either an image to be encoded and captioned, or an
/// already encoded (image, caption) pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleInput {
    Image(ImagePayload),
    PreEncoded { image: Embedding, caption: Embedding },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentificationTask {
    pub task_id: String,
    pub example_inputs: Vec<ExampleInput>,
    pub true_model_id: String,
    pub ground_truth_prompt: String,
    pub seed: u64,
}

impl IdentificationTask {
    pub fn validate(&self) -> Result<()> {
        if self.example_inputs.is_empty() {
            return Err(Error::EmptyInput("identification task examples"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub model_id: String,
    /// Lower is better. Squared RKHS distance for kernel methods.
    pub distance: f64,
    pub rank: usize,
}

impl RankedEntry {
    pub fn similarity(&self) -> f64 {
        -self.distance
    }
}

/// Models in best-first order together with their ranks.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub entries: Vec<RankedEntry>,
}

impl RankedResult {
    pub fn rank_of(&self, model_id: &str) -> Option<usize> {
        self.entries.iter().find(|e| e.model_id == model_id).map(|e| e.rank)
    }

    pub fn best(&self) -> Option<&RankedEntry> {
        self.entries.first()
    }

    pub fn truncated(mut self, top_k: usize) -> Self {
        self.entries.truncate(top_k);
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
