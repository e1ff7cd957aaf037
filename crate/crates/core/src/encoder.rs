//! Client-side interface to text encoders, vision encoders and captioners.
//!
//! Two in-process implementations live here: [`MockEncoder`], a pure
//! function of input bytes and profile name, and [`StructuredMockEncoder`],
//! which places tagged inputs near declared cluster means. The HTTP client
//! for remote encoder services is in the hub crate and implements the same
//! [`Encoder`] trait.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::types::{Embedding, ImagePayload};

/// Largest batch sent in one wire request.
pub const MAX_BATCH: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Mock,
    Remote,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderProfile {
    pub name: String,
    pub embedding_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    pub kind: EncoderKind,
}

impl EncoderProfile {
    pub fn mock(name: impl Into<String>, embedding_dim: usize) -> Self {
        EncoderProfile {
            name: name.into(),
            embedding_dim,
            endpoint: None,
            kind: EncoderKind::Mock,
        }
    }

    pub fn remote(name: impl Into<String>, embedding_dim: usize, endpoint: impl Into<String>) -> Self {
        EncoderProfile {
            name: name.into(),
            embedding_dim,
            endpoint: Some(endpoint.into()),
            kind: EncoderKind::Remote,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 {
            return Err(Error::InvalidConfig("embedding_dim must be at least 1".into()));
        }
        if self.kind == EncoderKind::Remote && self.endpoint.as_deref().is_none_or(str::is_empty) {
            return Err(Error::InvalidConfig(format!("remote profile {:?} has no endpoint", self.name)));
        }
        Ok(())
    }
}

/// Text encoder, vision encoder and captioner behind one profile.
///
/// Every returned embedding has `profile().embedding_dim` entries and unit
/// L2 norm.
pub trait Encoder: Send + Sync {
    fn profile(&self) -> &EncoderProfile;

    fn encode_texts(&self, texts: &[String]) -> Result<Vec<Embedding>>;

    fn encode_images(&self, images: &[ImagePayload]) -> Result<Vec<Embedding>>;

    fn caption_images(&self, images: &[ImagePayload]) -> Result<Vec<String>>;
}

impl<E: Encoder + ?Sized> Encoder for Box<E> {
    fn profile(&self) -> &EncoderProfile {
        (**self).profile()
    }

    fn encode_texts(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        (**self).encode_texts(texts)
    }

    fn encode_images(&self, images: &[ImagePayload]) -> Result<Vec<Embedding>> {
        (**self).encode_images(images)
    }

    fn caption_images(&self, images: &[ImagePayload]) -> Result<Vec<String>> {
        (**self).caption_images(images)
    }
}

impl<E: Encoder + ?Sized> Encoder for std::sync::Arc<E> {
    fn profile(&self) -> &EncoderProfile {
        (**self).profile()
    }

    fn encode_texts(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        (**self).encode_texts(texts)
    }

    fn encode_images(&self, images: &[ImagePayload]) -> Result<Vec<Embedding>> {
        (**self).encode_images(images)
    }

    fn caption_images(&self, images: &[ImagePayload]) -> Result<Vec<String>> {
        (**self).caption_images(images)
    }
}

/// Checks a batch returned by any encoder against its profile.
pub fn check_batch(profile: &EncoderProfile, requested: usize, got: &[Embedding]) -> Result<()> {
    if got.len() != requested {
        return Err(Error::ProtocolViolation(format!(
            "requested {requested} embeddings, received {}",
            got.len()
        )));
    }
    if let Some(bad) = got.iter().find(|e| e.dim() != profile.embedding_dim) {
        return Err(Error::DimensionMismatch {
            expected: profile.embedding_dim,
            found: bad.dim(),
        });
    }
    Ok(())
}

/// Stable 64-bit seed from a list of byte strings (SHA-256 prefix).
pub fn stable_seed(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Standard normal vector scaled by `1/sqrt(dim)`, so its expected squared
/// norm is 1.
pub fn gaussian_direction(seed: u64, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (dim as f64).sqrt();
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        })
        .collect()
}

/// `normalize(mean + spread * noise(seed))`.
pub fn structured_point(mean: &[f64], spread: f64, seed: u64) -> Result<Embedding> {
    let noise = gaussian_direction(seed, mean.len());
    let v: Vec<f64> = mean.iter().zip(&noise).map(|(m, n)| m + spread * n).collect();
    Embedding::unit(&v)
}

fn non_empty<T>(items: &[T], what: &str) -> Result<()> {
    if items.is_empty() {
        return Err(Error::InvalidInput(format!("no {what} to encode")));
    }
    Ok(())
}

const WORDS: [&str; 32] = [
    "portrait", "landscape", "city", "forest", "castle", "robot", "cat", "dragon", "ocean", "flower",
    "street", "mountain", "warrior", "garden", "ship", "temple", "painted", "glowing", "misty",
    "vivid", "dark", "soft", "ancient", "neon", "golden", "quiet", "stormy", "detailed", "sketched",
    "bright", "winter", "sunset",
];

fn mock_caption(bytes: &[u8], profile_name: &str) -> String {
    let digest = Sha256::new()
        .chain_update(profile_name.as_bytes())
        .chain_update([0u8])
        .chain_update(bytes)
        .finalize();
    let words: Vec<&str> = digest[..6].iter().map(|b| WORDS[(*b as usize) % WORDS.len()]).collect();
    format!("a {} {} of a {} {} with {} {}", words[0], words[1], words[2], words[3], words[4], words[5])
}

/// Deterministic stand-in: hash the input, seed a PRNG, draw a normal
/// vector of the profile's dimension and normalize it.
#[derive(Clone, Debug)]
pub struct MockEncoder {
    profile: EncoderProfile,
}

impl MockEncoder {
    pub fn new(profile: EncoderProfile) -> Result<Self> {
        profile.validate()?;
        Ok(MockEncoder { profile })
    }

    fn embed(&self, domain: &[u8], bytes: &[u8]) -> Result<Embedding> {
        let seed = stable_seed(&[self.profile.name.as_bytes(), domain, bytes]);
        Embedding::unit(&gaussian_direction(seed, self.profile.embedding_dim))
    }
}

impl Encoder for MockEncoder {
    fn profile(&self) -> &EncoderProfile {
        &self.profile
    }

    fn encode_texts(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        non_empty(texts, "texts")?;
        texts.iter().map(|t| self.embed(b"text", t.as_bytes())).collect()
    }

    fn encode_images(&self, images: &[ImagePayload]) -> Result<Vec<Embedding>> {
        non_empty(images, "images")?;
        images.iter().map(|i| self.embed(b"image", i.bytes())).collect()
    }

    fn caption_images(&self, images: &[ImagePayload]) -> Result<Vec<String>> {
        non_empty(images, "images")?;
        Ok(images.iter().map(|i| mock_caption(i.bytes(), &self.profile.name)).collect())
    }
}

/// Mock that places inputs tagged `[tag] ...` (text) or starting with the
/// bytes `[tag]` (images) near the declared mean of `tag`:
/// `normalize(mean + spread * noise(hash(input)))`. Untagged inputs fall
/// back to [`MockEncoder`] behavior. Captions keep the tag of their image,
/// so an image and its caption land in the same cluster.
#[derive(Clone, Debug)]
pub struct StructuredMockEncoder {
    plain: MockEncoder,
    clusters: BTreeMap<String, Vec<f64>>,
    spread: f64,
}

impl StructuredMockEncoder {
    pub fn new(profile: EncoderProfile, spread: f64) -> Result<Self> {
        if !(spread.is_finite() && spread >= 0.0) {
            return Err(Error::InvalidConfig(format!("spread must be non-negative, got {spread}")));
        }
        Ok(StructuredMockEncoder {
            plain: MockEncoder::new(profile)?,
            clusters: BTreeMap::new(),
            spread,
        })
    }

    pub fn declare(&mut self, tag: impl Into<String>, mean: Vec<f64>) -> Result<()> {
        if mean.len() != self.plain.profile.embedding_dim {
            return Err(Error::DimensionMismatch {
                expected: self.plain.profile.embedding_dim,
                found: mean.len(),
            });
        }
        self.clusters.insert(tag.into(), mean);
        Ok(())
    }

    fn tag_of(bytes: &[u8]) -> Option<&str> {
        let rest = bytes.strip_prefix(b"[")?;
        let end = rest.iter().position(|&b| b == b']')?;
        std::str::from_utf8(&rest[..end]).ok()
    }

    fn embed(&self, domain: &[u8], bytes: &[u8]) -> Result<Embedding> {
        match Self::tag_of(bytes).and_then(|t| self.clusters.get(t)) {
            Some(mean) => {
                let seed = stable_seed(&[self.plain.profile.name.as_bytes(), domain, bytes]);
                structured_point(mean, self.spread, seed)
            }
            None => self.plain.embed(domain, bytes),
        }
    }
}

impl Encoder for StructuredMockEncoder {
    fn profile(&self) -> &EncoderProfile {
        &self.plain.profile
    }

    fn encode_texts(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        non_empty(texts, "texts")?;
        texts.iter().map(|t| self.embed(b"text", t.as_bytes())).collect()
    }

    fn encode_images(&self, images: &[ImagePayload]) -> Result<Vec<Embedding>> {
        non_empty(images, "images")?;
        images.iter().map(|i| self.embed(b"image", i.bytes())).collect()
    }

    fn caption_images(&self, images: &[ImagePayload]) -> Result<Vec<String>> {
        non_empty(images, "images")?;
        Ok(images
            .iter()
            .map(|i| {
                let caption = mock_caption(i.bytes(), &self.plain.profile.name);
                match Self::tag_of(i.bytes()) {
                    Some(tag) => format!("[{tag}] {caption}"),
                    None => caption,
                }
            })
            .collect())
    }
}
