//! HTTP client for encoder services.
//!
//! ```text
//! POST /v1/encode_text   {"texts":[...]}       -> {"dim":D,"vectors":[[...],...]}
//! POST /v1/encode_image  {"images_b64":[...]}  -> {"dim":D,"vectors":[[...],...]}
//! POST /v1/caption       {"images_b64":[...]}  -> {"captions":[...]}
//! GET  /v1/info                                -> {"name":...,"dim":D,"capabilities":[...]}
//! errors: HTTP 4xx/5xx with {"error": code, "message": text}
//! ```
//!
//! Batches larger than [`MAX_BATCH`] are split client-side.

use std::time::Duration;

use pmi_core::encoder::{check_batch, Encoder, EncoderProfile, MAX_BATCH};
use pmi_core::{Embedding, Error, ImagePayload, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextRequest {
    pub texts: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRequest {
    pub images_b64: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorsResponse {
    pub dim: usize,
    pub vectors: Vec<Vec<f32>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptionResponse {
    pub captions: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfoResponse {
    pub name: String,
    pub dim: usize,
    #[serde(default)]
    pub capabilities: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorEnvelope {
    pub error: String,
    pub message: String,
}

impl ErrorEnvelope {
    pub fn of(e: &Error) -> Self {
        ErrorEnvelope {
            error: e.code().to_owned(),
            message: e.to_string(),
        }
    }
}

pub struct RemoteEncoder {
    profile: EncoderProfile,
    base: String,
    client: reqwest::blocking::Client,
}

impl std::fmt::Debug for RemoteEncoder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteEncoder").field("profile", &self.profile).finish()
    }
}

impl RemoteEncoder {
    /// Creates the client; no request is made.
    pub fn new(profile: EncoderProfile) -> Result<Self> {
        profile.validate()?;
        let base = profile
            .endpoint
            .clone()
            .unwrap_or_default()
            .trim_end_matches('/')
            .to_owned();
        let client = reqwest::blocking::Client::builder()
            .connect_timeout(Duration::from_secs(5))
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| Error::InvalidConfig(format!("http client: {e}")))?;
        Ok(RemoteEncoder { profile, base, client })
    }

    /// Creates the client and checks `/v1/info` against the profile.
    pub fn connect(profile: EncoderProfile) -> Result<Self> {
        let enc = RemoteEncoder::new(profile)?;
        let info = enc.info()?;
        if info.dim != enc.profile.embedding_dim {
            return Err(Error::DimensionMismatch {
                expected: enc.profile.embedding_dim,
                found: info.dim,
            });
        }
        Ok(enc)
    }

    pub fn info(&self) -> Result<InfoResponse> {
        let resp = self
            .client
            .get(format!("{}/v1/info", self.base))
            .send()
            .map_err(|e| self.unavailable(e))?;
        self.decode(resp)
    }

    fn unavailable(&self, e: reqwest::Error) -> Error {
        Error::EndpointUnavailable(format!("{}: {e}", self.base))
    }

    fn decode<R: DeserializeOwned>(&self, resp: reqwest::blocking::Response) -> Result<R> {
        let status = resp.status();
        let body = resp.bytes().map_err(|e| self.unavailable(e))?;
        if !status.is_success() {
            let detail = match serde_json::from_slice::<ErrorEnvelope>(&body) {
                Ok(env) => format!("{} {}: {}", status.as_u16(), env.error, env.message),
                Err(_) => format!("{} without error envelope", status.as_u16()),
            };
            return Err(if status.is_server_error() {
                Error::EndpointUnavailable(detail)
            } else {
                Error::ProtocolViolation(detail)
            });
        }
        serde_json::from_slice(&body).map_err(|e| Error::ProtocolViolation(format!("unexpected response body: {e}")))
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R> {
        let resp = self
            .client
            .post(format!("{}{path}", self.base))
            .json(body)
            .send()
            .map_err(|e| self.unavailable(e))?;
        self.decode(resp)
    }

    fn vectors(&self, requested: usize, resp: VectorsResponse) -> Result<Vec<Embedding>> {
        let dim = self.profile.embedding_dim;
        if resp.dim != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: resp.dim });
        }
        if resp.vectors.len() != requested {
            return Err(Error::ProtocolViolation(format!(
                "requested {requested} vectors, received {}",
                resp.vectors.len()
            )));
        }
        let out = resp
            .vectors
            .into_iter()
            .map(|v| {
                if v.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, found: v.len() });
                }
                Embedding::new(v)
                    .and_then(|e| e.normalized())
                    .map_err(|e| Error::ProtocolViolation(format!("bad vector: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        check_batch(&self.profile, requested, &out)?;
        Ok(out)
    }

    fn encode_chunks<T, F>(&self, items: &[T], what: &str, mut call: F) -> Result<Vec<Embedding>>
    where
        F: FnMut(&[T]) -> Result<VectorsResponse>,
    {
        if items.is_empty() {
            return Err(Error::InvalidInput(format!("no {what} to encode")));
        }
        let mut out = Vec::with_capacity(items.len());
        for chunk in items.chunks(MAX_BATCH) {
            out.extend(self.vectors(chunk.len(), call(chunk)?)?);
        }
        Ok(out)
    }
}

fn b64(images: &[ImagePayload]) -> ImageRequest {
    ImageRequest {
        images_b64: images.iter().map(ImagePayload::to_base64).collect(),
    }
}

impl Encoder for RemoteEncoder {
    fn profile(&self) -> &EncoderProfile {
        &self.profile
    }

    fn encode_texts(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        self.encode_chunks(texts, "texts", |chunk| {
            self.post("/v1/encode_text", &TextRequest { texts: chunk.to_vec() })
        })
    }

    fn encode_images(&self, images: &[ImagePayload]) -> Result<Vec<Embedding>> {
        self.encode_chunks(images, "images", |chunk| self.post("/v1/encode_image", &b64(chunk)))
    }

    fn caption_images(&self, images: &[ImagePayload]) -> Result<Vec<String>> {
        if images.is_empty() {
            return Err(Error::InvalidInput("no images to caption".into()));
        }
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(MAX_BATCH) {
            let resp: CaptionResponse = self.post("/v1/caption", &b64(chunk))?;
            if resp.captions.len() != chunk.len() {
                return Err(Error::ProtocolViolation(format!(
                    "requested {} captions, received {}",
                    chunk.len(),
                    resp.captions.len()
                )));
            }
            out.extend(resp.captions);
        }
        Ok(out)
    }
}
