//! JSON bodies of the hub HTTP API, shared with the CLI.

use pmi_core::registry::{ModelMeta, SpecSource};
use pmi_core::types::{Embedding, ExampleInput, ImagePayload, PromptOrigin};
use pmi_core::assign::GeneratedOutput;
use pmi_core::{Error, Method, Result};
use serde::{Deserialize, Serialize};

fn developer() -> PromptOrigin {
    PromptOrigin::DeveloperProvided
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreEncodedSpec {
    pub image_embeddings: Vec<Embedding>,
    pub prompt_embeddings: Vec<Embedding>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompts: Option<Vec<String>>,
    #[serde(default = "developer")]
    pub origin: PromptOrigin,
}

/// `POST /v1/models`: metadata plus either `pre_encoded` pairs or
/// `prompts` with one generated image per prompt in `images_b64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubmitRequest {
    #[serde(flatten)]
    pub meta: ModelMeta,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pre_encoded: Option<PreEncodedSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompts: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub images_b64: Option<Vec<ImagePayload>>,
}

impl SubmitRequest {
    pub fn into_parts(self) -> Result<(ModelMeta, SpecSource)> {
        let source = match (self.pre_encoded, self.prompts, self.images_b64) {
            (Some(p), None, None) => SpecSource::PreEncoded {
                image_embeddings: p.image_embeddings,
                prompt_embeddings: p.prompt_embeddings,
                prompts: p.prompts,
                origin: p.origin,
            },
            (None, Some(prompts), Some(images)) => SpecSource::Outputs {
                prompts,
                outputs: images.into_iter().map(GeneratedOutput::Image).collect(),
            },
            _ => {
                return Err(Error::InvalidInput(
                    "give either pre_encoded, or prompts together with images_b64".into(),
                ))
            }
        };
        Ok((self.meta, source))
    }
}

fn default_top_k() -> usize {
    5
}

fn default_method() -> Method {
    Method::Pmi
}

/// `POST /v1/identify`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentifyRequest {
    pub examples: Vec<ExampleInput>,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default)]
    pub tags: Vec<String>,
}

/// `GET /v1/models/{id}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelView {
    pub model_id: String,
    pub display_name: String,
    pub download_count: u64,
    pub tags: Vec<String>,
    pub prompt_origin: PromptOrigin,
    pub pairs: usize,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompts: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountResponse {
    pub count: usize,
}
