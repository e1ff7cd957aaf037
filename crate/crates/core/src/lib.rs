//! Model identification for hubs of conditional generative models.
//!
//! Each model gets a specification: embeddings of images it generates for a
//! prompt set, paired with embeddings of those prompts. A user's example
//! images become a requirement: image embeddings paired with embeddings of
//! machine-generated captions. Models are ranked by an RKHS distance in
//! which every specification image is reweighted by how well its prompt
//! agrees with the caption of the example being matched.
//!
//! Kernel, matching and metric code is generic over [`Scalar`] (`f32` or
//! `f64`); the aliases below fix the `f64` instantiation used by the hub.

pub mod assign;
pub mod bench;
pub mod codec;
pub mod encoder;
pub mod error;
pub mod kernel;
pub mod matcher;
pub mod metrics;
pub mod registry;
pub mod requirement;
pub mod scalar;
pub mod types;

pub use error::{Error, Result};
pub use kernel::KernelConfig;
pub use matcher::{Method, MatchOptions};
pub use scalar::Scalar;
pub use types::{
    Embedding, ExampleInput, IdentificationTask, ImagePayload, ModelRecord, PromptOrigin, PromptSet, RankedEntry,
    RankedResult, Requirement, Specification,
};

pub type KmePoints = kernel::WeightedKmePoints<f64>;
pub type PointSet = kernel::PointSet<f64>;
pub type PreparedSpec = matcher::PreparedSpec<f64>;
pub type PreparedRequirement = matcher::PreparedRequirement<f64>;

pub type KmePoints32 = kernel::WeightedKmePoints<f32>;
pub type PreparedSpec32 = matcher::PreparedSpec<f32>;
