//! Specification assignment: prompt a model with every prompt of a prompt
//! set, encode its outputs and the prompts, and pair them up.

use std::path::PathBuf;
use std::process::Command;

use crate::encoder::{check_batch, stable_seed, Encoder};
use crate::error::{Error, Result};
use crate::types::{Embedding, ImagePayload, PromptOrigin, PromptSet, Specification};

/// What a generator returns for one prompt.
#[derive(Clone, Debug, PartialEq)]
pub enum GeneratedOutput {
    Image(ImagePayload),
    /// Already in the matching space; passed through the vision encoder.
    Embedding(Embedding),
}

/// A conditional generative model, deterministic under the given seed.
pub trait Generator: Send + Sync {
    fn model_id(&self) -> &str;

    fn generate(&self, prompt: &str, seed: u64) -> std::result::Result<GeneratedOutput, String>;
}

/// Adapts a closure into a [`Generator`].
pub struct FnGenerator<F> {
    model_id: String,
    f: F,
}

impl<F> FnGenerator<F>
where
    F: Fn(&str, u64) -> std::result::Result<GeneratedOutput, String> + Send + Sync,
{
    pub fn new(model_id: impl Into<String>, f: F) -> Self {
        FnGenerator {
            model_id: model_id.into(),
            f,
        }
    }
}

impl<F> Generator for FnGenerator<F>
where
    F: Fn(&str, u64) -> std::result::Result<GeneratedOutput, String> + Send + Sync,
{
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn generate(&self, prompt: &str, seed: u64) -> std::result::Result<GeneratedOutput, String> {
        (self.f)(prompt, seed)
    }
}

/// External generator process.
///
/// Invoked as `program [args..] <prompt>` with `PMI_SEED` set in the
/// environment; it must print the path of the generated image file on the
/// last non-empty line of stdout and exit with status 0.
#[derive(Clone, Debug)]
pub struct SubprocessGenerator {
    pub model_id: String,
    pub program: PathBuf,
    pub args: Vec<String>,
}

impl Generator for SubprocessGenerator {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn generate(&self, prompt: &str, seed: u64) -> std::result::Result<GeneratedOutput, String> {
        let out = Command::new(&self.program)
            .args(&self.args)
            .arg(prompt)
            .env("PMI_SEED", seed.to_string())
            .output()
            .map_err(|e| format!("spawn {}: {e}", self.program.display()))?;
        if !out.status.success() {
            return Err(format!(
                "generator exited with {}: {}",
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            ));
        }
        let stdout = String::from_utf8_lossy(&out.stdout);
        let path = stdout
            .lines()
            .rev()
            .map(str::trim)
            .find(|l| !l.is_empty())
            .ok_or("generator printed no image path")?;
        let bytes = std::fs::read(path).map_err(|e| format!("read {path}: {e}"))?;
        Ok(GeneratedOutput::Image(ImagePayload(bytes)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AssignOptions {
    pub seed: u64,
    /// Outputs drawn per prompt. Extra samples become extra (image, prompt)
    /// pairs repeating the prompt embedding; they are not averaged.
    pub samples_per_prompt: usize,
}

impl Default for AssignOptions {
    fn default() -> Self {
        AssignOptions {
            seed: 0,
            samples_per_prompt: 1,
        }
    }
}

/// Seed for one generation call: a hash of the model id, prompt index,
/// sample index and run seed.
pub fn generation_seed(model_id: &str, prompt_index: usize, sample: usize, run_seed: u64) -> u64 {
    stable_seed(&[
        model_id.as_bytes(),
        &(prompt_index as u64).to_le_bytes(),
        &(sample as u64).to_le_bytes(),
        &run_seed.to_le_bytes(),
    ])
}

fn encoder_failure(e: Error) -> Error {
    match e {
        Error::EncoderFailure(_) => e,
        other => Error::EncoderFailure(Box::new(other)),
    }
}

/// Produces the specification of `generator` over `prompts`.
///
/// Nothing is returned unless every prompt succeeds.
pub fn assign_specification(
    generator: &dyn Generator,
    prompts: &PromptSet,
    encoder: &dyn Encoder,
    opts: &AssignOptions,
) -> Result<Specification> {
    let samples = opts.samples_per_prompt.max(1);
    let model_id = generator.model_id();
    let dim = encoder.profile().embedding_dim;

    enum Slot {
        Ready(Embedding),
        Pending(usize),
    }
    let mut slots = Vec::with_capacity(prompts.len() * samples);
    let mut pending = Vec::new();
    for (j, prompt) in prompts.prompts().iter().enumerate() {
        for s in 0..samples {
            let seed = generation_seed(model_id, j, s, opts.seed);
            match generator.generate(prompt, seed) {
                Ok(GeneratedOutput::Embedding(e)) => {
                    if e.dim() != dim {
                        return Err(Error::DimensionMismatch {
                            expected: dim,
                            found: e.dim(),
                        });
                    }
                    slots.push(Slot::Ready(e));
                }
                Ok(GeneratedOutput::Image(img)) => {
                    slots.push(Slot::Pending(pending.len()));
                    pending.push(img);
                }
                Err(message) => return Err(Error::GenerationFailure { index: j, message }),
            }
        }
    }

    let encoded_images = if pending.is_empty() {
        Vec::new()
    } else {
        let out = encoder.encode_images(&pending).map_err(encoder_failure)?;
        check_batch(encoder.profile(), pending.len(), &out).map_err(encoder_failure)?;
        out
    };
    let prompt_embeddings = encoder.encode_texts(prompts.prompts()).map_err(encoder_failure)?;
    check_batch(encoder.profile(), prompts.len(), &prompt_embeddings).map_err(encoder_failure)?;

    let image_embeddings: Vec<Embedding> = slots
        .into_iter()
        .map(|s| match s {
            Slot::Ready(e) => e,
            Slot::Pending(i) => encoded_images[i].clone(),
        })
        .collect();
    let prompt_embeddings: Vec<Embedding> = prompt_embeddings
        .into_iter()
        .flat_map(|q| std::iter::repeat_n(q, samples))
        .collect();
    Specification::ingest(model_id, image_embeddings, prompt_embeddings, prompts.origin())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PromptChoice {
    pub prompts: PromptSet,
    pub warning: Option<String>,
}

/// Uses the developer's prompts when given and valid, else the hub default.
pub fn choose_prompt_set(developer_prompts: Option<Vec<String>>, default_prompts: &PromptSet) -> PromptChoice {
    let fallback = |warning: Option<String>| {
        if let Some(w) = &warning {
            log::warn!("{w}");
        }
        let prompts = PromptSet::new(default_prompts.prompts().to_vec(), PromptOrigin::Default)
            .expect("default prompt set was validated");
        PromptChoice { prompts, warning }
    };
    match developer_prompts {
        None => fallback(None),
        Some(list) => match PromptSet::new(list, PromptOrigin::DeveloperProvided) {
            Ok(prompts) => PromptChoice { prompts, warning: None },
            Err(e) => fallback(Some(format!("developer prompt set rejected ({e}); using default prompts"))),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{EncoderProfile, MockEncoder};
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn prompts(n: usize, origin: PromptOrigin) -> PromptSet {
        PromptSet::new((0..n).map(|i| format!("prompt {i}")).collect(), origin).unwrap()
    }

    fn encoder(dim: usize) -> MockEncoder {
        MockEncoder::new(EncoderProfile::mock("t", dim)).unwrap()
    }

    /// Emits the one-hot embedding of the prompt's index.
    fn tagging_generator(dim: usize) -> impl Generator {
        FnGenerator::new("tagger", move |p: &str, _| {
            let j: usize = p.trim_start_matches("prompt ").parse().unwrap();
            let mut v = vec![0.0f32; dim];
            v[j % dim] = 1.0;
            Ok(GeneratedOutput::Embedding(Embedding::new(v).unwrap()))
        })
    }

    #[test]
    fn sixty_one_prompts() {
        let enc = encoder(64);
        let spec = assign_specification(
            &tagging_generator(64),
            &prompts(61, PromptOrigin::Default),
            &enc,
            &AssignOptions::default(),
        )
        .unwrap();
        assert_eq!(spec.len(), 61);
        assert_eq!(spec.prompt_embeddings.len(), 61);
        assert_eq!(spec.prompt_origin, PromptOrigin::Default);
    }

    #[test]
    fn index_correspondence() {
        let enc = encoder(8);
        let ps = prompts(5, PromptOrigin::DeveloperProvided);
        let spec = assign_specification(&tagging_generator(8), &ps, &enc, &AssignOptions::default()).unwrap();
        let q = enc.encode_texts(ps.prompts()).unwrap();
        for j in 0..5 {
            assert_eq!(spec.image_embeddings[j].values()[j], 1.0);
            assert_eq!(spec.prompt_embeddings[j], q[j]);
        }
        assert_eq!(spec.prompt_origin, PromptOrigin::DeveloperProvided);
    }

    #[test]
    fn single_prompt() {
        let spec = assign_specification(
            &tagging_generator(4),
            &prompts(1, PromptOrigin::Default),
            &encoder(4),
            &AssignOptions::default(),
        )
        .unwrap();
        assert_eq!((spec.image_embeddings.len(), spec.prompt_embeddings.len()), (1, 1));
    }

    #[test]
    fn failure_reports_index_and_produces_nothing() {
        let calls = AtomicUsize::new(0);
        let g = FnGenerator::new("flaky", |p: &str, _| {
            calls.fetch_add(1, Ordering::SeqCst);
            if p == "prompt 3" {
                Err("out of memory".into())
            } else {
                Ok(GeneratedOutput::Image(ImagePayload(p.as_bytes().to_vec())))
            }
        });
        let err = assign_specification(&g, &prompts(5, PromptOrigin::Default), &encoder(8), &AssignOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::GenerationFailure { index: 3, .. }));
        assert_eq!(calls.load(Ordering::SeqCst), 4);
    }

    #[test]
    fn images_are_encoded_and_rebuild_is_bit_identical() {
        let g = FnGenerator::new("imgs", |p: &str, seed| {
            let mut bytes = p.as_bytes().to_vec();
            bytes.extend_from_slice(&seed.to_le_bytes());
            Ok(GeneratedOutput::Image(ImagePayload(bytes)))
        });
        let ps = prompts(6, PromptOrigin::Default);
        let opts = AssignOptions { seed: 7, samples_per_prompt: 1 };
        let a = assign_specification(&g, &ps, &encoder(16), &opts).unwrap();
        let b = assign_specification(&g, &ps, &encoder(16), &opts).unwrap();
        assert_eq!(a, b);
        let c = assign_specification(&g, &ps, &encoder(16), &AssignOptions { seed: 8, ..opts }).unwrap();
        assert_ne!(a.image_embeddings, c.image_embeddings);
        assert_eq!(a.prompt_embeddings, c.prompt_embeddings);
    }

    #[test]
    fn extra_samples_duplicate_prompt_embeddings() {
        let g = FnGenerator::new("multi", |p: &str, seed| {
            Ok(GeneratedOutput::Image(ImagePayload(format!("{p}/{seed}").into_bytes())))
        });
        let opts = AssignOptions { seed: 0, samples_per_prompt: 3 };
        let spec = assign_specification(&g, &prompts(2, PromptOrigin::Default), &encoder(8), &opts).unwrap();
        assert_eq!(spec.len(), 6);
        assert_eq!(spec.prompt_embeddings[0], spec.prompt_embeddings[2]);
        assert_ne!(spec.prompt_embeddings[2], spec.prompt_embeddings[3]);
        assert_ne!(spec.image_embeddings[0], spec.image_embeddings[1]);
    }

    #[test]
    fn wrong_dimension_passthrough_rejected() {
        let err = assign_specification(
            &tagging_generator(4),
            &prompts(2, PromptOrigin::Default),
            &encoder(8),
            &AssignOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 8, found: 4 }));
    }

    #[test]
    fn prompt_set_choice() {
        let default = prompts(3, PromptOrigin::Default);
        let dev = choose_prompt_set(Some(vec!["x".into(), "y".into()]), &default);
        assert_eq!(dev.prompts.origin(), PromptOrigin::DeveloperProvided);
        assert_eq!(dev.prompts.len(), 2);
        assert!(dev.warning.is_none());

        let none = choose_prompt_set(None, &default);
        assert_eq!(none.prompts, default);
        assert!(none.warning.is_none());

        let empty = choose_prompt_set(Some(vec![]), &default);
        assert_eq!(empty.prompts.origin(), PromptOrigin::Default);
        assert!(empty.warning.is_some());
    }

    #[test]
    fn seeds_depend_on_every_component() {
        let base = generation_seed("m", 1, 0, 5);
        assert_ne!(base, generation_seed("n", 1, 0, 5));
        assert_ne!(base, generation_seed("m", 2, 0, 5));
        assert_ne!(base, generation_seed("m", 1, 1, 5));
        assert_ne!(base, generation_seed("m", 1, 0, 6));
        assert_eq!(base, generation_seed("m", 1, 0, 5));
    }
}
