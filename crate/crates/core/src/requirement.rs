//! Requirement generation: example images become (image embedding,
//! caption embedding) pairs in the matching space.

use crate::encoder::{check_batch, Encoder};
use crate::error::{Error, Result};
use crate::types::{Embedding, ExampleInput, ImagePayload, Requirement};

fn wrap(e: Error) -> Error {
    match e {
        Error::EncoderFailure(_) => e,
        other => Error::EncoderFailure(Box::new(other)),
    }
}

/// Builds the requirement for a set of user examples.
///
/// Image examples are vision-encoded, captioned once each, and the captions
/// text-encoded. Pre-encoded examples pass through unchanged. Inputs may mix
/// both kinds; output order follows input order.
pub fn generate_requirement(examples: &[ExampleInput], encoder: &dyn Encoder) -> Result<Requirement> {
    if examples.is_empty() {
        return Err(Error::EmptyInput("requirement examples"));
    }
    let images: Vec<(usize, &ImagePayload)> = examples
        .iter()
        .enumerate()
        .filter_map(|(i, e)| match e {
            ExampleInput::Image(img) => Some((i, img)),
            ExampleInput::PreEncoded { .. } => None,
        })
        .collect();

    let n = examples.len();
    let mut z: Vec<Option<Embedding>> = vec![None; n];
    let mut q: Vec<Option<Embedding>> = vec![None; n];
    let mut captions: Vec<Option<String>> = vec![None; n];
    for (i, e) in examples.iter().enumerate() {
        if let ExampleInput::PreEncoded { image, caption } = e {
            z[i] = Some(image.clone());
            q[i] = Some(caption.clone());
        }
    }

    if !images.is_empty() {
        let payloads: Vec<ImagePayload> = images.iter().map(|(_, p)| (*p).clone()).collect();
        let encoded = encoder.encode_images(&payloads).map_err(wrap)?;
        check_batch(encoder.profile(), payloads.len(), &encoded).map_err(wrap)?;
        let generated = encoder.caption_images(&payloads).map_err(wrap)?;
        if generated.len() != payloads.len() {
            return Err(wrap(Error::ProtocolViolation(format!(
                "requested {} captions, received {}",
                payloads.len(),
                generated.len()
            ))));
        }
        if let Some(pos) = generated.iter().position(|c| c.trim().is_empty()) {
            return Err(Error::CaptionFailure { index: images[pos].0 });
        }
        let caption_embeddings = encoder.encode_texts(&generated).map_err(wrap)?;
        check_batch(encoder.profile(), generated.len(), &caption_embeddings).map_err(wrap)?;
        for (k, (i, _)) in images.iter().enumerate() {
            z[*i] = Some(encoded[k].clone());
            q[*i] = Some(caption_embeddings[k].clone());
            captions[*i] = Some(generated[k].clone());
        }
    }

    let req = Requirement::new(
        z.into_iter().map(Option::unwrap).collect(),
        q.into_iter().map(Option::unwrap).collect(),
    )?;
    if images.is_empty() {
        Ok(req)
    } else {
        req.with_captions(captions.into_iter().map(Option::unwrap_or_default).collect())
    }
}
