mod common;

use std::sync::Arc;

use pmi_core::bench::{build_synthetic_hub, SyntheticHubConfig};
use pmi_core::encoder::{gaussian_direction, EncoderProfile, MockEncoder};
use pmi_core::registry::{QueryResponse, Registry, RegistryConfig};
use pmi_core::{ExampleInput, ImagePayload};
use pmi_hub::api::{CountResponse, ModelView};
use pmi_hub::remote::ErrorEnvelope;
use pmi_hub::server::router;
use reqwest::blocking::Client;
use serde_json::{json, Value};

const DIM: usize = 16;

fn hub() -> (String, Arc<Registry>) {
    let encoder = Arc::new(MockEncoder::new(EncoderProfile::mock("mock-clip", DIM)).unwrap());
    let reg = Arc::new(Registry::in_memory(RegistryConfig::new(DIM), encoder).unwrap());
    (common::spawn(router(reg.clone())), reg)
}

fn unit(seed: u64) -> Vec<f64> {
    gaussian_direction(seed, DIM)
}

fn pre_encoded_body(id: &str, seed: u64) -> Value {
    let images: Vec<Vec<f64>> = (0..5).map(|j| unit(seed * 100 + j)).collect();
    let prompts: Vec<Vec<f64>> = (0..5).map(|j| unit(seed * 100 + 50 + j)).collect();
    json!({
        "model_id": id,
        "display_name": format!("model {id}"),
        "download_count": seed * 10,
        "tags": ["test"],
        "pre_encoded": { "image_embeddings": images, "prompt_embeddings": prompts },
    })
}

fn query_body(seed: u64) -> Value {
    json!({
        "examples": [{ "pre_encoded": { "image": unit(seed * 100), "caption": unit(seed * 100 + 50) } }],
        "top_k": 2,
    })
}

fn error_of(resp: reqwest::blocking::Response) -> (u16, ErrorEnvelope) {
    let status = resp.status().as_u16();
    (status, resp.json().unwrap())
}

#[test]
fn submit_identify_and_inspect() {
    let (base, _) = hub();
    let c = Client::new();
    for (id, seed) in [("alpha", 1), ("beta", 2), ("gamma", 3)] {
        let resp = c.post(format!("{base}/v1/models")).json(&pre_encoded_body(id, seed)).send().unwrap();
        assert_eq!(resp.status().as_u16(), 201);
        assert_eq!(resp.json::<Value>().unwrap()["pairs"], 5);
    }
    let resp: QueryResponse = c.post(format!("{base}/v1/identify")).json(&query_body(2)).send().unwrap().json().unwrap();
    assert_eq!(resp.model_count, 3);
    assert_eq!(resp.results.len(), 2);
    assert_eq!(resp.results[0].model_id, "beta");
    assert_eq!(resp.results[0].rank, 1);
    assert!(resp.results[0].distance <= resp.results[1].distance);
    assert_eq!(resp.results[0].similarity, -resp.results[0].distance);

    let view: ModelView = c.get(format!("{base}/v1/models/beta")).send().unwrap().json().unwrap();
    assert_eq!((view.pairs, view.dim, view.download_count), (5, DIM, 20));
    let list: Value = c.get(format!("{base}/v1/models")).send().unwrap().json().unwrap();
    assert_eq!(list["models"].as_array().unwrap().len(), 3);
}

#[test]
fn image_submissions_and_queries_use_the_encoder() {
    let (base, _) = hub();
    let c = Client::new();
    let prompts = ["a red barn", "a quiet harbor", "an old clock"];
    let images: Vec<ImagePayload> = prompts.iter().map(|p| ImagePayload(format!("img:{p}").into_bytes())).collect();
    let body = json!({
        "model_id": "painter",
        "prompts": prompts,
        "images_b64": images,
    });
    assert_eq!(c.post(format!("{base}/v1/models")).json(&body).send().unwrap().status().as_u16(), 201);
    let query = json!({ "examples": [ExampleInput::Image(images[0].clone())] });
    let resp: QueryResponse = c.post(format!("{base}/v1/identify")).json(&query).send().unwrap().json().unwrap();
    assert_eq!(resp.results[0].model_id, "painter");
    assert_eq!(resp.captions.as_ref().map(Vec::len), Some(1));
}

#[test]
fn failures_use_the_error_envelope() {
    let (base, _) = hub();
    let c = Client::new();

    let (status, env) = error_of(c.post(format!("{base}/v1/identify")).json(&query_body(1)).send().unwrap());
    assert_eq!((status, env.error.as_str()), (422, "EmptyRegistry"));

    c.post(format!("{base}/v1/models")).json(&pre_encoded_body("alpha", 1)).send().unwrap();
    let (status, env) = error_of(c.post(format!("{base}/v1/models")).json(&pre_encoded_body("alpha", 4)).send().unwrap());
    assert_eq!((status, env.error.as_str()), (409, "DuplicateModel"));

    let (status, env) = error_of(c.get(format!("{base}/v1/models/nope")).send().unwrap());
    assert_eq!((status, env.error.as_str()), (404, "UnknownModel"));

    let (status, env) = error_of(c.post(format!("{base}/v1/identify")).body("{not json").send().unwrap());
    assert_eq!((status, env.error.as_str()), (400, "MalformedPayload"));

    let mut bad = pre_encoded_body("short", 5);
    bad["pre_encoded"]["image_embeddings"] = json!([[1.0, 0.0]]);
    let (status, _) = error_of(c.post(format!("{base}/v1/models")).json(&bad).send().unwrap());
    assert!(status == 400 || status == 422, "{status}");

    let (status, env) = error_of(c.get(format!("{base}/v1/nothing")).send().unwrap());
    assert_eq!((status, env.error.as_str()), (404, "NotFound"));
}

#[test]
fn export_import_preserves_scores() {
    let (a, _) = hub();
    let (b, _) = hub();
    let c = Client::new();
    for (id, seed) in [("alpha", 1), ("beta", 2), ("gamma", 3), ("delta", 4)] {
        c.post(format!("{a}/v1/models")).json(&pre_encoded_body(id, seed)).send().unwrap();
    }
    let resp = c.get(format!("{a}/v1/export")).send().unwrap();
    assert_eq!(resp.headers()["x-model-count"], "4");
    let bundle = resp.bytes().unwrap();
    let count: CountResponse = c.post(format!("{b}/v1/import")).body(bundle.clone()).send().unwrap().json().unwrap();
    assert_eq!(count.count, 4);
    for seed in 1..=4 {
        let qa: QueryResponse = c.post(format!("{a}/v1/identify")).json(&query_body(seed)).send().unwrap().json().unwrap();
        let qb: QueryResponse = c.post(format!("{b}/v1/identify")).json(&query_body(seed)).send().unwrap().json().unwrap();
        assert_eq!(qa, qb);
    }
    let (status, _) = error_of(c.post(format!("{b}/v1/import")).body(bundle).send().unwrap());
    assert_eq!(status, 409);
}

#[test]
fn synthetic_hub_answers_with_top_k() {
    let cfg = SyntheticHubConfig {
        eval_prompts_per_model: 1,
        seeds_per_prompt: 1,
        ..SyntheticHubConfig::default()
    };
    let hub = build_synthetic_hub(&cfg).unwrap();
    let task = hub.tasks[0].clone();
    let base = common::spawn(router(Arc::new(hub.registry)));
    for top_k in [1, 5, 65, 100] {
        let body = json!({ "examples": task.example_inputs, "top_k": top_k });
        let resp: QueryResponse = Client::new().post(format!("{base}/v1/identify")).json(&body).send().unwrap().json().unwrap();
        assert_eq!(resp.model_count, 65);
        assert_eq!(resp.results.len(), top_k.min(65));
    }
}
