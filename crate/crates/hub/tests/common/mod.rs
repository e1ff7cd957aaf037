#![allow(dead_code, clippy::result_large_err)]

use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use pmi_core::encoder::{Encoder, EncoderProfile, MockEncoder};
use pmi_core::{Error, ImagePayload};
use pmi_hub::remote::{CaptionResponse, ErrorEnvelope, ImageRequest, InfoResponse, TextRequest, VectorsResponse};
use serde::{Deserialize, Serialize};

/// Serves `router` on an ephemeral port from a background runtime and
/// returns the base URL. The runtime lives until the process exits.
pub fn spawn(router: Router) -> String {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, router).await.unwrap();
        });
    });
    format!("http://{}", rx.recv().unwrap())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    None,
    DropOne,
    WrongDim,
    ShortVector,
    ServerError,
    BadRequest,
    Garbage,
}

pub struct FakeState {
    pub encoder: MockEncoder,
    pub fault: Fault,
    pub reported_dim: usize,
    pub batches: Mutex<Vec<usize>>,
}

pub type Shared = Arc<FakeState>;

fn envelope(status: StatusCode, e: &Error) -> Response {
    (status, Json(ErrorEnvelope::of(e))).into_response()
}

fn respond_vectors(st: &FakeState, vectors: Vec<Vec<f32>>) -> Response {
    st.batches.lock().unwrap().push(vectors.len());
    let mut vectors = vectors;
    let mut dim = st.reported_dim;
    match st.fault {
        Fault::None => {}
        Fault::DropOne => {
            vectors.pop();
        }
        Fault::WrongDim => dim += 1,
        Fault::ShortVector => {
            if let Some(v) = vectors.first_mut() {
                v.pop();
            }
        }
        Fault::ServerError => {
            return envelope(StatusCode::SERVICE_UNAVAILABLE, &Error::EndpointUnavailable("loading".into()))
        }
        Fault::BadRequest => return envelope(StatusCode::BAD_REQUEST, &Error::InvalidInput("rejected".into())),
        Fault::Garbage => return (StatusCode::OK, "not json").into_response(),
    }
    Json(VectorsResponse { dim, vectors }).into_response()
}

fn parse<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, Response> {
    serde_json::from_slice(body)
        .map_err(|e| envelope(StatusCode::BAD_REQUEST, &Error::MalformedPayload(e.to_string())))
}

async fn encode_text(State(st): State<Shared>, body: Bytes) -> Response {
    let req: TextRequest = match parse(&body) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    match st.encoder.encode_texts(&req.texts) {
        Ok(v) => respond_vectors(&st, v.iter().map(|e| e.values().to_vec()).collect()),
        Err(e) => envelope(StatusCode::BAD_REQUEST, &e),
    }
}

fn decode_images(req: &ImageRequest) -> Result<Vec<ImagePayload>, Response> {
    req.images_b64
        .iter()
        .map(|s| ImagePayload::from_base64(s))
        .collect::<Result<_, _>>()
        .map_err(|e| envelope(StatusCode::BAD_REQUEST, &e))
}

async fn encode_image(State(st): State<Shared>, body: Bytes) -> Response {
    let images = match parse::<ImageRequest>(&body).and_then(|r| decode_images(&r)) {
        Ok(i) => i,
        Err(resp) => return resp,
    };
    match st.encoder.encode_images(&images) {
        Ok(v) => respond_vectors(&st, v.iter().map(|e| e.values().to_vec()).collect()),
        Err(e) => envelope(StatusCode::BAD_REQUEST, &e),
    }
}

async fn caption(State(st): State<Shared>, body: Bytes) -> Response {
    let images = match parse::<ImageRequest>(&body).and_then(|r| decode_images(&r)) {
        Ok(i) => i,
        Err(resp) => return resp,
    };
    match st.encoder.caption_images(&images) {
        Ok(mut captions) => {
            if st.fault == Fault::DropOne {
                captions.pop();
            }
            Json(CaptionResponse { captions }).into_response()
        }
        Err(e) => envelope(StatusCode::BAD_REQUEST, &e),
    }
}

async fn info(State(st): State<Shared>) -> Response {
    Json(InfoResponse {
        name: st.encoder.profile().name.clone(),
        dim: st.reported_dim,
        capabilities: vec!["text".into(), "image".into(), "caption".into()],
    })
    .into_response()
}

/// Encoder service backed by [`MockEncoder`] with an injectable fault.
pub fn fake_encoder(name: &str, dim: usize, fault: Fault) -> (String, Shared) {
    let state = Arc::new(FakeState {
        encoder: MockEncoder::new(EncoderProfile::mock(name, dim)).unwrap(),
        fault,
        reported_dim: dim,
        batches: Mutex::new(Vec::new()),
    });
    let router = Router::new()
        .route("/v1/encode_text", post(encode_text))
        .route("/v1/encode_image", post(encode_image))
        .route("/v1/caption", post(caption))
        .route("/v1/info", get(info))
        .with_state(state.clone());
    (spawn(router), state)
}

/// One recorded exchange of the encoder wire protocol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub name: String,
    pub method: String,
    pub path: String,
    #[serde(default)]
    pub request: Option<serde_json::Value>,
    pub status: u16,
    pub response: serde_json::Value,
}

pub fn protocol_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/protocol")
}

pub fn load_exchanges() -> Vec<Exchange> {
    let mut paths: Vec<_> = std::fs::read_dir(protocol_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap())
        .collect()
}

async fn replay(State(log): State<Arc<Vec<Exchange>>>, req: axum::extract::Request) -> Response {
    let method = req.method().to_string();
    let path = req.uri().path().to_owned();
    let body = axum::body::to_bytes(req.into_body(), usize::MAX).await.unwrap();
    let request: Option<serde_json::Value> = if body.is_empty() {
        None
    } else {
        serde_json::from_slice(&body).ok()
    };
    match log
        .iter()
        .find(|x| x.method == method && x.path == path && x.request == request)
    {
        Some(x) => (StatusCode::from_u16(x.status).unwrap(), Json(x.response.clone())).into_response(),
        None => (StatusCode::IM_A_TEAPOT, "unrecorded request").into_response(),
    }
}

/// Serves recorded exchanges verbatim; unrecorded requests get 418.
pub fn replay_server(exchanges: Vec<Exchange>) -> String {
    let router = Router::new().fallback(replay).with_state(Arc::new(exchanges));
    spawn(router)
}
