//! Persistent model hub.
//!
//! Readers take an `Arc` of the current snapshot and never wait on
//! submissions; writers are serialized by a mutex and publish a new snapshot
//! when their change is durable.
//!
//! # Data directory
//!
//! ```text
//! specs.bin    append-only; each record is a u64 LE byte length followed by
//!              one specification container (see `codec`)
//! index.json   rewritten atomically after every append: configuration and,
//!              per model, metadata, prompt list and (offset, length) in specs.bin
//! ```
//!
//! Bytes in `specs.bin` not referenced by the index (an interrupted append)
//! are ignored on open.
//!
//! # Export bundle
//!
//! ```text
//! magic "PMIB" | version u16 | reserved u16 | count u32
//! per model: meta_len u32 | meta JSON | spec_len u32 | specification container
//! ```

use std::collections::{HashMap, HashSet};
use std::fs::OpenOptions;
use std::io::{Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::assign::{assign_specification, choose_prompt_set, AssignOptions, GeneratedOutput, Generator};
use crate::codec::{decode_specification, encode_specification, write_atomic, Reader, FORMAT_VERSION};
use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::kernel::{build_reduced_set, KernelConfig, ReducedSetOptions, WeightedKmePoints};
use crate::matcher::{identify, Candidate, MatchOptions, Method, PreparedSpec};
use crate::requirement::generate_requirement;
use crate::types::{Embedding, ExampleInput, ModelRecord, PromptOrigin, PromptSet, Requirement, Specification};

pub const BUNDLE_MAGIC: &[u8; 4] = b"PMIB";
const SPECS_FILE: &str = "specs.bin";
const INDEX_FILE: &str = "index.json";

pub(crate) const DEFAULT_SUBJECTS: [&str; 61] = [
    "a lighthouse on a cliff", "a red fox in snow", "a bowl of ramen", "an old library", "a city street at night",
    "a mountain lake", "a portrait of an elderly man", "a portrait of a young woman", "a cat on a windowsill",
    "a vintage car", "a medieval castle", "a space station", "a bouquet of roses", "a desert caravan",
    "a rainy train platform", "a wooden sailboat", "a dragon over a valley", "a cozy kitchen", "a robot in a garden",
    "a waterfall in a jungle", "a snowy village", "a market stall with fruit", "a knight in armor",
    "a child flying a kite", "a neon arcade", "an astronaut on the moon", "a field of sunflowers", "a coral reef",
    "a steam locomotive", "a samurai under cherry blossoms", "a haunted house", "a jazz musician",
    "a futuristic skyline", "a farmhouse at dawn", "an owl on a branch", "a glass of red wine", "a ballet dancer",
    "a stone bridge", "a thunderstorm over plains", "a wizard reading a book", "a horse in a meadow",
    "a bustling harbor", "a teapot and cups", "a forest path in autumn", "a superhero landing", "a hot air balloon",
    "a sleeping puppy", "an ancient temple", "a pirate ship", "a bicycle against a wall", "a chess board",
    "a penguin colony", "a fantasy elf archer", "a cyberpunk alley", "a bowl of fresh salad", "a tropical beach",
    "a grand piano", "a firefighter at work", "a butterfly on a flower", "a subway car", "a winter cabin",
];

/// The 61 prompts used when a developer supplies none.
pub fn default_prompt_set() -> PromptSet {
    PromptSet::new(
        DEFAULT_SUBJECTS.iter().map(|s| format!("a picture of {s}")).collect(),
        PromptOrigin::Default,
    )
    .expect("default prompts are distinct")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistryConfig {
    pub embedding_dim: usize,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default = "default_reduced_size")]
    pub reduced_set_size: usize,
    #[serde(default)]
    pub match_options: MatchOptions,
}

fn default_reduced_size() -> usize {
    1
}

impl RegistryConfig {
    pub fn new(embedding_dim: usize) -> Self {
        RegistryConfig {
            embedding_dim,
            kernel: KernelConfig::default(),
            reduced_set_size: 1,
            match_options: MatchOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 {
            return Err(Error::InvalidConfig("embedding_dim must be positive".into()));
        }
        if self.reduced_set_size == 0 {
            return Err(Error::InvalidConfig("reduced_set_size must be positive".into()));
        }
        Ok(())
    }
}

/// Descriptive fields of a submission. An empty `model_id` asks the hub to
/// assign one.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    #[serde(default)]
    pub model_id: String,
    #[serde(default)]
    pub display_name: String,
    #[serde(default)]
    pub download_count: u64,
    #[serde(default)]
    pub tags: Vec<String>,
}

#[derive(Clone, Debug)]
pub enum SpecSource {
    /// (image, prompt) embedding pairs computed elsewhere.
    PreEncoded {
        image_embeddings: Vec<Embedding>,
        prompt_embeddings: Vec<Embedding>,
        prompts: Option<Vec<String>>,
        origin: PromptOrigin,
    },
    /// One generated output per prompt, supplied by the developer.
    Outputs {
        prompts: Vec<String>,
        outputs: Vec<GeneratedOutput>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubmitOutcome {
    pub model_id: String,
    pub pairs: usize,
    pub prompt_origin: PromptOrigin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// A stored model with its precomputed scoring state.
pub struct HubEntry {
    record: ModelRecord,
    prompts: Option<Vec<String>>,
    prepared: PreparedSpec<f64>,
    reduced_size: usize,
    reduced: OnceLock<std::result::Result<WeightedKmePoints<f64>, String>>,
}

impl HubEntry {
    fn new(record: ModelRecord, prompts: Option<Vec<String>>, cfg: &RegistryConfig) -> Result<Self> {
        let prepared = PreparedSpec::new(&record.specification, &cfg.kernel)?;
        Ok(HubEntry {
            record,
            prompts,
            prepared,
            reduced_size: cfg.reduced_set_size,
            reduced: OnceLock::new(),
        })
    }

    pub fn prompts(&self) -> Option<&[String]> {
        self.prompts.as_deref()
    }
}

impl Candidate for Arc<HubEntry> {
    fn record(&self) -> &ModelRecord {
        &self.record
    }

    fn prepared(&self) -> &PreparedSpec<f64> {
        &self.prepared
    }

    fn reduced_set(&self, cfg: &KernelConfig) -> Result<&WeightedKmePoints<f64>> {
        self.reduced
            .get_or_init(|| {
                build_reduced_set(
                    &self.record.specification.image_embeddings,
                    self.reduced_size,
                    cfg,
                    &ReducedSetOptions::default(),
                )
                .map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|e| Error::NumericalFailure(e.clone()))
    }
}

#[derive(Default)]
struct Snapshot {
    entries: Vec<Arc<HubEntry>>,
    by_id: HashMap<String, usize>,
}

impl Snapshot {
    fn with(&self, added: Vec<Arc<HubEntry>>) -> Snapshot {
        let mut entries = self.entries.clone();
        let mut by_id = self.by_id.clone();
        for e in added {
            by_id.insert(e.record.model_id.clone(), entries.len());
            entries.push(e);
        }
        Snapshot { entries, by_id }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct IndexEntry {
    #[serde(flatten)]
    meta: ModelMeta,
    offset: u64,
    length: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prompts: Option<Vec<String>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct IndexFile {
    format_version: u16,
    config: RegistryConfig,
    models: Vec<IndexEntry>,
}

struct Store {
    dir: PathBuf,
    index: IndexFile,
}

/// Metadata, encoded specification and prompt sidecar of one model.
type StoreItem = (ModelMeta, Vec<u8>, Option<Vec<String>>);

impl Store {
    fn append(&mut self, items: &[StoreItem]) -> Result<()> {
        let path = self.dir.join(SPECS_FILE);
        let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
        let mut offset = file.seek(SeekFrom::End(0))?;
        let mut index = self.index.clone();
        let mut buf = Vec::new();
        for (meta, bytes, prompts) in items {
            buf.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
            buf.extend_from_slice(bytes);
            index.models.push(IndexEntry {
                meta: meta.clone(),
                offset: offset + 8,
                length: bytes.len() as u64,
                prompts: prompts.clone(),
            });
            offset += 8 + bytes.len() as u64;
        }
        file.write_all(&buf)?;
        file.sync_all()?;
        write_atomic(&self.dir.join(INDEX_FILE), &serde_json::to_vec_pretty(&index)?)?;
        self.index = index;
        Ok(())
    }
}

/// Matching response for one query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub method: Method,
    pub model_count: usize,
    pub results: Vec<QueryHit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub captions: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryHit {
    pub rank: usize,
    pub model_id: String,
    pub display_name: String,
    pub download_count: u64,
    pub tags: Vec<String>,
    pub distance: f64,
    pub similarity: f64,
}

pub struct Registry {
    config: RegistryConfig,
    encoder: Arc<dyn Encoder>,
    snapshot: RwLock<Arc<Snapshot>>,
    writer: Mutex<Option<Store>>,
}

impl Registry {
    /// A hub that lives only in memory.
    pub fn in_memory(config: RegistryConfig, encoder: Arc<dyn Encoder>) -> Result<Self> {
        config.validate()?;
        check_encoder_dim(&config, encoder.as_ref())?;
        Ok(Registry {
            config,
            encoder,
            snapshot: RwLock::new(Arc::new(Snapshot::default())),
            writer: Mutex::new(None),
        })
    }

    /// Opens (or creates) a hub persisted under `dir`.
    pub fn open(dir: &Path, config: RegistryConfig, encoder: Arc<dyn Encoder>) -> Result<Self> {
        config.validate()?;
        check_encoder_dim(&config, encoder.as_ref())?;
        std::fs::create_dir_all(dir)?;
        let index_path = dir.join(INDEX_FILE);
        let (index, entries) = if index_path.exists() {
            let index: IndexFile = serde_json::from_slice(&std::fs::read(&index_path)?)?;
            if index.format_version == 0 || index.format_version > FORMAT_VERSION {
                return Err(Error::VersionUnsupported {
                    found: index.format_version,
                    supported: FORMAT_VERSION,
                });
            }
            if index.config.embedding_dim != config.embedding_dim || index.config.kernel != config.kernel {
                return Err(Error::InvalidConfig(format!(
                    "data directory was created with embedding_dim={} gamma={}",
                    index.config.embedding_dim,
                    index.config.kernel.gamma()
                )));
            }
            let blob = std::fs::read(dir.join(SPECS_FILE)).unwrap_or_default();
            let mut entries = Vec::with_capacity(index.models.len());
            for m in &index.models {
                let start = m.offset as usize;
                let end = start
                    .checked_add(m.length as usize)
                    .filter(|&e| e <= blob.len())
                    .ok_or_else(|| Error::MalformedPayload(format!("spec of {} lies outside specs.bin", m.meta.model_id)))?;
                let spec = decode_specification(&blob[start..end])?;
                let record = make_record(&m.meta, spec);
                entries.push(Arc::new(HubEntry::new(record, m.prompts.clone(), &config)?));
            }
            (IndexFile { config: config.clone(), ..index }, entries)
        } else {
            let index = IndexFile {
                format_version: FORMAT_VERSION,
                config: config.clone(),
                models: Vec::new(),
            };
            write_atomic(&index_path, &serde_json::to_vec_pretty(&index)?)?;
            (index, Vec::new())
        };
        let snapshot = Snapshot::default().with(entries);
        Ok(Registry {
            config,
            encoder,
            snapshot: RwLock::new(Arc::new(snapshot)),
            writer: Mutex::new(Some(Store {
                dir: dir.to_path_buf(),
                index,
            })),
        })
    }

    pub fn config(&self) -> &RegistryConfig {
        &self.config
    }

    pub fn encoder(&self) -> &Arc<dyn Encoder> {
        &self.encoder
    }

    fn current(&self) -> Arc<Snapshot> {
        self.snapshot.read().clone()
    }

    pub fn len(&self) -> usize {
        self.current().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn model_ids(&self) -> Vec<String> {
        self.current().entries.iter().map(|e| e.record.model_id.clone()).collect()
    }

    pub fn get(&self, model_id: &str) -> Option<Arc<HubEntry>> {
        let snap = self.current();
        snap.by_id.get(model_id).map(|&i| snap.entries[i].clone())
    }

    pub fn record(&self, model_id: &str) -> Option<ModelRecord> {
        self.get(model_id).map(|e| e.record.clone())
    }

    /// Entries carrying every tag in `tags`, in submission order.
    pub fn candidates(&self, tags: &[String]) -> Vec<Arc<HubEntry>> {
        self.current()
            .entries
            .iter()
            .filter(|e| tags.iter().all(|t| e.record.tags.contains(t)))
            .cloned()
            .collect()
    }

    fn commit(&self, items: Vec<(ModelRecord, Option<Vec<String>>)>) -> Result<()> {
        let mut writer = self.writer.lock();
        let snap = self.current();
        let mut seen = HashSet::new();
        for (r, _) in &items {
            if snap.by_id.contains_key(&r.model_id) || !seen.insert(r.model_id.as_str()) {
                return Err(Error::DuplicateModel(r.model_id.clone()));
            }
            if r.specification.dim() != self.config.embedding_dim {
                return Err(Error::DimensionMismatch {
                    expected: self.config.embedding_dim,
                    found: r.specification.dim(),
                });
            }
        }
        let entries = items
            .iter()
            .map(|(r, p)| HubEntry::new(r.clone(), p.clone(), &self.config).map(Arc::new))
            .collect::<Result<Vec<_>>>()?;
        if let Some(store) = writer.as_mut() {
            let encoded = items
                .iter()
                .map(|(r, p)| Ok((meta_of(r), encode_specification(&r.specification)?, p.clone())))
                .collect::<Result<Vec<_>>>()?;
            store.append(&encoded)?;
        }
        *self.snapshot.write() = Arc::new(snap.with(entries));
        Ok(())
    }

    fn resolve_id(&self, meta: &ModelMeta) -> String {
        if !meta.model_id.is_empty() {
            return meta.model_id.clone();
        }
        let snap = self.current();
        (snap.entries.len() + 1..)
            .map(|n| format!("model-{n:04}"))
            .find(|id| !snap.by_id.contains_key(id))
            .expect("unbounded search")
    }

    fn store_spec(&self, meta: ModelMeta, spec: Specification, prompts: Option<Vec<String>>, warning: Option<String>) -> Result<SubmitOutcome> {
        let outcome = SubmitOutcome {
            model_id: spec.model_id.clone(),
            pairs: spec.len(),
            prompt_origin: spec.prompt_origin,
            warning,
        };
        self.commit(vec![(make_record(&meta, spec), prompts)])?;
        Ok(outcome)
    }

    /// Runs `generator` over the developer prompts (or the default set) and
    /// stores the resulting specification.
    pub fn submit_with_generator(
        &self,
        meta: ModelMeta,
        generator: &dyn Generator,
        developer_prompts: Option<Vec<String>>,
        opts: &AssignOptions,
    ) -> Result<SubmitOutcome> {
        let model_id = if meta.model_id.is_empty() { generator.model_id().to_owned() } else { meta.model_id.clone() };
        if self.get(&model_id).is_some() {
            return Err(Error::DuplicateModel(model_id));
        }
        let choice = choose_prompt_set(developer_prompts, &default_prompt_set());
        let renamed = Renamed { id: &model_id, inner: generator };
        let spec = assign_specification(&renamed, &choice.prompts, self.encoder.as_ref(), opts)
            .map_err(|e| Error::AssignmentFailure(Box::new(e)))?;
        let prompts = Some(choice.prompts.prompts().to_vec());
        self.store_spec(ModelMeta { model_id, ..meta }, spec, prompts, choice.warning)
    }

    pub fn submit(&self, meta: ModelMeta, source: SpecSource) -> Result<SubmitOutcome> {
        let model_id = self.resolve_id(&meta);
        if self.get(&model_id).is_some() {
            return Err(Error::DuplicateModel(model_id));
        }
        let meta = ModelMeta { model_id: model_id.clone(), ..meta };
        match source {
            SpecSource::PreEncoded {
                image_embeddings,
                prompt_embeddings,
                prompts,
                origin,
            } => {
                if let Some(p) = &prompts {
                    if p.len() != prompt_embeddings.len() {
                        return Err(Error::AssignmentFailure(Box::new(Error::MismatchedLengths {
                            what: "prompts vs prompt embeddings",
                            left: p.len(),
                            right: prompt_embeddings.len(),
                        })));
                    }
                }
                let spec = Specification::ingest(model_id, image_embeddings, prompt_embeddings, origin)
                    .map_err(|e| Error::AssignmentFailure(Box::new(e)))?;
                self.store_spec(meta, spec, prompts, None)
            }
            SpecSource::Outputs { prompts, outputs } => {
                if prompts.len() != outputs.len() {
                    return Err(Error::AssignmentFailure(Box::new(Error::MismatchedLengths {
                        what: "prompts vs outputs",
                        left: prompts.len(),
                        right: outputs.len(),
                    })));
                }
                let set = PromptSet::new(prompts, PromptOrigin::DeveloperProvided)
                    .map_err(|e| Error::AssignmentFailure(Box::new(e)))?;
                let lookup: HashMap<&str, &GeneratedOutput> =
                    set.prompts().iter().map(String::as_str).zip(outputs.iter()).collect();
                let generator = crate::assign::FnGenerator::new(model_id.clone(), |prompt: &str, _seed: u64| {
                    lookup.get(prompt).map(|o| (*o).clone()).ok_or_else(|| format!("no output for {prompt:?}"))
                });
                let spec = assign_specification(&generator, &set, self.encoder.as_ref(), &AssignOptions::default())
                    .map_err(|e| Error::AssignmentFailure(Box::new(e)))?;
                let prompts = Some(set.prompts().to_vec());
                self.store_spec(meta, spec, prompts, None)
            }
        }
    }

    /// Converts query inputs to a requirement in the hub's space. Pre-encoded
    /// pairs are L2-normalized like stored specifications.
    pub fn requirement(&self, examples: &[ExampleInput]) -> Result<Requirement> {
        let normalized: Vec<ExampleInput> = examples
            .iter()
            .map(|e| match e {
                ExampleInput::PreEncoded { image, caption } => Ok(ExampleInput::PreEncoded {
                    image: image.normalized()?,
                    caption: caption.normalized()?,
                }),
                other => Ok(other.clone()),
            })
            .collect::<Result<_>>()?;
        let req = generate_requirement(&normalized, self.encoder.as_ref())?;
        if req.dim() != self.config.embedding_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.embedding_dim,
                found: req.dim(),
            });
        }
        Ok(req)
    }

    /// Identifies models for a prepared requirement.
    pub fn query_requirement(&self, req: &Requirement, method: Method, top_k: usize, tags: &[String]) -> Result<QueryResponse> {
        let candidates = self.candidates(tags);
        let ranked = identify(req, &candidates, method, top_k, &self.config.kernel, &self.config.match_options)?;
        let snap = self.current();
        let results = ranked
            .entries
            .iter()
            .map(|e| {
                let rec = &snap.entries[snap.by_id[&e.model_id]].record;
                QueryHit {
                    rank: e.rank,
                    model_id: e.model_id.clone(),
                    display_name: rec.display_name.clone(),
                    download_count: rec.download_count,
                    tags: rec.tags.clone(),
                    distance: e.distance,
                    similarity: e.similarity(),
                }
            })
            .collect();
        Ok(QueryResponse {
            method,
            model_count: candidates.len(),
            results,
            captions: req.captions.clone(),
        })
    }

    pub fn query(&self, examples: &[ExampleInput], method: Method, top_k: usize, tags: &[String]) -> Result<QueryResponse> {
        if self.is_empty() {
            return Err(Error::EmptyRegistry);
        }
        let req = self.requirement(examples)?;
        self.query_requirement(&req, method, top_k, tags)
    }

    /// Serializes every stored model into an export bundle.
    pub fn export_bytes(&self) -> Result<(usize, Vec<u8>)> {
        let snap = self.current();
        let mut out = Vec::new();
        out.extend_from_slice(BUNDLE_MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&(snap.entries.len() as u32).to_le_bytes());
        for e in &snap.entries {
            let meta = BundleMeta {
                meta: meta_of(&e.record),
                prompts: e.prompts.clone(),
            };
            let meta = serde_json::to_vec(&meta)?;
            let spec = encode_specification(&e.record.specification)?;
            out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
            out.extend_from_slice(&meta);
            out.extend_from_slice(&(spec.len() as u32).to_le_bytes());
            out.extend_from_slice(&spec);
        }
        Ok((snap.entries.len(), out))
    }

    pub fn export_specs(&self, path: &Path) -> Result<usize> {
        let (count, bytes) = self.export_bytes()?;
        write_atomic(path, &bytes)?;
        Ok(count)
    }

    /// Adds every model of a bundle. Nothing is imported if any id already
    /// exists.
    pub fn import_bytes(&self, bytes: &[u8]) -> Result<usize> {
        let items = decode_bundle(bytes)?;
        let count = items.len();
        self.commit(items)?;
        Ok(count)
    }

    pub fn import_specs(&self, path: &Path) -> Result<usize> {
        self.import_bytes(&std::fs::read(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct BundleMeta {
    #[serde(flatten)]
    meta: ModelMeta,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prompts: Option<Vec<String>>,
}

fn decode_bundle(bytes: &[u8]) -> Result<Vec<(ModelRecord, Option<Vec<String>>)>> {
    let mut r = Reader::new(bytes);
    r.magic(BUNDLE_MAGIC)?;
    r.version()?;
    let _reserved = r.u16()?;
    let count = r.u32()? as usize;
    let mut items = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let meta_len = r.u32()? as usize;
        let meta: BundleMeta = serde_json::from_slice(r.take(meta_len)?)
            .map_err(|e| Error::MalformedPayload(format!("bundle metadata: {e}")))?;
        let spec_len = r.u32()? as usize;
        let spec = decode_specification(r.take(spec_len)?)?;
        if spec.model_id != meta.meta.model_id {
            return Err(Error::MalformedPayload(format!(
                "bundle entry {} carries specification of {}",
                meta.meta.model_id, spec.model_id
            )));
        }
        items.push((make_record(&meta.meta, spec), meta.prompts));
    }
    if r.remaining() != 0 {
        return Err(Error::MalformedPayload(format!("{} trailing bytes in bundle", r.remaining())));
    }
    Ok(items)
}

fn check_encoder_dim(config: &RegistryConfig, encoder: &dyn Encoder) -> Result<()> {
    let dim = encoder.profile().embedding_dim;
    if dim != config.embedding_dim {
        return Err(Error::InvalidConfig(format!(
            "encoder {} produces dim {dim}, hub expects {}",
            encoder.profile().name,
            config.embedding_dim
        )));
    }
    Ok(())
}

fn make_record(meta: &ModelMeta, specification: Specification) -> ModelRecord {
    ModelRecord {
        model_id: specification.model_id.clone(),
        display_name: if meta.display_name.is_empty() { specification.model_id.clone() } else { meta.display_name.clone() },
        download_count: meta.download_count,
        tags: meta.tags.clone(),
        specification,
    }
}

fn meta_of(r: &ModelRecord) -> ModelMeta {
    ModelMeta {
        model_id: r.model_id.clone(),
        display_name: r.display_name.clone(),
        download_count: r.download_count,
        tags: r.tags.clone(),
    }
}

struct Renamed<'a> {
    id: &'a str,
    inner: &'a dyn Generator,
}

impl Generator for Renamed<'_> {
    fn model_id(&self) -> &str {
        self.id
    }

    fn generate(&self, prompt: &str, seed: u64) -> std::result::Result<GeneratedOutput, String> {
        self.inner.generate(prompt, seed)
    }
}
