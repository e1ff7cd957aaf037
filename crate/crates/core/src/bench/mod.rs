//! Synthetic hub and evaluation protocol.
//!
//! # Synthetic geometry
//!
//! Model `m` has a unit style vector `s_m` and a unit theme vector `t_m`.
//! Every prompt of `m` (specification and evaluation prompts alike, with
//! disjoint texts) is encoded by the structured mock as
//! `c_p = normalize(t_m + prompt_spread * g_p)`. Images and captions are
//!
//! ```text
//! image    z  = normalize(alpha * s_m + beta * c_p + cluster_spread * n)
//! caption  q̂ = normalize(c_p + caption_noise * g)
//! raw      r  = normalize(alpha * s_m + beta * c_p + cluster_spread * n + raw_nuisance * v)
//! ```
//!
//! `n` is seeded by (model, prompt, seed), so asking the same model for the
//! same prompt and seed reproduces the image. The raw channel stands for
//! image features outside the shared image-text space; it is what the RKME
//! baseline is given.
//!
//! # Fixture directory
//!
//! ```text
//! fixture.json        configuration and model ids
//! registry/           hub data directory (specs.bin, index.json)
//! tasks.json          one entry per task: id, true model, prompt, seed
//! task_images.pmim    task image embeddings, one row per task
//! task_captions.pmim  caption embeddings, one row per task
//! task_raw.pmim       raw features of task images
//! raw_specs.pmim      raw features of specification images, model-major
//! ```

mod eval;

pub use eval::{
    run_evaluation, write_reports, CellReport, EvalOptions, ExampleTable, GroupPlan,
};

use std::collections::HashSet;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assign::{assign_specification, generation_seed, AssignOptions, FnGenerator, GeneratedOutput};
use crate::codec::{write_atomic, FeatureMatrix};
use crate::encoder::{gaussian_direction, stable_seed, Encoder, EncoderProfile, StructuredMockEncoder};
use crate::error::{Error, Result};
use crate::kernel::KernelConfig;
use crate::registry::{ModelMeta, Registry, RegistryConfig, SpecSource, DEFAULT_SUBJECTS};
use crate::types::{Embedding, ExampleInput, IdentificationTask, PromptOrigin, PromptSet};

pub const FIXTURE_VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticHubConfig {
    pub model_count: usize,
    pub prompts_per_spec: usize,
    pub eval_prompts_per_model: usize,
    pub seeds_per_prompt: usize,
    pub embedding_dim: usize,
    pub cluster_spread: f64,
    pub caption_noise: f64,
    pub prompt_spread: f64,
    pub raw_nuisance: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub seed: u64,
}

impl Default for SyntheticHubConfig {
    fn default() -> Self {
        SyntheticHubConfig {
            model_count: 65,
            prompts_per_spec: 61,
            eval_prompts_per_model: 14,
            seeds_per_prompt: 10,
            embedding_dim: 64,
            cluster_spread: 3.3,
            caption_noise: 1.8,
            prompt_spread: 0.8,
            raw_nuisance: 12.0,
            alpha: 1.0,
            beta: 1.0,
            gamma: crate::kernel::DEFAULT_GAMMA,
            seed: 0,
        }
    }
}

impl SyntheticHubConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("model_count", self.model_count),
            ("prompts_per_spec", self.prompts_per_spec),
            ("eval_prompts_per_model", self.eval_prompts_per_model),
            ("seeds_per_prompt", self.seeds_per_prompt),
            ("embedding_dim", self.embedding_dim),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        let spreads = [
            ("cluster_spread", self.cluster_spread),
            ("caption_noise", self.caption_noise),
            ("prompt_spread", self.prompt_spread),
            ("raw_nuisance", self.raw_nuisance),
        ];
        for (name, v) in spreads {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if !(self.alpha.is_finite() && self.beta.is_finite()) {
            return Err(Error::InvalidConfig("alpha and beta must be finite".into()));
        }
        KernelConfig::new(self.gamma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(())
    }

    pub fn task_count(&self) -> usize {
        self.model_count * self.eval_prompts_per_model * self.seeds_per_prompt
    }

    pub fn kernel(&self) -> KernelConfig {
        KernelConfig::new(self.gamma).expect("validated")
    }

    pub fn registry_config(&self) -> RegistryConfig {
        RegistryConfig {
            kernel: self.kernel(),
            ..RegistryConfig::new(self.embedding_dim)
        }
    }
}

pub fn model_id(m: usize) -> String {
    format!("m{m:03}")
}

fn subject(i: usize) -> &'static str {
    DEFAULT_SUBJECTS[i % DEFAULT_SUBJECTS.len()]
}

pub fn spec_prompt(m: usize, j: usize) -> String {
    format!("[{}] spec {j:02}: {}", model_id(m), subject(j * 7 + m))
}

pub fn eval_prompt(m: usize, e: usize) -> String {
    format!("[{}] eval {e:02}: {}", model_id(m), subject(e * 11 + m + 3))
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Deterministic generator of every synthetic vector.
pub struct World {
    cfg: SyntheticHubConfig,
    encoder: Arc<StructuredMockEncoder>,
    styles: Vec<Vec<f64>>,
}

impl World {
    pub fn new(cfg: &SyntheticHubConfig) -> Result<Self> {
        cfg.validate()?;
        let dim = cfg.embedding_dim;
        let seed = cfg.seed.to_le_bytes();
        let mut encoder =
            StructuredMockEncoder::new(EncoderProfile::mock("synthetic-clip", dim), cfg.prompt_spread)?;
        let mut styles = Vec::with_capacity(cfg.model_count);
        for m in 0..cfg.model_count {
            let id = model_id(m);
            let theme = unit(gaussian_direction(stable_seed(&[b"theme", &seed, id.as_bytes()]), dim));
            encoder.declare(id.clone(), theme)?;
            styles.push(unit(gaussian_direction(stable_seed(&[b"style", &seed, id.as_bytes()]), dim)));
        }
        Ok(World {
            cfg: cfg.clone(),
            encoder: Arc::new(encoder),
            styles,
        })
    }

    pub fn config(&self) -> &SyntheticHubConfig {
        &self.cfg
    }

    pub fn encoder(&self) -> Arc<StructuredMockEncoder> {
        self.encoder.clone()
    }

    /// Matching-space embedding of a prompt.
    pub fn content(&self, prompt: &str) -> Result<Vec<f64>> {
        let e = self.encoder.encode_texts(&[prompt.to_owned()])?;
        Ok(e[0].widen())
    }

    fn base(&self, m: usize, content: &[f64], noise_seed: u64) -> Vec<f64> {
        let n = gaussian_direction(noise_seed, self.cfg.embedding_dim);
        (0..self.cfg.embedding_dim)
            .map(|d| self.cfg.alpha * self.styles[m][d] + self.cfg.beta * content[d] + self.cfg.cluster_spread * n[d])
            .collect()
    }

    /// Image embedding of what model `m` renders for `content` under `noise_seed`.
    pub fn render(&self, m: usize, content: &[f64], noise_seed: u64) -> Result<Embedding> {
        Embedding::unit(&self.base(m, content, noise_seed))
    }

    pub fn raw(&self, m: usize, content: &[f64], noise_seed: u64) -> Result<Embedding> {
        let nuisance = gaussian_direction(stable_seed(&[b"raw", &noise_seed.to_le_bytes()]), self.cfg.embedding_dim);
        let v: Vec<f64> = self
            .base(m, content, noise_seed)
            .iter()
            .zip(&nuisance)
            .map(|(b, v)| b + self.cfg.raw_nuisance * v)
            .collect();
        Embedding::unit(&v)
    }

    pub fn caption(&self, content: &[f64], seed: u64) -> Result<Embedding> {
        let g = gaussian_direction(seed, self.cfg.embedding_dim);
        let v: Vec<f64> = content.iter().zip(&g).map(|(c, g)| c + self.cfg.caption_noise * g).collect();
        Embedding::unit(&v)
    }

    /// Noise seed of task images: model, prompt text and seed.
    pub fn task_noise_seed(&self, m: usize, prompt: &str, seed: u64) -> u64 {
        stable_seed(&[b"task", &self.cfg.seed.to_le_bytes(), model_id(m).as_bytes(), prompt.as_bytes(), &seed.to_le_bytes()])
    }

    fn caption_seed(&self, prompt: &str, seed: u64) -> u64 {
        stable_seed(&[b"caption", &self.cfg.seed.to_le_bytes(), prompt.as_bytes(), &seed.to_le_bytes()])
    }

    fn spec_run_seed(&self) -> u64 {
        stable_seed(&[b"spec", &self.cfg.seed.to_le_bytes()])
    }
}

/// Everything one evaluation needs: the hub, the tasks and the raw channel.
pub struct SyntheticHub {
    pub config: SyntheticHubConfig,
    pub registry: Registry,
    pub tasks: Vec<IdentificationTask>,
    pub raw_task_images: Vec<Embedding>,
    /// Raw features of every model's specification images, in model order.
    pub raw_specs: Vec<Vec<Embedding>>,
}

impl SyntheticHub {
    pub fn world(&self) -> Result<World> {
        World::new(&self.config)
    }

    pub fn model_index(&self, model_id: &str) -> Option<usize> {
        model_id.strip_prefix('m').and_then(|s| s.parse().ok()).filter(|&m| m < self.config.model_count)
    }

    /// (image, caption) pair of a pre-encoded task.
    pub fn task_pair(&self, t: usize) -> (&Embedding, &Embedding) {
        match &self.tasks[t].example_inputs[0] {
            ExampleInput::PreEncoded { image, caption } => (image, caption),
            ExampleInput::Image(_) => unreachable!("synthetic tasks are pre-encoded"),
        }
    }
}

fn download_counts(cfg: &SyntheticHubConfig) -> Vec<u64> {
    let mut counts: Vec<u64> = (1..=cfg.model_count as u64).map(|i| i * 137).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(stable_seed(&[b"downloads", &cfg.seed.to_le_bytes()]));
    counts.shuffle(&mut rng);
    counts
}

/// Builds the synthetic hub in memory.
pub fn build_synthetic_hub(cfg: &SyntheticHubConfig) -> Result<SyntheticHub> {
    let world = World::new(cfg)?;
    let encoder: Arc<dyn Encoder> = world.encoder();
    let registry = Registry::in_memory(cfg.registry_config(), encoder.clone())?;
    let downloads = download_counts(cfg);
    let run_seed = world.spec_run_seed();

    let mut spec_prompts = HashSet::new();
    let mut raw_specs = Vec::with_capacity(cfg.model_count);
    for m in 0..cfg.model_count {
        let id = model_id(m);
        let prompts: Vec<String> = (0..cfg.prompts_per_spec).map(|j| spec_prompt(m, j)).collect();
        spec_prompts.extend(prompts.iter().cloned());
        let set = PromptSet::new(prompts.clone(), PromptOrigin::DeveloperProvided)?;
        let generator = FnGenerator::new(id.clone(), |prompt: &str, seed: u64| {
            let c = world.content(prompt).map_err(|e| e.to_string())?;
            world.render(m, &c, seed).map(GeneratedOutput::Embedding).map_err(|e| e.to_string())
        });
        let opts = AssignOptions {
            seed: run_seed,
            samples_per_prompt: 1,
        };
        let spec = assign_specification(&generator, &set, encoder.as_ref(), &opts)?;
        let raw = prompts
            .iter()
            .enumerate()
            .map(|(j, p)| world.raw(m, &world.content(p)?, generation_seed(&id, j, 0, run_seed)))
            .collect::<Result<Vec<_>>>()?;
        raw_specs.push(raw);
        let meta = ModelMeta {
            model_id: id.clone(),
            display_name: format!("synthetic model {m}"),
            download_count: downloads[m],
            tags: vec!["synthetic".into()],
        };
        registry.submit(
            meta,
            SpecSource::PreEncoded {
                image_embeddings: spec.image_embeddings,
                prompt_embeddings: spec.prompt_embeddings,
                prompts: Some(prompts),
                origin: PromptOrigin::DeveloperProvided,
            },
        )?;
    }

    let mut tasks = Vec::with_capacity(cfg.task_count());
    let mut raw_task_images = Vec::with_capacity(cfg.task_count());
    for m in 0..cfg.model_count {
        let id = model_id(m);
        for e in 0..cfg.eval_prompts_per_model {
            let prompt = eval_prompt(m, e);
            assert!(!spec_prompts.contains(&prompt), "evaluation prompt reused for specifications");
            let c = world.content(&prompt)?;
            for s in 0..cfg.seeds_per_prompt as u64 {
                let noise = world.task_noise_seed(m, &prompt, s);
                let image = world.render(m, &c, noise)?;
                let caption = world.caption(&c, world.caption_seed(&prompt, s))?;
                raw_task_images.push(world.raw(m, &c, noise)?);
                tasks.push(IdentificationTask {
                    task_id: format!("{id}-e{e:02}-s{s}"),
                    example_inputs: vec![ExampleInput::PreEncoded { image, caption }],
                    true_model_id: id.clone(),
                    ground_truth_prompt: prompt.clone(),
                    seed: s,
                });
            }
        }
    }
    debug_assert_eq!(tasks.len(), cfg.task_count());
    Ok(SyntheticHub {
        config: cfg.clone(),
        registry,
        tasks,
        raw_task_images,
        raw_specs,
    })
}

#[derive(Serialize, Deserialize)]
struct FixtureFile {
    fixture_version: u16,
    config: SyntheticHubConfig,
    models: Vec<String>,
    task_count: usize,
}

#[derive(Serialize, Deserialize)]
struct TaskRow {
    task_id: String,
    true_model_id: String,
    ground_truth_prompt: String,
    seed: u64,
}

/// Writes the fixture directory; the output is a pure function of the config.
pub fn save_fixture(hub: &SyntheticHub, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let reg_dir = dir.join("registry");
    if reg_dir.exists() {
        std::fs::remove_dir_all(&reg_dir)?;
    }
    let (_, bundle) = hub.registry.export_bytes()?;
    let stored = Registry::open(&reg_dir, hub.config.registry_config(), hub.registry.encoder().clone())?;
    stored.import_bytes(&bundle)?;

    let fixture = FixtureFile {
        fixture_version: FIXTURE_VERSION,
        config: hub.config.clone(),
        models: hub.registry.model_ids(),
        task_count: hub.tasks.len(),
    };
    write_atomic(&dir.join("fixture.json"), &serde_json::to_vec_pretty(&fixture)?)?;
    let rows: Vec<TaskRow> = hub
        .tasks
        .iter()
        .map(|t| TaskRow {
            task_id: t.task_id.clone(),
            true_model_id: t.true_model_id.clone(),
            ground_truth_prompt: t.ground_truth_prompt.clone(),
            seed: t.seed,
        })
        .collect();
    write_atomic(&dir.join("tasks.json"), &serde_json::to_vec_pretty(&rows)?)?;
    let (images, captions): (Vec<Embedding>, Vec<Embedding>) =
        (0..hub.tasks.len()).map(|t| hub.task_pair(t)).map(|(a, b)| (a.clone(), b.clone())).unzip();
    FeatureMatrix::from_embeddings(&images)?.save(&dir.join("task_images.pmim"))?;
    FeatureMatrix::from_embeddings(&captions)?.save(&dir.join("task_captions.pmim"))?;
    FeatureMatrix::from_embeddings(&hub.raw_task_images)?.save(&dir.join("task_raw.pmim"))?;
    let raw_specs: Vec<Embedding> = hub.raw_specs.iter().flatten().cloned().collect();
    FeatureMatrix::from_embeddings(&raw_specs)?.save(&dir.join("raw_specs.pmim"))?;
    Ok(())
}

pub fn load_fixture(dir: &Path) -> Result<SyntheticHub> {
    let fixture: FixtureFile = serde_json::from_slice(&std::fs::read(dir.join("fixture.json"))?)?;
    if fixture.fixture_version == 0 || fixture.fixture_version > FIXTURE_VERSION {
        return Err(Error::VersionUnsupported {
            found: fixture.fixture_version,
            supported: FIXTURE_VERSION,
        });
    }
    let cfg = fixture.config;
    let world = World::new(&cfg)?;
    let registry = Registry::open(&dir.join("registry"), cfg.registry_config(), world.encoder())?;
    let rows: Vec<TaskRow> = serde_json::from_slice(&std::fs::read(dir.join("tasks.json"))?)?;
    let images = FeatureMatrix::load(&dir.join("task_images.pmim"))?.to_embeddings()?;
    let captions = FeatureMatrix::load(&dir.join("task_captions.pmim"))?.to_embeddings()?;
    let raw_task_images = FeatureMatrix::load(&dir.join("task_raw.pmim"))?.to_embeddings()?;
    let raw_flat = FeatureMatrix::load(&dir.join("raw_specs.pmim"))?.to_embeddings()?;
    let n = rows.len();
    if images.len() != n || captions.len() != n || raw_task_images.len() != n || n != fixture.task_count {
        return Err(Error::MalformedPayload("fixture task files disagree on task count".into()));
    }
    if raw_flat.len() != cfg.model_count * cfg.prompts_per_spec || registry.len() != cfg.model_count {
        return Err(Error::MalformedPayload("fixture model files disagree on model count".into()));
    }
    let tasks = rows
        .into_iter()
        .zip(images.into_iter().zip(captions))
        .map(|(r, (image, caption))| IdentificationTask {
            task_id: r.task_id,
            example_inputs: vec![ExampleInput::PreEncoded { image, caption }],
            true_model_id: r.true_model_id,
            ground_truth_prompt: r.ground_truth_prompt,
            seed: r.seed,
        })
        .collect();
    let raw_specs = raw_flat.chunks(cfg.prompts_per_spec).map(<[Embedding]>::to_vec).collect();
    Ok(SyntheticHub {
        config: cfg,
        registry,
        tasks,
        raw_task_images,
        raw_specs,
    })
}
