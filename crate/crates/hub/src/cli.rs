use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use pmi_core::assign::{AssignOptions, SubprocessGenerator};
use pmi_core::bench::{
    build_synthetic_hub, load_fixture, run_evaluation, save_fixture, write_reports, EvalOptions, SyntheticHubConfig,
};
use pmi_core::codec::FeatureMatrix;
use pmi_core::metrics::frechet_distance_features;
use pmi_core::registry::ModelMeta;
use pmi_core::{Error, ExampleInput, ImagePayload, Method, Result};
use serde::Serialize;

use crate::api::{PreEncodedSpec, SubmitRequest};
use crate::config::HubConfig;
use crate::remote::ErrorEnvelope;

#[derive(Debug, Parser)]
#[command(name = "pmi", version, about = "Identify generative models from example images")]
pub struct Cli {
    /// Hub configuration file (TOML); PMI_* variables override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Hub data directory (overrides config and PMI_DATA_DIR).
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthetic hubs and the HTTP service.
    #[command(subcommand)]
    Hub(HubCommand),
    /// Model submission and inspection.
    #[command(subcommand)]
    Model(ModelCommand),
    /// Rank hub models for example images.
    Identify(IdentifyArgs),
    /// Benchmark evaluation.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Bulk specification transfer.
    #[command(subcommand)]
    Spec(SpecCommand),
    /// Fréchet distance between two feature matrices (PMIM container or CSV).
    Fid { a: PathBuf, b: PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum HubCommand {
    /// Write a synthetic hub fixture directory.
    BuildSynthetic(SyntheticArgs),
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
}

#[derive(Debug, Args)]
pub struct SyntheticArgs {
    /// Fixture directory to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Master seed; equal seeds give byte-identical fixtures.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of hub models [default: 65].
    #[arg(long)]
    pub models: Option<usize>,
    /// Specification pairs per model [default: 61].
    #[arg(long)]
    pub prompts_per_spec: Option<usize>,
    /// Evaluation prompts per model [default: 14].
    #[arg(long)]
    pub eval_prompts: Option<usize>,
    /// Generation seeds per evaluation prompt [default: 10].
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Embedding dimension [default: 64].
    #[arg(long)]
    pub dim: Option<usize>,
    /// Image noise around a model's style and prompt content [default: 3.3].
    #[arg(long)]
    pub cluster_spread: Option<f64>,
    /// Caption noise around the prompt content [default: 1.8].
    #[arg(long)]
    pub caption_noise: Option<f64>,
    /// Spread of prompt contents around a model's theme [default: 0.8].
    #[arg(long)]
    pub prompt_spread: Option<f64>,
    /// Nuisance added to raw image features [default: 12].
    #[arg(long)]
    pub raw_nuisance: Option<f64>,
}

impl SyntheticArgs {
    fn config(&self) -> SyntheticHubConfig {
        let d = SyntheticHubConfig::default();
        SyntheticHubConfig {
            model_count: self.models.unwrap_or(d.model_count),
            prompts_per_spec: self.prompts_per_spec.unwrap_or(d.prompts_per_spec),
            eval_prompts_per_model: self.eval_prompts.unwrap_or(d.eval_prompts_per_model),
            seeds_per_prompt: self.seeds.unwrap_or(d.seeds_per_prompt),
            embedding_dim: self.dim.unwrap_or(d.embedding_dim),
            cluster_spread: self.cluster_spread.unwrap_or(d.cluster_spread),
            caption_noise: self.caption_noise.unwrap_or(d.caption_noise),
            prompt_spread: self.prompt_spread.unwrap_or(d.prompt_spread),
            raw_nuisance: self.raw_nuisance.unwrap_or(d.raw_nuisance),
            seed: self.seed,
            ..d
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum ModelCommand {
    /// Assign and store the specification of a model.
    Submit(SubmitArgs),
    /// Print a stored model's metadata.
    Show { id: String },
}

#[derive(Debug, Args)]
pub struct SubmitArgs {
    #[arg(long)]
    pub id: Option<String>,
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub downloads: u64,
    #[arg(long = "tag")]
    pub tags: Vec<String>,
    /// JSON file with `image_embeddings`, `prompt_embeddings` and optional `prompts`.
    #[arg(long, conflicts_with = "generator")]
    pub pre_encoded: Option<PathBuf>,
    /// Program run as `<program> [args] <prompt>` with PMI_SEED set; prints an image path.
    #[arg(long)]
    pub generator: Option<PathBuf>,
    #[arg(long = "generator-arg", allow_hyphen_values = true)]
    pub generator_args: Vec<String>,
    /// Developer prompts, one per line. The hub default set is used otherwise.
    #[arg(long)]
    pub prompts: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct IdentifyArgs {
    /// Example image files (comma separated or repeated).
    #[arg(long, value_delimiter = ',', conflicts_with = "pre_encoded")]
    pub images: Vec<PathBuf>,
    /// JSON array of examples, e.g. `[{"pre_encoded":{"image":[..],"caption":[..]}}]`.
    #[arg(long)]
    pub pre_encoded: Option<PathBuf>,
    #[arg(long, default_value = "pmi")]
    pub method: Method,
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
    #[arg(long = "tag")]
    pub tags: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Evaluate methods on a fixture and write one report per cell.
    Run(EvalRunArgs),
    /// Print the summary table of a report directory.
    Report {
        #[arg(long)]
        reports: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct EvalRunArgs {
    /// Directory written by `hub build-synthetic`.
    #[arg(long)]
    pub fixture: PathBuf,
    /// Report directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "pmi,mms,rkme,baseline")]
    pub methods: Vec<Method>,
    /// Example counts per requirement.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub examples: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub max_k: usize,
    #[arg(long)]
    pub no_fid: bool,
}

#[derive(Debug, Subcommand)]
pub enum SpecCommand {
    Export {
        #[arg(long)]
        out: PathBuf,
    },
    Import {
        #[arg(long)]
        input: PathBuf,
    },
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_slice(&std::fs::read(path)?).map_err(|e| Error::MalformedPayload(format!("{}: {e}", path.display())))
}

fn hub_config(cli: &Cli) -> Result<HubConfig> {
    let mut cfg = HubConfig::load(cli.config.as_deref())?;
    if let Some(d) = &cli.data_dir {
        cfg.data_dir = d.clone();
    }
    Ok(cfg)
}

fn submit(cfg: &HubConfig, args: &SubmitArgs) -> Result<()> {
    let registry = cfg.open_registry()?;
    let meta = ModelMeta {
        model_id: args.id.clone().unwrap_or_default(),
        display_name: args.name.clone().unwrap_or_default(),
        download_count: args.downloads,
        tags: args.tags.clone(),
    };
    let outcome = match (&args.pre_encoded, &args.generator) {
        (Some(path), None) => {
            let spec: PreEncodedSpec = read_json(path)?;
            let (meta, source) = SubmitRequest {
                meta,
                pre_encoded: Some(spec),
                prompts: None,
                images_b64: None,
            }
            .into_parts()?;
            registry.submit(meta, source)?
        }
        (None, Some(program)) => {
            let prompts = match &args.prompts {
                Some(p) => Some(
                    std::fs::read_to_string(p)?
                        .lines()
                        .map(str::trim)
                        .filter(|l| !l.is_empty())
                        .map(String::from)
                        .collect(),
                ),
                None => None,
            };
            let generator = SubprocessGenerator {
                model_id: meta.model_id.clone(),
                program: program.clone(),
                args: args.generator_args.clone(),
            };
            let opts = AssignOptions {
                seed: args.seed,
                ..AssignOptions::default()
            };
            if meta.model_id.is_empty() {
                return Err(Error::InvalidInput("--id is required with --generator".into()));
            }
            registry.submit_with_generator(meta, &generator, prompts, &opts)?
        }
        _ => return Err(Error::InvalidInput("give exactly one of --pre-encoded or --generator".into())),
    };
    print_json(&outcome)
}

fn identify(cfg: &HubConfig, args: &IdentifyArgs) -> Result<()> {
    let registry = cfg.open_registry()?;
    let examples: Vec<ExampleInput> = match &args.pre_encoded {
        Some(path) => read_json(path)?,
        None => args
            .images
            .iter()
            .map(|p| Ok(ExampleInput::Image(ImagePayload(std::fs::read(p)?))))
            .collect::<Result<_>>()?,
    };
    if examples.is_empty() {
        return Err(Error::EmptyInput("examples"));
    }
    if registry.is_empty() {
        return Err(Error::EmptyRegistry);
    }
    print_json(&registry.query(&examples, args.method, args.top_k, &args.tags)?)
}

fn eval_run(args: &EvalRunArgs) -> Result<()> {
    let hub = load_fixture(&args.fixture)?;
    let opts = EvalOptions {
        methods: args.methods.clone(),
        n_examples: args.examples.clone(),
        max_k: args.max_k,
        fid: !args.no_fid,
        ..EvalOptions::default()
    };
    let cells = run_evaluation(&hub, &opts)?;
    write_reports(&cells, &args.out)?;
    print_summary(&args.out)
}

fn print_summary(dir: &Path) -> Result<()> {
    let text = std::fs::read_to_string(dir.join("summary.csv"))?;
    let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split(',').collect()).collect();
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().map(|r| r.get(c).map_or(0, |s| s.len())).max().unwrap_or(0))
        .collect();
    for r in &rows {
        let cells: Vec<String> = r.iter().enumerate().map(|(c, s)| format!("{s:>w$}", w = widths[c])).collect();
        println!("{}", cells.join("  "));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Hub(HubCommand::BuildSynthetic(args)) => {
            let cfg = args.config();
            let hub = build_synthetic_hub(&cfg)?;
            save_fixture(&hub, &args.out)?;
            print_json(&serde_json::json!({
                "out": args.out,
                "models": hub.registry.len(),
                "tasks": hub.tasks.len(),
                "config": cfg,
            }))
        }
        Command::Hub(HubCommand::Serve { bind }) => {
            let cfg = hub_config(&cli)?;
            let registry = Arc::new(cfg.open_registry()?);
            let bind = bind.clone().unwrap_or(cfg.bind.clone());
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(crate::server::serve(registry, &bind))
        }
        Command::Model(ModelCommand::Submit(args)) => submit(&hub_config(&cli)?, args),
        Command::Model(ModelCommand::Show { id }) => {
            let registry = hub_config(&cli)?.open_registry()?;
            print_json(&crate::server::model_view(&registry, id)?)
        }
        Command::Identify(args) => identify(&hub_config(&cli)?, args),
        Command::Eval(EvalCommand::Run(args)) => eval_run(args),
        Command::Eval(EvalCommand::Report { reports }) => print_summary(reports),
        Command::Spec(SpecCommand::Export { out }) => {
            let count = hub_config(&cli)?.open_registry()?.export_specs(out)?;
            print_json(&crate::api::CountResponse { count })
        }
        Command::Spec(SpecCommand::Import { input }) => {
            let count = hub_config(&cli)?.open_registry()?.import_specs(input)?;
            print_json(&crate::api::CountResponse { count })
        }
        Command::Fid { a, b } => {
            let d = frechet_distance_features(&FeatureMatrix::load(a)?, &FeatureMatrix::load(b)?)?;
            print_json(&serde_json::json!({ "fid": d }))
        }
    }
}

/// Parses arguments, runs the command and maps failures to a nonzero exit
/// with the error envelope on stderr.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let envelope = ErrorEnvelope::of(&e);
            eprintln!("{}", serde_json::to_string(&envelope).unwrap_or_else(|_| e.to_string()));
            ExitCode::FAILURE
        }
    }
}
