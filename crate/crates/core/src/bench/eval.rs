//! Evaluation runner.
//!
//! Tasks sharing a true model and evaluation prompt form a group of `G`
//! tasks (one per seed). For `n` examples, group member `r` anchors the
//! requirement made of members `r, r+1, ..., r+n-1 (mod G)`, so every
//! example count evaluates the same number of requirements as there are
//! tasks. The FID of a cell compares the anchor task images against what the
//! identified model renders for the anchor's prompt and seed.
//!
//! The task-specific distance is a mean of per-example terms, so one table of
//! per-(task, model) terms serves every example count. Requirement distances
//! are aggregated with [`mean_of_terms`], the same routine the matcher uses.

use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SyntheticHub;
use crate::codec::write_atomic;
use crate::error::{Error, Result};
use crate::kernel::{build_reduced_set, kme_sq_distance, PointSet, ReducedSetOptions, WeightedKmePoints};
use crate::matcher::{baseline_rank, mean_of_terms, weighting_for, Candidate, MatchOptions, Method, PreparedRequirement, Weighting};
use crate::metrics::{frechet_distance, EvalReport};
use crate::types::{ModelRecord, Requirement};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub methods: Vec<Method>,
    pub n_examples: Vec<usize>,
    /// Top-k accuracies reported for k = 1..=max_k.
    pub max_k: usize,
    pub fid: bool,
    #[serde(default)]
    pub match_options: MatchOptions,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            methods: vec![Method::DownloadBaseline, Method::Rkme, Method::Mms, Method::Pmi],
            n_examples: vec![1],
            max_k: 5,
            fid: true,
            match_options: MatchOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub method: Method,
    pub n_examples: usize,
    #[serde(flatten)]
    pub report: EvalReport,
}

/// Task indices grouped by (true model, evaluation prompt).
#[derive(Clone, Debug, PartialEq)]
pub struct GroupPlan {
    pub groups: Vec<Vec<usize>>,
}

impl GroupPlan {
    pub fn by_prompt(hub: &SyntheticHub) -> Self {
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut last: Option<(&str, &str)> = None;
        for (t, task) in hub.tasks.iter().enumerate() {
            let key = (task.true_model_id.as_str(), task.ground_truth_prompt.as_str());
            if last != Some(key) {
                groups.push(Vec::new());
                last = Some(key);
            }
            groups.last_mut().expect("pushed").push(t);
        }
        GroupPlan { groups }
    }

    /// Example windows for requirements of `n` examples, one per task.
    pub fn requirements(&self, n: usize) -> Result<Vec<Vec<usize>>> {
        if n == 0 {
            return Err(Error::InvalidInput("n_examples must be at least 1".into()));
        }
        let mut out = Vec::new();
        for g in &self.groups {
            if n > g.len() {
                return Err(Error::InsufficientExamples {
                    needed: n,
                    available: g.len(),
                });
            }
            for r in 0..g.len() {
                out.push((0..n).map(|i| g[(r + i) % g.len()]).collect());
            }
        }
        Ok(out)
    }
}

/// Per-example distance terms, task-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ExampleTable {
    models: usize,
    data: Vec<f64>,
}

impl ExampleTable {
    pub fn compute<C: Candidate + Sync>(hub: &SyntheticHub, candidates: &[C], weighting: Weighting) -> Result<Self> {
        let cfg = hub.config.kernel();
        let rows = (0..hub.tasks.len())
            .into_par_iter()
            .map(|t| {
                let (image, caption) = hub.task_pair(t);
                let req = Requirement::new(vec![image.clone()], vec![caption.clone()])?;
                let prepared = PreparedRequirement::<f64>::new(&req)?;
                Ok(candidates
                    .iter()
                    .map(|c| c.prepared().example_distance(&prepared, 0, weighting, &cfg))
                    .collect::<Vec<f64>>())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ExampleTable {
            models: candidates.len(),
            data: rows.concat(),
        })
    }

    pub fn get(&self, task: usize, model: usize) -> f64 {
        self.data[task * self.models + model]
    }

    /// Requirement-level distance of every model.
    pub fn distances(&self, window: &[usize]) -> Vec<f64> {
        (0..self.models)
            .map(|m| mean_of_terms(&window.iter().map(|&t| self.get(t, m)).collect::<Vec<_>>()))
            .collect()
    }
}

/// `(1 + |{i : d_i < d_true}|, index of the best model)`; ties for best go
/// to the lower index, which is also the lower model id.
fn rank_and_best(d: &[f64], truth: usize) -> (usize, usize) {
    let rank = 1 + d.iter().filter(|&&x| x < d[truth]).count();
    let best = (0..d.len()).fold(0, |b, i| if d[i] < d[b] { i } else { b });
    (rank, best)
}

struct Outcome {
    rank: usize,
    best: usize,
}

fn rkme_sets(hub: &SyntheticHub) -> Result<Vec<WeightedKmePoints<f64>>> {
    let cfg = hub.config.kernel();
    let size = hub.registry.config().reduced_set_size;
    hub.raw_specs
        .par_iter()
        .map(|raw| build_reduced_set(raw, size, &cfg, &ReducedSetOptions::default()))
        .collect()
}

fn fid_for(hub: &SyntheticHub, requirements: &[Vec<usize>], outcomes: &[Outcome]) -> Result<f64> {
    let world = hub.world()?;
    let dim = hub.config.embedding_dim;
    let rows: Vec<(Vec<f32>, Vec<f32>)> = requirements
        .par_iter()
        .zip(outcomes)
        .map(|(w, o)| {
            let task = &hub.tasks[w[0]];
            let content = world.content(&task.ground_truth_prompt)?;
            let seed = world.task_noise_seed(o.best, &task.ground_truth_prompt, task.seed);
            let generated = world.render(o.best, &content, seed)?;
            Ok((hub.task_pair(w[0]).0.values().to_vec(), generated.values().to_vec()))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = rows.len();
    let query = DMatrix::from_fn(n, dim, |i, j| rows[i].0[j] as f64);
    let generated = DMatrix::from_fn(n, dim, |i, j| rows[i].1[j] as f64);
    frechet_distance(&query, &generated)
}

/// Runs every (method, example count) cell.
pub fn run_evaluation(hub: &SyntheticHub, opts: &EvalOptions) -> Result<Vec<CellReport>> {
    if opts.max_k == 0 {
        return Err(Error::InvalidK(0));
    }
    let candidates = hub.registry.candidates(&[]);
    if candidates.is_empty() {
        return Err(Error::EmptyRegistry);
    }
    for (m, c) in candidates.iter().enumerate() {
        if hub.model_index(&c.record().model_id) != Some(m) {
            return Err(Error::InvalidInput(format!("hub model {} out of order", c.record().model_id)));
        }
    }
    let truth: Vec<usize> = hub
        .tasks
        .iter()
        .map(|t| hub.model_index(&t.true_model_id).ok_or_else(|| Error::UnknownModel(t.true_model_id.clone())))
        .collect::<Result<_>>()?;
    let plan = GroupPlan::by_prompt(hub);
    let windows = opts
        .n_examples
        .iter()
        .map(|&n| plan.requirements(n))
        .collect::<Result<Vec<_>>>()?;

    let cfg = hub.config.kernel();
    let mut tables: Vec<(Weighting, ExampleTable)> = Vec::new();
    let mut reduced: Option<Vec<WeightedKmePoints<f64>>> = None;
    let records: Vec<ModelRecord> = candidates.iter().map(|c| c.record().clone()).collect();

    let mut cells = Vec::new();
    for &method in &opts.methods {
        for (&n, requirements) in opts.n_examples.iter().zip(&windows) {
            let outcomes: Vec<Outcome> = match method {
                Method::Pmi | Method::Mms => {
                    let weighting = weighting_for(method, &opts.match_options);
                    if !tables.iter().any(|(w, _)| *w == weighting) {
                        tables.push((weighting, ExampleTable::compute(hub, &candidates, weighting)?));
                    }
                    let table = &tables.iter().find(|(w, _)| *w == weighting).expect("inserted").1;
                    requirements
                        .par_iter()
                        .map(|w| {
                            let (rank, best) = rank_and_best(&table.distances(w), truth[w[0]]);
                            Outcome { rank, best }
                        })
                        .collect()
                }
                Method::Rkme => {
                    if reduced.is_none() {
                        reduced = Some(rkme_sets(hub)?);
                    }
                    let sets = reduced.as_ref().expect("built");
                    requirements
                        .par_iter()
                        .map(|w| {
                            let raw: Vec<_> = w.iter().map(|&t| hub.raw_task_images[t].clone()).collect();
                            let target = WeightedKmePoints::uniform(PointSet::from_embeddings(&raw)?)?;
                            let d = sets
                                .iter()
                                .map(|s| kme_sq_distance(s, &target, &cfg))
                                .collect::<Result<Vec<f64>>>()?;
                            let (rank, best) = rank_and_best(&d, truth[w[0]]);
                            Ok(Outcome { rank, best })
                        })
                        .collect::<Result<_>>()?
                }
                Method::DownloadBaseline => {
                    let ranked = baseline_rank(&records)?;
                    let mut rank_of = vec![0; records.len()];
                    for e in &ranked.entries {
                        rank_of[hub.model_index(&e.model_id).expect("hub model")] = e.rank;
                    }
                    let best = hub.model_index(&ranked.entries[0].model_id).expect("hub model");
                    requirements
                        .iter()
                        .map(|w| Outcome {
                            rank: rank_of[truth[w[0]]],
                            best,
                        })
                        .collect()
                }
            };
            let ranks: Vec<usize> = outcomes.iter().map(|o| o.rank).collect();
            let fid = if opts.fid { Some(fid_for(hub, requirements, &outcomes)?) } else { None };
            let k = opts.max_k.min(candidates.len());
            cells.push(CellReport {
                method,
                n_examples: n,
                report: EvalReport::from_ranks(&ranks, k, fid)?,
            });
        }
    }
    Ok(cells)
}

/// Writes `<method>_n<examples>.json` per cell and a combined `summary.csv`.
pub fn write_reports(cells: &[CellReport], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let max_k = cells.iter().map(|c| c.report.accuracy.len()).max().unwrap_or(0);
    let mut csv = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["method".to_string(), "n_examples".to_string()];
    header.extend((1..=max_k).map(|k| format!("top{k}")));
    header.extend(["average_rank", "fid", "task_count"].map(String::from));
    csv.write_record(&header).map_err(csv_error)?;
    for c in cells {
        let path = dir.join(format!("{}_n{}.json", c.method.as_str(), c.n_examples));
        write_atomic(&path, &serde_json::to_vec_pretty(c)?)?;
        let mut row = vec![c.method.as_str().to_string(), c.n_examples.to_string()];
        row.extend((0..max_k).map(|k| c.report.accuracy.get(k).map(|a| format!("{a:.6}")).unwrap_or_default()));
        row.push(format!("{:.6}", c.report.average_rank));
        row.push(c.report.fid.map(|f| format!("{f:.6}")).unwrap_or_default());
        row.push(c.report.task_count.to_string());
        csv.write_record(&row).map_err(csv_error)?;
    }
    let bytes = csv.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    write_atomic(&dir.join("summary.csv"), &bytes)?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::InvalidInput(format!("csv: {e}"))
}
