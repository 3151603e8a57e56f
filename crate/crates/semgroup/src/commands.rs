//! The `generate`, `run` and `eval` subcommands as library functions.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context};
use rayon::prelude::*;
use semgroup_core::metrics::{adjusted_rand_index, normalized_mutual_information};
use semgroup_core::models::Policy;
use semgroup_core::pipeline::{run_experiment, ExperimentReport};
use semgroup_core::scenarios::{generate, ScenarioStream};
use semgroup_core::Partition;
use serde::Serialize;

use crate::config::RunConfig;
use crate::report::{aggregate_csv, runs_csv, summarize};
use crate::stream_io::{encode_labels, load_labels, load_stream, save_stream, write_atomic, LoadedStream};

/// Command-line overrides applied on top of the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub policies: Option<Vec<Policy>>,
    pub parallel: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(o) = &self.out {
            cfg.outputs.dir = o.clone();
        }
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(p) = &self.policies {
            cfg.policies = p.clone();
        }
    }
}

pub struct Generated {
    pub stream: PathBuf,
    pub truth: PathBuf,
    pub summary: String,
}

fn certificate_summary(s: &ScenarioStream) -> String {
    match &s.certificate {
        Some(c) => format!(
            "certificate holds (attempts {}): max group δ {:.4}, min cross pair δ {:.4}, min center distance {:.4}, R {}",
            c.attempts, c.max_group_delta, c.min_cross_pair_delta, c.min_center_distance, c.radius
        ),
        None => "no separation certificate for this regime".into(),
    }
}

/// Generates the stream for the first configured seed.
pub fn cmd_generate(cfg: &RunConfig) -> anyhow::Result<Generated> {
    let seed = cfg.seeds[0];
    let stream = generate(&cfg.scenario_for(seed))?;
    let path = cfg.stream_path();
    let truth = save_stream(&path, &stream)?;
    let summary = format!("{} tasks, {}", stream.tasks.len(), certificate_summary(&stream));
    Ok(Generated { stream: path, truth, summary })
}

#[derive(Debug)]
pub struct RunFailure {
    pub policy: Policy,
    pub seed: u64,
    pub error: String,
}

pub struct RunOutcome {
    pub reports: Vec<ExperimentReport>,
    pub failures: Vec<RunFailure>,
    pub aggregate: PathBuf,
}

pub fn report_name(policy: Policy, seed: u64) -> String {
    format!("{policy}_seed{seed}")
}

/// Runs every (policy, seed) pair and writes per-run reports plus
/// `runs.csv` and `aggregate.csv` under the output directory. Failed pairs
/// are returned, not raised.
pub fn cmd_run(cfg: &RunConfig, parallel: Option<usize>) -> anyhow::Result<RunOutcome> {
    cfg.validate()?;
    let out = &cfg.outputs.dir;
    let reports_dir = out.join("reports");
    std::fs::create_dir_all(&reports_dir).with_context(|| format!("creating {}", reports_dir.display()))?;
    write_atomic(&out.join("config.json"), &serde_json::to_vec_pretty(cfg)?)?;

    let pool = rayon::ThreadPoolBuilder::new().num_threads(parallel.unwrap_or(0)).build()?;
    let exp = cfg.experiment();
    let fixed = match &cfg.stream {
        Some(p) => Some(load_stream(p)?),
        None => None,
    };
    let streams: BTreeMap<u64, Result<LoadedStream, String>> = pool.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&s| {
                let st = match &fixed {
                    Some(f) => Ok(f.clone()),
                    None => generate(&cfg.scenario_for(s)).map(LoadedStream::from).map_err(|e| e.to_string()),
                };
                (s, st)
            })
            .collect()
    });
    let jobs: Vec<(Policy, u64)> =
        cfg.policies.iter().flat_map(|&p| cfg.seeds.iter().map(move |&s| (p, s))).collect();
    let results: Vec<Result<ExperimentReport, RunFailure>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(policy, seed)| {
                let fail = |error: String| RunFailure { policy, seed, error };
                let stream = streams[&seed].as_ref().map_err(|e| fail(format!("stream generation: {e}")))?;
                let run = || -> anyhow::Result<ExperimentReport> {
                    let backbone = stream.config.backbone()?;
                    let r = run_experiment(&stream.tasks, Some(&stream.true_semantic), &backbone, policy, &exp, seed, None)?;
                    let name = report_name(policy, seed);
                    write_atomic(&reports_dir.join(format!("{name}.json")), &serde_json::to_vec_pretty(&r)?)?;
                    write_atomic(&reports_dir.join(format!("{name}.labels")), &encode_labels(&r.final_partition))?;
                    Ok(r)
                };
                run().map_err(|e| fail(format!("{e:#}")))
            })
            .collect()
    });
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(r) => reports.push(r),
            Err(f) => failures.push(f),
        }
    }
    write_atomic(&out.join("runs.csv"), &runs_csv(&reports)?)?;
    let aggregate = out.join("aggregate.csv");
    write_atomic(&aggregate, &aggregate_csv(&summarize(&reports, &cfg.policies))?)?;
    Ok(RunOutcome { reports, failures, aggregate })
}

#[derive(Debug, Serialize, PartialEq)]
pub struct EvalResult {
    pub ari: f64,
    pub nmi: f64,
}

pub fn cmd_eval(a: &Path, b: &Path) -> anyhow::Result<EvalResult> {
    let la = load_labels(a)?;
    let lb = load_labels(b)?;
    ensure!(la.len() == lb.len(), "label files differ in length: {} vs {}", la.len(), lb.len());
    ensure!(!la.is_empty(), "label files are empty");
    let (pa, pb) = (Partition::from_labels(&la), Partition::from_labels(&lb));
    Ok(EvalResult { ari: adjusted_rand_index(&pa, &pb)?, nmi: normalized_mutual_information(&pa, &pb)? })
}
