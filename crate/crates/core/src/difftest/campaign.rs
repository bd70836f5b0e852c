//! Mutation + differential execution over a set of seeds.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use super::external::{run_external, BackendConfig, ExternalError};
use super::interp::{run_reference, run_reference_with_bug, InjectedBug, UnknownBugId};
use super::{compare, CommitTrace, Divergence, Field, Limits, Policy};
use crate::mutation::{mutant_rng, mutate_seed, reassemble, MutationConfig, Seed};
use crate::similarity::SimilarityConfig;

#[derive(Debug, Clone)]
pub enum Backend {
    Reference,
    Bug(InjectedBug),
    External(Box<BackendConfig>),
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error(transparent)]
    UnknownBug(#[from] UnknownBugId),
    #[error(transparent)]
    External(#[from] ExternalError),
    #[error("unknown backend `{0}` (expected clean, bug:<id> or external:<config.toml>)")]
    Unknown(String),
}

impl Backend {
    /// Parses `clean`, `bug:<id>` or `external:<path-to-toml>`.
    pub fn parse(spec: &str) -> Result<Backend, BackendError> {
        if spec == "clean" || spec == "reference" {
            Ok(Backend::Reference)
        } else if let Some(id) = spec.strip_prefix("bug:") {
            Ok(Backend::Bug(id.parse()?))
        } else if let Some(path) = spec.strip_prefix("external:") {
            Ok(Backend::External(Box::new(BackendConfig::load(
                Path::new(path),
            )?)))
        } else {
            Err(BackendError::Unknown(spec.to_string()))
        }
    }

    pub fn name(&self) -> String {
        match self {
            Backend::Reference => "clean".to_string(),
            Backend::Bug(bug) => format!("bug:{bug}"),
            Backend::External(cfg) => format!("external:{}", cfg.command.join(" ")),
        }
    }

    pub fn run(&self, bytes: &[u8], limits: &Limits) -> Result<CommitTrace, ExternalError> {
        match self {
            Backend::Reference => Ok(run_reference(bytes, limits)),
            Backend::Bug(bug) => Ok(run_reference_with_bug(bytes, limits, *bug)),
            Backend::External(cfg) => run_external(bytes, cfg, limits),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SeedInput {
    pub id: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct CampaignConfig {
    pub rounds: u32,
    pub mutation: MutationConfig,
    pub similarity: SimilarityConfig,
    pub limits: Limits,
    pub policy: Policy,
    /// Worker threads; 0 lets rayon decide.
    pub jobs: usize,
    /// Include wall-clock timings (makes the report nondeterministic).
    pub timings: bool,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            rounds: 10,
            mutation: MutationConfig::default(),
            similarity: SimilarityConfig::default(),
            limits: Limits::default(),
            policy: Policy::default(),
            jobs: 0,
            timings: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceGroup {
    pub pc: u64,
    pub field: Field,
    /// Mutants whose first divergence had this key.
    pub count: usize,
    pub seed_id: String,
    pub round: u32,
    pub mutant_id: String,
    /// Words of the first mutant hitting this key.
    pub reproducer: Vec<String>,
    pub divergence: Divergence,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorCase {
    pub seed_id: String,
    pub round: Option<u32>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedSummary {
    pub id: String,
    pub mutants: usize,
    pub divergent_mutants: usize,
    pub errors: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignReport {
    pub backend_a: String,
    pub backend_b: String,
    pub seeds: usize,
    pub rounds: u32,
    pub mutants: usize,
    pub divergent_mutants: usize,
    pub unique_divergences: usize,
    pub errors: usize,
    pub divergences: Vec<DivergenceGroup>,
    pub error_cases: Vec<ErrorCase>,
    pub per_seed: Vec<SeedSummary>,
}

impl CampaignReport {
    pub fn found_divergence(&self) -> bool {
        !self.divergences.is_empty()
    }
}

enum Outcome {
    Clean,
    Diverged {
        mutant: Vec<u8>,
        mutant_id: String,
        divergence: Divergence,
    },
    Error(String),
}

struct JobResult {
    seed: usize,
    round: u32,
    outcome: Outcome,
    elapsed_ms: f64,
}

fn run_job(seed: &Seed, round: u32, cfg: &CampaignConfig, a: &Backend, b: &Backend) -> Outcome {
    let mut rng = mutant_rng(cfg.mutation.rng_seed, &seed.id, round);
    let (mutant, _) = mutate_seed(seed, &cfg.mutation, &cfg.similarity, &mut rng);
    let bytes = reassemble(&mutant);
    let ta = match a.run(&bytes, &cfg.limits) {
        Ok(t) => t,
        Err(e) => return Outcome::Error(format!("backend A: {e}")),
    };
    let tb = match b.run(&bytes, &cfg.limits) {
        Ok(t) => t,
        Err(e) => return Outcome::Error(format!("backend B: {e}")),
    };
    match compare(&ta, &tb, &cfg.policy) {
        None => Outcome::Clean,
        Some(divergence) => Outcome::Diverged {
            mutant: bytes,
            mutant_id: mutant.id,
            divergence,
        },
    }
}

/// Mutates every seed `cfg.rounds` times, runs each mutant on both backends
/// and groups first divergences by (pc, field). Backend failures are
/// tallied as error cases.
pub fn run_campaign(
    seeds: &[SeedInput],
    cfg: &CampaignConfig,
    a: &Backend,
    b: &Backend,
) -> CampaignReport {
    let mut per_seed: Vec<SeedSummary> = seeds
        .iter()
        .map(|s| SeedSummary {
            id: s.id.clone(),
            mutants: 0,
            divergent_mutants: 0,
            errors: 0,
            elapsed_ms: cfg.timings.then_some(0.0),
        })
        .collect();
    let mut error_cases = Vec::new();

    let mut parsed = Vec::new();
    for (idx, input) in seeds.iter().enumerate() {
        match Seed::from_bytes(&input.bytes) {
            Ok(seed) => parsed.push((idx, seed)),
            Err(e) => {
                per_seed[idx].errors += 1;
                error_cases.push(ErrorCase {
                    seed_id: input.id.clone(),
                    round: None,
                    message: e.to_string(),
                });
            }
        }
    }

    let jobs: Vec<(usize, &Seed, u32)> = parsed
        .iter()
        .flat_map(|(idx, seed)| (0..cfg.rounds).map(move |r| (*idx, seed, r)))
        .collect();
    let work = || -> Vec<JobResult> {
        jobs.par_iter()
            .map(|&(seed_idx, seed, round)| {
                let start = Instant::now();
                let outcome = run_job(seed, round, cfg, a, b);
                tracing::debug!(seed = %seed.id, round, diverged = matches!(outcome, Outcome::Diverged { .. }), "mutant done");
                JobResult { seed: seed_idx, round, outcome, elapsed_ms: start.elapsed().as_secs_f64() * 1e3 }
            })
            .collect()
    };
    let results = match rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
    {
        Ok(pool) => pool.install(work),
        Err(_) => work(),
    };

    let mut groups: BTreeMap<(u64, Field), DivergenceGroup> = BTreeMap::new();
    let mut mutants = 0;
    let mut divergent = 0;
    for result in results {
        let summary = &mut per_seed[result.seed];
        summary.mutants += 1;
        mutants += 1;
        if let Some(ms) = summary.elapsed_ms.as_mut() {
            *ms += result.elapsed_ms;
        }
        match result.outcome {
            Outcome::Clean => {}
            Outcome::Error(message) => {
                summary.errors += 1;
                error_cases.push(ErrorCase {
                    seed_id: summary.id.clone(),
                    round: Some(result.round),
                    message,
                });
            }
            Outcome::Diverged {
                mutant,
                mutant_id,
                divergence,
            } => {
                summary.divergent_mutants += 1;
                divergent += 1;
                groups
                    .entry((divergence.pc, divergence.field))
                    .and_modify(|g| g.count += 1)
                    .or_insert_with(|| DivergenceGroup {
                        pc: divergence.pc,
                        field: divergence.field,
                        count: 1,
                        seed_id: summary.id.clone(),
                        round: result.round,
                        mutant_id,
                        reproducer: mutant
                            .chunks_exact(4)
                            .map(|w| {
                                format!(
                                    "{:#010x}",
                                    u32::from_le_bytes(w.try_into().expect("4 bytes"))
                                )
                            })
                            .collect(),
                        divergence,
                    });
            }
        }
    }

    let divergences: Vec<DivergenceGroup> = groups.into_values().collect();
    tracing::info!(
        mutants,
        divergent,
        unique = divergences.len(),
        errors = error_cases.len(),
        "campaign finished"
    );
    CampaignReport {
        backend_a: a.name(),
        backend_b: b.name(),
        seeds: seeds.len(),
        rounds: cfg.rounds,
        mutants,
        divergent_mutants: divergent,
        unique_divergences: divergences.len(),
        errors: error_cases.len(),
        divergences,
        error_cases,
        per_seed,
    }
}
