//! End-to-end orchestration of the construction with stage-level reporting,
//! per-stage retry policy, and exposure-ledger threading.
//!
//! One trial is strictly sequential; retries re-run a stage with a fresh
//! randomness substream where the construction permits choice (cover scan
//! order, walk choices, cycle-search restarts) and never resample the
//! graph. A report carries exactly one of a verified certificate or a
//! failure stage with its reason.

use crate::cover::{self, ColorSet};
use crate::dangerous::{self, DangerousSets};
use crate::graph::{verify_rainbow_hamilton, ColoredGraph, HamiltonCycleCertificate};
use crate::ledger::ExposureLedger;
use crate::linker;
use crate::long_path::{self, red_fraction_diagnostic, LongPathError};
use crate::oracle::{exact_rainbow_hamilton, OracleResult};
use crate::params::{
    check_theorem_preconditions, derive_parameters, params_from_merged_override,
    params_from_overrides, ParamError, ParamSet, PreconditionReport,
};
use crate::rng::RandomSource;
use crate::sampler;
use crate::segments::{self, ExposeSide, Unit};
use serde::Serialize;
use std::time::Instant;

pub const SCHEMA_VERSION: u32 = 1;

/// How the trial's parameters are specified.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamSpec {
    /// Standard derivation from `(n, epsilon, theta)`.
    Derived { n: u64, epsilon: f64, theta: f64 },
    /// Explicit per-layer probabilities and color count.
    Overrides { n: u64, p: [f64; 3], kappa: u64 },
    /// Explicit merged edge probability; the epsilon equivalent drives the
    /// standard split.
    Merged { n: u64, p: f64, kappa: u64 },
}

impl ParamSpec {
    pub fn resolve(&self, l_override: Option<u32>) -> Result<ParamSet, ParamError> {
        match *self {
            ParamSpec::Derived { n, epsilon, theta } => {
                derive_parameters(n, epsilon, theta, l_override)
            }
            ParamSpec::Overrides { n, p, kappa } => params_from_overrides(n, p, kappa, l_override),
            ParamSpec::Merged { n, p, kappa } => {
                params_from_merged_override(n, p, kappa, l_override)
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StageRetries {
    pub cover: u32,
    pub long_path: u32,
    pub linker: u32,
}

impl Default for StageRetries {
    fn default() -> Self {
        // cover and linker failures are cheap sampling noise; the walk is
        // the expensive stage
        StageRetries { cover: 3, long_path: 1, linker: 3 }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub retries: StageRetries,
    /// For very small instances, defer to the exact search instead of the
    /// staged construction; the report is marked accordingly.
    pub oracle_fallback: bool,
    pub oracle_budget: u64,
    pub enforce_ledger: bool,
    pub record_timings: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            retries: StageRetries::default(),
            oracle_fallback: false,
            oracle_budget: 1 << 26,
            enforce_ledger: cfg!(debug_assertions),
            record_timings: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrialConfig {
    pub params: ParamSpec,
    pub seed: u64,
    pub l_override: Option<u32>,
    pub options: PipelineOptions,
}

impl TrialConfig {
    pub fn new(params: ParamSpec, seed: u64) -> Self {
        TrialConfig { params, seed, l_override: None, options: PipelineOptions::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Sample,
    DangerousSets,
    Cover,
    LongPath,
    Segments,
    Linker,
    Oracle,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageOutcome {
    pub stage: Stage,
    pub ok: bool,
    pub attempts: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FailureInfo {
    pub stage: Stage,
    pub reason: String,
}

/// Measured quantities the analysis bounds, collected as far as the trial
/// progressed.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Diagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s0_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub absorbed_into_s: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s00_size: Option<usize>,
    /// Smallest pairwise distance in the second class graph among the
    /// low-degree set, up to 5; absent when no pair comes that close.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s00_min_distance: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cover_paths: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cover_colors: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path_len: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub red_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub red_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub untouched: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leftover_units: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segments_initial: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bad_a_endpoints: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bad_b_endpoints: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub merges: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segments_final: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_e1: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_f1: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pruned_arcs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub colors_used: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialReport {
    pub schema_version: u32,
    pub seed: u64,
    pub params: ParamSet,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precondition: Option<PreconditionReport>,
    pub oracle_mode: bool,
    pub stages: Vec<StageOutcome>,
    pub diagnostics: Diagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<HamiltonCycleCertificate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings_ms: Option<Vec<(String, f64)>>,
}

impl TrialReport {
    pub fn success(&self) -> bool {
        self.certificate.is_some()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Runs one trial and also returns the merged sampled graph (callers cross
/// check certificates and oracles against it).
pub fn run_trial(cfg: &TrialConfig) -> Result<(TrialReport, ColoredGraph), ParamError> {
    let params = cfg.params.resolve(cfg.l_override)?;
    let src = RandomSource::new(cfg.seed);
    let mut ledger = ExposureLedger::new(cfg.options.enforce_ledger);
    let mut stages: Vec<StageOutcome> = Vec::new();
    let mut diag = Diagnostics::default();
    let mut timings: Vec<(String, f64)> = Vec::new();
    let precondition = if params.n >= 16 {
        Some(check_theorem_preconditions(params.n, params.epsilon, params.theta)?)
    } else {
        None
    };

    macro_rules! timed {
        ($name:literal, $body:expr) => {{
            let t0 = Instant::now();
            let out = $body;
            timings.push(($name.to_string(), t0.elapsed().as_secs_f64() * 1e3));
            out
        }};
    }

    let finish = |stages: Vec<StageOutcome>,
                  diag: Diagnostics,
                  cert: Option<HamiltonCycleCertificate>,
                  failure: Option<FailureInfo>,
                  oracle_mode: bool,
                  timings: Vec<(String, f64)>| TrialReport {
        schema_version: SCHEMA_VERSION,
        seed: cfg.seed,
        params: params.clone(),
        precondition,
        oracle_mode,
        stages,
        diagnostics: diag,
        certificate: cert,
        failure,
        timings_ms: if cfg.options.record_timings { Some(timings) } else { None },
    };

    // sampling never fails; the merged view is what certificates verify against
    let sample = timed!("sample", sampler::sample_layered(&params, &src));
    let merged = timed!("merge", sampler::merge_to_colored_graph(&sample));
    stages.push(StageOutcome { stage: Stage::Sample, ok: true, attempts: 1, reason: None });

    if cfg.options.oracle_fallback && params.n <= 12 {
        let outcome = timed!("oracle", exact_rainbow_hamilton(&merged, cfg.options.oracle_budget));
        let (cert, failure, ok, reason) = match outcome {
            OracleResult::Found(cert) => {
                debug_assert!(verify_rainbow_hamilton(&merged, &cert).unwrap().ok());
                (Some(cert), None, true, None)
            }
            OracleResult::ProvenAbsent => (
                None,
                Some(FailureInfo { stage: Stage::Oracle, reason: "proven-absent".into() }),
                false,
                Some("proven-absent".to_string()),
            ),
            OracleResult::BudgetExhausted => (
                None,
                Some(FailureInfo { stage: Stage::Oracle, reason: "budget-exhausted".into() }),
                false,
                Some("budget-exhausted".to_string()),
            ),
        };
        stages.push(StageOutcome { stage: Stage::Oracle, ok, attempts: 1, reason });
        return Ok((finish(stages, diag, cert, failure, true, timings), merged));
    }

    // dangerous sets
    let ds: DangerousSets = timed!("dangerous_sets", {
        let s0 = dangerous::compute_s0(&sample, &mut ledger);
        let mut ds = match dangerous::grow_s(&sample, &s0, 4, &mut ledger) {
            Ok(ds) => ds,
            Err(v) => {
                let failure =
                    Some(FailureInfo { stage: Stage::DangerousSets, reason: v.to_string() });
                stages.push(StageOutcome {
                    stage: Stage::DangerousSets,
                    ok: false,
                    attempts: 1,
                    reason: Some(v.to_string()),
                });
                return Ok((finish(stages, diag, None, failure, false, timings), merged));
            }
        };
        ds.attach_s00(dangerous::compute_s00(&sample.g[1]));
        ds
    });
    diag.s0_size = Some(ds.s0.union.len());
    diag.s_size = Some(ds.s.len());
    diag.absorbed_into_s = Some(ds.absorption_order.len());
    diag.s00_size = Some(ds.s00.len());
    diag.s00_min_distance = dangerous::min_pairwise_distance(&sample.g[1], &ds.s00, Some(5));
    stages.push(StageOutcome { stage: Stage::DangerousSets, ok: true, attempts: 1, reason: None });

    let mut used_colors = ColorSet::new(params.kappa as u32);

    // cover, with scan-order reshuffling on retries
    let cover_result = timed!("cover", {
        let mut last_err = None;
        let mut found = None;
        for attempt in 0..=cfg.options.retries.cover {
            let mut trial_colors = used_colors.clone();
            let outcome = if attempt == 0 {
                cover::cover_dangerous(&sample.g[1], &ds, &mut trial_colors, &mut ledger, None)
            } else {
                let mut rng = src.stream_indexed("cover-retry", u64::from(attempt));
                let mut shuffle = cover::retry_shuffler(&mut rng);
                cover::cover_dangerous(
                    &sample.g[1],
                    &ds,
                    &mut trial_colors,
                    &mut ledger,
                    Some(&mut shuffle),
                )
            };
            match outcome {
                Ok(c) => {
                    used_colors = trial_colors;
                    found = Some((c, attempt + 1));
                    break;
                }
                Err(e) => last_err = Some(e),
            }
        }
        found.ok_or_else(|| last_err.expect("failure recorded"))
    });
    let (cover, cover_attempts) = match cover_result {
        Ok(ok) => ok,
        Err(e) => {
            stages.push(StageOutcome {
                stage: Stage::Cover,
                ok: false,
                attempts: cfg.options.retries.cover + 1,
                reason: Some(e.to_string()),
            });
            let failure = Some(FailureInfo { stage: Stage::Cover, reason: e.to_string() });
            return Ok((finish(stages, diag, None, failure, false, timings), merged));
        }
    };
    diag.cover_paths = Some(cover.paths.len());
    diag.cover_colors = Some(cover.color_count());
    stages.push(StageOutcome {
        stage: Stage::Cover,
        ok: true,
        attempts: cover_attempts,
        reason: None,
    });

    // long rainbow path
    let walk_result = timed!("long_path", {
        let mut last: Option<LongPathError> = None;
        let mut found = None;
        for attempt in 0..=cfg.options.retries.long_path {
            let mut trial_colors = used_colors.clone();
            let outcome = if attempt == 0 {
                long_path::build_long_path(
                    &sample,
                    &ds,
                    &cover,
                    &mut trial_colors,
                    &mut ledger,
                    None,
                )
            } else {
                let mut rng = src.stream_indexed("long-path-retry", u64::from(attempt));
                long_path::build_long_path(
                    &sample,
                    &ds,
                    &cover,
                    &mut trial_colors,
                    &mut ledger,
                    Some(&mut rng),
                )
            };
            match outcome {
                Ok(o) => {
                    used_colors = trial_colors;
                    found = Some((o, attempt + 1));
                    break;
                }
                Err(e) => last = Some(e),
            }
        }
        found.ok_or_else(|| last.expect("failure recorded"))
    });
    let (walk, walk_attempts) = match walk_result {
        Ok(ok) => ok,
        Err(e) => {
            if let LongPathError::Failed(ref f) = e {
                diag.path_len = Some(f.achieved);
                diag.red_count = Some(f.red);
                diag.red_bound =
                    Some(red_fraction_diagnostic(&long_path::RedReport { count: f.red }, params.n).bound);
            }
            stages.push(StageOutcome {
                stage: Stage::LongPath,
                ok: false,
                attempts: cfg.options.retries.long_path + 1,
                reason: Some(e.to_string()),
            });
            let failure = Some(FailureInfo { stage: Stage::LongPath, reason: e.to_string() });
            return Ok((finish(stages, diag, None, failure, false, timings), merged));
        }
    };
    diag.path_len = Some(walk.path.len_edges());
    diag.red_count = Some(walk.red.count);
    diag.red_bound = Some(red_fraction_diagnostic(&walk.red, params.n).bound);
    diag.untouched = Some(walk.untouched.len());
    stages.push(StageOutcome {
        stage: Stage::LongPath,
        ok: true,
        attempts: walk_attempts,
        reason: None,
    });

    // segments: split, expose, absorb, merge
    let seg_result = timed!("segments", (|| -> Result<_, segments::SegmentError> {
        let (mut sys, mut leftovers) =
            segments::split_into_segments(&walk.path, params.l_effective)?;
        // leftover pool: covering paths, then path discards, then singles
        let mut units: Vec<Unit> = cover.paths.iter().map(Unit::from_cover_path).collect();
        units.append(&mut leftovers);
        for &v in walk.untouched.iter().chain(walk.off_path.iter()) {
            units.push(Unit::single(v));
        }
        segments::expose_endpoint_degrees(&sample, &ds, &mut sys, ExposeSide::TowardB, &mut ledger)?;
        let unit_count = units.len();
        segments::absorb_leftovers(&mut sys, &units, &sample, &ds, &mut used_colors, &mut ledger)?;
        segments::expose_endpoint_degrees(&sample, &ds, &mut sys, ExposeSide::TowardA, &mut ledger)?;
        let summary = segments::merge_bad_endpoints(&mut sys, &sample, &ds, &mut ledger)?;
        Ok((sys, summary, unit_count))
    })());
    let (sys, merge_summary, unit_count) = match seg_result {
        Ok(ok) => ok,
        Err(e) => {
            stages.push(StageOutcome {
                stage: Stage::Segments,
                ok: false,
                attempts: 1,
                reason: Some(e.to_string()),
            });
            let failure = Some(FailureInfo { stage: Stage::Segments, reason: e.to_string() });
            return Ok((finish(stages, diag, None, failure, false, timings), merged));
        }
    };
    diag.leftover_units = Some(unit_count);
    diag.segments_initial = Some(sys.live_count() + 2 * sys.absorb_count + sys.merge_count * 2);
    diag.bad_a_endpoints = Some(merge_summary.bad_a_endpoints);
    diag.bad_b_endpoints = Some(merge_summary.bad_b_endpoints);
    diag.merges = Some(merge_summary.merges);
    diag.segments_final = Some(merge_summary.final_r);
    debug_assert_eq!(sys.placed(), params.n as usize, "segments partition the vertex set");
    stages.push(StageOutcome { stage: Stage::Segments, ok: true, attempts: 1, reason: None });

    // linker: gamma + selection + pruning once, cycle search retried
    let link_result = timed!("linker", (|| -> Result<_, linker::LinkerError> {
        let gamma = linker::build_gamma(&sys, &sample, &ds, &mut ledger)?;
        let sel = linker::select_rainbow_3in3out(&gamma, &mut ledger)?;
        let pruned = linker::prune_conflicts(&gamma, &sel, &sample, &mut ledger)?;
        let mut last = None;
        for attempt in 0..=cfg.options.retries.linker {
            let restart_src = RandomSource::new(
                cfg.seed ^ 0x9e37_79b9_7f4a_7c15u64.wrapping_mul(u64::from(attempt) + 1),
            );
            match linker::link_segments(&gamma, &pruned, &restart_src) {
                Ok(link) => {
                    let cert = linker::stitch_cycle(&sys, &gamma, &link, &merged)?;
                    return Ok((gamma, pruned, cert, attempt + 1));
                }
                Err(e @ linker::LinkerError::NotFound { proven: false }) => last = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last.expect("failure recorded"))
    })());
    match link_result {
        Ok((gamma, pruned, cert, attempts)) => {
            diag.gamma_e1 = Some(gamma.e1.len());
            diag.gamma_f1 = Some(gamma.f1_count);
            diag.pruned_arcs = Some(pruned.arcs.len());
            diag.colors_used = Some(used_colors.len());
            stages.push(StageOutcome { stage: Stage::Linker, ok: true, attempts, reason: None });
            let report = verify_rainbow_hamilton(&merged, &cert).expect("well-formed");
            assert!(report.ok(), "stitched certificate must verify");
            Ok((finish(stages, diag, Some(cert), None, false, timings), merged))
        }
        Err(e) => {
            diag.colors_used = Some(used_colors.len());
            stages.push(StageOutcome {
                stage: Stage::Linker,
                ok: false,
                attempts: cfg.options.retries.linker + 1,
                reason: Some(e.to_string()),
            });
            let failure = Some(FailureInfo { stage: Stage::Linker, reason: e.to_string() });
            Ok((finish(stages, diag, None, failure, false, timings), merged))
        }
    }
}

/// Runs one trial of the full construction; the report carries exactly one
/// of a verified certificate or a failure stage and reason.
pub fn find_rainbow_hamilton(cfg: &TrialConfig) -> Result<TrialReport, ParamError> {
    run_trial(cfg).map(|(report, _)| report)
}
