//! Seeded, replicated experiment runs.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{ExperimentConfig, Family, ParamMode};
use super::output::{summarize, write_summary, write_trace, SummaryRow, TraceRow};
use super::custom_1d_problem;
use crate::conex::{conex_run, problem_diameters, theorem1_schedule_scaled, ConexParams};
use crate::error::{Error, Result};
use crate::nonconvex::{meta_run, InnerSchedule, ProximalConfig};
use crate::problem::ProblemSpec;
use crate::qcqp::{generate_qcqp, reference_solve, ReferenceSolution};
use crate::rng::derive_seed;
use crate::smoothing::{select_smoothing_parameters, SmoothingConfig};
use crate::Point;

const INSTANCE_SALT: u64 = 0x1_0000_0001;
const SHARED_SALT: u64 = 0x1_0000_0002;

/// `count` strictly increasing iteration counts in `1..=total`, spaced
/// geometrically and ending at `total` (all of them when `count >= total`).
pub fn checkpoint_grid(total: usize, count: usize) -> Vec<usize> {
    let k = count.min(total);
    if k == 0 {
        return Vec::new();
    }
    if k == 1 {
        return vec![total];
    }
    let mut grid = Vec::with_capacity(k);
    let mut prev = 0;
    for j in 0..k {
        let ideal = (total as f64).powf(j as f64 / (k - 1) as f64).round() as usize;
        let latest = total - (k - 1 - j);
        let v = ideal.max(prev + 1).min(latest);
        grid.push(v);
        prev = v;
    }
    grid
}

/// Everything one trial produced.
#[derive(Clone, Debug)]
pub struct TrialOutcome {
    pub trial: usize,
    pub seed: u64,
    pub rows: Vec<TraceRow>,
    /// Reference objective value (analytic for the 1-D family).
    pub reference_f0: f64,
    pub solved: bool,
    pub diverged: bool,
    /// Solver output (`x_bar` or the drawn proximal iterate).
    pub final_x: Point,
    /// Best-iterate stationarity and the one at the start (nonconvex only).
    pub stationarity: Option<(f64, f64)>,
    pub oracle_calls: u64,
}

impl TrialOutcome {
    pub fn final_row(&self) -> &TraceRow {
        self.rows.last().expect("at least one checkpoint")
    }
}

struct Setup {
    problem: ProblemSpec,
    reference: Option<ReferenceSolution>,
}

fn build(config: &ExperimentConfig, instance_seed: u64) -> Result<Setup> {
    let noise = config.noise.model()?;
    match config.family {
        Family::Custom1d => Ok(Setup {
            problem: custom_1d_problem(noise),
            reference: None,
        }),
        Family::QcqpConvex | Family::QcqpNonconvex => {
            let convex = config.family == Family::QcqpConvex;
            let inst = generate_qcqp(config.n, config.m, convex, instance_seed)?;
            let reference = if convex { Some(reference_solve(&inst)?) } else { None };
            Ok(Setup {
                problem: inst.to_problem(noise)?,
                reference,
            })
        }
    }
}

fn smoothing_for(
    config: &ExperimentConfig,
    problem: &ProblemSpec,
    nu_override: Option<f64>,
) -> Result<SmoothingConfig> {
    let m = problem.constraint_count();
    if let Some(nu) = nu_override {
        return SmoothingConfig::uniform(nu, m);
    }
    match config.smoothing.mode {
        ParamMode::Explicit => SmoothingConfig::new(config.smoothing.nu0, vec![config.smoothing.nu; m]),
        ParamMode::Theorem1 => {
            let (_, m_x) = problem_diameters(problem);
            Ok(select_smoothing_parameters(
                &problem.constants,
                problem.dim(),
                config.iterations,
                m_x,
            ))
        }
    }
}

fn schedule_for(
    config: &ExperimentConfig,
    problem: &ProblemSpec,
    smoothing: &SmoothingConfig,
) -> Result<ConexParams> {
    let s = &config.schedule;
    match s.mode {
        ParamMode::Explicit => Ok(ConexParams::constant(config.iterations, s.eta, s.tau)),
        ParamMode::Theorem1 => {
            let (d_x, _) = problem_diameters(problem);
            theorem1_schedule_scaled(
                &problem.constants,
                d_x,
                config.iterations,
                s.dual_norm_bound,
                smoothing,
                problem.dim(),
                s.scale,
            )
        }
    }
}

fn inner_schedule(config: &ExperimentConfig) -> InnerSchedule {
    let s = &config.schedule;
    match s.mode {
        ParamMode::Explicit => {
            InnerSchedule::Fixed(ConexParams::constant(config.iterations, s.eta, s.tau))
        }
        ParamMode::Theorem1 => InnerSchedule::Theorem1 {
            iterations: config.iterations,
            dual_norm_bound: s.dual_norm_bound,
            scale: s.scale,
        },
    }
}

fn run_trial(
    config: &ExperimentConfig,
    trial: usize,
    shared: Option<&Setup>,
    nu_override: Option<f64>,
) -> Result<TrialOutcome> {
    let seed = derive_seed(config.seed, trial as u64);
    let owned;
    let setup = match shared {
        Some(s) => s,
        None => {
            owned = build(config, derive_seed(seed, INSTANCE_SALT))?;
            &owned
        }
    };
    let problem = &setup.problem;
    let smoothing = smoothing_for(config, problem, nu_override)?;
    let x0 = problem.domain.default_start();

    if config.family == Family::QcqpNonconvex {
        let prox = ProximalConfig::with_default_weights(
            &problem.constants,
            config.outer_iterations,
            inner_schedule(config),
        )?;
        let out = meta_run(problem, &prox, &smoothing, &x0, seed)?;
        let per_step = out.oracle_calls / config.outer_iterations as u64;
        let rows = checkpoint_grid(config.outer_iterations, config.checkpoints)
            .into_iter()
            .map(|k| {
                let r = &out.reports[k];
                TraceRow {
                    trial,
                    checkpoint_queries: per_step * k as u64,
                    gap: r.stationarity,
                    violation: r.violation,
                    dual_norm: r.dual.norm(),
                    diverged: out.traces[k - 1].diverged,
                }
            })
            .collect();
        return Ok(TrialOutcome {
            trial,
            seed,
            rows,
            reference_f0: f64::NAN,
            solved: true,
            diverged: out.diverged,
            stationarity: out
                .best_stationarity()
                .map(|best| (best, out.reports[0].stationarity)),
            final_x: out.x_hat,
            oracle_calls: out.oracle_calls,
        });
    }

    // a sweep changes the estimator radii only, never the step sizes
    let params = match nu_override {
        Some(_) => schedule_for(config, problem, &smoothing_for(config, problem, None)?)?,
        None => schedule_for(config, problem, &smoothing)?,
    };
    let out = conex_run(problem, &params, &smoothing, &x0, seed)?;
    let (reference_f0, solved) = match &setup.reference {
        Some(r) => (r.f0_star, r.solved),
        None => (0.5, true),
    };
    let rows = checkpoint_grid(config.iterations, config.checkpoints)
        .into_iter()
        .map(|t| {
            let rec = &out.trace.records[t - 1];
            TraceRow {
                trial,
                checkpoint_queries: rec.oracle_calls,
                gap: rec.objective - reference_f0,
                violation: rec.violation,
                dual_norm: rec.dual_norm,
                diverged: rec.diverged,
            }
        })
        .collect();
    Ok(TrialOutcome {
        trial,
        seed,
        rows,
        reference_f0,
        solved,
        diverged: out.diverged,
        final_x: out.x_bar,
        stationarity: None,
        oracle_calls: out.ledger.total(),
    })
}

/// Runs every trial (in parallel on up to `jobs` threads, 0 for all
/// cores) and returns them in trial order.
pub fn run_trials(
    config: &ExperimentConfig,
    nu_override: Option<f64>,
    jobs: usize,
) -> Result<Vec<TrialOutcome>> {
    config
        .validate()
        .map_err(|(key, msg)| Error::Config(format!("{key}: {msg}")))?;
    let shared = if config.shared_instance {
        Some(build(config, derive_seed(config.seed, SHARED_SALT))?)
    } else {
        None
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        (0..config.trials)
            .into_par_iter()
            .map(|t| run_trial(config, t, shared.as_ref(), nu_override))
            .collect()
    })
}

/// Output of one sweep value (or the whole run without a sweep).
#[derive(Clone, Debug)]
pub struct SweepResult {
    pub nu: Option<f64>,
    pub trials: Vec<TrialOutcome>,
    pub summary: Vec<SummaryRow>,
    pub trace_path: PathBuf,
    pub summary_path: PathBuf,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub sweeps: Vec<SweepResult>,
    pub resolved_config: PathBuf,
    /// Trials whose reference solution failed its certificate.
    pub unsolved: usize,
}

fn file_names(nu: Option<f64>) -> (String, String) {
    match nu {
        None => ("trace.csv".into(), "summary.csv".into()),
        Some(v) => (format!("trace_nu{v}.csv"), format!("summary_nu{v}.csv")),
    }
}

/// Runs the configured experiment and writes `trace*.csv`, `summary*.csv`
/// and `resolved_config.toml` into `out_dir`.
pub fn run_experiment(
    config: &ExperimentConfig,
    out_dir: &Path,
    jobs: usize,
) -> Result<ExperimentReport> {
    std::fs::create_dir_all(out_dir)?;
    let resolved_config = out_dir.join("resolved_config.toml");
    std::fs::write(&resolved_config, config.to_toml()?)?;
    let mut sweeps = Vec::new();
    let mut unsolved = 0;
    for nu in config.sweep_values() {
        let trials = run_trials(config, nu, jobs)?;
        unsolved += trials.iter().filter(|t| !t.solved).count();
        let rows: Vec<TraceRow> = trials.iter().flat_map(|t| t.rows.iter().cloned()).collect();
        let per_trial: Vec<Vec<TraceRow>> = trials.iter().map(|t| t.rows.clone()).collect();
        let summary = summarize(&per_trial)?;
        let (trace_name, summary_name) = file_names(nu);
        let trace_path = out_dir.join(trace_name);
        let summary_path = out_dir.join(summary_name);
        write_trace(BufWriter::new(File::create(&trace_path)?), &rows)?;
        write_summary(BufWriter::new(File::create(&summary_path)?), &summary)?;
        sweeps.push(SweepResult {
            nu,
            trials,
            summary,
            trace_path,
            summary_path,
        });
    }
    Ok(ExperimentReport {
        sweeps,
        resolved_config,
        unsolved,
    })
}
