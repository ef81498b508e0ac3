//! The `solve`, `eval` and `gen` subcommands.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use aafib::anderson::aa_fib_solve;
use aafib::fib::{fib_solve, qmdp_solve, SolveResult};
use aafib::fixtures::generate_grid_nav;
use aafib::model::PomdpModel;
use aafib::parser::serialize_pomdp;
use aafib::policy::{evaluate, BeliefMode, EvalConfig, EvalStats};
use aafib::sim::aa_fib_solve_sim;

use crate::args::{BeliefArg, EvalArgs, GenArgs, SolveArgs, SolverKind};
use crate::config::{default_out_dir, FileConfig, SolverSettings};
use crate::policy_file::{self, PolicyFile, POLICY_FORMAT};
use crate::problem::load_problem;

pub fn run_solver(model: &PomdpModel, kind: SolverKind, settings: &SolverSettings) -> SolveResult {
    match kind {
        SolverKind::Fib => fib_solve(model, &settings.aa.solve),
        SolverKind::Qmdp => qmdp_solve(model, &settings.aa.solve),
        SolverKind::AaFib => aa_fib_solve(model, &settings.aa),
        SolverKind::AaFibSim => aa_fib_solve_sim(model, &settings.aa, &settings.sim),
    }
}

pub fn write_trace_csv(path: &Path, result: &SolveResult) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("cannot write trace {}", path.display()))?;
    writer.write_record(["k", "residual_inf", "step_kind", "step_seconds", "weight_seconds"])?;
    for record in &result.trace {
        writer.write_record([
            record.k.to_string(),
            record.residual_inf.to_string(),
            record.step_kind.to_string(),
            record.step_seconds.to_string(),
            record.weight_seconds.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SolveReport<'a> {
    problem: &'a str,
    solver: &'a str,
    seed: u64,
    converged: bool,
    iterations: usize,
    residual_inf: f64,
    t_total_seconds: f64,
    t_aa_seconds: f64,
    policy_path: String,
    trace_path: String,
}

pub fn solve(args: SolveArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let problem_spec = args
        .problem
        .or_else(|| file.problem.clone())
        .context("no problem given (use --problem or a config file)")?;
    let solver = args
        .solver
        .or(file.solver_kind()?)
        .unwrap_or(SolverKind::Fib);
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let m_max = args
        .m_max
        .or_else(|| file.m_max.as_ref().and_then(|v| v.first().copied()))
        .unwrap_or(4);
    let sample_size = args
        .sample_size
        .or_else(|| file.sample_size.as_ref().and_then(|v| v.first().copied()))
        .unwrap_or(20);
    let settings = SolverSettings::resolve(&args.solver_flags, &file, seed, m_max, sample_size)?;

    let model = load_problem(&problem_spec)?;
    let report = model.validate();
    if !report.is_empty() {
        bail!("problem `{problem_spec}` is invalid:\n{report}");
    }

    let result = run_solver(&model, solver, &settings);

    let out_dir = args
        .out
        .or_else(|| file.out.clone())
        .unwrap_or_else(default_out_dir);
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("cannot create output directory {}", out_dir.display()))?;
    let policy_path = out_dir.join("policy.json");
    let trace_path = out_dir.join("trace.csv");

    let policy = PolicyFile {
        format: POLICY_FORMAT.to_string(),
        solver: solver.as_str().to_string(),
        seed,
        converged: result.converged,
        iterations: result.iterations,
        residual_inf: result.final_residual(),
        model: policy_file::model_info(&model),
        alpha: result.alpha.as_slice().to_vec(),
    };
    policy_file::write_policy(&policy_path, &policy)?;
    write_trace_csv(&trace_path, &result)?;

    let report = SolveReport {
        problem: &problem_spec,
        solver: solver.as_str(),
        seed,
        converged: result.converged,
        iterations: result.iterations,
        residual_inf: result.final_residual(),
        t_total_seconds: result.total_seconds,
        t_aa_seconds: result.weight_seconds_total(),
        policy_path: policy_path.display().to_string(),
        trace_path: trace_path.display().to_string(),
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

#[derive(Serialize)]
struct StatsOut {
    mean: f64,
    std: f64,
}

#[derive(Serialize)]
struct EvalReport<'a> {
    problem: &'a str,
    policy: String,
    episodes: usize,
    horizon: usize,
    seed: u64,
    fixed: Option<StatsOut>,
    random: Option<StatsOut>,
}

fn stats_out(stats: EvalStats) -> StatsOut {
    StatsOut {
        mean: stats.mean,
        std: stats.std,
    }
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let problem_spec = args
        .problem
        .or_else(|| file.problem.clone())
        .context("no problem given (use --problem or a config file)")?;
    let episodes = args.episodes.or(file.episodes).unwrap_or(100);
    let horizon = args.horizon.or(file.horizon).unwrap_or(100);
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let belief = args.belief.unwrap_or(BeliefArg::Both);

    let model = load_problem(&problem_spec)?;
    let (_, alpha) = policy_file::load_policy(&args.policy, &model)?;

    let config = |mode| EvalConfig {
        episodes,
        horizon,
        belief_mode: mode,
        seed,
    };
    let fixed = match belief {
        BeliefArg::Random => None,
        BeliefArg::Fixed => Some(evaluate(&model, &alpha, &config(BeliefMode::Fixed))?),
        BeliefArg::Both => {
            // Include the fixed-belief column only when the model carries a
            // start belief.
            if model.start_belief().is_some() {
                Some(evaluate(&model, &alpha, &config(BeliefMode::Fixed))?)
            } else {
                None
            }
        }
    };
    let random = match belief {
        BeliefArg::Fixed => None,
        _ => Some(evaluate(&model, &alpha, &config(BeliefMode::Random))?),
    };

    let report = EvalReport {
        problem: &problem_spec,
        policy: args.policy.display().to_string(),
        episodes,
        horizon,
        seed,
        fixed: fixed.map(stats_out),
        random: random.map(stats_out),
    };
    let json = serde_json::to_string_pretty(&report)?;
    if let Some(out) = &args.out {
        std::fs::write(out, &json)
            .with_context(|| format!("cannot write report {}", out.display()))?;
    }
    println!("{json}");
    Ok(())
}

pub fn generate(args: GenArgs) -> Result<()> {
    let model = generate_grid_nav(
        args.width,
        args.height,
        args.slip.unwrap_or(0.1),
        args.obs_noise.unwrap_or(0.1),
        args.seed.unwrap_or(0),
    )?;
    let out = args
        .out
        .unwrap_or_else(|| default_out_dir().join("grid-nav.pomdp"));
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(&out, serialize_pomdp(&model))
        .with_context(|| format!("cannot write problem file {}", out.display()))?;
    println!(
        "wrote {} ({} states, {} actions, {} observations)",
        out.display(),
        model.num_states(),
        model.num_actions(),
        model.num_observations()
    );
    Ok(())
}
