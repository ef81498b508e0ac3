//! The `bench` subcommand: repeated seeded runs over a parameter sweep,
//! aggregated into one CSV row per (solver, memory, batch-size) cell.

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use aafib::model::PomdpModel;
use aafib::policy::{evaluate, BeliefMode, EvalConfig};

use crate::args::{BenchArgs, SolverKind};
use crate::commands::run_solver;
use crate::config::{default_out_dir, FileConfig, SolverSettings};
use crate::problem::load_problem;

#[derive(Debug, Clone, Copy)]
struct Cell {
    solver: SolverKind,
    m_max: Option<usize>,
    sample_size: Option<usize>,
}

#[derive(Debug, Clone, Copy)]
struct RunMetrics {
    iterations: f64,
    t_total: f64,
    t_aa: f64,
    reward_rand: f64,
    reward_fixed: Option<f64>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn bench(args: BenchArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let problem_spec = args
        .problem
        .clone()
        .or_else(|| file.problem.clone())
        .context("no problem given (use --problem or a config file)")?;
    let solver = args
        .solver
        .or(file.solver_kind()?)
        .unwrap_or(SolverKind::AaFib);
    let m_list = args
        .m_max
        .clone()
        .or_else(|| file.m_max.clone())
        .unwrap_or_else(|| vec![4, 8, 12, 16]);
    let j_list = args
        .sample_size
        .clone()
        .or_else(|| file.sample_size.clone())
        .unwrap_or_else(|| vec![20]);
    let seeds = args.seeds.or(file.seeds).unwrap_or(100);
    let seed_base = args.seed.or(file.seed).unwrap_or(0);
    let episodes = args.episodes.or(file.episodes).unwrap_or(100);
    let horizon = args.horizon.or(file.horizon).unwrap_or(100);
    if seeds == 0 {
        bail!("--seeds must be at least 1");
    }

    let model = load_problem(&problem_spec)?;
    let report = model.validate();
    if !report.is_empty() {
        bail!("problem `{problem_spec}` is invalid:\n{report}");
    }

    let mut cells = Vec::new();
    if solver != SolverKind::Fib {
        cells.push(Cell {
            solver: SolverKind::Fib,
            m_max: None,
            sample_size: None,
        });
    }
    match solver {
        SolverKind::Fib | SolverKind::Qmdp => cells.push(Cell {
            solver,
            m_max: None,
            sample_size: None,
        }),
        SolverKind::AaFib => {
            for &m in &m_list {
                cells.push(Cell {
                    solver,
                    m_max: Some(m),
                    sample_size: None,
                });
            }
        }
        SolverKind::AaFibSim => {
            for &m in &m_list {
                for &j in &j_list {
                    cells.push(Cell {
                        solver,
                        m_max: Some(m),
                        sample_size: Some(j),
                    });
                }
            }
        }
    }

    // One job per (cell, seed); the worker pool keeps runs independent and
    // aggregation is by cell index, so scheduling cannot reorder results.
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| (0..seeds).map(move |i| (c, seed_base + i as u64)))
        .collect();
    let metrics: Vec<(usize, RunMetrics)> = jobs
        .par_iter()
        .map(|&(cell_idx, seed)| {
            let cell = cells[cell_idx];
            let m = run_one(&model, cell, seed, &args, &file, episodes, horizon)?;
            Ok((cell_idx, m))
        })
        .collect::<Result<_>>()?;

    let out = args
        .out
        .clone()
        .or_else(|| file.out.clone().map(|d| d.join("bench.csv")))
        .unwrap_or_else(|| default_out_dir().join("bench.csv"));
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut writer = csv::Writer::from_path(&out)
        .with_context(|| format!("cannot write summary {}", out.display()))?;
    writer.write_record([
        "solver",
        "m_max",
        "sample_size",
        "seeds",
        "iter_mean",
        "iter_std",
        "t_total_mean",
        "t_total_std",
        "t_aa_mean",
        "t_aa_std",
        "reward_rand_mean",
        "reward_rand_std",
        "reward_fixed_mean",
        "reward_fixed_std",
    ])?;
    for (cell_idx, cell) in cells.iter().enumerate() {
        let rows: Vec<&RunMetrics> = metrics
            .iter()
            .filter(|(c, _)| *c == cell_idx)
            .map(|(_, m)| m)
            .collect();
        let column = |f: fn(&RunMetrics) -> f64| -> (f64, f64) {
            let values: Vec<f64> = rows.iter().map(|m| f(m)).collect();
            mean_std(&values)
        };
        let (iter_mean, iter_std) = column(|m| m.iterations);
        let (tt_mean, tt_std) = column(|m| m.t_total);
        let (ta_mean, ta_std) = column(|m| m.t_aa);
        let (rr_mean, rr_std) = column(|m| m.reward_rand);
        let fixed: Option<(f64, f64)> = if rows.iter().all(|m| m.reward_fixed.is_some()) {
            let values: Vec<f64> = rows.iter().map(|m| m.reward_fixed.unwrap()).collect();
            Some(mean_std(&values))
        } else {
            None
        };
        writer.write_record([
            cell.solver.as_str().to_string(),
            cell.m_max.map(|m| m.to_string()).unwrap_or_default(),
            cell.sample_size.map(|j| j.to_string()).unwrap_or_default(),
            seeds.to_string(),
            iter_mean.to_string(),
            iter_std.to_string(),
            tt_mean.to_string(),
            tt_std.to_string(),
            ta_mean.to_string(),
            ta_std.to_string(),
            rr_mean.to_string(),
            rr_std.to_string(),
            fixed.map(|(m, _)| m.to_string()).unwrap_or_default(),
            fixed.map(|(_, s)| s.to_string()).unwrap_or_default(),
        ])?;
    }
    writer.flush()?;
    println!(
        "wrote {} ({} cells x {} seeds)",
        out.display(),
        cells.len(),
        seeds
    );
    Ok(())
}

fn run_one(
    model: &PomdpModel,
    cell: Cell,
    seed: u64,
    args: &BenchArgs,
    file: &FileConfig,
    episodes: usize,
    horizon: usize,
) -> Result<RunMetrics> {
    let settings = SolverSettings::resolve(
        &args.solver_flags,
        file,
        seed,
        cell.m_max.unwrap_or(4),
        cell.sample_size.unwrap_or(20),
    )?;
    let result = run_solver(model, cell.solver, &settings);
    let eval_at = |mode| {
        evaluate(
            model,
            &result.alpha,
            &EvalConfig {
                episodes,
                horizon,
                belief_mode: mode,
                seed,
            },
        )
    };
    let reward_rand = eval_at(BeliefMode::Random)?.mean;
    let reward_fixed = if model.start_belief().is_some() {
        Some(eval_at(BeliefMode::Fixed)?.mean)
    } else {
        None
    };
    Ok(RunMetrics {
        iterations: result.iterations as f64,
        t_total: result.total_seconds,
        t_aa: result.weight_seconds_total(),
        reward_rand,
        reward_fixed,
    })
}
