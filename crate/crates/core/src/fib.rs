//! The fast informed bound backup operator and plain fixed-point iteration.
//!
//! The FIB backup keeps one alpha-vector per action and updates the stacked
//! vector componentwise:
//!
//! ```text
//! (F a)(a, s) = r(s,a) + gamma * sum_o max_a' sum_s' Omega[a][s'][o] T[a][s][s'] a_{a'}(s')
//! ```
//!
//! `F` is a gamma-contraction in the sup-norm, so iterating `a <- F a`
//! converges to a unique fixed point; the residual `G(a) = a - F a` drives
//! the stopping rule. The QMDP backup (full observability after one step)
//! and a brute-force belief-grid value-iteration oracle for desk-scale
//! sanity checks live here too.

use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{AlphaMatrix, PomdpModel};
use crate::util::inf_norm;

/// Stopping parameters shared by every solver in the crate.
#[derive(Debug, Clone)]
pub struct SolveParams {
    /// Stop when the residual sup-norm drops to this value or below.
    pub tol: f64,
    /// Hard cap on iterations; exceeding it reports `converged = false`.
    pub max_iter: usize,
    /// Seed for the random initial alpha.
    pub seed: u64,
    /// Keep every iterate the operator was applied to in the result
    /// (memory scales with iterations x |S||A|; off by default).
    pub record_iterates: bool,
}

impl Default for SolveParams {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 100_000,
            seed: 0,
            record_iterates: false,
        }
    }
}

/// Which candidate produced the next iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Fpi,
    Aa,
}

impl std::fmt::Display for StepKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StepKind::Fpi => write!(f, "FPI"),
            StepKind::Aa => write!(f, "AA"),
        }
    }
}

/// Outcome of a safeguard check (only present on iterations that ran one).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafeguardRecord {
    pub accepted: bool,
    /// Accepted-AA count before this check.
    pub n_aa_before: usize,
    /// The decay-schedule threshold the residual was compared against.
    pub threshold: f64,
}

/// One row of the per-iteration trace.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub k: usize,
    /// Residual sup-norm at the iterate this iteration started from.
    pub residual_inf: f64,
    pub step_kind: StepKind,
    /// Wall-clock of the whole iteration (includes the weight solve).
    pub step_seconds: f64,
    /// Wall-clock of the weight computation; 0 when none was performed.
    pub weight_seconds: f64,
    /// Sum of the mixing weights, when weights were computed.
    pub weight_sum: Option<f64>,
    pub safeguard: Option<SafeguardRecord>,
}

/// Result of a solver run.
#[derive(Debug, Clone)]
pub struct SolveResult {
    /// Final iterate. When `converged` it satisfies
    /// `||alpha - F alpha||_inf <= tol`.
    pub alpha: AlphaMatrix,
    pub trace: Vec<IterationRecord>,
    pub converged: bool,
    /// Equals `trace.len()`.
    pub iterations: usize,
    /// Wall-clock of the whole solve loop.
    pub total_seconds: f64,
    /// The iterates the operator was applied to, in application order
    /// (populated when `record_iterates` is set).
    pub iterates: Vec<AlphaMatrix>,
}

impl SolveResult {
    /// Total time spent computing mixing weights (the t_AA metric).
    pub fn weight_seconds_total(&self) -> f64 {
        self.trace.iter().map(|r| r.weight_seconds).sum()
    }

    pub fn final_residual(&self) -> f64 {
        self.trace.last().map(|r| r.residual_inf).unwrap_or(f64::NAN)
    }
}

/// An operator on stacked alpha-vectors with a fixed point to find.
///
/// `apply` takes `&mut self` so that sampling-based operators can advance
/// their RNG state; the exact operators do not mutate.
pub trait AlphaOperator {
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn apply(&mut self, alpha: &AlphaMatrix) -> AlphaMatrix;
}

/// Random initial iterate: every component i.i.d. uniform on
/// `[r_min/(1-gamma), r_max/(1-gamma)]`, the range that must contain the
/// fixed point. Deterministic for a fixed seed.
pub fn init_alpha(model: &PomdpModel, seed: u64) -> AlphaMatrix {
    let (r_min, r_max) = model.reward_bounds();
    let gamma = model.discount();
    assert!(
        gamma > 0.0 && gamma < 1.0,
        "init_alpha requires a validated model (discount in (0,1))"
    );
    let lo = r_min / (1.0 - gamma);
    let hi = r_max / (1.0 - gamma);
    let n = model.num_states() * model.num_actions();
    if lo == hi {
        return AlphaMatrix::constant(model.num_states(), model.num_actions(), lo);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n).map(|_| rng.random_range(lo..=hi)).collect();
    AlphaMatrix::from_flat(model.num_states(), model.num_actions(), data)
}

/// The FIB backup with per-(action, state) sparse transition rows cached at
/// construction. The backup's inner sum touches only the nonzero entries of
/// `T[a][s][.]`, which is what dominates per-iteration cost on the sparse
/// navigation benchmarks.
pub struct FibOperator<'m> {
    model: &'m PomdpModel,
    /// Nonzero (s', p) entries of `T[a][s][.]`, indexed by `a * |S| + s`.
    sparse_rows: Vec<Vec<(u32, f64)>>,
}

impl<'m> FibOperator<'m> {
    pub fn new(model: &'m PomdpModel) -> Self {
        let ns = model.num_states();
        let na = model.num_actions();
        let mut sparse_rows = Vec::with_capacity(na * ns);
        for a in 0..na {
            for s in 0..ns {
                let row: Vec<(u32, f64)> = model
                    .transition_row(a, s)
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p != 0.0)
                    .map(|(sp, &p)| (sp as u32, p))
                    .collect();
                sparse_rows.push(row);
            }
        }
        Self { model, sparse_rows }
    }

    pub fn model(&self) -> &PomdpModel {
        self.model
    }
}

impl AlphaOperator for FibOperator<'_> {
    fn num_states(&self) -> usize {
        self.model.num_states()
    }

    fn num_actions(&self) -> usize {
        self.model.num_actions()
    }

    fn apply(&mut self, alpha: &AlphaMatrix) -> AlphaMatrix {
        apply_fib(self.model, &self.sparse_rows, alpha)
    }
}

fn apply_fib(
    model: &PomdpModel,
    sparse_rows: &[Vec<(u32, f64)>],
    alpha: &AlphaMatrix,
) -> AlphaMatrix {
    let ns = model.num_states();
    let na = model.num_actions();
    let no = model.num_observations();
    assert_eq!(alpha.num_states(), ns, "alpha shape mismatch");
    assert_eq!(alpha.num_actions(), na, "alpha shape mismatch");
    let gamma = model.discount();

    let mut out = AlphaMatrix::zeros(ns, na);
    // vals[a' * |O| + o] = sum_s' T[a][s][s'] Omega[a][s'][o] alpha_{a'}(s')
    let mut vals = vec![0.0; na * no];
    for a in 0..na {
        for s in 0..ns {
            vals.fill(0.0);
            for &(sp, p) in &sparse_rows[a * ns + s] {
                let sp = sp as usize;
                let obs_row = model.observation_row(a, sp);
                for a_next in 0..na {
                    let w = p * alpha.get(a_next, sp);
                    let dst = &mut vals[a_next * no..(a_next + 1) * no];
                    for (v, &q) in dst.iter_mut().zip(obs_row) {
                        *v += w * q;
                    }
                }
            }
            let mut acc = 0.0;
            for o in 0..no {
                let mut best = vals[o];
                for a_next in 1..na {
                    let v = vals[a_next * no + o];
                    if v > best {
                        best = v;
                    }
                }
                acc += best;
            }
            out.set(a, s, model.reward(s, a) + gamma * acc);
        }
    }
    debug_assert!(out.is_finite(), "FIB backup produced non-finite entries");
    out
}

/// One application of the FIB backup. Convenience wrapper that rebuilds the
/// sparse cache; use [`FibOperator`] inside loops.
pub fn apply_f(model: &PomdpModel, alpha: &AlphaMatrix) -> AlphaMatrix {
    FibOperator::new(model).apply(alpha)
}

/// The residual `G(alpha) = alpha - F alpha` as a flat array.
pub fn residual_g(model: &PomdpModel, alpha: &AlphaMatrix) -> Vec<f64> {
    let f = apply_f(model, alpha);
    residual_from_image(alpha, &f)
}

/// Residual given an already-computed operator image.
pub fn residual_from_image(alpha: &AlphaMatrix, image: &AlphaMatrix) -> Vec<f64> {
    alpha
        .as_slice()
        .iter()
        .zip(image.as_slice())
        .map(|(x, y)| x - y)
        .collect()
}

/// Plain fixed-point iteration `alpha <- F alpha` from an explicit start.
///
/// Stops when `||alpha - F alpha||_inf <= tol`, returning the iterate that
/// met the test (not its image), or after `max_iter` iterations with
/// `converged = false`. Each trace row records the residual at the iterate
/// the iteration started from.
pub fn fpi_solve<Op: AlphaOperator>(
    op: &mut Op,
    alpha0: AlphaMatrix,
    params: &SolveParams,
) -> SolveResult {
    let start = Instant::now();
    let mut trace = Vec::new();
    let mut iterates = Vec::new();
    let mut alpha = alpha0;
    let mut converged = false;
    while trace.len() < params.max_iter {
        let step_start = Instant::now();
        if params.record_iterates {
            iterates.push(alpha.clone());
        }
        let image = op.apply(&alpha);
        let residual_inf = inf_norm(&residual_from_image(&alpha, &image));
        let k = trace.len();
        trace.push(IterationRecord {
            k,
            residual_inf,
            step_kind: StepKind::Fpi,
            step_seconds: step_start.elapsed().as_secs_f64(),
            weight_seconds: 0.0,
            weight_sum: None,
            safeguard: None,
        });
        if residual_inf <= params.tol {
            converged = true;
            break;
        }
        alpha = image;
    }
    let iterations = trace.len();
    SolveResult {
        alpha,
        trace,
        converged,
        iterations,
        total_seconds: start.elapsed().as_secs_f64(),
        iterates,
    }
}

/// FIB value iteration from a random initial alpha.
pub fn fib_solve(model: &PomdpModel, params: &SolveParams) -> SolveResult {
    let mut op = FibOperator::new(model);
    fpi_solve(&mut op, init_alpha(model, params.seed), params)
}

/// The QMDP backup: assumes the state becomes fully observable after one
/// step, so observations drop out:
///
/// ```text
/// (Q a)(a, s) = r(s,a) + gamma * sum_s' T[a][s][s'] max_a' a_{a'}(s')
/// ```
///
/// Its fixed point upper-bounds the FIB fixed point componentwise.
pub struct QmdpOperator<'m> {
    model: &'m PomdpModel,
}

impl<'m> QmdpOperator<'m> {
    pub fn new(model: &'m PomdpModel) -> Self {
        Self { model }
    }
}

impl AlphaOperator for QmdpOperator<'_> {
    fn num_states(&self) -> usize {
        self.model.num_states()
    }

    fn num_actions(&self) -> usize {
        self.model.num_actions()
    }

    fn apply(&mut self, alpha: &AlphaMatrix) -> AlphaMatrix {
        qmdp_update(self.model, alpha)
    }
}

/// One QMDP backup.
pub fn qmdp_update(model: &PomdpModel, alpha: &AlphaMatrix) -> AlphaMatrix {
    let ns = model.num_states();
    let na = model.num_actions();
    assert_eq!(alpha.num_states(), ns, "alpha shape mismatch");
    assert_eq!(alpha.num_actions(), na, "alpha shape mismatch");
    let gamma = model.discount();
    let best: Vec<f64> = (0..ns)
        .map(|s| {
            (0..na)
                .map(|a| alpha.get(a, s))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let mut out = AlphaMatrix::zeros(ns, na);
    for a in 0..na {
        for s in 0..ns {
            let exp: f64 = model
                .transition_row(a, s)
                .iter()
                .zip(&best)
                .map(|(&p, &v)| p * v)
                .sum();
            out.set(a, s, model.reward(s, a) + gamma * exp);
        }
    }
    out
}

/// QMDP value iteration from a random initial alpha.
pub fn qmdp_solve(model: &PomdpModel, params: &SolveParams) -> SolveResult {
    let mut op = QmdpOperator::new(model);
    fpi_solve(&mut op, init_alpha(model, params.seed), params)
}

#[derive(Debug, Error)]
pub enum ExactViError {
    #[error("exact value-iteration oracle supports at most 3 states, got {0}")]
    TooManyStates(usize),
    #[error("grid resolution must be at least 1")]
    ZeroResolution,
}

/// Approximate optimal values on a regular belief-simplex grid.
pub struct BeliefGridValues {
    pub resolution: usize,
    /// Grid beliefs, each of length |S|.
    pub points: Vec<Vec<f64>>,
    /// Approximate optimal value at each grid point.
    pub values: Vec<f64>,
    num_states: usize,
}

impl BeliefGridValues {
    /// Index of the grid point nearest to `belief` (largest-remainder
    /// rounding of `belief * resolution`).
    pub fn nearest_index(&self, belief: &[f64]) -> usize {
        assert_eq!(belief.len(), self.num_states);
        let counts = round_to_grid(belief, self.resolution);
        self.index_of(&counts)
    }

    fn index_of(&self, counts: &[usize]) -> usize {
        // Grid points are enumerated lexicographically by their first |S|-1
        // counts; recover the index arithmetically.
        match self.num_states {
            1 => 0,
            2 => counts[0],
            3 => {
                let r = self.resolution;
                // Points with first coordinate < c0 number sum_{i<c0} (r - i + 1).
                let c0 = counts[0];
                c0 * (r + 1) - c0 * c0.saturating_sub(1) / 2 + counts[1]
            }
            _ => unreachable!("oracle is restricted to |S| <= 3"),
        }
    }
}

fn round_to_grid(belief: &[f64], resolution: usize) -> Vec<usize> {
    let raw: Vec<f64> = belief.iter().map(|b| b * resolution as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut deficit = resolution.saturating_sub(assigned);
    let mut order: Vec<usize> = (0..belief.len()).collect();
    order.sort_by(|&i, &j| {
        let ri = raw[i] - raw[i].floor();
        let rj = raw[j] - raw[j].floor();
        rj.partial_cmp(&ri).unwrap()
    });
    for &i in &order {
        if deficit == 0 {
            break;
        }
        counts[i] += 1;
        deficit -= 1;
    }
    counts
}

/// Brute-force value iteration on a discretized belief simplex.
///
/// Test oracle only: the exact Bellman backup is evaluated at every grid
/// belief, with posterior beliefs snapped to their nearest grid point.
/// Restricted to |S| <= 3 where the grid stays desk-scale.
pub fn exact_vi_oracle(
    model: &PomdpModel,
    resolution: usize,
    tol: f64,
) -> Result<BeliefGridValues, ExactViError> {
    let ns = model.num_states();
    if ns > 3 {
        return Err(ExactViError::TooManyStates(ns));
    }
    if resolution == 0 {
        return Err(ExactViError::ZeroResolution);
    }
    let na = model.num_actions();
    let no = model.num_observations();
    let gamma = model.discount();

    // Enumerate compositions of `resolution` into |S| parts,
    // lexicographically by leading coordinates (must match `index_of`).
    let mut points: Vec<Vec<f64>> = Vec::new();
    let r = resolution;
    match ns {
        1 => points.push(vec![1.0]),
        2 => {
            for i in 0..=r {
                points.push(vec![i as f64 / r as f64, (r - i) as f64 / r as f64]);
            }
        }
        3 => {
            for i in 0..=r {
                for j in 0..=(r - i) {
                    points.push(vec![
                        i as f64 / r as f64,
                        j as f64 / r as f64,
                        (r - i - j) as f64 / r as f64,
                    ]);
                }
            }
        }
        _ => unreachable!(),
    }

    let mut grid = BeliefGridValues {
        resolution,
        values: vec![0.0; points.len()],
        points,
        num_states: ns,
    };

    // Precompute, per (point, action): expected immediate reward and the
    // (probability, successor point) pairs over observations.
    struct Backup {
        reward: f64,
        successors: Vec<(f64, usize)>,
    }
    let mut backups: Vec<Backup> = Vec::with_capacity(grid.points.len() * na);
    for b in &grid.points {
        for a in 0..na {
            let reward: f64 = (0..ns).map(|s| model.reward(s, a) * b[s]).sum();
            // Unnormalized posterior over s' per observation.
            let mut pred = vec![0.0; ns];
            for (s, &mass) in b.iter().enumerate() {
                if mass == 0.0 {
                    continue;
                }
                for (sp, p) in pred.iter_mut().enumerate() {
                    *p += model.transition_prob(s, a, sp) * mass;
                }
            }
            let mut successors = Vec::new();
            for o in 0..no {
                let mut post = vec![0.0; ns];
                let mut pr_o = 0.0;
                for sp in 0..ns {
                    let w = model.observation_prob(a, sp, o) * pred[sp];
                    post[sp] = w;
                    pr_o += w;
                }
                if pr_o > 0.0 {
                    for p in &mut post {
                        *p /= pr_o;
                    }
                    successors.push((pr_o, grid.nearest_index(&post)));
                }
            }
            backups.push(Backup { reward, successors });
        }
    }

    loop {
        let mut next = vec![0.0; grid.values.len()];
        let mut delta: f64 = 0.0;
        for (i, value) in next.iter_mut().enumerate() {
            let mut best = f64::NEG_INFINITY;
            for a in 0..na {
                let backup = &backups[i * na + a];
                let mut q = backup.reward;
                for &(p, idx) in &backup.successors {
                    q += gamma * p * grid.values[idx];
                }
                if q > best {
                    best = q;
                }
            }
            *value = best;
            delta = delta.max((best - grid.values[i]).abs());
        }
        grid.values = next;
        if delta <= tol {
            break;
        }
    }
    Ok(grid)
}
