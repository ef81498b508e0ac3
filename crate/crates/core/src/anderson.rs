//! Anderson acceleration with adaptive regularization and safeguarding.
//!
//! Instead of stepping to `F a^k`, the accelerated iteration forms the next
//! iterate from the last `M^k + 1` operator images,
//!
//! ```text
//! a^{k+1} = sum_{i=0..M^k} w_i F a^{k-M^k+i},    M^k = min(M_max, k),
//! ```
//!
//! with weights summing to one chosen to minimize the combined residual.
//! Substituting `w` by its partial sums `xi` turns that constrained problem
//! into unconstrained least squares over the residual-difference matrix
//! `Y_k`; an l2 penalty scaled by `eta * (||S_k||_F^2 + ||Y_k||_F^2)` keeps
//! the solve stable when the difference matrices degenerate, and the
//! regularized problem has the closed form
//!
//! ```text
//! xi = (Y'Y + eta (||S||_F^2 + ||Y||_F^2) I)^{-1} Y' g^k .
//! ```
//!
//! A safeguard accepts the accelerated candidate only while residual norms
//! follow the decay schedule `D ||g^0|| (n_AA/N_s + 1)^{-(1+phi)}`; once a
//! candidate is accepted the check is skipped for the next `N_s - 1`
//! accelerated steps. Rejected checks fall back to the plain fixed-point
//! step, so the iteration inherits its convergence.
//!
//! The engine is generic over [`AlphaOperator`]; pairing it with the exact
//! FIB backup gives [`aa_fib_solve`], pairing it with the sampled backup in
//! [`crate::sim`] gives the model-free variant.

use std::collections::VecDeque;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::fib::{
    init_alpha, residual_from_image, AlphaOperator, FibOperator, IterationRecord, SafeguardRecord,
    SolveParams, SolveResult, StepKind,
};
use crate::model::{AlphaMatrix, PomdpModel};
use crate::util::inf_norm;

/// Parameters of the accelerated solver.
#[derive(Debug, Clone)]
pub struct AaParams {
    /// Memory cap `M_max`; 0 degenerates to plain fixed-point iteration.
    pub m_max: usize,
    /// Regularization scale `eta` (> 0).
    pub eta: f64,
    /// Safeguard scale `D`. Must be positive for the decay schedule to be
    /// meaningful; 0 is permitted and rejects every candidate.
    pub d: f64,
    /// Safeguard decay exponent `phi` (> 0).
    pub phi: f64,
    /// Safeguard interval `N_s` (>= 1): accepted candidates suspend the
    /// check for the next `N_s - 1` accelerated steps.
    pub n_s: usize,
    pub solve: SolveParams,
}

impl Default for AaParams {
    fn default() -> Self {
        Self {
            m_max: 4,
            eta: 1e-3,
            d: 1e6,
            phi: 1e-6,
            n_s: 5,
            solve: SolveParams::default(),
        }
    }
}

impl AaParams {
    fn validate(&self) {
        assert!(self.eta > 0.0, "eta must be positive");
        assert!(self.d >= 0.0, "D must be non-negative");
        assert!(self.phi > 0.0, "phi must be positive");
        assert!(self.n_s >= 1, "N_s must be at least 1");
        assert!(self.solve.tol > 0.0, "tol must be positive");
        assert!(self.solve.max_iter >= 1, "max_iter must be at least 1");
    }
}

/// One remembered iterate with its operator image and residual.
#[derive(Debug, Clone)]
pub struct AaEntry {
    pub alpha: AlphaMatrix,
    /// `F alpha`, cached so candidate formation never re-applies the
    /// operator.
    pub image: AlphaMatrix,
    pub residual: Vec<f64>,
}

/// Ring buffer of the most recent `M_max + 1` iterates plus the safeguard
/// counters.
#[derive(Debug, Clone)]
pub struct AaState {
    entries: VecDeque<AaEntry>,
    capacity: usize,
    /// Total accepted accelerated steps (`n_AA`).
    pub n_aa: usize,
    /// Accelerated steps taken since the last safeguard check (`N_AA`).
    pub n_consecutive: usize,
    /// Forces a safeguard check on the next candidate (`i_safe`).
    pub i_safe: bool,
    /// Residual sup-norm at the initial iterate; never refreshed.
    pub g0_norm: f64,
}

impl AaState {
    pub fn new(m_max: usize) -> Self {
        Self {
            entries: VecDeque::with_capacity(m_max + 2),
            capacity: m_max + 1,
            n_aa: 0,
            n_consecutive: 0,
            i_safe: true,
            g0_norm: f64::NAN,
        }
    }

    /// Remembers `(alpha, F alpha, G(alpha))`, dropping the oldest entry
    /// once more than `M_max + 1` are held.
    pub fn push(&mut self, alpha: AlphaMatrix, image: AlphaMatrix, residual: Vec<f64>) {
        self.entries.push_back(AaEntry {
            alpha,
            image,
            residual,
        });
        while self.entries.len() > self.capacity {
            self.entries.pop_front();
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of difference columns available, `M^k = min(M_max, k)`.
    pub fn difference_count(&self) -> usize {
        self.entries.len().saturating_sub(1)
    }

    /// The difference matrices `Y` (residuals) and `S` (iterates), each
    /// n x M with column j holding the difference of entries j+1 and j.
    ///
    /// Panics with fewer than two remembered entries.
    pub fn build_differences(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let m = self.difference_count();
        assert!(m >= 1, "need at least two history entries for differences");
        let n = self.entries[0].alpha.len();
        let y = DMatrix::from_fn(n, m, |i, j| {
            self.entries[j + 1].residual[i] - self.entries[j].residual[i]
        });
        let s = DMatrix::from_fn(n, m, |i, j| {
            self.entries[j + 1].alpha.as_slice()[i] - self.entries[j].alpha.as_slice()[i]
        });
        (y, s)
    }

    /// Weighted combination of the cached operator images (not of the raw
    /// iterates): `sum_i w_i F a^{k-M^k+i}`, oldest first.
    pub fn aa_candidate(&self, weights: &[f64]) -> AlphaMatrix {
        assert_eq!(
            weights.len(),
            self.entries.len(),
            "need one weight per remembered iterate"
        );
        let first = &self.entries[0].image;
        let mut out = AlphaMatrix::zeros(first.num_states(), first.num_actions());
        for (w, entry) in weights.iter().zip(&self.entries) {
            for (acc, &v) in out.as_mut_slice().iter_mut().zip(entry.image.as_slice()) {
                *acc += w * v;
            }
        }
        out
    }
}

/// Solves the regularized least-squares problem for `xi`:
/// `min ||g - Y xi||^2 + eta (||S||_F^2 + ||Y||_F^2) ||xi||^2`
/// via its normal equations. Returns all zeros when `Y = S = 0`, where the
/// unregularized system is singular.
pub fn solve_xi(y: &DMatrix<f64>, s: &DMatrix<f64>, g: &[f64], eta: f64) -> Vec<f64> {
    let m = y.ncols();
    assert!(m >= 1, "xi needs at least one column");
    assert!(eta.is_finite() && g.iter().all(|v| v.is_finite()), "non-finite inputs");
    debug_assert!(y.iter().all(|v| v.is_finite()) && s.iter().all(|v| v.is_finite()));

    let lambda = eta * (s.norm_squared() + y.norm_squared());
    if lambda == 0.0 {
        return vec![0.0; m];
    }
    let mut gram = y.transpose() * y;
    for i in 0..m {
        gram[(i, i)] += lambda;
    }
    let rhs = y.transpose() * DVector::from_column_slice(g);
    match gram.cholesky() {
        Some(chol) => chol.solve(&rhs).iter().copied().collect(),
        // lambda > 0 makes the system positive definite; a numerical failure
        // here degrades to the plain fixed-point step (xi = 0 => w = e_M).
        None => vec![0.0; m],
    }
}

/// Recovers the mixing weights from `xi`:
/// `w_0 = xi_0`, `w_i = xi_i - xi_{i-1}`, `w_M = 1 - xi_{M-1}`.
/// The sum telescopes to exactly one.
pub fn xi_to_w(xi: &[f64]) -> Vec<f64> {
    assert!(!xi.is_empty(), "xi must be non-empty");
    let m = xi.len();
    let mut w = Vec::with_capacity(m + 1);
    w.push(xi[0]);
    for i in 1..m {
        w.push(xi[i] - xi[i - 1]);
    }
    w.push(1.0 - xi[m - 1]);
    w
}

/// The safeguard decay threshold `D ||g^0|| (n_AA / N_s + 1)^{-(1+phi)}`.
pub fn safeguard_threshold(g0_norm: f64, n_aa: usize, d: f64, phi: f64, n_s: usize) -> f64 {
    d * g0_norm * (n_aa as f64 / n_s as f64 + 1.0).powf(-(1.0 + phi))
}

/// True when the residual norm is small enough for the accelerated
/// candidate to be accepted.
pub fn safeguard_accept(
    g_norm: f64,
    g0_norm: f64,
    n_aa: usize,
    d: f64,
    phi: f64,
    n_s: usize,
) -> bool {
    g_norm <= safeguard_threshold(g0_norm, n_aa, d, phi, n_s)
}

/// Safeguarded Anderson-accelerated fixed-point iteration from an explicit
/// start, generic over the operator.
///
/// Each iteration applies the operator once, always forms the accelerated
/// candidate when memory is available (its cost is what the per-iteration
/// weight timing measures), then selects between the accelerated and plain
/// candidates via the safeguard. Stops when the residual sup-norm reaches
/// `tol`, returning the iterate that met the test.
pub fn aa_solve<Op: AlphaOperator>(
    op: &mut Op,
    alpha0: AlphaMatrix,
    params: &AaParams,
) -> SolveResult {
    params.validate();
    let tol = params.solve.tol;
    let start = Instant::now();
    let mut trace: Vec<IterationRecord> = Vec::new();
    let mut iterates: Vec<AlphaMatrix> = Vec::new();
    let mut state = AaState::new(params.m_max);

    // Iteration 0 is always a plain step: a^1 = F a^0.
    let step_start = Instant::now();
    if params.solve.record_iterates {
        iterates.push(alpha0.clone());
    }
    let image0 = op.apply(&alpha0);
    let g0 = residual_from_image(&alpha0, &image0);
    let g0_norm = inf_norm(&g0);
    state.g0_norm = g0_norm;
    trace.push(IterationRecord {
        k: 0,
        residual_inf: g0_norm,
        step_kind: StepKind::Fpi,
        step_seconds: step_start.elapsed().as_secs_f64(),
        weight_seconds: 0.0,
        weight_sum: None,
        safeguard: None,
    });
    if g0_norm <= tol {
        return SolveResult {
            alpha: alpha0,
            trace,
            converged: true,
            iterations: 1,
            total_seconds: start.elapsed().as_secs_f64(),
            iterates,
        };
    }
    let mut alpha = image0.clone();
    state.push(alpha0, image0, g0);

    let mut converged = false;
    while trace.len() < params.solve.max_iter {
        let k = trace.len();
        let step_start = Instant::now();
        if params.solve.record_iterates {
            iterates.push(alpha.clone());
        }
        let image = op.apply(&alpha);
        let residual = residual_from_image(&alpha, &image);
        let g_norm = inf_norm(&residual);
        if g_norm <= tol {
            trace.push(IterationRecord {
                k,
                residual_inf: g_norm,
                step_kind: StepKind::Fpi,
                step_seconds: step_start.elapsed().as_secs_f64(),
                weight_seconds: 0.0,
                weight_sum: None,
                safeguard: None,
            });
            converged = true;
            break;
        }
        state.push(alpha.clone(), image.clone(), residual.clone());

        let next;
        let step_kind;
        let mut weight_seconds = 0.0;
        let mut weight_sum = None;
        let mut safeguard = None;
        if state.difference_count() == 0 {
            // M_max = 0: no memory, identical to plain iteration.
            next = image;
            step_kind = StepKind::Fpi;
        } else {
            let weight_start = Instant::now();
            let (y, s) = state.build_differences();
            let xi = solve_xi(&y, &s, &residual, params.eta);
            let w = xi_to_w(&xi);
            weight_seconds = weight_start.elapsed().as_secs_f64();
            let candidate = state.aa_candidate(&w);
            weight_sum = Some(w.iter().sum());

            if state.i_safe || state.n_consecutive >= params.n_s {
                let threshold =
                    safeguard_threshold(state.g0_norm, state.n_aa, params.d, params.phi, params.n_s);
                let accepted = g_norm <= threshold;
                safeguard = Some(SafeguardRecord {
                    accepted,
                    n_aa_before: state.n_aa,
                    threshold,
                });
                if accepted {
                    state.n_aa += 1;
                    state.i_safe = false;
                    state.n_consecutive = 1;
                    next = candidate;
                    step_kind = StepKind::Aa;
                } else {
                    state.n_consecutive = 0;
                    next = image;
                    step_kind = StepKind::Fpi;
                }
            } else {
                state.n_aa += 1;
                state.n_consecutive += 1;
                next = candidate;
                step_kind = StepKind::Aa;
            }
        }
        trace.push(IterationRecord {
            k,
            residual_inf: g_norm,
            step_kind,
            step_seconds: step_start.elapsed().as_secs_f64(),
            weight_seconds,
            weight_sum,
            safeguard,
        });
        alpha = next;
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

/// Anderson-accelerated FIB from a random initial alpha.
pub fn aa_fib_solve(model: &PomdpModel, params: &AaParams) -> SolveResult {
    let mut op = FibOperator::new(model);
    aa_solve(&mut op, init_alpha(model, params.solve.seed), params)
}
