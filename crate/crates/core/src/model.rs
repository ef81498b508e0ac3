//! POMDP tuple and alpha-vector containers.
//!
//! A finite POMDP is the tuple (S, A, O, T, Omega, r, gamma):
//! - `T[a][s][s']`  — probability of moving from `s` to `s'` under action `a`,
//! - `Omega[a][s'][o]` — probability of observing `o` after landing in `s'`
//!   under action `a`,
//! - `r[s][a]` — immediate reward,
//! - `gamma` in (0, 1) — discount factor.
//!
//! All indices are 0-based. Probabilistic invariants are checked by
//! [`PomdpModel::validate`], which reports violations instead of panicking;
//! loaders decide whether to reject.

use thiserror::Error;

/// Absolute tolerance for probability rows summing to one.
pub const PROB_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{name} has length {got}, expected {expected}")]
    ShapeMismatch {
        name: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("state/action/observation counts must be positive")]
    EmptyDimension,
    #[error("{name} contains a non-finite entry")]
    NonFinite { name: &'static str },
    #[error("belief must be non-negative and sum to 1 within {PROB_SUM_TOL}, got sum {sum}")]
    InvalidBelief { sum: f64 },
}

/// Optional human-readable names carried over from a problem file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Labels {
    pub states: Option<Vec<String>>,
    pub actions: Option<Vec<String>>,
    pub observations: Option<Vec<String>>,
}

impl Labels {
    pub fn is_empty(&self) -> bool {
        self.states.is_none() && self.actions.is_none() && self.observations.is_none()
    }
}

/// A finite POMDP. Immutable after construction; cheap to share read-only
/// across concurrent solver runs.
#[derive(Debug, Clone, PartialEq)]
pub struct PomdpModel {
    num_states: usize,
    num_actions: usize,
    num_observations: usize,
    /// Row-major `[a][s][s']`, contiguous in `s'` so the backup's inner sums
    /// stream over one cache line.
    transition: Vec<f64>,
    /// Row-major `[a][s'][o]`, contiguous in `o`.
    observation: Vec<f64>,
    /// Row-major `[s][a]`.
    reward: Vec<f64>,
    discount: f64,
    start_belief: Option<Vec<f64>>,
    labels: Labels,
    r_min: f64,
    r_max: f64,
}

impl PomdpModel {
    /// Builds a model from raw arrays. Only shapes and finiteness are
    /// checked here; probabilistic invariants are the job of [`validate`]
    /// so that diagnostics can name every violated row at once.
    ///
    /// [`validate`]: PomdpModel::validate
    pub fn new(
        num_states: usize,
        num_actions: usize,
        num_observations: usize,
        transition: Vec<f64>,
        observation: Vec<f64>,
        reward: Vec<f64>,
        discount: f64,
    ) -> Result<Self, ModelError> {
        if num_states == 0 || num_actions == 0 || num_observations == 0 {
            return Err(ModelError::EmptyDimension);
        }
        let check = |name: &'static str, v: &[f64], expected: usize| {
            if v.len() != expected {
                return Err(ModelError::ShapeMismatch {
                    name,
                    got: v.len(),
                    expected,
                });
            }
            if !v.iter().all(|x| x.is_finite()) {
                return Err(ModelError::NonFinite { name });
            }
            Ok(())
        };
        check(
            "transition",
            &transition,
            num_actions * num_states * num_states,
        )?;
        check(
            "observation",
            &observation,
            num_actions * num_states * num_observations,
        )?;
        check("reward", &reward, num_states * num_actions)?;
        if !discount.is_finite() {
            return Err(ModelError::NonFinite { name: "discount" });
        }
        let r_min = reward.iter().copied().fold(f64::INFINITY, f64::min);
        let r_max = reward.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            num_states,
            num_actions,
            num_observations,
            transition,
            observation,
            reward,
            discount,
            start_belief: None,
            labels: Labels::default(),
            r_min,
            r_max,
        })
    }

    pub fn with_start_belief(mut self, belief: Vec<f64>) -> Result<Self, ModelError> {
        if belief.len() != self.num_states {
            return Err(ModelError::ShapeMismatch {
                name: "start_belief",
                got: belief.len(),
                expected: self.num_states,
            });
        }
        self.start_belief = Some(belief);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Labels) -> Self {
        self.labels = labels;
        self
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_observations(&self) -> usize {
        self.num_observations
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// Reward bounds computed from the reward array at construction time.
    pub fn reward_bounds(&self) -> (f64, f64) {
        (self.r_min, self.r_max)
    }

    pub fn start_belief(&self) -> Option<&[f64]> {
        self.start_belief.as_deref()
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    /// Pr(s' | s, a).
    #[inline]
    pub fn transition_prob(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.transition[(a * self.num_states + s) * self.num_states + s_next]
    }

    /// The row T\[a\]\[s\]\[.\] over next states.
    #[inline]
    pub fn transition_row(&self, a: usize, s: usize) -> &[f64] {
        let base = (a * self.num_states + s) * self.num_states;
        &self.transition[base..base + self.num_states]
    }

    /// Pr(o | s', a).
    #[inline]
    pub fn observation_prob(&self, a: usize, s_next: usize, o: usize) -> f64 {
        self.observation[(a * self.num_states + s_next) * self.num_observations + o]
    }

    /// The row Omega\[a\]\[s'\]\[.\] over observations.
    #[inline]
    pub fn observation_row(&self, a: usize, s_next: usize) -> &[f64] {
        let base = (a * self.num_states + s_next) * self.num_observations;
        &self.observation[base..base + self.num_observations]
    }

    /// r(s, a).
    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.num_actions + a]
    }

    /// Checks every probabilistic invariant and returns the full list of
    /// violations. An empty report means the model is valid.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        for a in 0..self.num_actions {
            for s in 0..self.num_states {
                let row = self.transition_row(a, s);
                if let Some(v) = check_prob_row(row) {
                    violations.push(match v {
                        RowIssue::Sum(sum) => Violation::TransitionRowSum { s, a, sum },
                        RowIssue::Negative(i) => Violation::NegativeTransition { s, a, s_next: i },
                    });
                }
            }
            for s_next in 0..self.num_states {
                let row = self.observation_row(a, s_next);
                if let Some(v) = check_prob_row(row) {
                    violations.push(match v {
                        RowIssue::Sum(sum) => Violation::ObservationRowSum { a, s_next, sum },
                        RowIssue::Negative(i) => Violation::NegativeObservation { a, s_next, o: i },
                    });
                }
            }
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            violations.push(Violation::DiscountOutOfRange {
                discount: self.discount,
            });
        }
        if let Some(b) = &self.start_belief {
            if let Some(v) = check_prob_row(b) {
                violations.push(match v {
                    RowIssue::Sum(sum) => Violation::StartBeliefSum { sum },
                    RowIssue::Negative(i) => Violation::NegativeStartBelief { s: i },
                });
            }
        }
        ValidationReport { violations }
    }
}

enum RowIssue {
    Sum(f64),
    Negative(usize),
}

fn check_prob_row(row: &[f64]) -> Option<RowIssue> {
    for (i, &p) in row.iter().enumerate() {
        // NaN is flagged here too, not just negatives.
        if p.is_nan() || p < 0.0 {
            return Some(RowIssue::Negative(i));
        }
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        return Some(RowIssue::Sum(sum));
    }
    None
}

/// One violated invariant, locating the offending row.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TransitionRowSum { s: usize, a: usize, sum: f64 },
    NegativeTransition { s: usize, a: usize, s_next: usize },
    ObservationRowSum { a: usize, s_next: usize, sum: f64 },
    NegativeObservation { a: usize, s_next: usize, o: usize },
    DiscountOutOfRange { discount: f64 },
    StartBeliefSum { sum: f64 },
    NegativeStartBelief { s: usize },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::TransitionRowSum { s, a, sum } => {
                write!(f, "transition row (s={s}, a={a}) sums to {sum}, expected 1")
            }
            Violation::NegativeTransition { s, a, s_next } => {
                write!(f, "transition entry (s={s}, a={a}, s'={s_next}) is negative")
            }
            Violation::ObservationRowSum { a, s_next, sum } => {
                write!(
                    f,
                    "observation row (a={a}, s'={s_next}) sums to {sum}, expected 1"
                )
            }
            Violation::NegativeObservation { a, s_next, o } => {
                write!(f, "observation entry (a={a}, s'={s_next}, o={o}) is negative")
            }
            Violation::DiscountOutOfRange { discount } => {
                write!(f, "discount {discount} out of (0,1)")
            }
            Violation::StartBeliefSum { sum } => {
                write!(f, "start belief sums to {sum}, expected 1")
            }
            Violation::NegativeStartBelief { s } => {
                write!(f, "start belief entry for state {s} is negative")
            }
        }
    }
}

/// Outcome of [`PomdpModel::validate`].
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "model is valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Flat index of component (a, s) in the stacked alpha-vector.
///
/// The stacked vector lists alpha_0 first, then alpha_1, and so on, so the
/// component for action `a` and state `s` lives at `a * num_states + s`
/// (the 1-based textbook convention `(a-1)|S| + s` shifted to 0-based).
///
/// Panics when `a` or `s` is out of range.
#[inline]
pub fn flat_index(num_states: usize, num_actions: usize, a: usize, s: usize) -> usize {
    assert!(
        a < num_actions && s < num_states,
        "flat_index out of range: (a={a}, s={s}) for {num_actions} actions, {num_states} states"
    );
    a * num_states + s
}

/// The stacked set of alpha-vectors, one per action, as a single flat array.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaMatrix {
    num_states: usize,
    num_actions: usize,
    data: Vec<f64>,
}

impl AlphaMatrix {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            data: vec![0.0; num_states * num_actions],
        }
    }

    pub fn constant(num_states: usize, num_actions: usize, value: f64) -> Self {
        Self {
            num_states,
            num_actions,
            data: vec![value; num_states * num_actions],
        }
    }

    /// Wraps an existing flat array laid out action-major.
    pub fn from_flat(num_states: usize, num_actions: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            num_states * num_actions,
            "flat alpha array has length {}, expected {}",
            data.len(),
            num_states * num_actions
        );
        Self {
            num_states,
            num_actions,
            data,
        }
    }

    /// Stacks one length-|S| vector per action.
    pub fn from_action_vectors(vectors: &[Vec<f64>]) -> Self {
        assert!(!vectors.is_empty(), "need at least one alpha-vector");
        let num_states = vectors[0].len();
        let mut data = Vec::with_capacity(vectors.len() * num_states);
        for v in vectors {
            assert_eq!(v.len(), num_states, "alpha-vectors differ in length");
            data.extend_from_slice(v);
        }
        Self {
            num_states,
            num_actions: vectors.len(),
            data,
        }
    }

    /// Splits back into one vector per action; inverse of
    /// [`from_action_vectors`](AlphaMatrix::from_action_vectors).
    pub fn to_action_vectors(&self) -> Vec<Vec<f64>> {
        (0..self.num_actions)
            .map(|a| self.action_values(a).to_vec())
            .collect()
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn flat_index(&self, a: usize, s: usize) -> usize {
        flat_index(self.num_states, self.num_actions, a, s)
    }

    #[inline]
    pub fn get(&self, a: usize, s: usize) -> f64 {
        self.data[self.flat_index(a, s)]
    }

    #[inline]
    pub fn set(&mut self, a: usize, s: usize, value: f64) {
        let i = self.flat_index(a, s);
        self.data[i] = value;
    }

    /// The alpha-vector for one action.
    #[inline]
    pub fn action_values(&self, a: usize) -> &[f64] {
        assert!(a < self.num_actions, "action {a} out of range");
        &self.data[a * self.num_states..(a + 1) * self.num_states]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Sup-norm distance to another matrix of the same shape.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        assert_eq!(self.num_states, other.num_states, "shape mismatch");
        assert_eq!(self.num_actions, other.num_actions, "shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().map(|x| x.abs()).fold(0.0, f64::max)
    }

    /// True when every component is bit-for-bit identical.
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.num_states == other.num_states
            && self.num_actions == other.num_actions
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(x, y)| x.to_bits() == y.to_bits())
    }
}

/// A probability distribution over states.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    probs: Vec<f64>,
}

impl Belief {
    /// Validates non-negativity and normalization within [`PROB_SUM_TOL`].
    pub fn new(probs: Vec<f64>) -> Result<Self, ModelError> {
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|&p| p.is_nan() || p < 0.0) || (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(ModelError::InvalidBelief { sum });
        }
        Ok(Self { probs })
    }

    pub fn uniform(num_states: usize) -> Self {
        Self {
            probs: vec![1.0 / num_states as f64; num_states],
        }
    }

    /// Point mass on one state.
    pub fn point(num_states: usize, s: usize) -> Self {
        assert!(s < num_states, "state {s} out of range");
        let mut probs = vec![0.0; num_states];
        probs[s] = 1.0;
        Self { probs }
    }

    /// Builds a belief from already-normalized values without re-checking.
    pub(crate) fn from_normalized(probs: Vec<f64>) -> Self {
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_states(&self) -> usize {
        self.probs.len()
    }

    #[inline]
    pub fn prob(&self, s: usize) -> f64 {
        self.probs[s]
    }
}
