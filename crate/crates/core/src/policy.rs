//! Greedy policy execution and Monte Carlo evaluation.
//!
//! A converged alpha matrix induces the greedy policy
//! `pi(b) = argmax_a b . alpha_a`. Executing it requires a belief filter:
//! after taking `a` and observing `o`, the posterior is
//!
//! ```text
//! b'(s') = Omega[a][s'][o] * sum_s T[a][s][s'] b(s) / normalizer .
//! ```
//!
//! [`rollout`] samples one episode (true hidden state tracked by the
//! simulator, belief tracked by the agent) and returns the discounted sum
//! of rewards, truncated at the horizon. [`evaluate`] aggregates episodes
//! started from the model's fixed initial belief or from uniformly random
//! simplex points.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{AlphaMatrix, Belief, PomdpModel};
use crate::sim::sample_generative;
use crate::util::derive_seed;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("observation {o} has probability 0 under belief and action {a}")]
    ImpossibleObservation { a: usize, o: usize },
    #[error("fixed-belief evaluation requires a start belief in the model")]
    MissingStartBelief,
    #[error("alpha matrix is {got_a} actions x {got_s} states, model needs {want_a} x {want_s}")]
    ShapeMismatch {
        got_s: usize,
        got_a: usize,
        want_s: usize,
        want_a: usize,
    },
}

/// Where episodes start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BeliefMode {
    /// The model's start belief.
    #[default]
    Fixed,
    /// A fresh uniform draw from the belief simplex per episode.
    Random,
}

/// Evaluation protocol parameters.
#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub episodes: usize,
    /// Maximum trajectory length per episode.
    pub horizon: usize,
    pub belief_mode: BeliefMode,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 100,
            horizon: 100,
            belief_mode: BeliefMode::Fixed,
            seed: 0,
        }
    }
}

/// Mean and standard deviation of discounted returns across episodes.
/// The deviation is the population form, so a single episode reports 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalStats {
    pub mean: f64,
    pub std: f64,
}

/// Bayes posterior after taking `a` and observing `o`.
pub fn belief_update(
    model: &PomdpModel,
    belief: &Belief,
    a: usize,
    o: usize,
) -> Result<Belief, PolicyError> {
    let ns = model.num_states();
    assert_eq!(belief.num_states(), ns, "belief shape mismatch");
    let mut posterior = vec![0.0; ns];
    for s in 0..ns {
        let b = belief.prob(s);
        if b == 0.0 {
            continue;
        }
        let row = model.transition_row(a, s);
        for (s_next, &p) in row.iter().enumerate() {
            posterior[s_next] += p * b;
        }
    }
    let mut normalizer = 0.0;
    for (s_next, value) in posterior.iter_mut().enumerate() {
        *value *= model.observation_prob(a, s_next, o);
        normalizer += *value;
    }
    if normalizer <= 0.0 {
        return Err(PolicyError::ImpossibleObservation { a, o });
    }
    for value in &mut posterior {
        *value /= normalizer;
    }
    Ok(Belief::from_normalized(posterior))
}

/// Lowest-index maximizer of `b . alpha_a`.
pub fn greedy_action(alpha: &AlphaMatrix, belief: &Belief) -> usize {
    assert_eq!(
        alpha.num_states(),
        belief.num_states(),
        "alpha/belief shape mismatch"
    );
    let mut best_action = 0;
    let mut best_value = f64::NEG_INFINITY;
    for a in 0..alpha.num_actions() {
        let value: f64 = alpha
            .action_values(a)
            .iter()
            .zip(belief.probs())
            .map(|(x, b)| x * b)
            .sum();
        if value > best_value {
            best_value = value;
            best_action = a;
        }
    }
    best_action
}

/// Uniform draw from the belief simplex (normalized exponential
/// coordinates).
pub fn random_belief<R: Rng>(num_states: usize, rng: &mut R) -> Belief {
    let mut probs: Vec<f64> = (0..num_states)
        .map(|_| -(1.0 - rng.random::<f64>()).ln())
        .collect();
    let sum: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= sum;
    }
    Belief::from_normalized(probs)
}

/// Executes the greedy policy for one episode and returns the discounted
/// return. The hidden state is sampled once from `b0` and then stepped by
/// the generative model; the agent's belief is filtered with the sampled
/// observations. Reward accrues on the (state, action) pair before the
/// transition.
pub fn rollout<R: Rng>(
    model: &PomdpModel,
    alpha: &AlphaMatrix,
    b0: &Belief,
    horizon: usize,
    rng: &mut R,
) -> Result<f64, PolicyError> {
    check_shape(model, alpha)?;
    let mut state = sample_from(b0.probs(), rng);
    let mut belief = b0.clone();
    let mut total = 0.0;
    let mut discount = 1.0;
    for _ in 0..horizon {
        let a = greedy_action(alpha, &belief);
        let (next_state, o, r) = sample_generative(model, state, a, rng);
        total += discount * r;
        discount *= model.discount();
        // The observation was sampled from a state with positive belief, so
        // the posterior exists; a failure here is a logic error.
        belief = belief_update(model, &belief, a, o)?;
        state = next_state;
    }
    Ok(total)
}

/// Runs the evaluation protocol: `episodes` independent rollouts with
/// per-episode RNG streams derived from the seed, so results do not depend
/// on scheduling.
pub fn evaluate(
    model: &PomdpModel,
    alpha: &AlphaMatrix,
    config: &EvalConfig,
) -> Result<EvalStats, PolicyError> {
    check_shape(model, alpha)?;
    let fixed_start = match config.belief_mode {
        BeliefMode::Fixed => Some(Belief::from_normalized(
            model
                .start_belief()
                .ok_or(PolicyError::MissingStartBelief)?
                .to_vec(),
        )),
        BeliefMode::Random => None,
    };
    let mut returns = Vec::with_capacity(config.episodes);
    for episode in 0..config.episodes {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, episode as u64));
        let b0 = match &fixed_start {
            Some(b) => b.clone(),
            None => random_belief(model.num_states(), &mut rng),
        };
        returns.push(rollout(model, alpha, &b0, config.horizon, &mut rng)?);
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    Ok(EvalStats {
        mean,
        std: var.sqrt(),
    })
}

fn check_shape(model: &PomdpModel, alpha: &AlphaMatrix) -> Result<(), PolicyError> {
    if alpha.num_states() != model.num_states() || alpha.num_actions() != model.num_actions() {
        return Err(PolicyError::ShapeMismatch {
            got_s: alpha.num_states(),
            got_a: alpha.num_actions(),
            want_s: model.num_states(),
            want_a: model.num_actions(),
        });
    }
    Ok(())
}

fn sample_from<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_nonzero = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_nonzero = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last_nonzero
}
