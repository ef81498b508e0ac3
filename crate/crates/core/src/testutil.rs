//! Deterministic random problem generators shared by the test suites.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{AlphaMatrix, PomdpModel};

/// A random valid POMDP with dimensions drawn up to the given caps.
/// Probability rows are normalized exponential draws, rewards are uniform in
/// [-10, 10], and the discount is uniform in [0.3, 0.95].
pub fn random_model(seed: u64, max_states: usize, max_actions: usize, max_obs: usize) -> PomdpModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ns = rng.random_range(1..=max_states);
    let na = rng.random_range(1..=max_actions);
    let no = rng.random_range(1..=max_obs);

    fn prob_row(rng: &mut ChaCha8Rng, len: usize, out: &mut Vec<f64>) {
        let start = out.len();
        let mut sum = 0.0;
        for _ in 0..len {
            let e = -(1.0 - rng.random::<f64>()).ln();
            out.push(e);
            sum += e;
        }
        for v in &mut out[start..] {
            *v /= sum;
        }
    }

    let mut transition = Vec::with_capacity(na * ns * ns);
    for _ in 0..na * ns {
        prob_row(&mut rng, ns, &mut transition);
    }
    let mut observation = Vec::with_capacity(na * ns * no);
    for _ in 0..na * ns {
        prob_row(&mut rng, no, &mut observation);
    }
    let reward: Vec<f64> = (0..ns * na).map(|_| rng.random_range(-10.0..10.0)).collect();
    let discount = rng.random_range(0.3..0.95);

    let mut model = PomdpModel::new(ns, na, no, transition, observation, reward, discount)
        .expect("generated shapes are consistent");
    if rng.random::<bool>() {
        let mut belief = Vec::new();
        prob_row(&mut rng, ns, &mut belief);
        model = model.with_start_belief(belief).unwrap();
    }
    debug_assert!(model.validate().is_empty());
    model
}

/// A random alpha matrix for `model` with entries uniform in [-scale, scale].
pub fn random_alpha(model: &PomdpModel, seed: u64, scale: f64) -> AlphaMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..model.num_states() * model.num_actions())
        .map(|_| rng.random_range(-scale..scale))
        .collect();
    AlphaMatrix::from_flat(model.num_states(), model.num_actions(), data)
}
