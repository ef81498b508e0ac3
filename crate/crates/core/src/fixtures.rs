//! Built-in problems: the classic tiger instance and a grid-navigation
//! generator. Both keep the repository self-contained; externally downloaded
//! `.pomdp` benchmark files load through [`crate::parser::parse_pomdp`] the
//! same way.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{Labels, PomdpModel};
use crate::parser::parse_pomdp;

/// Source text of the built-in tiger problem.
pub const TIGER_SOURCE: &str = include_str!("../data/tiger.pomdp");

/// The tiger problem: 2 states, 3 actions, 2 observations, discount 0.95.
pub fn tiger() -> PomdpModel {
    parse_pomdp(TIGER_SOURCE).expect("embedded tiger fixture must parse")
}

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("grid must be at least 2x2, got {width}x{height}")]
    GridTooSmall { width: usize, height: usize },
    #[error("{name} must lie in [0,1), got {value}")]
    BadProbability { name: &'static str, value: f64 },
}

const GRID_DISCOUNT: f64 = 0.95;
/// up, down, left, right as (dx, dy).
const MOVES: [(isize, isize); 4] = [(0, -1), (0, 1), (-1, 0), (1, 0)];

/// Generates a grid-navigation POMDP in the style of the classic robot maze
/// benchmarks.
///
/// The robot moves on a `width` x `height` grid with walls on the boundary.
/// A move action fails (leaves the robot in place) with probability
/// `slip_prob`. The robot senses the wall configuration of its cell: one of
/// 16 signatures (north/east/south/west wall bits), except that with
/// probability `obs_noise` the sensor reports `undetermined` instead. A
/// fifth `declare` action ends the episode by moving to an absorbing `done`
/// state, paying +1 if taken at the goal cell and -1 anywhere else; every
/// other reward is 0. States are the `width * height` cells plus `done`.
/// The seed picks the start and goal cells, and the start belief is a point
/// mass on the start cell. The discount factor is fixed at 0.95.
pub fn generate_grid_nav(
    width: usize,
    height: usize,
    slip_prob: f64,
    obs_noise: f64,
    seed: u64,
) -> Result<PomdpModel, FixtureError> {
    if width < 2 || height < 2 {
        return Err(FixtureError::GridTooSmall { width, height });
    }
    for (name, value) in [("slip_prob", slip_prob), ("obs_noise", obs_noise)] {
        if !(0.0..1.0).contains(&value) {
            return Err(FixtureError::BadProbability { name, value });
        }
    }

    let cells = width * height;
    let done = cells;
    let num_states = cells + 1;
    let num_actions = 5; // 4 moves + declare
    let declare = 4;
    let num_signatures = 16;
    let undetermined_obs = num_signatures;
    let done_obs = num_signatures + 1;
    let num_observations = num_signatures + 2;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = rng.random_range(0..cells);
    let goal = loop {
        let g = rng.random_range(0..cells);
        if g != start {
            break g;
        }
    };

    let neighbor = |cell: usize, dir: usize| -> Option<usize> {
        let (x, y) = ((cell % width) as isize, (cell / width) as isize);
        let (dx, dy) = MOVES[dir];
        let (nx, ny) = (x + dx, y + dy);
        if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
            None
        } else {
            Some(ny as usize * width + nx as usize)
        }
    };
    let signature = |cell: usize| -> usize {
        (0..4)
            .filter(|&dir| neighbor(cell, dir).is_none())
            .fold(0, |sig, dir| sig | (1 << dir))
    };

    let mut transition = vec![0.0; num_actions * num_states * num_states];
    let mut t = |a: usize, s: usize, sp: usize, p: f64| {
        transition[(a * num_states + s) * num_states + sp] += p;
    };
    for s in 0..cells {
        for (dir, _) in MOVES.iter().enumerate() {
            match neighbor(s, dir) {
                Some(target) => {
                    t(dir, s, target, 1.0 - slip_prob);
                    t(dir, s, s, slip_prob);
                }
                None => t(dir, s, s, 1.0),
            }
        }
        t(declare, s, done, 1.0);
    }
    for a in 0..num_actions {
        t(a, done, done, 1.0);
    }

    let mut observation = vec![0.0; num_actions * num_states * num_observations];
    for a in 0..num_actions {
        for sp in 0..cells {
            let base = (a * num_states + sp) * num_observations;
            observation[base + signature(sp)] = 1.0 - obs_noise;
            observation[base + undetermined_obs] += obs_noise;
        }
        let base = (a * num_states + done) * num_observations;
        observation[base + done_obs] = 1.0;
    }

    let mut reward = vec![0.0; num_states * num_actions];
    for s in 0..cells {
        reward[s * num_actions + declare] = if s == goal { 1.0 } else { -1.0 };
    }

    let mut start_belief = vec![0.0; num_states];
    start_belief[start] = 1.0;

    let mut state_names: Vec<String> = (0..cells)
        .map(|s| format!("c{}-{}", s % width, s / width))
        .collect();
    state_names.push("done".to_string());
    let mut obs_names: Vec<String> = (0..num_signatures).map(|m| format!("sig{m}")).collect();
    obs_names.push("undetermined".to_string());
    obs_names.push("obs-done".to_string());
    let labels = Labels {
        states: Some(state_names),
        actions: Some(
            ["up", "down", "left", "right", "declare"]
                .into_iter()
                .map(String::from)
                .collect(),
        ),
        observations: Some(obs_names),
    };

    let model = PomdpModel::new(
        num_states,
        num_actions,
        num_observations,
        transition,
        observation,
        reward,
        GRID_DISCOUNT,
    )
    .expect("generated arrays have consistent shapes")
    .with_start_belief(start_belief)
    .expect("start belief length matches")
    .with_labels(labels);
    Ok(model)
}

/// Start and goal cells the generator picked for `seed` (test support).
pub fn grid_nav_endpoints(width: usize, height: usize, seed: u64) -> (usize, usize) {
    let cells = width * height;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = rng.random_range(0..cells);
    let goal = loop {
        let g = rng.random_range(0..cells);
        if g != start {
            break g;
        }
    };
    (start, goal)
}
