//! Acceptance suite. Each test covers one release criterion at its stated
//! tolerance and prints a single pass line; a failed assertion is the fail
//! line. Run with `cargo test --test acceptance -- --nocapture` to see the
//! measurements.

use aafib::anderson::{aa_fib_solve, AaParams};
use aafib::fib::{
    exact_vi_oracle, fib_solve, qmdp_solve, AlphaOperator, FibOperator, SolveParams,
};
use aafib::fixtures::{self, generate_grid_nav};
use aafib::model::{Belief, PomdpModel};
use aafib::parser::{parse_pomdp, serialize_pomdp, ParseError};
use aafib::policy;
use aafib::sim::{aa_fib_solve_sim, estimate_eps, ResamplePolicy, SimParams};
use aafib::testutil::{random_alpha, random_model};

const MEMORY_SIZES: [usize; 4] = [4, 8, 12, 16];

fn aa_params(m_max: usize, solve: SolveParams) -> AaParams {
    AaParams {
        m_max,
        solve,
        ..Default::default()
    }
}

/// Criterion 1: accelerated runs converge to the plain FIB solution.
/// On tiger and grid-nav 5x5 (slip 0.1, noise 0.1) across 20 seeds and all
/// four memory sizes, the accelerated solution at tol 1e-8 lies within 1e-6
/// sup-norm of the plain FIB solution.
#[test]
fn criterion_1_fixed_point_agreement() {
    let tol = 1e-8;
    let agreement = 1e-6;
    let mut worst: f64 = 0.0;
    let mut check_problem = |name: &str, model: &PomdpModel, seed: u64| {
        let solve = SolveParams {
            tol,
            seed,
            ..Default::default()
        };
        let fib = fib_solve(model, &solve);
        assert!(fib.converged, "{name} seed {seed}: FIB did not converge");
        for m in MEMORY_SIZES {
            let aa = aa_fib_solve(model, &aa_params(m, solve.clone()));
            assert!(
                aa.converged,
                "{name} seed {seed} m_max {m}: AA-FIB did not converge"
            );
            let d = aa.alpha.sup_distance(&fib.alpha);
            worst = worst.max(d);
            assert!(
                d <= agreement,
                "{name} seed {seed} m_max {m}: distance {d:e} above {agreement:e}"
            );
        }
    };

    let tiger = fixtures::tiger();
    for seed in 0..20 {
        check_problem("tiger", &tiger, seed);
    }
    for seed in 0..20 {
        let grid = generate_grid_nav(5, 5, 0.1, 0.1, seed).unwrap();
        check_problem("grid-nav-5x5", &grid, seed);
    }
    println!(
        "[acceptance] criterion 1 (fixed-point agreement): PASS, worst distance {worst:.3e} <= 1e-6"
    );
}

/// Criterion 2: acceleration cuts the iteration count. On grid-nav 10x10
/// (discount 0.95) at tol 1e-6 across 20 seeds, the best memory size's mean
/// iteration count is at most 0.6x the plain FIB mean.
#[test]
fn criterion_2_acceleration_ratio() {
    let tol = 1e-6;
    let seeds = 20u64;
    let mut fib_total = 0.0;
    let mut aa_totals = [0.0f64; MEMORY_SIZES.len()];
    for seed in 0..seeds {
        let model = generate_grid_nav(10, 10, 0.1, 0.1, seed).unwrap();
        assert!((model.discount() - 0.95).abs() < 1e-15);
        let solve = SolveParams {
            tol,
            seed,
            ..Default::default()
        };
        let fib = fib_solve(&model, &solve);
        assert!(fib.converged);
        fib_total += fib.iterations as f64;
        for (i, &m) in MEMORY_SIZES.iter().enumerate() {
            let aa = aa_fib_solve(&model, &aa_params(m, solve.clone()));
            assert!(aa.converged, "seed {seed} m_max {m} did not converge");
            aa_totals[i] += aa.iterations as f64;
        }
    }
    let fib_mean = fib_total / seeds as f64;
    let means: Vec<f64> = aa_totals.iter().map(|t| t / seeds as f64).collect();
    let best = means.iter().cloned().fold(f64::INFINITY, f64::min);
    let ratio = best / fib_mean;
    assert!(
        ratio <= 0.6,
        "best accelerated mean {best:.1} vs FIB mean {fib_mean:.1}: ratio {ratio:.3} above 0.6"
    );
    println!(
        "[acceptance] criterion 2 (acceleration ratio): PASS, FIB mean {fib_mean:.1}, AA means {means:.1?}, ratio {ratio:.3} <= 0.6"
    );
}

/// Criterion 3: the backup is a gamma-contraction in the sup-norm on 1000
/// random (model, alpha, beta) triples with dimensions up to 6.
#[test]
fn criterion_3_contraction() {
    let mut worst_excess: f64 = f64::NEG_INFINITY;
    for seed in 0..1000u64 {
        let model = random_model(seed, 6, 6, 6);
        let a = random_alpha(&model, 10_000 + seed, 50.0);
        let b = random_alpha(&model, 20_000 + seed, 50.0);
        let mut op = FibOperator::new(&model);
        let lhs = op.apply(&a).sup_distance(&op.apply(&b));
        let rhs = model.discount() * a.sup_distance(&b);
        worst_excess = worst_excess.max(lhs - rhs);
        assert!(
            lhs <= rhs + 1e-12,
            "seed {seed}: ||Fa - Fb|| = {lhs} above gamma ||a - b|| = {rhs}"
        );
    }
    println!(
        "[acceptance] criterion 3 (gamma-contraction, 1000 triples): PASS, worst excess {worst_excess:.3e} <= 1e-12"
    );
}

/// Criterion 4: FIB upper-bounds the exact values on tiger (201-point
/// belief grid, oracle tol 1e-8, margin 0.05), and the QMDP fixed point
/// upper-bounds the FIB fixed point componentwise within 1e-8.
#[test]
fn criterion_4_upper_bound_sanity() {
    let model = fixtures::tiger();
    let fib = fib_solve(
        &model,
        &SolveParams {
            tol: 1e-8,
            seed: 0,
            ..Default::default()
        },
    );
    assert!(fib.converged);
    let grid = exact_vi_oracle(&model, 200, 1e-8).unwrap();
    assert_eq!(grid.points.len(), 201);
    let mut worst_gap: f64 = f64::INFINITY;
    for (b, v) in grid.points.iter().zip(&grid.values) {
        let fib_value = (0..model.num_actions())
            .map(|a| {
                fib.alpha
                    .action_values(a)
                    .iter()
                    .zip(b)
                    .map(|(x, y)| x * y)
                    .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        worst_gap = worst_gap.min(fib_value - v);
        assert!(
            fib_value >= v - 0.05,
            "FIB value {fib_value} under oracle {v} at belief {b:?}"
        );
    }

    let tight = SolveParams {
        tol: 1e-10,
        seed: 0,
        ..Default::default()
    };
    let fib_tight = fib_solve(&model, &tight);
    let qmdp = qmdp_solve(&model, &tight);
    assert!(fib_tight.converged && qmdp.converged);
    for (q, f) in qmdp
        .alpha
        .as_slice()
        .iter()
        .zip(fib_tight.alpha.as_slice())
    {
        assert!(q >= &(f - 1e-8), "QMDP {q} under FIB {f}");
    }
    println!(
        "[acceptance] criterion 4 (upper-bound sanity): PASS, min FIB-minus-oracle gap {worst_gap:.4} >= -0.05, QMDP >= FIB"
    );
}

/// Criterion 5: the residual of the simulation-based run obeys the error
/// bound. On tiger with frozen batches, |J| in {4, 20}, 10 seeds each: the
/// smallest true residual over the final 20% of iterations is at most
/// (1+gamma)/(1-gamma) times the measured per-application error bound.
#[test]
fn criterion_5_simulation_residual_bound() {
    let model = fixtures::tiger();
    let gamma = model.discount();
    let factor = (1.0 + gamma) / (1.0 - gamma);
    let mut worst_ratio: f64 = 0.0;
    for j in [4usize, 20] {
        for seed in 0..10u64 {
            let sim = SimParams {
                sample_size: j,
                seed,
                resample: ResamplePolicy::Frozen,
            };
            let params = AaParams {
                solve: SolveParams {
                    tol: 1e-10,
                    max_iter: 4000,
                    seed,
                    record_iterates: true,
                },
                ..Default::default()
            };
            let run = aa_fib_solve_sim(&model, &params, &sim);
            let iterates = &run.iterates;
            assert!(iterates.len() >= 5, "run too short to take a 20% tail");
            let eps = estimate_eps(&model, iterates, &sim);
            let mut exact = FibOperator::new(&model);
            let tail = iterates.len() - (iterates.len() / 5).max(1);
            let min_residual = iterates[tail..]
                .iter()
                .map(|alpha| alpha.sup_distance(&exact.apply(alpha)))
                .fold(f64::INFINITY, f64::min);
            let bound = factor * eps;
            worst_ratio = worst_ratio.max(min_residual / bound);
            assert!(
                min_residual <= bound,
                "|J|={j} seed {seed}: min residual {min_residual:e} above bound {bound:e} (eps {eps:e})"
            );
        }
    }
    println!(
        "[acceptance] criterion 5 (simulation residual bound): PASS, worst residual/bound ratio {worst_ratio:.3} <= 1"
    );
}

/// Criterion 6: solution error shrinks with sample size. On grid-nav 8x8
/// across 20 seeds, the mean sup-norm percentage error of the fresh-batch
/// simulation solution is non-increasing over |J| in {2,4,8,20} up to one
/// inversion, and below 5% at |J| = 20.
#[test]
fn criterion_6_sample_size_trend() {
    let sample_sizes = [2usize, 4, 8, 20];
    let seeds = 20u64;
    let mut totals = [0.0f64; 4];
    for seed in 0..seeds {
        let model = generate_grid_nav(8, 8, 0.1, 0.1, seed).unwrap();
        let reference = fib_solve(
            &model,
            &SolveParams {
                tol: 1e-9,
                seed,
                ..Default::default()
            },
        );
        assert!(reference.converged);
        let scale = reference.alpha.sup_norm();
        for (i, &j) in sample_sizes.iter().enumerate() {
            let run = aa_fib_solve_sim(
                &model,
                &AaParams {
                    solve: SolveParams {
                        tol: 1e-6,
                        max_iter: 600,
                        seed,
                        ..Default::default()
                    },
                    ..Default::default()
                },
                &SimParams {
                    sample_size: j,
                    seed,
                    resample: ResamplePolicy::Fresh,
                },
            );
            totals[i] += 100.0 * run.alpha.sup_distance(&reference.alpha) / scale;
        }
    }
    let means: Vec<f64> = totals.iter().map(|t| t / seeds as f64).collect();
    let inversions = means
        .windows(2)
        .filter(|w| w[1] > w[0] + 1e-12)
        .count();
    assert!(
        inversions <= 1,
        "error means {means:?} increase more than once across sample sizes"
    );
    assert!(
        means[3] < 5.0,
        "error at |J|=20 is {:.2}%, expected below 5%",
        means[3]
    );
    println!(
        "[acceptance] criterion 6 (sample-size trend): PASS, mean error % over |J|=2,4,8,20: {means:.2?}"
    );
}

/// Criterion 7: with D = 0 the safeguard rejects every candidate and the
/// accelerated solver reproduces the plain iteration bit for bit, on 10
/// random small models.
#[test]
fn criterion_7_safeguard_fallback_equivalence() {
    for seed in 0..10u64 {
        let model = random_model(seed, 6, 4, 4);
        let solve = SolveParams {
            tol: 1e-7,
            max_iter: 3000,
            seed,
            record_iterates: true,
        };
        let fib = fib_solve(&model, &solve);
        let aa = aa_fib_solve(
            &model,
            &AaParams {
                d: 0.0,
                solve,
                ..Default::default()
            },
        );
        assert_eq!(fib.iterations, aa.iterations, "seed {seed}: lengths differ");
        assert_eq!(fib.iterates.len(), aa.iterates.len());
        for (k, (x, y)) in fib.iterates.iter().zip(&aa.iterates).enumerate() {
            assert!(
                x.bitwise_eq(y),
                "seed {seed}: iterate {k} differs bitwise"
            );
        }
        assert!(fib.alpha.bitwise_eq(&aa.alpha), "seed {seed}: final differs");
    }
    println!(
        "[acceptance] criterion 7 (safeguard fallback equivalence): PASS on 10 models, bitwise"
    );
}

/// Criterion 8: every weight vector recorded anywhere in the suite's runs
/// sums to 1 within 1e-12.
#[test]
fn criterion_8_weight_sum_invariant() {
    let mut checked = 0usize;
    let mut worst: f64 = 0.0;
    let mut inspect = |run: &aafib::fib::SolveResult, what: &str| {
        for record in &run.trace {
            if let Some(sum) = record.weight_sum {
                let err = (sum - 1.0).abs();
                worst = worst.max(err);
                assert!(
                    err <= 1e-12,
                    "{what}: weight sum {sum} off by {err:e} at iteration {}",
                    record.k
                );
                checked += 1;
            }
        }
    };

    let tiger = fixtures::tiger();
    let run = aa_fib_solve(
        &tiger,
        &aa_params(
            4,
            SolveParams {
                tol: 1e-8,
                seed: 0,
                ..Default::default()
            },
        ),
    );
    inspect(&run, "tiger m_max=4");

    let grid = generate_grid_nav(5, 5, 0.1, 0.1, 3).unwrap();
    for m in MEMORY_SIZES {
        let run = aa_fib_solve(
            &grid,
            &aa_params(
                m,
                SolveParams {
                    tol: 1e-7,
                    seed: m as u64,
                    ..Default::default()
                },
            ),
        );
        inspect(&run, "grid-nav 5x5");
    }

    for (policy, j) in [(ResamplePolicy::Frozen, 6), (ResamplePolicy::Fresh, 4)] {
        let run = aa_fib_solve_sim(
            &tiger,
            &AaParams {
                solve: SolveParams {
                    tol: 1e-6,
                    max_iter: 800,
                    seed: 2,
                    ..Default::default()
                },
                ..Default::default()
            },
            &SimParams {
                sample_size: j,
                seed: 2,
                resample: policy,
            },
        );
        inspect(&run, "tiger simulation");
    }

    for seed in 0..5u64 {
        let model = random_model(seed + 40, 6, 4, 4);
        let run = aa_fib_solve(
            &model,
            &aa_params(
                8,
                SolveParams {
                    tol: 1e-7,
                    max_iter: 3000,
                    seed,
                    ..Default::default()
                },
            ),
        );
        inspect(&run, "random model");
    }

    assert!(checked > 100, "only {checked} weight vectors inspected");
    println!(
        "[acceptance] criterion 8 (weight-sum invariant): PASS, {checked} weight vectors, worst |sum-1| = {worst:.3e}"
    );
}

fn model_sup_diff(a: &PomdpModel, b: &PomdpModel) -> f64 {
    assert_eq!(a.num_states(), b.num_states());
    assert_eq!(a.num_actions(), b.num_actions());
    assert_eq!(a.num_observations(), b.num_observations());
    let mut d: f64 = (a.discount() - b.discount()).abs();
    for act in 0..a.num_actions() {
        for s in 0..a.num_states() {
            for sp in 0..a.num_states() {
                d = d.max((a.transition_prob(s, act, sp) - b.transition_prob(s, act, sp)).abs());
            }
            for o in 0..a.num_observations() {
                d = d.max((a.observation_prob(act, s, o) - b.observation_prob(act, s, o)).abs());
            }
            d = d.max((a.reward(s, act) - b.reward(s, act)).abs());
        }
    }
    match (a.start_belief(), b.start_belief()) {
        (None, None) => {}
        (Some(x), Some(y)) => {
            for (p, q) in x.iter().zip(y) {
                d = d.max((p - q).abs());
            }
        }
        _ => panic!("start belief presence differs"),
    }
    d
}

/// Criterion 9: parse-serialize-parse is the identity within 1e-9 on tiger
/// and 50 random models, and 10 malformed files each yield a located
/// diagnostic and no model.
#[test]
fn criterion_9_parser_round_trip() {
    let tiger = parse_pomdp(fixtures::TIGER_SOURCE).unwrap();
    let reparsed = parse_pomdp(&serialize_pomdp(&tiger)).unwrap();
    let mut worst = model_sup_diff(&tiger, &reparsed);
    assert!(worst <= 1e-9);

    for seed in 0..50u64 {
        let model = random_model(seed, 6, 4, 5);
        let reparsed = parse_pomdp(&serialize_pomdp(&model)).unwrap();
        let d = model_sup_diff(&model, &reparsed);
        worst = worst.max(d);
        assert!(d <= 1e-9, "seed {seed}: round trip diverged by {d:e}");
    }

    let malformed: [(&str, &str); 10] = [
        ("missing discount", "values: reward\nstates: 2\nactions: 1\nobservations: 1\nT: 0 uniform\nO: 0 uniform\n"),
        ("unknown keyword", "discount: 0.9\nvalues: reward\nstates: 2\nactions: 1\nobservations: 1\nT: 0 uniform\nO: 0 uniform\nbogus: 1\n"),
        ("malformed number", "discount: 0.9\nvalues: reward\nstates: 2\nactions: 1\nobservations: 1\nT: 0 : 0 : 0 half\n"),
        ("bad row sum", "discount: 0.9\nvalues: reward\nstates: 2\nactions: 1\nobservations: 1\nT: 0 : 0 0.7 0.7\nT: 0 : 1 uniform\nO: 0 uniform\n"),
        ("undeclared identifier", "discount: 0.9\nvalues: reward\nstates: a b\nactions: go\nobservations: o1\nT: go uniform\nO: go uniform\nR: go : c : * : * 1\n"),
        ("index out of range", "discount: 0.9\nvalues: reward\nstates: 2\nactions: 1\nobservations: 1\nT: 0 : 4 : 0 1.0\n"),
        ("misplaced preamble", "discount: 0.9\nvalues: reward\nstates: 2\nactions: 1\nobservations: 1\nT: 0 uniform\nO: 0 uniform\nstates: 3\n"),
        ("discount out of range", "discount: 1.5\nvalues: reward\nstates: 2\nactions: 1\nobservations: 1\nT: 0 uniform\nO: 0 uniform\n"),
        ("negative probability", "discount: 0.9\nvalues: reward\nstates: 2\nactions: 1\nobservations: 1\nT: 0 : 0 1.5 -0.5\nT: 0 : 1 uniform\nO: 0 uniform\n"),
        ("truncated file", "discount: 0.9\nvalues: reward\nstates: 2\nactions: 1\nobservations: 1\nT: 0 : 0\n0.5\n"),
    ];
    for (what, text) in malformed {
        match parse_pomdp(text) {
            Ok(_) => panic!("malformed file ({what}) parsed successfully"),
            Err(err) => {
                let msg = err.to_string();
                let located = msg.contains("line ")
                    || matches!(err, ParseError::MissingPreamble { .. })
                    || matches!(err, ParseError::UnexpectedEof { .. })
                    || matches!(err, ParseError::MissingRow { .. });
                assert!(located, "diagnostic for ({what}) carries no location: {msg}");
            }
        }
    }
    println!(
        "[acceptance] criterion 9 (parser round trip): PASS, worst entry diff {worst:.3e} <= 1e-9, 10 malformed files diagnosed"
    );
}

/// End-to-end smoke: parse, solve, evaluate. Not a numbered criterion, but
/// pins the cross-module seams the criteria rely on.
#[test]
fn pipeline_smoke() {
    let model = parse_pomdp(fixtures::TIGER_SOURCE).unwrap();
    let run = aa_fib_solve(
        &model,
        &aa_params(
            4,
            SolveParams {
                tol: 1e-8,
                seed: 0,
                ..Default::default()
            },
        ),
    );
    assert!(run.converged);
    let stats = policy::evaluate(
        &model,
        &run.alpha,
        &policy::EvalConfig {
            episodes: 200,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(stats.mean.is_finite() && stats.std > 0.0);
    let uniform = Belief::uniform(2);
    let action = policy::greedy_action(&run.alpha, &uniform);
    assert_eq!(action, 0, "uniform tiger belief should listen first");
}
