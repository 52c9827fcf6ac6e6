mod common;

use common::{ib_network, IB};
use izhrecon::model::{recover_u_trace, simulate};
use izhrecon::pipeline::solve_weights_known_params;
use izhrecon::solver::{assemble_system, gaussian_solve, solve_normal_equations, LinearSystem};
use izhrecon::{Error, NeuronParameters, SimulationConfig, TraceMatrix, WeightMatrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn det(m: &[f64], n: usize) -> f64 {
    if n == 1 {
        return m[0];
    }
    (0..n)
        .map(|col| {
            let minor: Vec<f64> = (1..n)
                .flat_map(|r| (0..n).filter(move |&c| c != col).map(move |c| m[r * n + c]))
                .collect();
            let sign = if col % 2 == 0 { 1.0 } else { -1.0 };
            sign * m[col] * det(&minor, n - 1)
        })
        .sum()
}

fn cramer(m: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    let d = det(m, n);
    (0..n)
        .map(|k| {
            let mut mk = m.to_vec();
            for r in 0..n {
                mk[r * n + k] = rhs[r];
            }
            det(&mk, n) / d
        })
        .collect()
}

fn random_system(rng: &mut ChaCha8Rng) -> LinearSystem {
    let n = rng.gen_range(1..=4);
    let rows = n + rng.gen_range(0..8);
    let a = (0..rows * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b = (0..rows).map(|_| rng.gen_range(-1.0..1.0)).collect();
    LinearSystem::new(n, a, b).unwrap()
}

fn gradient_inf_norm(sys: &LinearSystem, w: &[f64]) -> (f64, f64) {
    let r = sys.residuals(w);
    let n = sys.n();
    let mut grad = vec![0.0_f64; n];
    let mut atb = vec![0.0_f64; n];
    for (t, (rt, bt)) in r.iter().zip(sys.target()).enumerate() {
        for (j, x) in sys.row(t).iter().enumerate() {
            grad[j] += x * rt;
            atb[j] += x * bt;
        }
    }
    let inf = |v: &[f64]| v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    (inf(&grad), inf(&atb))
}

#[test]
fn matches_cramer_oracle_on_random_systems() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    while checked < 100 {
        let sys = random_system(&mut rng);
        let (ata, atb) = sys.normal_equations();
        // Skip nearly rank-deficient draws; the oracle itself loses digits there.
        let scale = ata.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if det(&ata, sys.n()).abs() < 1e-3 * scale.powi(sys.n() as i32) {
            continue;
        }
        let rep = solve_normal_equations(&sys).unwrap();
        let oracle = cramer(&ata, &atb);
        for (x, y) in rep.w.iter().zip(&oracle) {
            assert!((x - y).abs() <= 1e-9 * y.abs().max(1.0), "{x} vs {y}");
        }
        let (g, atb_norm) = gradient_inf_norm(&sys, &rep.w);
        assert!(g <= 1e-8 * atb_norm.max(1.0));
        checked += 1;
    }
}

#[test]
fn known_params_recover_weights() {
    for seed in [1, 2, 3] {
        let net = ib_network(seed);
        let w = solve_weights_known_params(&net.trace, &[IB; 10]).unwrap();
        assert!(w.max_abs_diff(&net.weights) < 1e-8, "seed {seed}");
    }
}

#[test]
fn residuals_vanish_at_truth() {
    let net = ib_network(4);
    for i in 0..10 {
        let rec = recover_u_trace(&net.trace, i, &IB);
        let sys = assemble_system(&net.trace, &rec, i).unwrap();
        let rep = solve_normal_equations(&sys).unwrap();
        assert!(rep.mse < 1e-20, "neuron {i}: {}", rep.mse);
        assert!(rep.condition_hint.is_finite());
    }
}

#[test]
fn silent_input_row_is_recovered_as_zero() {
    let net = ib_network(5);
    let mut weights = net.weights.clone();
    weights.set_row(3, &[0.0; 10]);
    let trace = simulate(&[IB; 10], &weights, &SimulationConfig::new(0.5, 1000)).unwrap();
    let w = solve_weights_known_params(&trace, &[IB; 10]).unwrap();
    assert!(w.row(3).iter().all(|x| x.abs() < 1e-8));
    assert!(w.max_abs_diff(&weights) < 1e-8);
}

#[test]
fn permutation_equivariance() {
    let net = ib_network(6);
    let perm = [3, 7, 0, 9, 1, 5, 2, 8, 6, 4];
    let w = solve_weights_known_params(&net.trace, &[IB; 10]).unwrap();
    let wp = solve_weights_known_params(&net.trace.permuted(&perm), &[IB; 10]).unwrap();
    assert!(wp.max_abs_diff(&w.permuted(&perm)) < 1e-10);
}

fn spike_free_prefix(trace: &TraceMatrix) -> usize {
    (0..trace.steps())
        .find(|&t| trace.row(t).contains(&30.0))
        .unwrap_or(trace.steps())
}

fn small_network() -> ([NeuronParameters; 3], WeightMatrix) {
    let params = [
        IB,
        NeuronParameters { a: 0.03, b: 0.25, ..IB },
        NeuronParameters { c: -60.0, u0: -14.0, ..IB },
    ];
    let weights = WeightMatrix::from_rows(&[
        vec![0.0, -0.2, 0.1],
        vec![0.3, 0.0, -0.15],
        vec![-0.05, 0.25, 0.0],
    ])
    .unwrap();
    (params, weights)
}

#[test]
fn minimal_window_is_square_and_recovers_weights() {
    let (params, weights) = small_network();
    let trace = simulate(&params, &weights, &SimulationConfig::new(0.5, 4)).unwrap();
    assert_eq!(spike_free_prefix(&trace), 4);
    for (i, p) in params.iter().enumerate() {
        let rec = recover_u_trace(&trace, i, p);
        assert_eq!(assemble_system(&trace, &rec, i).unwrap().rows(), 3);
    }
    let w = solve_weights_known_params(&trace, &params).unwrap();
    assert!(w.max_abs_diff(&weights) < 1e-6, "{:?}", w.to_rows());

    let short = trace.window(0, 3).unwrap();
    assert!(matches!(
        solve_weights_known_params(&short, &params),
        Err(Error::InsufficientData { rows: 2, required: 3 })
    ));
}

// Eleven samples of ten smooth, similar potentials are close to collinear;
// the row count suffices but the normal matrix is numerically singular.
#[test]
fn ten_neuron_minimal_window_is_rank_deficient_in_practice() {
    let net = ib_network(1);
    let n = net.trace.n();
    let start = (0..net.trace.steps() - n)
        .find(|&t| spike_free_prefix(&net.trace.window(t, n + 1).unwrap()) == n + 1)
        .expect("spike-free window");
    let square = net.trace.window(start, n + 1).unwrap();
    let rec = recover_u_trace(&square, 0, &IB);
    let sys = assemble_system(&square, &rec, 0).unwrap();
    assert_eq!(sys.rows(), n);
    assert!(matches!(solve_normal_equations(&sys), Err(Error::Singular { .. })));

    let short = net.trace.window(start, n).unwrap();
    let rec = recover_u_trace(&short, 0, &IB);
    assert!(matches!(
        assemble_system(&short, &rec, 0),
        Err(Error::InsufficientData { rows, required }) if rows == n - 1 && required == n
    ));
}

#[test]
fn duplicated_trace_is_singular() {
    let net = ib_network(2);
    let n = net.trace.n();
    let mut samples = Vec::new();
    for t in 0..net.trace.steps() {
        samples.extend_from_slice(net.trace.row(t));
        samples.push(net.trace.sample(t, 0));
    }
    let dup = TraceMatrix::from_samples(n + 1, 0.5, samples).unwrap();
    let rec = recover_u_trace(&dup, 1, &IB);
    let sys = assemble_system(&dup, &rec, 1).unwrap();
    assert!(matches!(solve_normal_equations(&sys), Err(Error::Singular { .. })));
}

proptest! {
    #[test]
    fn residual_is_orthogonal_to_columns(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = random_system(&mut rng);
        if let Ok(rep) = solve_normal_equations(&sys) {
            let (g, atb) = gradient_inf_norm(&sys, &rep.w);
            prop_assert!(g <= 1e-8 * atb.max(1.0) * rep.condition_hint.max(1.0));
        }
    }

    #[test]
    fn square_solve_reproduces_rhs(seed in any::<u64>(), n in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for k in 0..n {
            m[k * n + k] += n as f64;
        }
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let rhs: Vec<f64> = (0..n).map(|r| (0..n).map(|k| m[r * n + k] * x[k]).sum()).collect();
        let (y, _) = gaussian_solve(m, rhs).unwrap();
        for (a, b) in x.iter().zip(&y) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
