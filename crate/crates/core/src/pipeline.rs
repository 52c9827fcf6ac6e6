//! Full-network reconstruction.
//!
//! For each neuron independently, the GA proposes `(a, b, c, d, u0)`; a
//! candidate is scored by reconstructing the recovery variable from the
//! neuron's own trace, fitting its incoming weights by least squares and
//! taking the residual mean squared error. Candidates whose system cannot be
//! solved get [`FITNESS_SENTINEL`] and rank last.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ga::{decode, evolve, EvolutionHistory, GaConfig, ParameterRanges, GENE_COUNT};
use crate::model::{recover_u_trace, simulate, NeuronParameters, SimulationConfig, TraceMatrix, WeightMatrix};
use crate::solver::{assemble_system_with, solve_normal_equations, AssembleOptions};

/// Fitness assigned to candidates whose least-squares system is singular or
/// underdetermined.
pub const FITNESS_SENTINEL: f64 = 1e300;

/// Default number of leading steps discarded when `u0` is fixed.
pub const DEFAULT_WARMUP_STEPS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionConfig {
    pub ga: GaConfig,
    /// Pin `u0 = 0`, drop the first `warmup_steps` transitions and search
    /// only `(a, b, c, d)`.
    pub fix_u0: bool,
    pub warmup_steps: usize,
    /// Fit the transitions leaving each of the neuron's own spikes from the
    /// post-reset state. Without them `c` and `d` enter the fit only through
    /// one combination and `c` cannot be recovered.
    pub reset_rows: bool,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        Self {
            ga: GaConfig::default(),
            fix_u0: false,
            warmup_steps: DEFAULT_WARMUP_STEPS,
            reset_rows: true,
        }
    }
}

impl ReconstructionConfig {
    pub fn new(ga: GaConfig) -> Self {
        Self { ga, ..Self::default() }
    }

    /// Row selection used by the fitness function.
    pub fn assemble_options(&self) -> AssembleOptions {
        AssembleOptions {
            first_transition: if self.fix_u0 { self.warmup_steps } else { 0 },
            reset_rows: self.reset_rows,
        }
    }

    fn search_ranges(&self) -> ParameterRanges {
        let mut ranges = self.ga.ranges;
        if self.fix_u0 {
            ranges.u0 = (0.0, 0.0);
        }
        ranges
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub params: Vec<NeuronParameters>,
    pub weights: WeightMatrix,
    pub dt: f64,
}

impl NetworkModel {
    pub fn new(params: Vec<NeuronParameters>, weights: WeightMatrix, dt: f64) -> Result<Self> {
        if weights.n() != params.len() {
            return Err(Error::Dimension {
                what: "weight matrix size",
                expected: params.len(),
                found: weights.n(),
            });
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {dt}")));
        }
        Ok(Self { params, weights, dt })
    }

    pub fn n(&self) -> usize {
        self.params.len()
    }

    pub fn simulate(&self, steps: usize) -> Result<TraceMatrix> {
        simulate(&self.params, &self.weights, &SimulationConfig::new(self.dt, steps))
    }

    /// Checks every neuron against `ranges`.
    pub fn check_ranges(&self, ranges: &ParameterRanges) -> Result<()> {
        self.params.iter().try_for_each(|p| ranges.check(p))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitnessEval {
    pub mse: f64,
    pub weights: Vec<f64>,
    pub usable_transitions: usize,
}

/// Scores candidate parameters for neuron `i` using every usable transition.
pub fn fitness(candidate: &NeuronParameters, trace: &TraceMatrix, i: usize) -> Result<FitnessEval> {
    fitness_with(candidate, trace, i, &AssembleOptions::default())
}

/// Like [`fitness`] with explicit row selection.
pub fn fitness_with(candidate: &NeuronParameters, trace: &TraceMatrix, i: usize, opts: &AssembleOptions) -> Result<FitnessEval> {
    let rec = recover_u_trace(trace, i, candidate);
    let sys = assemble_system_with(trace, &rec, i, opts)?;
    let report = solve_normal_equations(&sys)?;
    Ok(FitnessEval {
        mse: report.mse,
        weights: report.w,
        usable_transitions: sys.rows(),
    })
}

/// Mean squared residual, or [`FITNESS_SENTINEL`] when the candidate cannot
/// be scored.
pub fn fitness_score(candidate: &NeuronParameters, trace: &TraceMatrix, i: usize, opts: &AssembleOptions) -> f64 {
    match fitness_with(candidate, trace, i, opts) {
        Ok(eval) if eval.mse.is_finite() => eval.mse,
        _ => FITNESS_SENTINEL,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuronReconstruction {
    pub neuron: usize,
    pub params: NeuronParameters,
    pub weights: Vec<f64>,
    pub mse: f64,
    pub history: EvolutionHistory,
    pub usable_transitions: usize,
    /// Candidate evaluations that fell back to the sentinel.
    pub failed_evaluations: usize,
    /// Set when even the best candidate could not be fitted.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionReport {
    pub neurons: Vec<NeuronReconstruction>,
    pub elapsed: Duration,
}

impl ReconstructionReport {
    pub fn failed_neurons(&self) -> Vec<usize> {
        self.neurons
            .iter()
            .filter(|r| r.failure.is_some())
            .map(|r| r.neuron)
            .collect()
    }
}

/// Seed of the GA run for neuron `i`.
pub fn neuron_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

pub fn reconstruct_neuron(trace: &TraceMatrix, i: usize, cfg: &ReconstructionConfig) -> Result<NeuronReconstruction> {
    if i >= trace.n() {
        return Err(Error::Dimension {
            what: "neuron index",
            expected: trace.n(),
            found: i,
        });
    }
    let ga = GaConfig {
        seed: neuron_seed(cfg.ga.seed, i),
        ranges: cfg.search_ranges(),
        ..cfg.ga.clone()
    };
    let opts = cfg.assemble_options();
    let failed = AtomicUsize::new(0);
    let evolution = evolve(&ga, |genome| {
        let score = fitness_score(&decode(genome, &ga.ranges), trace, i, &opts);
        if score >= FITNESS_SENTINEL {
            failed.fetch_add(1, Ordering::Relaxed);
        }
        Ok(score)
    })?;

    let params = decode(&evolution.best, &ga.ranges);
    let (weights, mse, usable_transitions, failure) = match fitness_with(&params, trace, i, &opts) {
        Ok(eval) => (eval.weights, eval.mse, eval.usable_transitions, None),
        Err(e) => (vec![0.0; trace.n()], FITNESS_SENTINEL, 0, Some(e.to_string())),
    };
    Ok(NeuronReconstruction {
        neuron: i,
        params,
        weights,
        mse,
        history: evolution.history,
        usable_transitions,
        failed_evaluations: failed.into_inner(),
        failure,
    })
}

/// Reconstructs every neuron. Neurons that cannot be fitted keep a zero
/// weight row and are listed in the report.
pub fn reconstruct_network(trace: &TraceMatrix, cfg: &ReconstructionConfig) -> Result<(NetworkModel, ReconstructionReport)> {
    cfg.ga.validate()?;
    let start = Instant::now();
    let neurons = (0..trace.n())
        .into_par_iter()
        .map(|i| reconstruct_neuron(trace, i, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut weights = WeightMatrix::zeros(trace.n());
    for r in &neurons {
        weights.set_row(r.neuron, &r.weights);
    }
    let params = neurons.iter().map(|r| r.params).collect();
    let model = NetworkModel::new(params, weights, trace.dt())?;
    Ok((
        model,
        ReconstructionReport {
            neurons,
            elapsed: start.elapsed(),
        },
    ))
}

/// Weight matrix from least squares alone, given every neuron's parameters.
pub fn solve_weights_known_params(trace: &TraceMatrix, params: &[NeuronParameters]) -> Result<WeightMatrix> {
    if params.len() != trace.n() {
        return Err(Error::Dimension {
            what: "parameter list",
            expected: trace.n(),
            found: params.len(),
        });
    }
    let rows = (0..trace.n())
        .into_par_iter()
        .map(|i| fitness(&params[i], trace, i).map(|e| e.weights))
        .collect::<Result<Vec<_>>>()?;
    WeightMatrix::from_rows(&rows)
}

/// `k` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    match k {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..k)
            .map(|s| if s + 1 == k { hi } else { lo + (hi - lo) * s as f64 / (k - 1) as f64 })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub a: f64,
    pub b: f64,
    pub mse: f64,
}

/// Fitness of neuron `i` over an `(a, b)` lattice, holding `c`, `d` and
/// `u0` at `fixed`. Points are ordered with `b` varying fastest.
pub fn error_surface(
    trace: &TraceMatrix,
    i: usize,
    a_values: &[f64],
    b_values: &[f64],
    fixed: &NeuronParameters,
    opts: &AssembleOptions,
) -> Vec<SurfacePoint> {
    let lattice: Vec<(f64, f64)> = a_values
        .iter()
        .flat_map(|&a| b_values.iter().map(move |&b| (a, b)))
        .collect();
    lattice
        .into_par_iter()
        .map(|(a, b)| {
            let candidate = NeuronParameters { a, b, ..*fixed };
            SurfacePoint {
                a,
                b,
                mse: fitness_score(&candidate, trace, i, opts),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonMetrics {
    pub max_abs_weight_error: f64,
    /// Largest absolute error over neurons, per parameter `(a, b, c, d, u0)`.
    pub param_errors: [f64; GENE_COUNT],
    /// Mean squared difference of the two resimulated traces; `None` for a
    /// zero horizon.
    pub trajectory_mse: Option<f64>,
}

/// Compares a reconstruction with ground truth. Both models are simulated
/// from their own initial conditions `v = c`, `u = u0`.
pub fn evaluate_model(truth: &NetworkModel, recon: &NetworkModel, horizon: usize) -> Result<ComparisonMetrics> {
    if truth.n() != recon.n() {
        return Err(Error::Dimension {
            what: "reconstructed neuron count",
            expected: truth.n(),
            found: recon.n(),
        });
    }
    if truth.dt != recon.dt {
        return Err(Error::InvalidConfig(format!(
            "dt mismatch: truth {} vs reconstruction {}",
            truth.dt, recon.dt
        )));
    }
    let max_abs_weight_error = truth.weights.max_abs_diff(&recon.weights);
    let mut param_errors = [0.0; GENE_COUNT];
    for (p, q) in truth.params.iter().zip(&recon.params) {
        for (k, (x, y)) in p.to_array().iter().zip(q.to_array()).enumerate() {
            param_errors[k] = f64::max(param_errors[k], (x - y).abs());
        }
    }
    let trajectory_mse = if horizon == 0 {
        None
    } else {
        let steps = horizon.max(2);
        let a = truth.simulate(steps)?;
        let b = recon.simulate(steps)?;
        let count = horizon * truth.n();
        let sum: f64 = a.samples()[..count]
            .iter()
            .zip(&b.samples()[..count])
            .map(|(x, y)| (x - y).powi(2))
            .sum();
        Some(sum / count as f64)
    };
    Ok(ComparisonMetrics {
        max_abs_weight_error,
        param_errors,
        trajectory_mse,
    })
}
