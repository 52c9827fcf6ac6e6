//! Discrete-time Izhikevich network dynamics.
//!
//! Each neuron follows
//!
//! ```text
//! v' = v + dt (0.04 v^2 + 5 v + 140 - u + I)
//! u' = u + dt a (b v - u)
//! if v >= 30: v <- c, u <- u + d
//! ```
//!
//! with `I_i = sum_j w_ij r_j`, where `r_j` is the *recorded* sample of neuron
//! `j` at the same step (a spiking neuron is recorded as exactly 30 mV).
//!
//! Within a step the threshold test and reset run first on the current
//! state, the (possibly clamped) sample is recorded, input currents are formed
//! from the recorded row, and then every neuron takes one Euler step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spike threshold and clamped spike sample, in mV.
pub const SPIKE_THRESHOLD: f64 = 30.0;

/// Default integration step in ms.
pub const DEFAULT_DT: f64 = 0.5;

/// Per-neuron cell parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronParameters {
    /// Recovery time scale.
    pub a: f64,
    /// Coupling of the recovery variable to the membrane potential.
    pub b: f64,
    /// After-spike reset potential (mV).
    pub c: f64,
    /// After-spike increment of the recovery variable.
    pub d: f64,
    /// Recovery variable at t = 0.
    pub u0: f64,
}

impl NeuronParameters {
    /// Intrinsically bursting cell used throughout the reconstruction experiments.
    pub const INTRINSICALLY_BURSTING: Self = Self {
        a: 0.02,
        b: 0.2,
        c: -55.0,
        d: 4.0,
        u0: -11.0,
    };

    pub const fn new(a: f64, b: f64, c: f64, d: f64, u0: f64) -> Self {
        Self { a, b, c, d, u0 }
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.a, self.b, self.c, self.d, self.u0]
    }

    pub fn from_array(x: [f64; 5]) -> Self {
        Self::new(x[0], x[1], x[2], x[3], x[4])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronState {
    /// Membrane potential (mV).
    pub v: f64,
    /// Recovery variable.
    pub u: f64,
}

impl NeuronState {
    pub fn new(v: f64, u: f64) -> Self {
        Self { v, u }
    }

    /// Initial state of a neuron: `v = c`, `u = u0`.
    pub fn initial(p: &NeuronParameters) -> Self {
        Self { v: p.c, u: p.u0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationConfig {
    /// Integration step (ms).
    pub dt: f64,
    /// Number of recorded samples.
    pub steps: usize,
    /// When false the diagonal of the weight matrix is treated as zero.
    pub allow_self_connections: bool,
}

impl SimulationConfig {
    pub fn new(dt: f64, steps: usize) -> Self {
        Self {
            dt,
            steps,
            allow_self_connections: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if self.steps < 2 {
            return Err(Error::InvalidConfig(format!(
                "at least 2 steps required, got {}",
                self.steps
            )));
        }
        Ok(())
    }
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self::new(DEFAULT_DT, 1000)
    }
}

/// Dense `n x n` synaptic weights, row-major. `get(i, j)` is the weight from
/// presynaptic neuron `j` into postsynaptic neuron `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    n: usize,
    w: Vec<f64>,
}

impl WeightMatrix {
    pub fn new(n: usize, w: Vec<f64>) -> Result<Self> {
        if w.len() != n * n {
            return Err(Error::Dimension {
                what: "weight matrix entries",
                expected: n * n,
                found: w.len(),
            });
        }
        if let Some(x) = w.iter().find(|x| !x.is_finite()) {
            return Err(Error::Format(format!("non-finite weight {x}")));
        }
        Ok(Self { n, w })
    }

    pub fn zeros(n: usize) -> Self {
        Self { n, w: vec![0.0; n * n] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut w = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::Dimension {
                    what: "weight matrix row",
                    expected: n,
                    found: row.len(),
                });
            }
            w.extend_from_slice(row);
        }
        Self::new(n, w)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.w[i * self.n + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.w[i * self.n..(i + 1) * self.n]
    }

    pub fn set_row(&mut self, i: usize, row: &[f64]) {
        self.w[i * self.n..(i + 1) * self.n].copy_from_slice(row);
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.w.chunks(self.n.max(1)).map(<[f64]>::to_vec).collect()
    }

    pub fn zero_diagonal(&mut self) {
        for i in 0..self.n {
            self.set(i, i, 0.0);
        }
    }

    /// Largest absolute entry-wise difference. Panics on size mismatch.
    pub fn max_abs_diff(&self, other: &WeightMatrix) -> f64 {
        assert_eq!(self.n, other.n, "weight matrices of different size");
        self.w
            .iter()
            .zip(&other.w)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    /// Relabels neurons: entry `(i, j)` of the result is `(perm[i], perm[j])` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                out.set(i, j, self.get(perm[i], perm[j]));
            }
        }
        out
    }
}

/// Recorded membrane samples, `steps x n` row-major, plus spike flags.
///
/// A sample is a spike iff it equals [`SPIKE_THRESHOLD`] exactly; no sample
/// exceeds it.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceMatrix {
    n: usize,
    steps: usize,
    dt: f64,
    samples: Vec<f64>,
    spikes: Vec<bool>,
}

impl TraceMatrix {
    /// Builds a trace from raw samples and derives the spike flags.
    pub fn from_samples(n: usize, dt: f64, samples: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Format("trace has no neurons".into()));
        }
        if !samples.len().is_multiple_of(n) {
            return Err(Error::Dimension {
                what: "trace samples (multiple of neuron count)",
                expected: n * (samples.len() / n + 1),
                found: samples.len(),
            });
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {dt}")));
        }
        for (k, &x) in samples.iter().enumerate() {
            if !x.is_finite() || x > SPIKE_THRESHOLD {
                return Err(Error::Format(format!(
                    "sample {x} at step {}, neuron {} is not a valid membrane potential",
                    k / n,
                    k % n
                )));
            }
        }
        let spikes = samples.iter().map(|&x| x == SPIKE_THRESHOLD).collect();
        Ok(Self {
            n,
            steps: samples.len() / n,
            dt,
            samples,
            spikes,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn sample(&self, t: usize, j: usize) -> f64 {
        self.samples[t * self.n + j]
    }

    pub fn is_spike(&self, t: usize, j: usize) -> bool {
        self.spikes[t * self.n + j]
    }

    /// All neurons' samples at step `t`.
    pub fn row(&self, t: usize) -> &[f64] {
        &self.samples[t * self.n..(t + 1) * self.n]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.steps).map(|t| self.sample(t, j)).collect()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn spike_count(&self, j: usize) -> usize {
        (0..self.steps).filter(|&t| self.is_spike(t, j)).count()
    }

    pub fn spike_counts(&self) -> Vec<usize> {
        (0..self.n).map(|j| self.spike_count(j)).collect()
    }

    /// Sub-trace of `len` consecutive steps starting at `start`.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.steps {
            return Err(Error::Dimension {
                what: "trace window end",
                expected: self.steps,
                found: start + len,
            });
        }
        let samples = self.samples[start * self.n..(start + len) * self.n].to_vec();
        Self::from_samples(self.n, self.dt, samples)
    }

    /// Reorders neuron columns: column `k` of the result is column `perm[k]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut samples = Vec::with_capacity(self.samples.len());
        for t in 0..self.steps {
            samples.extend(perm.iter().map(|&j| self.sample(t, j)));
        }
        let spikes = samples.iter().map(|&x| x == SPIKE_THRESHOLD).collect();
        Self {
            n: self.n,
            steps: self.steps,
            dt: self.dt,
            samples,
            spikes,
        }
    }
}

/// Simulator state at the start of every step, before the threshold test.
/// Both series are `steps x n` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct InternalStates {
    pub n: usize,
    pub v: Vec<f64>,
    pub u: Vec<f64>,
}

impl InternalStates {
    pub fn v(&self, t: usize, i: usize) -> f64 {
        self.v[t * self.n + i]
    }

    pub fn u(&self, t: usize, i: usize) -> f64 {
        self.u[t * self.n + i]
    }
}

/// Recovery-variable series reconstructed for one neuron from its trace.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredTrace {
    /// `u` at the start of each step, before any reset increment. Length `steps`.
    pub u: Vec<f64>,
    /// Whether transition `t -> t+1` may enter the least-squares system.
    /// Length `steps - 1`.
    pub usable: Vec<bool>,
    /// Candidate `c`, the potential a spiking neuron continues from.
    pub reset_potential: f64,
    /// Candidate `d`, added to `u` at each spike.
    pub reset_increment: f64,
}

impl RecoveredTrace {
    pub fn usable_count(&self) -> usize {
        self.usable.iter().filter(|&&x| x).count()
    }

    /// Post-reset `(v, u)` at step `t` of a spiking neuron.
    pub fn reset_state(&self, t: usize) -> NeuronState {
        NeuronState::new(self.reset_potential, self.u[t] + self.reset_increment)
    }
}

#[inline]
fn membrane_derivative(v: f64, u: f64, current: f64) -> f64 {
    0.04 * v * v + 5.0 * v + 140.0 - u + current
}

#[inline]
fn recovery_update(v: f64, u: f64, p: &NeuronParameters, dt: f64) -> f64 {
    u + dt * (p.a * (p.b * v - u))
}

/// Quadratic part of the Euler membrane update without the input current:
/// `dt (0.04 v^2 + 5 v + 140 - u)`.
#[inline]
pub fn intrinsic_drift(v: f64, u: f64, dt: f64) -> f64 {
    dt * membrane_derivative(v, u, 0.0)
}

/// One Euler step of a single neuron. No threshold logic.
pub fn euler_step(state: NeuronState, p: &NeuronParameters, current: f64, dt: f64) -> Result<NeuronState> {
    let v = state.v + dt * membrane_derivative(state.v, state.u, current);
    let u = recovery_update(state.v, state.u, p, dt);
    if v.is_finite() && u.is_finite() {
        Ok(NeuronState { v, u })
    } else {
        Err(Error::NumericalOverflow {
            step: 0,
            neuron: 0,
            v: state.v,
            u: state.u,
        })
    }
}

/// After-spike reset: when `v >= 30`, `v <- c` and `u <- u + d`.
pub fn apply_reset(state: NeuronState, p: &NeuronParameters) -> (NeuronState, bool) {
    if state.v >= SPIKE_THRESHOLD {
        (NeuronState::new(p.c, state.u + p.d), true)
    } else {
        (state, false)
    }
}

/// Synaptic input `sum_j w_ij r_j` for one postsynaptic row.
pub fn input_current(weights_row: &[f64], samples: &[f64]) -> Result<f64> {
    if weights_row.len() != samples.len() {
        return Err(Error::Dimension {
            what: "input current operands",
            expected: weights_row.len(),
            found: samples.len(),
        });
    }
    Ok(weights_row.iter().zip(samples).map(|(w, r)| w * r).sum())
}

/// Simulates the network and returns the recorded trace.
pub fn simulate(params: &[NeuronParameters], weights: &WeightMatrix, cfg: &SimulationConfig) -> Result<TraceMatrix> {
    simulate_with_states(params, weights, cfg).map(|(trace, _)| trace)
}

/// Like [`simulate`], also returning the internal `(v, u)` state at the start
/// of every step.
pub fn simulate_with_states(
    params: &[NeuronParameters],
    weights: &WeightMatrix,
    cfg: &SimulationConfig,
) -> Result<(TraceMatrix, InternalStates)> {
    cfg.validate()?;
    let n = params.len();
    if weights.n() != n {
        return Err(Error::Dimension {
            what: "weight matrix size",
            expected: n,
            found: weights.n(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidConfig("network has no neurons".into()));
    }
    let mut effective = weights.clone();
    if !cfg.allow_self_connections {
        effective.zero_diagonal();
    }

    let steps = cfg.steps;
    let mut states: Vec<NeuronState> = params.iter().map(NeuronState::initial).collect();
    let mut samples = Vec::with_capacity(steps * n);
    let mut internal = InternalStates {
        n,
        v: Vec::with_capacity(steps * n),
        u: Vec::with_capacity(steps * n),
    };

    for t in 0..steps {
        let row_start = samples.len();
        for (state, p) in states.iter_mut().zip(params) {
            internal.v.push(state.v);
            internal.u.push(state.u);
            let (reset, fired) = apply_reset(*state, p);
            samples.push(if fired { SPIKE_THRESHOLD } else { state.v });
            *state = reset;
        }
        if t + 1 == steps {
            break;
        }
        let recorded = &samples[row_start..];
        for (i, (state, p)) in states.iter_mut().zip(params).enumerate() {
            let current = input_current(effective.row(i), recorded)?;
            *state = euler_step(*state, p, current, cfg.dt).map_err(|_| Error::NumericalOverflow {
                step: t,
                neuron: i,
                v: state.v,
                u: state.u,
            })?;
        }
    }

    let trace = TraceMatrix::from_samples(n, cfg.dt, samples)?;
    Ok((trace, internal))
}

/// Reconstructs neuron `i`'s recovery variable from its recorded trace under
/// candidate parameters `p`, mirroring the simulator's step order.
///
/// Transitions touching one of the neuron's own spike samples are marked
/// unusable for least squares.
pub fn recover_u_trace(trace: &TraceMatrix, i: usize, p: &NeuronParameters) -> RecoveredTrace {
    let steps = trace.steps();
    let dt = trace.dt();
    let mut u = Vec::with_capacity(steps);
    let mut current = p.u0;
    u.push(current);
    for t in 0..steps.saturating_sub(1) {
        let (v_eff, u_eff) = if trace.is_spike(t, i) {
            (p.c, current + p.d)
        } else {
            (trace.sample(t, i), current)
        };
        current = recovery_update(v_eff, u_eff, p, dt);
        u.push(current);
    }
    let usable = (0..steps.saturating_sub(1))
        .map(|t| !trace.is_spike(t, i) && !trace.is_spike(t + 1, i))
        .collect();
    RecoveredTrace {
        u,
        usable,
        reset_potential: p.c,
        reset_increment: p.d,
    }
}
