//! Seeded random network generation.
//!
//! Weights are drawn uniformly from a range; a draw is accepted only if the
//! simulated network stays finite and every neuron fires at least
//! `min_spikes` times, since the reset parameters `c` and `d` cannot be
//! identified from a silent neuron. Attempt `k` draws from ChaCha8 stream `k`
//! of the user seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{simulate, NeuronParameters, SimulationConfig, TraceMatrix, WeightMatrix};

/// Default weight range. With resting potentials near -60 mV a mildly
/// negative row sum is what drives the cells past rheobase.
pub const DEFAULT_WEIGHT_RANGE: (f64, f64) = (-0.02, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub weight_range: (f64, f64),
    pub min_spikes: usize,
    pub max_attempts: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            weight_range: DEFAULT_WEIGHT_RANGE,
            min_spikes: 2,
            max_attempts: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedNetwork {
    pub weights: WeightMatrix,
    pub trace: TraceMatrix,
    /// Zero-based index of the accepted attempt.
    pub attempt: usize,
}

/// Uniform random weights; the diagonal is zeroed when self-connections are off.
pub fn random_weights<R: Rng>(n: usize, range: (f64, f64), allow_self_connections: bool, rng: &mut R) -> WeightMatrix {
    let (lo, hi) = range;
    let mut w = WeightMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let x = if hi > lo { rng.gen_range(lo..hi) } else { lo };
            w.set(i, j, x);
        }
    }
    if !allow_self_connections {
        w.zero_diagonal();
    }
    w
}

pub fn generate_network(
    params: &[NeuronParameters],
    sim: &SimulationConfig,
    gen: &GeneratorConfig,
    seed: u64,
) -> Result<GeneratedNetwork> {
    sim.validate()?;
    let (lo, hi) = gen.weight_range;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::InvalidConfig(format!("invalid weight range [{lo}, {hi}]")));
    }
    for attempt in 0..gen.max_attempts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(attempt as u64);
        let weights = random_weights(params.len(), gen.weight_range, sim.allow_self_connections, &mut rng);
        let trace = match simulate(params, &weights, sim) {
            Ok(trace) => trace,
            Err(Error::NumericalOverflow { .. }) => continue,
            Err(e) => return Err(e),
        };
        if trace.spike_counts().iter().all(|&c| c >= gen.min_spikes) {
            return Ok(GeneratedNetwork {
                weights,
                trace,
                attempt,
            });
        }
    }
    Err(Error::GenerationExhausted {
        attempts: gen.max_attempts,
        min_spikes: gen.min_spikes,
    })
}
