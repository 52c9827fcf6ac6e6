#![allow(dead_code)]

use izhrecon::network::{generate_network, GeneratedNetwork, GeneratorConfig};
use izhrecon::{NeuronParameters, SimulationConfig};

pub const IB: NeuronParameters = NeuronParameters::INTRINSICALLY_BURSTING;

/// Ten intrinsically bursting cells, default weight range, 1000 steps of 0.5 ms.
pub fn ib_network(seed: u64) -> GeneratedNetwork {
    network(10, 1000, seed)
}

pub fn network(n: usize, steps: usize, seed: u64) -> GeneratedNetwork {
    generate_network(&vec![IB; n], &SimulationConfig::new(0.5, steps), &GeneratorConfig::default(), seed)
        .expect("spiking network")
}
