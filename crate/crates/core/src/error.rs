use thiserror::Error;

use crate::model::NeuronParameters;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("numerical overflow at step {step}, neuron {neuron}: v={v}, u={u}")]
    NumericalOverflow {
        step: usize,
        neuron: usize,
        v: f64,
        u: f64,
    },

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("insufficient data: {rows} usable transitions, at least {required} required")]
    InsufficientData { rows: usize, required: usize },

    #[error("singular system: pivot {pivot:e} at index {index} is below tolerance")]
    Singular { index: usize, pivot: f64 },

    #[error("parameter {name}={value} outside [{min}, {max}]")]
    ParameterRange {
        name: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("fitness evaluation failed for {params:?}: {message}")]
    Fitness {
        params: NeuronParameters,
        message: String,
    },

    #[error("no network with at least {min_spikes} spikes per neuron after {attempts} attempts")]
    GenerationExhausted { attempts: usize, min_spikes: usize },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
