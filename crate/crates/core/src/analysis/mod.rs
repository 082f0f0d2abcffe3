//! Diagnostics: influence matrices and decay fits, smoothness, state-gap
//! bounds, frequency response, gate-gap histograms, perturbation probes.

pub mod bound;
pub mod gates;
pub mod influence;
pub mod layerwise;
pub mod perturb;
pub mod smoothness;
pub mod spectrum;

pub use bound::{oversmoothing_check, oversmoothing_check_multi, BoundReport, BOUND_SLACK};
pub use gates::{default_bin_edges, gate_gap_histogram, GateGapHistogram};
pub use influence::{
    fit_decay_rate, influence_matrix, ChannelAggregation, DecayFit, InfluenceMatrix,
};
pub use layerwise::{layerwise_smoothness, LayerProbe};
pub use perturb::{perturbation_probe, PerturbationReport, Region};
pub use smoothness::smoothness;
pub use spectrum::{default_grid, frequency_response, log_grid, FrequencyResponse};
