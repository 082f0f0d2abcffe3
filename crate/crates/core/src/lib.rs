//! Diagonal state-space sequence models on the CPU: the shared recurrence
//! `h_t = a_t ⊙ h_{t-1} + Δ_t b_t`, the parameterizations that feed it
//! (S4, selective/Mamba, linear-attention family), a reverse-mode gradient
//! tape, and the diagnostics used to study influence decay, state smoothing,
//! spectral response, and gate polarization.
//!
//! Everything is `f64` (or `Complex64` in the scan), deterministic given a
//! seed, and free of shared mutable state: scans and analyses are pure
//! functions over immutable inputs.

pub mod analysis;
pub mod coeffs;
pub mod error;
pub mod grad;
pub mod io;
pub mod params;
pub mod rng;
pub mod scalar;
pub mod scan;
pub mod suite;
pub mod tasks;

pub use coeffs::{CoefficientDiagnostics, DomainMode, SequenceInput, StepCoefficients};
pub use error::Error;
pub use scalar::ScanScalar;
pub use scan::{scan_parallel, scan_recurrent, StateTrajectory};

/// Library version echoed into run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type Result<T> = std::result::Result<T, Error>;
