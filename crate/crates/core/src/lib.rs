//! Stationary densities of circle-map transfer operators and their first-
//! and second-order response to one-parameter perturbations.
//!
//! Two families are covered: deterministic expanding maps `T_delta = D_delta o T`
//! and the same maps followed by additive Gaussian noise (annealed operators
//! `rho_xi * L_{D_delta o T}`). Operators are discretized on truncated
//! Fourier bases; independent Ulam, Monte Carlo and finite-difference
//! oracles live in [`oracle`].

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod fourier;
pub mod maps;
pub mod oracle;
pub mod par;
pub mod response;
pub mod scenario;
pub mod transfer;

pub use config::{ConfigFile, Scenario};
pub use error::{Error, Result};
pub use fourier::{NoiseKernel, Norm, SpectralFunction};
pub use maps::{CircleMap, DiffeoFamily, MapFamily, TrigMap, TrigPoly};
pub use oracle::{BinnedDensity, TrajectoryEstimate, UlamMatrix};
pub use scenario::{run_scenario, RunOutcome};
pub use transfer::{OperatorKind, OperatorMatrix};
