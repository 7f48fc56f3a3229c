//! Reconstruction and certification toolkit for two-basis photon-arrival
//! data.
//!
//! The crate turns raw timestamp streams (measured or simulated) into
//! binned joint temporal intensity matrices, quantifies how close the two
//! measurement bases are to mutually unbiased, certifies high-dimensional
//! entanglement through a fidelity witness and a distillable-entanglement
//! bound, propagates counting uncertainty with a Poisson bootstrap, and
//! evaluates composable finite-size QKD key lengths with parameter sweeps
//! over dimension, block size, and basis-splitting ratio.

pub mod binning;
pub mod bootstrap;
pub mod error;
pub mod io;
pub mod matrix;
pub mod mub;
pub mod pipeline;
pub mod security;
pub mod sim;
pub mod tags;
pub mod witness;

pub use binning::{bin_full_frame, bin_timestamps, peak_fwhm, subspace_extract, BinningConfig};
pub use bootstrap::{poisson_bootstrap, BootstrapConfig, BootstrapSummary};
pub use error::{Error, Result};
pub use matrix::{BasisPair, CoincidenceMatrix, JointDistribution};
pub use mub::{delta_m, mub_consistency_test, MubReport};
pub use security::{
    asymptotic_rate, b_stat, ec_leakage, h_min, hoeffding_mu, key_length_coherent,
    key_length_collective, theta, w_observable, KeyRateResult, ProtocolConfig, Regime,
    SecurityParams,
};
pub use sim::{effective_resolution, simulate, SimConfig, SimStreams};
pub use tags::{Basis, Channel, Party, TagStream};
pub use witness::{
    align_diagonal, certify_schmidt_number, conditional_entropy, distillable_entanglement, f1,
    f2_tilde, TargetState, WitnessReport,
};
