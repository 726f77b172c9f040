//! Desk-scale simulator for entanglement-assisted CX/CZX user authentication.
//!
//! The crate is organised bottom-up:
//!
//! - [`quantum`]: dense density-matrix simulation of the 1–3 qubit circuits
//!   (generation, verification, the half-verification used by the asymmetric
//!   BB84 scheme, noise channels, partial trace and the tampering oracle).
//! - [`noise`]: closed-form physical-layer models (fiber, detector, dark
//!   counts, cavity-enhanced AFC memory) and the hardware parameter set.
//! - [`timing`]: the per-photon local-time ledger.
//! - [`protocol`]: λ-round user/server sessions, transcripts and the
//!   threshold acceptance rule with its Chebyshev bound.
//! - [`bb84`]: BB84 with authenticating qubits embedded at secret positions.
//! - [`classifier`]: a small feed-forward network for transcript acceptance.
//! - [`experiment`]: configuration, seeding, CSV output and the experiment
//!   drivers used by the `qauth` binary.

pub mod bb84;
pub mod classifier;
pub mod error;
pub mod experiment;
pub mod noise;
pub mod protocol;
pub mod quantum;
pub mod timing;

pub use error::{Error, Result};
