//! Exact density-matrix simulation for the 1–3 qubit authentication circuits.

mod channels;
mod circuits;
pub mod gates;
mod random;
mod state;

pub use channels::{apply_noise_channel, NoiseChannel};
pub use circuits::{
    forged_pair, forged_pair_from, generation_stage, generation_stage_noisy, protocol_half_circuit,
    protocol_half_stage, tamper_oracle, tamper_pair, verification_circuit, verification_probability_one,
    verification_stage, GateChoice, GateErrors,
};
pub use random::{haar_random_qubit, haar_random_unitary};
pub use state::{
    unitary_deviation, CMatrix, MeasurementResult, QuantumState, Register, HERMITIAN_TOL, PSD_TOL,
    TRACE_TOL, UNITARY_TOL,
};
