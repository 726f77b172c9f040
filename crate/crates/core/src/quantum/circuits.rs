//! The generation, verification and half-verification circuits, plus the
//! tampering oracle used to check attacker indistinguishability.

use rand::Rng;

use super::channels::NoiseChannel;
use super::gates;
use super::state::{unitary_deviation, CMatrix, MeasurementResult, QuantumState, Register, UNITARY_TOL};
use crate::error::{Error, Result};

use Register::{Attacker, Control, Target};

/// Which controlled gate the generation stage applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateChoice {
    /// `m = 0`
    Cx,
    /// `m = 1`
    Czx,
}

impl GateChoice {
    pub fn from_bit(m: bool) -> Self {
        if m {
            Self::Czx
        } else {
            Self::Cx
        }
    }

    pub fn bit(self) -> bool {
        matches!(self, Self::Czx)
    }

    /// Control outcome a legitimate holder produces in the verification stage.
    pub fn expected_outcome(self) -> bool {
        self.bit()
    }

    fn target_gate(self) -> CMatrix {
        match self {
            Self::Cx => gates::pauli_x(),
            Self::Czx => gates::zx(),
        }
    }
}

/// Gate and readout error probabilities applied around the ideal gates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GateErrors {
    pub hadamard: f64,
    pub cx: f64,
    pub czx: f64,
    pub readout: f64,
}

impl GateErrors {
    pub fn ideal() -> Self {
        Self::default()
    }

    fn controlled(&self, m: GateChoice) -> f64 {
        match m {
            GateChoice::Cx => self.cx,
            GateChoice::Czx => self.czx,
        }
    }
}

/// Ideal generation stage: `|0⟩_C|0⟩_T → H_C → C-(X|ZX)`, giving
/// `(|00⟩ + (−1)^m |11⟩)/√2` in CT order.
pub fn generation_stage(m: GateChoice) -> QuantumState {
    generation_stage_noisy(m, &GateErrors::ideal()).expect("ideal generation is well formed")
}

/// Generation with a depolarizing error after each gate: one-qubit on C after
/// the Hadamard, two-qubit on CT after the controlled gate.
pub fn generation_stage_noisy(m: GateChoice, errors: &GateErrors) -> Result<QuantumState> {
    let s = QuantumState::basis(vec![Control, Target], 0)?;
    let s = s.apply_unitary(&gates::hadamard(), &[Control])?;
    let s = NoiseChannel::depolarizing(errors.hadamard)?.apply(&s, &[Control])?;
    let s = s.apply_unitary(&gates::controlled(&m.target_gate()), &[Control, Target])?;
    NoiseChannel::depolarizing(errors.controlled(m))?.apply(&s, &[Control, Target])
}

/// Verification circuit up to (not including) the measurement: X on T
/// controlled on `C = 0`, then H on C. With `errors`, the two-qubit gate gets
/// the CX error rate and the Hadamard the C-Hadamard rate.
pub fn verification_circuit(state: &QuantumState, errors: &GateErrors) -> Result<QuantumState> {
    let s = state.apply_unitary(&gates::anti_controlled(&gates::pauli_x()), &[Control, Target])?;
    let s = NoiseChannel::depolarizing(errors.cx)?.apply(&s, &[Control, Target])?;
    let s = s.apply_unitary(&gates::hadamard(), &[Control])?;
    NoiseChannel::depolarizing(errors.hadamard)?.apply(&s, &[Control])
}

/// Probability that the verification stage reads `1` on C, before readout
/// error.
pub fn verification_probability_one(state: &QuantumState, errors: &GateErrors) -> Result<f64> {
    verification_circuit(state, errors)?.probability(Control, true)
}

/// Ideal verification stage with a sampled measurement of C.
pub fn verification_stage<R: Rng + ?Sized>(
    state: &QuantumState,
    rng: &mut R,
) -> Result<MeasurementResult> {
    verification_circuit(state, &GateErrors::ideal())?.measure(Control, rng)
}

/// Half-verification (asymmetric scheme): X on C controlled by T, before
/// measuring C.
pub fn protocol_half_circuit(state: &QuantumState, errors: &GateErrors) -> Result<QuantumState> {
    // `controlled` takes its control as the first listed register
    let s = state.apply_unitary(&gates::cx(), &[Target, Control])?;
    NoiseChannel::depolarizing(errors.cx)?.apply(&s, &[Control, Target])
}

pub fn protocol_half_stage<R: Rng + ?Sized>(
    state: &QuantumState,
    rng: &mut R,
) -> Result<MeasurementResult> {
    protocol_half_circuit(state, &GateErrors::ideal())?.measure(Control, rng)
}

/// `Tr_T[(I_C ⊗ G_TA)(|ψ_m⟩⟨ψ_m|_CT ⊗ ρ_A)(I_C ⊗ G_TA)†]`, a state over
/// `(C, A)`.
///
/// `g_ta` acts on `(T, A)` with T as the more significant qubit.
pub fn tamper_oracle(m: GateChoice, g_ta: &CMatrix, rho_a: &QuantumState) -> Result<QuantumState> {
    tamper_pair(&generation_stage(m), g_ta, rho_a)
}

/// [`tamper_oracle`] applied to an arbitrary (possibly noisy) CT pair.
pub fn tamper_pair(pair: &QuantumState, g_ta: &CMatrix, rho_a: &QuantumState) -> Result<QuantumState> {
    let dev = unitary_deviation(g_ta);
    if g_ta.nrows() != 4 || dev > UNITARY_TOL {
        return Err(Error::NotUnitary(dev));
    }
    if rho_a.num_qubits() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            actual: rho_a.dim(),
        });
    }
    rho_a.validate()?;
    let rho_a = rho_a.relabel(rho_a.registers()[0], Attacker)?;
    let overall = pair
        .reorder(&[Control, Target])?
        .tensor(&rho_a)?
        .apply_unitary(g_ta, &[Target, Attacker])?;
    overall.partial_trace(Target)
}

/// The state the server verifies when the attacker returns its own qubit:
/// the tampering oracle output with `A` in the target slot.
pub fn forged_pair(m: GateChoice, g_ta: &CMatrix, rho_a: &QuantumState) -> Result<QuantumState> {
    forged_pair_from(&generation_stage(m), g_ta, rho_a)
}

pub fn forged_pair_from(pair: &QuantumState, g_ta: &CMatrix, rho_a: &QuantumState) -> Result<QuantumState> {
    tamper_pair(pair, g_ta, rho_a)?.relabel(Attacker, Target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::state::{c, max_abs_diff};
    use std::f64::consts::FRAC_1_SQRT_2;

    fn closed_form(m: GateChoice) -> CMatrix {
        let s = if m.bit() { -1.0 } else { 1.0 };
        let amp = [c(FRAC_1_SQRT_2), c(0.0), c(0.0), c(s * FRAC_1_SQRT_2)];
        CMatrix::from_fn(4, 4, |i, j| amp[i] * amp[j].conj())
    }

    #[test]
    fn generation_matches_closed_form() {
        for m in [GateChoice::Cx, GateChoice::Czx] {
            let s = generation_stage(m);
            assert_eq!(s.registers(), &[Control, Target]);
            assert!(max_abs_diff(s.matrix(), &closed_form(m)) < 1e-15);
            let marginal = s.partial_trace(Target).unwrap();
            let half = QuantumState::maximally_mixed(vec![Control]).unwrap();
            assert!(max_abs_diff(marginal.matrix(), half.matrix()) < 1e-15);
        }
    }

    #[test]
    fn verification_is_deterministic_on_ideal_pairs() {
        let pre = verification_circuit(&generation_stage(GateChoice::Cx), &GateErrors::ideal()).unwrap();
        // |0>_C |1>_T
        assert!((pre.matrix()[(1, 1)].re - 1.0).abs() < 1e-15);
        let pre = verification_circuit(&generation_stage(GateChoice::Czx), &GateErrors::ideal()).unwrap();
        // |1>_C |1>_T
        assert!((pre.matrix()[(3, 3)].re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn verification_of_mixed_control_is_a_coin() {
        let mut rng = rand::rng();
        let control = QuantumState::maximally_mixed(vec![Control]).unwrap();
        for _ in 0..20 {
            let psi = crate::quantum::haar_random_qubit(Target, &mut rng);
            let s = control.tensor(&psi).unwrap();
            let p1 = verification_probability_one(&s, &GateErrors::ideal()).unwrap();
            assert!((p1 - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn protocol_half_targets_plus_and_minus() {
        let mut rng = rand::rng();
        for (m, sign) in [(GateChoice::Cx, 1.0), (GateChoice::Czx, -1.0)] {
            let r = protocol_half_stage(&generation_stage(m), &mut rng).unwrap();
            assert!(!r.outcome);
            assert!((r.probability - 1.0).abs() < 1e-14);
            let t = r.post_state.partial_trace(Control).unwrap();
            // |±><±| has off-diagonal ±1/2
            assert!((t.matrix()[(0, 1)].re - sign * 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn tamper_rejects_non_unitary() {
        let g = CMatrix::identity(4, 4) * c(2.0);
        let rho = QuantumState::maximally_mixed(vec![Attacker]).unwrap();
        assert!(matches!(
            tamper_oracle(GateChoice::Cx, &g, &rho),
            Err(Error::NotUnitary(_))
        ));
    }

    #[test]
    fn tamper_identity_keeps_control_mixed() {
        let g = CMatrix::identity(4, 4);
        let mut rng = rand::rng();
        let rho = crate::quantum::haar_random_qubit(Attacker, &mut rng);
        let out = tamper_oracle(GateChoice::Czx, &g, &rho).unwrap();
        let control = out.partial_trace(Attacker).unwrap();
        let half = QuantumState::maximally_mixed(vec![Control]).unwrap();
        assert!(max_abs_diff(control.matrix(), half.matrix()) < 1e-14);
    }
}
