//! CPTP noise channels in Kraus form.

use rand::Rng;

use super::gates::{identity, paulis};
use super::state::{c, CMatrix, QuantumState, Register};
use crate::error::{check_non_negative, check_positive, check_probability, Result};

/// Noise channels applied to named registers.
///
/// Damping strengths are `γ = 1 − e^{−t/T1}` and `λ = 1 − e^{−t/T2}`; phase
/// damping scales coherences by `1 − λ`. Infinite time constants are allowed
/// and give the identity map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseChannel {
    /// `(1−p)ρ + p·(I/2ᵏ ⊗ Tr_k ρ)` on the k listed registers.
    Depolarizing { p: f64 },
    AmplitudeDamping { t: f64, t1: f64 },
    PhaseDamping { t: f64, t2: f64 },
    /// Classical bit flip on the measurement record; identity on states.
    ReadoutFlip { p: f64 },
}

impl NoiseChannel {
    pub fn depolarizing(p: f64) -> Result<Self> {
        check_probability("p", p)?;
        Ok(Self::Depolarizing { p })
    }

    pub fn amplitude_damping(t: f64, t1: f64) -> Result<Self> {
        check_non_negative("t", t)?;
        check_positive("T1", t1)?;
        Ok(Self::AmplitudeDamping { t, t1 })
    }

    pub fn phase_damping(t: f64, t2: f64) -> Result<Self> {
        check_non_negative("t", t)?;
        check_positive("T2", t2)?;
        Ok(Self::PhaseDamping { t, t2 })
    }

    pub fn readout_flip(p: f64) -> Result<Self> {
        check_probability("p", p)?;
        Ok(Self::ReadoutFlip { p })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Depolarizing { p } | Self::ReadoutFlip { p } => {
                check_probability("p", p)?;
            }
            Self::AmplitudeDamping { t, t1 } => {
                check_non_negative("t", t)?;
                check_positive("T1", t1)?;
            }
            Self::PhaseDamping { t, t2 } => {
                check_non_negative("t", t)?;
                check_positive("T2", t2)?;
            }
        }
        Ok(())
    }

    /// Single-qubit Kraus operators. Depolarizing uses the Pauli twirl form.
    fn single_qubit_kraus(&self) -> Vec<CMatrix> {
        match *self {
            Self::Depolarizing { p } => pauli_twirl_kraus(p, 1),
            Self::AmplitudeDamping { t, t1 } => {
                let gamma = 1.0 - (-t / t1).exp();
                vec![
                    CMatrix::from_row_slice(
                        2,
                        2,
                        &[c(1.0), c(0.0), c(0.0), c((1.0 - gamma).sqrt())],
                    ),
                    CMatrix::from_row_slice(2, 2, &[c(0.0), c(gamma.sqrt()), c(0.0), c(0.0)]),
                ]
            }
            Self::PhaseDamping { t, t2 } => {
                // phase flip with probability λ/2 scales coherences by 1 − λ
                let lambda = 1.0 - (-t / t2).exp();
                let q = lambda / 2.0;
                let [id, _, _, z] = paulis();
                vec![id * c((1.0 - q).sqrt()), z * c(q.sqrt())]
            }
            Self::ReadoutFlip { .. } => vec![identity(1)],
        }
    }

    /// Applies the channel. Depolarizing acts jointly on all listed registers;
    /// the damping channels act independently on each.
    pub fn apply(&self, state: &QuantumState, on: &[Register]) -> Result<QuantumState> {
        self.validate()?;
        match *self {
            Self::Depolarizing { p } => {
                if p == 0.0 || on.is_empty() {
                    return Ok(state.clone());
                }
                state.apply_kraus(&pauli_twirl_kraus(p, on.len()), on)
            }
            Self::ReadoutFlip { .. } => {
                for r in on {
                    state.probability(*r, false)?;
                }
                Ok(state.clone())
            }
            _ => {
                let kraus = self.single_qubit_kraus();
                let mut out = state.clone();
                for r in on {
                    out = out.apply_kraus(&kraus, &[*r])?;
                }
                Ok(out)
            }
        }
    }

    /// Applies a readout flip to a classical bit; other channels pass it through.
    pub fn flip_outcome<R: Rng + ?Sized>(&self, bit: bool, rng: &mut R) -> bool {
        match *self {
            Self::ReadoutFlip { p } if p > 0.0 => bit ^ (rng.random::<f64>() < p),
            _ => bit,
        }
    }
}

/// Free-function form of [`NoiseChannel::apply`].
pub fn apply_noise_channel(
    state: &QuantumState,
    channel: NoiseChannel,
    on: &[Register],
) -> Result<QuantumState> {
    channel.apply(state, on)
}

/// Kraus set for `(1−p)ρ + p/4ᵏ Σ_P PρP†` over k-qubit Pauli strings.
fn pauli_twirl_kraus(p: f64, qubits: usize) -> Vec<CMatrix> {
    let singles = paulis();
    let mut strings = vec![identity(0)];
    for _ in 0..qubits {
        strings = strings
            .iter()
            .flat_map(|s| singles.iter().map(move |p| s.kronecker(p)))
            .collect();
    }
    let n = strings.len() as f64;
    strings
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let w = if i == 0 { 1.0 - p + p / n } else { p / n };
            s * c(w.sqrt())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::state::{max_abs_diff, Register::*};

    fn plus() -> QuantumState {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        QuantumState::from_pure(vec![Target], &[c(h), c(h)]).unwrap()
    }

    /// `exp(tL)` for the pure-dephasing Lindbladian `L(ρ) = γ/2 (ZρZ − ρ)`
    /// acting on vectorised 2×2 matrices, via a truncated Taylor series with
    /// scaling and squaring.
    fn dephasing_by_matrix_exponential(rho: &CMatrix, t: f64, t2: f64) -> CMatrix {
        // With γ = 1/T2 the coherence decays as exp(-γ t).
        let gamma = 1.0 / t2;
        let z = crate::quantum::gates::pauli_z();
        // superoperator on row-major vec(ρ): vec(AρB) = (A ⊗ Bᵀ) vec(ρ)
        let id = identity(1);
        let l = (z.kronecker(&z.transpose()) - id.kronecker(&id)) * c(gamma / 2.0);
        let steps = 6;
        let scaled = &l * c(t / f64::from(1u32 << steps));
        let mut exp = CMatrix::identity(4, 4);
        let mut term = CMatrix::identity(4, 4);
        for k in 1..20 {
            term = &term * &scaled * c(1.0 / k as f64);
            exp += &term;
        }
        for _ in 0..steps {
            exp = &exp * &exp;
        }
        let v = nalgebra::DVector::from_iterator(4, rho.transpose().iter().copied());
        let out = exp * v;
        CMatrix::from_row_slice(2, 2, out.as_slice())
    }

    #[test]
    fn depolarizing_zero_is_identity() {
        let s = plus();
        let out = NoiseChannel::depolarizing(0.0).unwrap().apply(&s, &[Target]).unwrap();
        assert!(max_abs_diff(out.matrix(), s.matrix()) < 1e-15);
    }

    #[test]
    fn full_depolarizing_gives_maximally_mixed() {
        let bell = crate::quantum::generation_stage(crate::quantum::GateChoice::Cx);
        let out = NoiseChannel::depolarizing(1.0)
            .unwrap()
            .apply(&bell, &[Control, Target])
            .unwrap();
        let mixed = QuantumState::maximally_mixed(vec![Control, Target]).unwrap();
        assert!(max_abs_diff(out.matrix(), mixed.matrix()) < 1e-14);
    }

    #[test]
    fn amplitude_damping_long_time_relaxes_to_ground() {
        let s = QuantumState::basis(vec![Target], 1).unwrap();
        for init in [s, plus()] {
            let out = NoiseChannel::amplitude_damping(1e3, 1e-6)
                .unwrap()
                .apply(&init, &[Target])
                .unwrap();
            assert!((out.matrix()[(0, 0)].re - 1.0).abs() < 1e-12);
            assert!(out.matrix()[(1, 1)].norm() < 1e-12);
        }
    }

    #[test]
    fn phase_damping_at_t2_scales_coherence_by_inverse_e() {
        let t2 = 295.35e-6;
        let s = plus();
        let out = NoiseChannel::phase_damping(t2, t2).unwrap().apply(&s, &[Target]).unwrap();
        let oracle = dephasing_by_matrix_exponential(s.matrix(), t2, t2);
        assert!((out.matrix()[(0, 1)].re - 0.5 * (-1.0f64).exp()).abs() < 1e-13);
        assert!(max_abs_diff(out.matrix(), &oracle) < 1e-12);
        assert!((out.matrix()[(0, 0)].re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn readout_flip_leaves_state_and_flips_bits() {
        let s = plus();
        let ch = NoiseChannel::readout_flip(1.0).unwrap();
        assert_eq!(ch.apply(&s, &[Target]).unwrap(), s);
        let mut rng = rand::rng();
        assert!(ch.flip_outcome(false, &mut rng));
        assert!(!NoiseChannel::readout_flip(0.0).unwrap().flip_outcome(false, &mut rng));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(NoiseChannel::depolarizing(1.5).is_err());
        assert!(NoiseChannel::depolarizing(-0.1).is_err());
        assert!(NoiseChannel::readout_flip(f64::NAN).is_err());
        assert!(NoiseChannel::amplitude_damping(1.0, 0.0).is_err());
        assert!(NoiseChannel::phase_damping(1.0, -2.0).is_err());
        assert!(NoiseChannel::phase_damping(-1.0, 2.0).is_err());
    }

    #[test]
    fn unknown_register_is_rejected() {
        let s = plus();
        let ch = NoiseChannel::depolarizing(0.2).unwrap();
        assert!(ch.apply(&s, &[Control]).is_err());
    }

    #[test]
    fn twirl_kraus_is_trace_preserving() {
        for k in 1..=2 {
            let ops = pauli_twirl_kraus(0.3, k);
            let d = 1 << k;
            let sum = ops
                .iter()
                .fold(CMatrix::zeros(d, d), |acc, o| acc + o.adjoint() * o);
            assert!(max_abs_diff(&sum, &CMatrix::identity(d, d)) < 1e-14);
        }
    }
}
