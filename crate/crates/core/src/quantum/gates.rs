//! Named gates as dense matrices. Two-qubit gates take the control as the
//! first (most significant) qubit.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;

use super::state::{c, CMatrix};

pub fn identity(qubits: usize) -> CMatrix {
    let d = 1usize << qubits;
    CMatrix::identity(d, d)
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)])
}

pub fn pauli_y() -> CMatrix {
    let i = Complex64::i();
    CMatrix::from_row_slice(2, 2, &[c(0.0), -i, i, c(0.0)])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)])
}

pub fn hadamard() -> CMatrix {
    let h = FRAC_1_SQRT_2;
    CMatrix::from_row_slice(2, 2, &[c(h), c(h), c(h), c(-h)])
}

/// `Z·X`: flips, then applies a phase to `|1⟩`.
pub fn zx() -> CMatrix {
    pauli_z() * pauli_x()
}

/// `|0⟩⟨0| ⊗ I + |1⟩⟨1| ⊗ U`.
pub fn controlled(u: &CMatrix) -> CMatrix {
    block_diag(&identity(1), u)
}

/// `|0⟩⟨0| ⊗ U + |1⟩⟨1| ⊗ I` (open-circle control).
pub fn anti_controlled(u: &CMatrix) -> CMatrix {
    block_diag(u, &identity(1))
}

pub fn cx() -> CMatrix {
    controlled(&pauli_x())
}

pub fn czx() -> CMatrix {
    controlled(&zx())
}

fn block_diag(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let mut m = CMatrix::zeros(4, 4);
    m.view_mut((0, 0), (2, 2)).copy_from(a);
    m.view_mut((2, 2), (2, 2)).copy_from(b);
    m
}

/// The four single-qubit Paulis `I, X, Y, Z`.
pub fn paulis() -> [CMatrix; 4] {
    [identity(1), pauli_x(), pauli_y(), pauli_z()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::state::unitary_deviation;

    #[test]
    fn named_gates_are_unitary() {
        let gates = [
            pauli_x(),
            pauli_y(),
            pauli_z(),
            hadamard(),
            zx(),
            cx(),
            czx(),
            anti_controlled(&pauli_x()),
        ];
        for g in &gates {
            assert!(unitary_deviation(g) <= 1e-12, "{g}");
        }
    }

    #[test]
    fn zx_action_on_basis() {
        // ZX|0> = -|1>, ZX|1> = |0>
        let m = zx();
        assert_eq!(m[(1, 0)], c(-1.0));
        assert_eq!(m[(0, 1)], c(1.0));
    }
}
