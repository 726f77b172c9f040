use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};

/// Dense complex matrix used for operators and density matrices.
pub type CMatrix = DMatrix<Complex64>;

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-12;
pub const PSD_TOL: f64 = 1e-10;
pub const UNITARY_TOL: f64 = 1e-10;

/// Named single-qubit registers. States are labelled maps over these names,
/// so no operation depends on a positional convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Register {
    /// Control qubit (kept by the server / verifier).
    Control,
    /// Target qubit (handed to the user / embedded as an AU qubit).
    Target,
    /// One-qubit attacker ancilla.
    Attacker,
}

impl fmt::Display for Register {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Register::Control => "C",
            Register::Target => "T",
            Register::Attacker => "A",
        };
        f.write_str(s)
    }
}

/// Outcome of a computational-basis measurement of one register.
#[derive(Debug, Clone)]
pub struct MeasurementResult {
    pub outcome: bool,
    pub probability: f64,
    pub post_state: QuantumState,
}

/// Density matrix over an ordered list of qubit registers. The first register
/// is the most significant bit of the basis index.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    registers: Vec<Register>,
    matrix: CMatrix,
}

pub(crate) fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn check_distinct(registers: &[Register]) -> Result<()> {
    for (i, r) in registers.iter().enumerate() {
        if registers[..i].contains(r) {
            return Err(Error::DuplicateRegister(*r));
        }
    }
    Ok(())
}

impl QuantumState {
    /// Validated constructor from a density matrix.
    pub fn from_density(registers: Vec<Register>, matrix: CMatrix) -> Result<Self> {
        let state = Self::from_density_unchecked(registers, matrix)?;
        state.validate()?;
        Ok(state)
    }

    /// Shape checks only; used internally where the matrix is produced by a
    /// CPTP map applied to a valid state.
    pub(crate) fn from_density_unchecked(registers: Vec<Register>, matrix: CMatrix) -> Result<Self> {
        if registers.is_empty() || registers.len() > 3 {
            return Err(Error::InvalidState(format!(
                "{} registers (1 to 3 supported)",
                registers.len()
            )));
        }
        check_distinct(&registers)?;
        let dim = 1usize << registers.len();
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: matrix.nrows().max(matrix.ncols()),
            });
        }
        Ok(Self { registers, matrix })
    }

    /// `|ψ⟩⟨ψ|` for a normalised amplitude vector.
    pub fn from_pure(registers: Vec<Register>, amplitudes: &[Complex64]) -> Result<Self> {
        let dim = 1usize << registers.len();
        if amplitudes.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: amplitudes.len(),
            });
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > TRACE_TOL * 10.0 {
            return Err(Error::InvalidState(format!("amplitude norm² is {norm}")));
        }
        let matrix = CMatrix::from_fn(dim, dim, |i, j| amplitudes[i] * amplitudes[j].conj());
        Self::from_density(registers, matrix)
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(registers: Vec<Register>, index: usize) -> Result<Self> {
        let dim = 1usize << registers.len();
        if index >= dim {
            return Err(Error::InvalidState(format!("basis index {index} >= {dim}")));
        }
        let mut m = CMatrix::zeros(dim, dim);
        m[(index, index)] = c(1.0);
        Self::from_density_unchecked(registers, m)
    }

    pub fn maximally_mixed(registers: Vec<Register>) -> Result<Self> {
        let dim = 1usize << registers.len();
        let m = CMatrix::identity(dim, dim) * c(1.0 / dim as f64);
        Self::from_density_unchecked(registers, m)
    }

    pub fn registers(&self) -> &[Register] {
        &self.registers
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn num_qubits(&self) -> usize {
        self.registers.len()
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    /// `Tr(ρ O)` for an operator on the full register list.
    pub fn expectation(&self, op: &CMatrix) -> Complex64 {
        (&self.matrix * op).trace()
    }

    /// Largest elementwise distance to another matrix of the same shape.
    pub fn max_deviation(&self, other: &CMatrix) -> f64 {
        max_abs_diff(&self.matrix, other)
    }

    /// Checks Hermiticity, unit trace and positive semidefiniteness.
    pub fn validate(&self) -> Result<()> {
        let herm = max_abs_diff(&self.matrix, &self.matrix.adjoint());
        if herm > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (deviation {herm:e})")));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace is {tr}")));
        }
        let min_eig = self.min_eigenvalue();
        if min_eig < -PSD_TOL {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {min_eig:e}"
            )));
        }
        Ok(())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        // Hermitise first so tiny asymmetries do not leak into the eigensolver.
        let h = (&self.matrix + self.matrix.adjoint()) * c(0.5);
        h.symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    fn position(&self, reg: Register) -> Result<usize> {
        self.registers
            .iter()
            .position(|r| *r == reg)
            .ok_or(Error::UnknownRegister(reg))
    }

    /// Bit shift (from the least significant end) for a register.
    fn shift(&self, reg: Register) -> Result<usize> {
        Ok(self.num_qubits() - 1 - self.position(reg)?)
    }

    /// `ρ ⊗ σ`; register names must be disjoint.
    pub fn tensor(&self, other: &QuantumState) -> Result<QuantumState> {
        let mut registers = self.registers.clone();
        registers.extend_from_slice(&other.registers);
        Self::from_density_unchecked(registers, self.matrix.kronecker(&other.matrix))
    }

    /// Renames one register, keeping its position.
    pub fn relabel(&self, from: Register, to: Register) -> Result<QuantumState> {
        let pos = self.position(from)?;
        let mut registers = self.registers.clone();
        registers[pos] = to;
        Self::from_density_unchecked(registers, self.matrix.clone())
    }

    /// Same state with registers permuted into `order`.
    pub fn reorder(&self, order: &[Register]) -> Result<QuantumState> {
        if order.len() != self.num_qubits() {
            return Err(Error::DimensionMismatch {
                expected: self.num_qubits(),
                actual: order.len(),
            });
        }
        check_distinct(order)?;
        let shifts = order
            .iter()
            .map(|r| self.shift(*r))
            .collect::<Result<Vec<_>>>()?;
        let n = order.len();
        // new index bit (n-1-k) is old bit shifts[k]
        let map = |new: usize| {
            (0..n).fold(0usize, |acc, k| acc | (((new >> (n - 1 - k)) & 1) << shifts[k]))
        };
        let dim = self.dim();
        let m = CMatrix::from_fn(dim, dim, |i, j| self.matrix[(map(i), map(j))]);
        Self::from_density_unchecked(order.to_vec(), m)
    }

    /// Lifts an operator acting on `on` (in that order) to the full register
    /// list.
    pub fn embed_operator(&self, op: &CMatrix, on: &[Register]) -> Result<CMatrix> {
        check_distinct(on)?;
        let k = on.len();
        let sub_dim = 1usize << k;
        if op.nrows() != sub_dim || op.ncols() != sub_dim {
            return Err(Error::DimensionMismatch {
                expected: sub_dim,
                actual: op.nrows(),
            });
        }
        let shifts = on
            .iter()
            .map(|r| self.shift(*r))
            .collect::<Result<Vec<_>>>()?;
        let target_mask = shifts.iter().fold(0usize, |acc, s| acc | (1 << s));
        let sub = |i: usize| {
            (0..k).fold(0usize, |acc, t| acc | (((i >> shifts[t]) & 1) << (k - 1 - t)))
        };
        let dim = self.dim();
        Ok(CMatrix::from_fn(dim, dim, |i, j| {
            if i & !target_mask == j & !target_mask {
                op[(sub(i), sub(j))]
            } else {
                c(0.0)
            }
        }))
    }

    /// `U ρ U†` with `U` acting on the listed registers.
    pub fn apply_unitary(&self, op: &CMatrix, on: &[Register]) -> Result<QuantumState> {
        let dev = unitary_deviation(op);
        if dev > UNITARY_TOL {
            return Err(Error::NotUnitary(dev));
        }
        let full = self.embed_operator(op, on)?;
        let m = &full * &self.matrix * full.adjoint();
        Self::from_density_unchecked(self.registers.clone(), m)
    }

    /// `Σ K ρ K†` for Kraus operators on the listed registers.
    pub fn apply_kraus(&self, kraus: &[CMatrix], on: &[Register]) -> Result<QuantumState> {
        let dim = self.dim();
        let mut acc = CMatrix::zeros(dim, dim);
        for k in kraus {
            let full = self.embed_operator(k, on)?;
            acc += &full * &self.matrix * full.adjoint();
        }
        Self::from_density_unchecked(self.registers.clone(), acc)
    }

    /// Traces out one register.
    pub fn partial_trace(&self, reg: Register) -> Result<QuantumState> {
        let s = self.shift(reg)?;
        if self.num_qubits() == 1 {
            return Err(Error::InvalidState(
                "cannot trace out the only register".into(),
            ));
        }
        let low = (1usize << s) - 1;
        let insert = |i: usize, b: usize| ((i >> s) << (s + 1)) | (b << s) | (i & low);
        let dim = self.dim() / 2;
        let m = CMatrix::from_fn(dim, dim, |i, j| {
            self.matrix[(insert(i, 0), insert(j, 0))] + self.matrix[(insert(i, 1), insert(j, 1))]
        });
        let registers = self
            .registers
            .iter()
            .copied()
            .filter(|r| *r != reg)
            .collect();
        Self::from_density_unchecked(registers, m)
    }

    /// Reduced state on `keep`, in the order given.
    pub fn reduced(&self, keep: &[Register]) -> Result<QuantumState> {
        for r in keep {
            self.position(*r)?;
        }
        let mut state = self.clone();
        for r in self.registers.iter().filter(|r| !keep.contains(r)) {
            state = state.partial_trace(*r)?;
        }
        state.reorder(keep)
    }

    /// Probability of reading `outcome` on `reg`.
    pub fn probability(&self, reg: Register, outcome: bool) -> Result<f64> {
        let s = self.shift(reg)?;
        let bit = outcome as usize;
        Ok((0..self.dim())
            .filter(|i| (i >> s) & 1 == bit)
            .map(|i| self.matrix[(i, i)].re)
            .sum())
    }

    /// Projects `reg` onto `outcome` and renormalises.
    pub fn project(&self, reg: Register, outcome: bool) -> Result<MeasurementResult> {
        let probability = self.probability(reg, outcome)?;
        if probability <= 0.0 {
            return Err(Error::InvalidState(format!(
                "outcome {} on {reg} has zero probability",
                outcome as u8
            )));
        }
        let s = self.shift(reg)?;
        let bit = outcome as usize;
        let dim = self.dim();
        let m = CMatrix::from_fn(dim, dim, |i, j| {
            if (i >> s) & 1 == bit && (j >> s) & 1 == bit {
                self.matrix[(i, j)] / probability
            } else {
                c(0.0)
            }
        });
        Ok(MeasurementResult {
            outcome,
            probability,
            post_state: Self::from_density_unchecked(self.registers.clone(), m)?,
        })
    }

    /// Samples a computational-basis measurement of `reg`.
    pub fn measure<R: Rng + ?Sized>(&self, reg: Register, rng: &mut R) -> Result<MeasurementResult> {
        let p0 = self.probability(reg, false)?;
        let outcome = rng.random::<f64>() >= p0;
        self.project(reg, outcome)
    }
}

pub(crate) fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// `‖U†U − I‖_max`.
pub fn unitary_deviation(u: &CMatrix) -> f64 {
    if u.nrows() != u.ncols() {
        return f64::INFINITY;
    }
    let id = CMatrix::identity(u.nrows(), u.ncols());
    max_abs_diff(&(u.adjoint() * u), &id)
}
