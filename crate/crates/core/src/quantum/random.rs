use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::state::{CMatrix, QuantumState, Register};

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Haar-random pure qubit on `register`: two complex Gaussians, normalised.
pub fn haar_random_qubit<R: Rng + ?Sized>(register: Register, rng: &mut R) -> QuantumState {
    let (a, b) = loop {
        let a = complex_gaussian(rng);
        let b = complex_gaussian(rng);
        let norm = (a.norm_sqr() + b.norm_sqr()).sqrt();
        if norm > 1e-12 {
            break (a / norm, b / norm);
        }
    };
    let amp = [a, b];
    let m = CMatrix::from_fn(2, 2, |i, j| amp[i] * amp[j].conj());
    QuantumState::from_density_unchecked(vec![register], m).expect("2x2 matrix on one register")
}

/// Haar-random `dim × dim` unitary (QR of a complex Ginibre matrix with the
/// phases of `R`'s diagonal moved into `Q`).
pub fn haar_random_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    let g = CMatrix::from_fn(dim, dim, |_, _| complex_gaussian(rng));
    let qr = g.qr();
    let (mut q, r) = qr.unpack();
    for k in 0..dim {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        let mut col = q.column_mut(k);
        col *= phase;
    }
    q
}
