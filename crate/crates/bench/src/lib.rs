//! Fixed workloads shared by the benchmarks.

use cocyrot::base::{InvariantMeasure, PeriodicOrbit, RotationAngle, SymbolicSystem};
use cocyrot::cocycle::{Generator, Harmonic, MatrixCocycle};
use cocyrot::linalg::{block_diag, diag, rot2, Mat};
use cocyrot::path::CocyclePath;

/// Two hyperbolic SL(2) generators over the full 2-shift.
pub fn shift_cocycle() -> MatrixCocycle {
    MatrixCocycle::locally_constant(
        SymbolicSystem::full_shift(2),
        vec![rot2(0.4) * diag(&[1.6, 1.0 / 1.6]), rot2(-1.1) * diag(&[0.7, 1.0 / 0.7])],
    )
    .expect("valid generators")
}

/// R_{δt}∘𝒜 for t ∈ [0, 1].
pub fn rotation_path(delta: f64) -> CocyclePath {
    CocyclePath::plane_rotation(shift_cocycle(), delta).expect("valid path")
}

/// Uniform weights on the orbits of period ≤ 3 except the fixed points.
pub fn orbit_measure() -> InvariantMeasure {
    let words = ["01", "001", "011"];
    InvariantMeasure::atoms(
        words
            .iter()
            .map(|w| (PeriodicOrbit::from_str_word(w).expect("word"), num_rational::Ratio::new(1, words.len() as u64)))
            .collect(),
    )
}

/// Schrödinger-type cocycle (E − 2λcos 2πx, −1; 1, 0) over a golden-mean rotation.
pub fn schrodinger(e: f64, lambda: f64) -> MatrixCocycle {
    let sys = SymbolicSystem::rotation(RotationAngle::golden(12));
    let h0 = Harmonic { k: 0, cos: Mat::from_row_slice(2, 2, &[e, -1.0, 1.0, 0.0]), sin: Mat::zeros(2, 2) };
    let h1 = Harmonic { k: 1, cos: Mat::from_row_slice(2, 2, &[-2.0 * lambda, 0.0, 0.0, 0.0]), sin: Mat::zeros(2, 2) };
    MatrixCocycle::new(sys, 2, Generator::TrigPolynomial { harmonics: vec![h0, h1] }).expect("valid generator")
}

/// Two rotation blocks of different size in d = 4.
pub fn block_cocycle() -> MatrixCocycle {
    MatrixCocycle::constant(SymbolicSystem::full_shift(2), block_diag(&[rot2(0.9) * 2.0, rot2(0.3) * 0.5]))
        .expect("valid generator")
}
