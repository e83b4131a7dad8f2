//! Standard fixed morphisms on small wires.

use std::f64::consts::PI;

use crate::tensor::{Mat, Morphism, WireType, C64, I, ONE, ZERO};

fn qubit() -> WireType {
    WireType::qudit(2)
}

fn on_qubit(entries: [C64; 4]) -> Morphism {
    Morphism::from_rows(qubit(), qubit(), &entries).expect("2x2")
}

pub fn pauli_x() -> Morphism {
    on_qubit([ZERO, ONE, ONE, ZERO])
}

pub fn pauli_y() -> Morphism {
    on_qubit([ZERO, -I, I, ZERO])
}

pub fn pauli_z() -> Morphism {
    on_qubit([ONE, ZERO, ZERO, -ONE])
}

pub fn hadamard() -> Morphism {
    let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    on_qubit([h, h, h, -h])
}

/// `diag(1, i)`.
pub fn phase_s() -> Morphism {
    on_qubit([ONE, ZERO, ZERO, I])
}

/// Controlled-X with the first factor as control.
pub fn cnot() -> Morphism {
    let w = WireType::new(vec![2, 2]);
    let mut m = Mat::zeros(4, 4);
    m[(0, 0)] = ONE;
    m[(1, 1)] = ONE;
    m[(2, 3)] = ONE;
    m[(3, 2)] = ONE;
    Morphism::new(w.clone(), w, m).expect("4x4")
}

/// Exchange of two `d`-dimensional factors.
pub fn swap(d: usize) -> Morphism {
    let w = WireType::qudit(d);
    Morphism::braid(&w, &w)
}

/// Discrete Fourier transform on `d` levels; the Hadamard gate for `d = 2`.
pub fn dft(d: usize) -> Morphism {
    let w = WireType::qudit(d);
    let norm = 1.0 / (d as f64).sqrt();
    let m = Mat::from_fn(d, d, |r, c| {
        C64::from_polar(norm, 2.0 * PI * (r * c) as f64 / d as f64)
    });
    Morphism::new(w.clone(), w, m).expect("square")
}

/// Rank-one projector `|k⟩⟨k|` on `d` levels.
pub fn projector(d: usize, k: usize) -> Morphism {
    let w = WireType::qudit(d);
    let mut m = Mat::zeros(d, d);
    m[(k, k)] = ONE;
    Morphism::new(w.clone(), w, m).expect("square")
}

/// Cyclic shift `|k⟩ ↦ |k+1 mod d⟩`.
pub fn shift(d: usize) -> Morphism {
    let w = WireType::qudit(d);
    let m = Mat::from_fn(d, d, |r, c| if r == (c + 1) % d { ONE } else { ZERO });
    Morphism::new(w.clone(), w, m).expect("square")
}
