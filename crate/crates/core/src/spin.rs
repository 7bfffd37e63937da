//! Spin-S operators and the symmetric-subspace embedding of a spin into
//! `2S` virtual qubits.
//!
//! Spins are passed as `two_s = 2S`. The spin basis is ordered
//! `m = S, S-1, …, -S`, and `|D(2S,k)⟩` (the uniform superposition of
//! strings with `k` ones) is identified with `|S, S-k⟩`.

use crate::error::{Error, Result};
use crate::pauli::Axis;
use crate::qstate::{LinOp, C64, ZERO};
use nalgebra::DMatrix;

/// Normalized Dicke vector `|D(n,k)⟩` on `n` qubits.
pub fn dicke(n: usize, k: usize) -> Vec<C64> {
    let count = (0..1usize << n).filter(|b| b.count_ones() as usize == k).count();
    let amp = C64::new(1.0 / (count as f64).sqrt(), 0.0);
    (0..1usize << n).map(|b| if b.count_ones() as usize == k { amp } else { ZERO }).collect()
}

/// The `2^n × (n+1)` isometry whose column `k` is `|D(n,k)⟩`.
pub fn dicke_isometry(n: usize) -> DMatrix<C64> {
    let mut w = DMatrix::zeros(1 << n, n + 1);
    for k in 0..=n {
        for (b, a) in dicke(n, k).into_iter().enumerate() {
            w[(b, k)] = a;
        }
    }
    w
}

/// Projector onto the symmetric subspace of `n` qubits.
pub fn symmetric_projector(n: usize) -> LinOp {
    let w = dicke_isometry(n);
    LinOp::new(&w * w.adjoint()).expect("square")
}

/// `(S_x, S_y, S_z)` for spin `two_s / 2`.
pub fn spin_matrices(two_s: usize) -> [LinOp; 3] {
    let d = two_s + 1;
    let s = two_s as f64 / 2.0;
    let mut plus = DMatrix::<C64>::zeros(d, d);
    for i in 1..d {
        let m = s - i as f64;
        plus[(i - 1, i)] = C64::new((s * (s + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
    }
    let minus = plus.adjoint();
    let sx = (&plus + &minus) * C64::new(0.5, 0.0);
    let sy = (&plus - &minus) * C64::new(0.0, -0.5);
    let sz = DMatrix::from_fn(d, d, |i, j| if i == j { C64::new(s - i as f64, 0.0) } else { ZERO });
    [sx, sy, sz].map(|m| LinOp::new(m).expect("square"))
}

/// `exp(iθ S_α)` computed from the eigendecomposition of `S_α`.
pub fn spin_rotation(two_s: usize, axis: Axis, theta: f64) -> LinOp {
    let s = spin_matrices(two_s)[axis.index()].matrix().clone();
    let eig = s.symmetric_eigen();
    let phases = eig.eigenvalues.map(|l| C64::from_polar(1.0, theta * l));
    let u = &eig.eigenvectors;
    let m = u * DMatrix::from_diagonal(&phases) * u.adjoint();
    LinOp::new(m).expect("square")
}

/// `exp(iπ S_α)`.
pub fn pi_rotation(two_s: usize, axis: Axis) -> LinOp {
    spin_rotation(two_s, axis, std::f64::consts::PI)
}

/// Lift a `(2S+1)`-dimensional physical operator to the `2S` virtual qubits:
/// `W O W†`, with `W` the Dicke isometry. It vanishes off the symmetric subspace.
pub fn spin_embed(two_s: usize, op: &LinOp) -> Result<LinOp> {
    if op.dim() != two_s + 1 {
        return Err(Error::DimensionMismatch { expected: two_s + 1, found: op.dim() });
    }
    let w = dicke_isometry(two_s);
    LinOp::new(&w * op.matrix() * w.adjoint())
}

/// Pull a virtual-qubit operator back to the physical spin: `W† O W`.
pub fn spin_restrict(two_s: usize, op: &LinOp) -> Result<LinOp> {
    if op.dim() != 1 << two_s {
        return Err(Error::DimensionMismatch { expected: 1 << two_s, found: op.dim() });
    }
    let w = dicke_isometry(two_s);
    LinOp::new(w.adjoint() * op.matrix() * &w)
}
