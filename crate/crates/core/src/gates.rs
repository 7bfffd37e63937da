//! Standard gate matrices. Multi-qubit gates list controls first.

use crate::qstate::{LinOp, C64};
use nalgebra::DMatrix;

fn op(dim: usize, rows: &[C64]) -> LinOp {
    LinOp::from_rows(dim, rows).expect("static gate shape")
}

fn r(x: f64) -> C64 {
    C64::new(x, 0.0)
}

pub fn i2() -> LinOp {
    LinOp::identity(2)
}

pub fn x() -> LinOp {
    op(2, &[r(0.0), r(1.0), r(1.0), r(0.0)])
}

pub fn y() -> LinOp {
    op(2, &[r(0.0), C64::new(0.0, -1.0), C64::new(0.0, 1.0), r(0.0)])
}

pub fn z() -> LinOp {
    op(2, &[r(1.0), r(0.0), r(0.0), r(-1.0)])
}

pub fn h() -> LinOp {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    op(2, &[r(s), r(s), r(s), r(-s)])
}

/// `exp(-iθY/2)`.
pub fn ry(theta: f64) -> LinOp {
    let (s, c) = (theta / 2.0).sin_cos();
    op(2, &[r(c), r(-s), r(s), r(c)])
}

/// Block-diagonal controlled version of `u` with `controls` control qubits.
pub fn controlled(u: &LinOp, controls: usize) -> LinOp {
    let d = u.dim();
    let total = d << controls;
    let off = total - d;
    let m = DMatrix::from_fn(total, total, |i, j| {
        if i >= off && j >= off {
            u.matrix()[(i - off, j - off)]
        } else if i == j {
            r(1.0)
        } else {
            r(0.0)
        }
    });
    LinOp::new(m).expect("square")
}

pub fn cx() -> LinOp {
    controlled(&x(), 1)
}

pub fn cz() -> LinOp {
    controlled(&z(), 1)
}

pub fn cry(theta: f64) -> LinOp {
    controlled(&ry(theta), 1)
}

pub fn ccry(theta: f64) -> LinOp {
    controlled(&ry(theta), 2)
}

pub fn swap() -> LinOp {
    let mut m = DMatrix::zeros(4, 4);
    for (i, j) in [(0, 0), (1, 2), (2, 1), (3, 3)] {
        m[(i, j)] = r(1.0);
    }
    LinOp::new(m).expect("square")
}
