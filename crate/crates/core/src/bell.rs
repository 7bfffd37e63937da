//! The four Bell states and their stabilizer signs.

use crate::pauli::{Axis, Pauli};
use crate::qstate::C64;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BellKind {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BellKind {
    pub const ALL: [BellKind; 4] = [BellKind::PhiPlus, BellKind::PhiMinus, BellKind::PsiPlus, BellKind::PsiMinus];

    pub fn vector(self) -> [C64; 4] {
        let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let o = C64::new(0.0, 0.0);
        match self {
            BellKind::PhiPlus => [h, o, o, h],
            BellKind::PhiMinus => [h, o, o, -h],
            BellKind::PsiPlus => [o, h, h, o],
            BellKind::PsiMinus => [o, h, -h, o],
        }
    }

    /// Eigenvalue of `σ_α ⊗ σ_α` on this state.
    pub fn sign(self, axis: Axis) -> i8 {
        let row = match self {
            BellKind::PhiPlus => [1, -1, 1],
            BellKind::PhiMinus => [-1, 1, 1],
            BellKind::PsiPlus => [1, 1, -1],
            BellKind::PsiMinus => [-1, -1, -1],
        };
        row[axis.index()]
    }

    /// The Pauli `σ` with `(σ ⊗ I)|Ψ⁻⟩ ∝ |self⟩`.
    pub fn byproduct(self) -> Pauli {
        match self {
            BellKind::PhiPlus => Pauli::Y,
            BellKind::PhiMinus => Pauli::X,
            BellKind::PsiPlus => Pauli::Z,
            BellKind::PsiMinus => Pauli::I,
        }
    }

    pub fn from_byproduct(p: Pauli) -> BellKind {
        match p {
            Pauli::Y => BellKind::PhiPlus,
            Pauli::X => BellKind::PhiMinus,
            Pauli::Z => BellKind::PsiPlus,
            Pauli::I => BellKind::PsiMinus,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        ["phi+", "phi-", "psi+", "psi-"][self.index()]
    }

    pub fn parse(s: &str) -> Option<BellKind> {
        BellKind::ALL.into_iter().find(|b| b.name() == s)
    }
}

impl fmt::Display for BellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
