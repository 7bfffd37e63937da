//! Pauli letters and phased Pauli strings over up to 64 qubits.
//!
//! A string is stored as `i^phase · X^x Z^z` with big-endian bit masks over a
//! register of `n` qubits, so `Y = i·X·Z`.

use crate::gates;
use crate::qstate::{LinOp, PureState, C64};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn letter(self) -> char {
        ['x', 'y', 'z'][self.index()]
    }

    pub fn pauli(self) -> Pauli {
        [Pauli::X, Pauli::Y, Pauli::Z][self.index()]
    }

    pub fn parse(s: &str) -> Option<Axis> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Some(Axis::X),
            "y" => Some(Axis::Y),
            "z" => Some(Axis::Z),
            _ => None,
        }
    }

    /// The third axis, given two distinct ones.
    pub fn other(a: Axis, b: Axis) -> Axis {
        Axis::ALL[3 - a.index() - b.index()]
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Single-qubit Pauli up to phase. Multiplication forms the Klein group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Pauli {
    #[default]
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn from_bits(x: bool, z: bool) -> Pauli {
        match (x, z) {
            (false, false) => Pauli::I,
            (true, false) => Pauli::X,
            (true, true) => Pauli::Y,
            (false, true) => Pauli::Z,
        }
    }

    pub fn bits(self) -> (bool, bool) {
        match self {
            Pauli::I => (false, false),
            Pauli::X => (true, false),
            Pauli::Y => (true, true),
            Pauli::Z => (false, true),
        }
    }

    /// Product modulo phase.
    pub fn times(self, o: Pauli) -> Pauli {
        let (a, b) = self.bits();
        let (c, d) = o.bits();
        Pauli::from_bits(a ^ c, b ^ d)
    }

    pub fn axis(self) -> Option<Axis> {
        match self {
            Pauli::I => None,
            Pauli::X => Some(Axis::X),
            Pauli::Y => Some(Axis::Y),
            Pauli::Z => Some(Axis::Z),
        }
    }

    pub fn letter(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    pub fn parse(c: char) -> Option<Pauli> {
        match c.to_ascii_uppercase() {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    pub fn matrix(self) -> LinOp {
        match self {
            Pauli::I => gates::i2(),
            Pauli::X => gates::x(),
            Pauli::Y => gates::y(),
            Pauli::Z => gates::z(),
        }
    }
}

impl fmt::Display for Pauli {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PauliString {
    n: usize,
    x: u64,
    z: u64,
    /// Power of `i`, mod 4.
    phase: u8,
}

impl PauliString {
    pub fn identity(n: usize) -> Self {
        assert!(n <= 64, "Pauli strings hold at most 64 qubits");
        Self { n, x: 0, z: 0, phase: 0 }
    }

    /// `sign · σ` on one qubit.
    pub fn single(n: usize, q: usize, p: Pauli) -> Self {
        let mut s = Self::identity(n);
        s.times_at(q, p);
        s
    }

    fn bit(&self, q: usize) -> u64 {
        1u64 << (self.n - 1 - q)
    }

    /// Multiply `p` onto qubit `q` from the right.
    pub fn times_at(&mut self, q: usize, p: Pauli) {
        let other = {
            let (xb, zb) = p.bits();
            let b = self.bit(q);
            let mut o = Self::identity(self.n);
            if xb {
                o.x |= b;
            }
            if zb {
                o.z |= b;
            }
            if p == Pauli::Y {
                o.phase = 1;
            }
            o
        };
        *self = self.mul(&other);
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn get(&self, q: usize) -> Pauli {
        let b = self.bit(q);
        Pauli::from_bits(self.x & b != 0, self.z & b != 0)
    }

    /// Overall coefficient of the string written letter-by-letter
    /// (with `Y` as the Hermitian Pauli), as a power of `i`.
    pub fn coefficient(&self) -> u8 {
        let ys = (self.x & self.z).count_ones() as u8;
        (self.phase + 4 - ys % 4) % 4
    }

    /// Real sign of a Hermitian string; `None` if the coefficient is `±i`.
    pub fn sign(&self) -> Option<f64> {
        match self.coefficient() {
            0 => Some(1.0),
            2 => Some(-1.0),
            _ => None,
        }
    }

    /// `i^k` times the string.
    pub fn times_i(&self, k: u8) -> Self {
        Self { phase: (self.phase + k) % 4, ..*self }
    }

    pub fn negate(&self) -> Self {
        Self { phase: (self.phase + 2) % 4, ..*self }
    }

    pub fn mul(&self, o: &PauliString) -> PauliString {
        assert_eq!(self.n, o.n);
        // X^a Z^b X^c Z^d = (-1)^{b·c} X^{a+c} Z^{b+d}
        let swap = (self.z & o.x).count_ones() as u8 % 2;
        PauliString { n: self.n, x: self.x ^ o.x, z: self.z ^ o.z, phase: (self.phase + o.phase + 2 * swap) % 4 }
    }

    pub fn commutes(&self, o: &PauliString) -> bool {
        ((self.x & o.z).count_ones() + (self.z & o.x).count_ones()) % 2 == 0
    }

    pub fn weight(&self) -> usize {
        (self.x | self.z).count_ones() as usize
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.n).filter(|&q| (self.x | self.z) & self.bit(q) != 0).collect()
    }

    /// Restrict to `qubits` (in that order), keeping the coefficient.
    pub fn restrict(&self, qubits: &[usize]) -> PauliString {
        let mut s = PauliString::identity(qubits.len());
        for (i, &q) in qubits.iter().enumerate() {
            s.times_at(i, self.get(q));
        }
        let c = self.coefficient();
        s.phase = (s.phase + c) % 4;
        s
    }

    fn i_pow(p: u8) -> C64 {
        [C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(-1.0, 0.0), C64::new(0.0, -1.0)][p as usize % 4]
    }

    pub fn expectation(&self, psi: &PureState) -> C64 {
        assert_eq!(self.n, psi.num_qubits());
        psi.expect_xz(self.x as usize, self.z as usize, Self::i_pow(self.phase))
    }

    pub fn apply(&self, psi: &mut PureState) {
        assert_eq!(self.n, psi.num_qubits());
        psi.apply_xz(self.x as usize, self.z as usize, Self::i_pow(self.phase));
    }

    fn row(&self) -> u128 {
        ((self.x as u128) << 64) | self.z as u128
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pre = ["+", "+i", "-", "-i"][self.coefficient() as usize];
        write!(f, "{pre}")?;
        for q in 0..self.n {
            write!(f, "{}", self.get(q))?;
        }
        Ok(())
    }
}

/// Rank over GF(2) of the symplectic vectors of `gens`.
pub fn gf2_rank(gens: &[PauliString]) -> usize {
    let mut rows: Vec<u128> = gens.iter().map(PauliString::row).collect();
    let mut rank = 0;
    for bit in (0..128).rev() {
        let m = 1u128 << bit;
        if let Some(p) = (rank..rows.len()).find(|&i| rows[i] & m != 0) {
            rows.swap(rank, p);
            let pivot = rows[rank];
            for (i, r) in rows.iter_mut().enumerate() {
                if i != rank && *r & m != 0 {
                    *r ^= pivot;
                }
            }
            rank += 1;
        }
    }
    rank
}

/// Stabilizer update after measuring `m`: the first generator that
/// anticommutes with `m` is replaced by `outcome · m` and used to fix the rest.
/// Returns `None` if `m` commutes with every generator.
pub fn measurement_update(gens: &mut [PauliString], m: &PauliString, outcome_negative: bool) -> Option<usize> {
    let k = gens.iter().position(|g| !g.commutes(m))?;
    let pivot = gens[k];
    for (i, g) in gens.iter_mut().enumerate() {
        if i != k && !g.commutes(m) {
            *g = g.mul(&pivot);
        }
    }
    gens[k] = if outcome_negative { m.negate() } else { *m };
    Some(k)
}
