//! Dense statevector engine.
//!
//! Basis order is big-endian: qubit `q` of an `n`-qubit register is bit
//! `n - 1 - q` of the amplitude index.

use crate::error::{Error, Result};
use crate::numeric::policy;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

pub type C64 = Complex64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    num_qubits: usize,
    amps: Vec<C64>,
}

/// Dense operator with an optional qubit support.
#[derive(Clone, Debug, PartialEq)]
pub struct LinOp {
    matrix: DMatrix<C64>,
    support: Option<Vec<usize>>,
}

#[derive(Clone, Debug)]
pub struct MeasurementRecord {
    pub outcome_index: usize,
    pub probability: f64,
    pub post_state: PureState,
}

fn check_cap(n: usize) -> Result<()> {
    let cap = policy().max_qubits;
    if n > cap {
        return Err(Error::QubitCap { requested: n, cap });
    }
    Ok(())
}

fn check_targets(n: usize, targets: &[usize]) -> Result<()> {
    for (i, &t) in targets.iter().enumerate() {
        if t >= n {
            return Err(Error::QubitOutOfRange { qubit: t, num_qubits: n });
        }
        if targets[..i].contains(&t) {
            return Err(Error::DuplicateQubit(t));
        }
    }
    Ok(())
}

/// Offsets of the `2^k` sub-basis states of `targets` and the mask of their bits.
fn target_layout(n: usize, targets: &[usize]) -> (Vec<usize>, usize) {
    let k = targets.len();
    let bits: Vec<usize> = targets.iter().map(|&t| 1usize << (n - 1 - t)).collect();
    let mask = bits.iter().fold(0, |m, b| m | b);
    let offsets = (0..1usize << k)
        .map(|j| {
            (0..k)
                .filter(|&t| (j >> (k - 1 - t)) & 1 == 1)
                .fold(0, |acc, t| acc | bits[t])
        })
        .collect();
    (offsets, mask)
}

/// Iterate every index whose `mask` bits are clear, in increasing order.
fn for_each_base(n: usize, mask: usize, mut f: impl FnMut(usize)) {
    let mut positions: Vec<u32> = (0..n as u32).filter(|&p| mask >> p & 1 == 1).collect();
    positions.sort_unstable();
    let free = n - positions.len();
    for r in 0..1usize << free {
        let mut base = r;
        for &p in &positions {
            let low = base & ((1 << p) - 1);
            base = ((base >> p) << (p + 1)) | low;
        }
        f(base);
    }
}

fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum()
}

impl PureState {
    /// `|0…0⟩` on `n` qubits.
    pub fn zero(n: usize) -> Result<Self> {
        Self::basis(n, 0)
    }

    pub fn basis(n: usize, index: usize) -> Result<Self> {
        check_cap(n)?;
        if index >> n != 0 {
            return Err(Error::InvalidParameter(format!("basis index {index} on {n} qubits")));
        }
        let mut amps = vec![ZERO; 1 << n];
        amps[index] = ONE;
        Ok(Self { num_qubits: n, amps })
    }

    /// Build from raw amplitudes, normalizing them.
    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self> {
        let len = amps.len();
        if len == 0 || !len.is_power_of_two() {
            return Err(Error::DimensionMismatch { expected: len.next_power_of_two(), found: len });
        }
        let n = len.trailing_zeros() as usize;
        check_cap(n)?;
        let mut s = Self { num_qubits: n, amps };
        s.normalize()?;
        Ok(s)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        norm_sqr(&self.amps).sqrt()
    }

    pub(crate) fn normalize(&mut self) -> Result<f64> {
        let nrm = self.norm();
        if nrm == 0.0 || !nrm.is_finite() {
            return Err(Error::ZeroNorm);
        }
        let inv = 1.0 / nrm;
        for a in &mut self.amps {
            *a *= inv;
        }
        Ok(nrm)
    }

    pub fn inner(&self, other: &PureState) -> Result<C64> {
        if self.num_qubits != other.num_qubits {
            return Err(Error::DimensionMismatch { expected: self.num_qubits, found: other.num_qubits });
        }
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum())
    }

    /// `self ⊗ other`, with `other`'s qubits appended after `self`'s.
    pub fn tensor(&self, other: &PureState) -> Result<PureState> {
        let n = self.num_qubits + other.num_qubits;
        check_cap(n)?;
        let mut amps = Vec::with_capacity(1 << n);
        for a in &self.amps {
            amps.extend(other.amps.iter().map(|b| a * b));
        }
        Ok(PureState { num_qubits: n, amps })
    }

    /// Reorder qubits: qubit `i` of the result is qubit `order[i]` of `self`.
    pub fn permute_qubits(&self, order: &[usize]) -> Result<PureState> {
        let n = self.num_qubits;
        if order.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: order.len() });
        }
        check_targets(n, order)?;
        let mut amps = vec![ZERO; self.amps.len()];
        for (old, a) in self.amps.iter().enumerate() {
            let mut new = 0usize;
            for (i, &q) in order.iter().enumerate() {
                if old >> (n - 1 - q) & 1 == 1 {
                    new |= 1 << (n - 1 - i);
                }
            }
            amps[new] = *a;
        }
        Ok(PureState { num_qubits: n, amps })
    }

    /// In-place gate application; see [`apply_gate`].
    pub fn apply(&mut self, gate: &LinOp, targets: &[usize]) -> Result<()> {
        let dev = gate.unitarity_deviation();
        if dev > policy().unitary_tol {
            return Err(Error::NotUnitary { deviation: dev });
        }
        self.apply_matrix(gate.matrix(), targets)?;
        self.normalize()?;
        Ok(())
    }

    /// Apply an arbitrary (not necessarily unitary) matrix without renormalizing.
    pub(crate) fn apply_matrix(&mut self, m: &DMatrix<C64>, targets: &[usize]) -> Result<()> {
        let n = self.num_qubits;
        check_targets(n, targets)?;
        let dim = 1usize << targets.len();
        if m.nrows() != dim || m.ncols() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: m.nrows() });
        }
        let (offsets, mask) = target_layout(n, targets);
        let rows: Vec<C64> = (0..dim).flat_map(|i| (0..dim).map(move |j| (i, j))).map(|(i, j)| m[(i, j)]).collect();
        let amps = &mut self.amps;
        let mut buf = vec![ZERO; dim];
        for_each_base(n, mask, |base| {
            for (b, &o) in buf.iter_mut().zip(&offsets) {
                *b = amps[base + o];
            }
            for (i, &o) in offsets.iter().enumerate() {
                let row = &rows[i * dim..(i + 1) * dim];
                amps[base + o] = row.iter().zip(&buf).map(|(r, b)| r * b).sum();
            }
        });
        Ok(())
    }

    /// Apply a Pauli string given as big-endian `x` and `z` bit masks, times `phase`.
    /// The operator is `phase · X^x Z^z`.
    pub(crate) fn apply_xz(&mut self, x: usize, z: usize, phase: C64) {
        let old = std::mem::take(&mut self.amps);
        let mut amps = vec![ZERO; old.len()];
        for (b, a) in old.iter().enumerate() {
            let sign = if (z & b).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
            amps[b ^ x] = a * phase * sign;
        }
        self.amps = amps;
    }

    /// `⟨ψ| phase · X^x Z^z |ψ⟩`.
    pub(crate) fn expect_xz(&self, x: usize, z: usize, phase: C64) -> C64 {
        let s: C64 = self
            .amps
            .iter()
            .enumerate()
            .map(|(b, a)| {
                let sign = if (z & b).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
                self.amps[b ^ x].conj() * a * sign
            })
            .sum();
        s * phase
    }

    /// Contract `targets` against `⟨bra|` and drop them. Returns the
    /// renormalized remainder and the squared norm before renormalization.
    pub fn contract(&self, targets: &[usize], bra: &[C64]) -> Result<(PureState, f64)> {
        let n = self.num_qubits;
        check_targets(n, targets)?;
        let k = targets.len();
        if bra.len() != 1 << k {
            return Err(Error::DimensionMismatch { expected: 1 << k, found: bra.len() });
        }
        let (offsets, mask) = target_layout(n, targets);
        let mut amps = Vec::with_capacity(1 << (n - k));
        for_each_base(n, mask, |base| {
            amps.push(offsets.iter().zip(bra).map(|(&o, c)| c.conj() * self.amps[base + o]).sum());
        });
        let p = norm_sqr(&amps);
        let mut s = PureState { num_qubits: n - k, amps };
        if p > 0.0 {
            s.normalize()?;
        }
        Ok((s, p))
    }

    /// `⟨ψ|O|ψ⟩` for `op` acting on `targets`.
    pub fn expectation(&self, op: &LinOp, targets: &[usize]) -> Result<C64> {
        let mut phi = self.clone();
        phi.apply_matrix(op.matrix(), targets)?;
        self.inner(&phi)
    }
}

impl LinOp {
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch { expected: matrix.nrows(), found: matrix.ncols() });
        }
        Ok(Self { matrix, support: None })
    }

    pub fn with_support(matrix: DMatrix<C64>, support: Vec<usize>) -> Result<Self> {
        let mut op = Self::new(matrix)?;
        if op.dim() != 1 << support.len() {
            return Err(Error::DimensionMismatch { expected: 1 << support.len(), found: op.dim() });
        }
        check_targets(usize::MAX, &support)?;
        op.support = Some(support);
        Ok(op)
    }

    /// Row-major construction.
    pub fn from_rows(dim: usize, entries: &[C64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, found: entries.len() });
        }
        Self::new(DMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn identity(dim: usize) -> Self {
        Self { matrix: DMatrix::identity(dim, dim), support: None }
    }

    /// `|v⟩⟨v|` for a (not necessarily normalized) vector.
    pub fn projector(v: &[C64]) -> Self {
        let nrm: f64 = norm_sqr(v);
        let m = DMatrix::from_fn(v.len(), v.len(), |i, j| v[i] * v[j].conj() / nrm);
        Self { matrix: m, support: None }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn support(&self) -> Option<&[usize]> {
        self.support.as_deref()
    }

    pub fn dagger(&self) -> Self {
        Self { matrix: self.matrix.adjoint(), support: self.support.clone() }
    }

    pub fn mul(&self, other: &LinOp) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        Ok(Self { matrix: &self.matrix * &other.matrix, support: self.support.clone() })
    }

    pub fn kron(&self, other: &LinOp) -> Self {
        Self { matrix: self.matrix.kronecker(&other.matrix), support: None }
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    fn max_dev(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    pub fn unitarity_deviation(&self) -> f64 {
        let p = self.matrix.adjoint() * &self.matrix;
        Self::max_dev(&p, &DMatrix::identity(self.dim(), self.dim()))
    }

    pub fn is_unitary(&self) -> bool {
        self.unitarity_deviation() <= policy().unitary_tol
    }

    pub fn is_hermitian(&self) -> bool {
        Self::max_dev(&self.matrix, &self.matrix.adjoint()) <= policy().operator_tol
    }

    pub fn is_projector(&self) -> bool {
        self.is_hermitian() && Self::max_dev(&(&self.matrix * &self.matrix), &self.matrix) <= policy().operator_tol
    }

    /// Largest entrywise deviation from `other`.
    pub fn distance(&self, other: &LinOp) -> f64 {
        if self.dim() != other.dim() {
            return f64::INFINITY;
        }
        Self::max_dev(&self.matrix, &other.matrix)
    }
}

/// Apply `gate` to `targets` of `state`, returning the new state.
pub fn apply_gate(state: &PureState, gate: &LinOp, targets: &[usize]) -> Result<PureState> {
    let mut s = state.clone();
    s.apply(gate, targets)?;
    Ok(s)
}

fn measured_support(state: &PureState, ops: &[LinOp]) -> Result<Vec<usize>> {
    let first = ops.first().ok_or_else(|| Error::InvalidOperator("empty operator list".into()))?;
    let support = match first.support() {
        Some(s) => s.to_vec(),
        None => (0..state.num_qubits()).collect(),
    };
    for op in ops {
        let s = op.support().map(<[usize]>::to_vec).unwrap_or_else(|| (0..state.num_qubits()).collect());
        if s != support {
            return Err(Error::InvalidOperator("operators act on different supports".into()));
        }
        if op.dim() != 1 << support.len() {
            return Err(Error::DimensionMismatch { expected: 1 << support.len(), found: op.dim() });
        }
    }
    check_targets(state.num_qubits(), &support)?;
    Ok(support)
}

fn check_projectors(projectors: &[LinOp]) -> Result<()> {
    let dim = projectors[0].dim();
    let mut sum = DMatrix::<C64>::zeros(dim, dim);
    for p in projectors {
        if !p.is_projector() {
            return Err(Error::InvalidOperator("not a Hermitian idempotent".into()));
        }
        sum += p.matrix();
    }
    let dev = LinOp::max_dev(&sum, &DMatrix::identity(dim, dim));
    if dev > policy().operator_tol {
        return Err(Error::Incomplete { deviation: dev });
    }
    Ok(())
}

fn branch_states(state: &PureState, ops: &[LinOp], support: &[usize]) -> Result<Vec<(PureState, f64)>> {
    ops.iter()
        .map(|op| {
            let mut s = state.clone();
            s.apply_matrix(op.matrix(), support)?;
            let p = norm_sqr(&s.amps);
            Ok((s, p))
        })
        .collect()
}

pub(crate) fn sample_index(probs: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = probs.iter().sum();
    let mut r = rng.random::<f64>() * total;
    for (i, &p) in probs.iter().enumerate() {
        if r < p {
            return i;
        }
        r -= p;
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

fn finish(outcome: usize, mut s: PureState, p: f64) -> Result<MeasurementRecord> {
    s.normalize()?;
    Ok(MeasurementRecord { outcome_index: outcome, probability: p.clamp(0.0, 1.0), post_state: s })
}

/// Projective measurement with a sampled outcome.
pub fn measure(state: &PureState, projectors: &[LinOp], rng: &mut impl Rng) -> Result<MeasurementRecord> {
    let support = measured_support(state, projectors)?;
    check_projectors(projectors)?;
    let mut branches = branch_states(state, projectors, &support)?;
    let probs: Vec<f64> = branches.iter().map(|b| b.1).collect();
    let k = sample_index(&probs, rng);
    let (s, p) = branches.swap_remove(k);
    finish(k, s, p)
}

/// Projective measurement with a chosen outcome.
pub fn measure_forced(state: &PureState, projectors: &[LinOp], outcome: usize) -> Result<MeasurementRecord> {
    let support = measured_support(state, projectors)?;
    check_projectors(projectors)?;
    let op = projectors
        .get(outcome)
        .ok_or_else(|| Error::InvalidParameter(format!("outcome {outcome} of {}", projectors.len())))?;
    let mut s = state.clone();
    s.apply_matrix(op.matrix(), &support)?;
    let p = norm_sqr(&s.amps);
    if p < policy().min_forced_probability {
        return Err(Error::ZeroProbability { outcome, probability: p });
    }
    finish(outcome, s, p)
}

/// Generalized measurement given Kraus operators `K_k` with `Σ K_k†K_k = I`.
pub fn measure_kraus(state: &PureState, kraus: &[LinOp], rng: &mut impl Rng) -> Result<MeasurementRecord> {
    let support = measured_support(state, kraus)?;
    let dim = kraus[0].dim();
    let mut sum = DMatrix::<C64>::zeros(dim, dim);
    for k in kraus {
        sum += k.matrix().adjoint() * k.matrix();
    }
    let dev = LinOp::max_dev(&sum, &DMatrix::identity(dim, dim));
    if dev > policy().operator_tol {
        return Err(Error::Incomplete { deviation: dev });
    }
    let mut branches = branch_states(state, kraus, &support)?;
    let probs: Vec<f64> = branches.iter().map(|b| b.1).collect();
    let k = sample_index(&probs, rng);
    let (s, p) = branches.swap_remove(k);
    finish(k, s, p)
}

/// Reduced density matrix on `keep`, in the order given.
pub fn reduced_density(state: &PureState, keep: &[usize]) -> Result<LinOp> {
    if keep.is_empty() {
        return Err(Error::EmptyKeep);
    }
    let n = state.num_qubits();
    check_targets(n, keep)?;
    let (offsets, mask) = target_layout(n, keep);
    let d = offsets.len();
    let mut rho = DMatrix::<C64>::zeros(d, d);
    let a = state.amplitudes();
    for_each_base(n, mask, |base| {
        for i in 0..d {
            let ai = a[base + offsets[i]];
            if ai == ZERO {
                continue;
            }
            for j in 0..d {
                rho[(i, j)] += ai * a[base + offsets[j]].conj();
            }
        }
    });
    LinOp::with_support(rho, keep.to_vec())
}

/// `|⟨a|b⟩|²`.
pub fn fidelity(a: &PureState, b: &PureState) -> Result<f64> {
    Ok(a.inner(b)?.norm_sqr().min(1.0))
}

/// Fidelity between a pure state and a density matrix, `⟨ψ|ρ|ψ⟩`.
pub fn fidelity_mixed(psi: &[C64], rho: &LinOp) -> Result<f64> {
    if psi.len() != rho.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), found: psi.len() });
    }
    let v = nalgebra::DVector::from_column_slice(psi);
    Ok((v.adjoint() * rho.matrix() * &v)[(0, 0)].re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn singlet() -> PureState {
        PureState::from_amplitudes(vec![ZERO, c(1.0), c(-1.0), ZERO]).unwrap()
    }

    #[test]
    fn x_flips_zero() {
        let s = apply_gate(&PureState::zero(1).unwrap(), &gates::x(), &[0]).unwrap();
        assert_eq!(s.amplitudes()[1], ONE);
    }

    #[test]
    fn big_endian_order() {
        let s = apply_gate(&PureState::zero(3).unwrap(), &gates::x(), &[0]).unwrap();
        assert_eq!(s.amplitudes()[4], ONE);
    }

    #[test]
    fn rejects_bad_gates_and_targets() {
        let s = PureState::zero(2).unwrap();
        let bad = LinOp::from_rows(2, &[c(1.0), c(1.0), ZERO, c(1.0)]).unwrap();
        assert!(matches!(apply_gate(&s, &bad, &[0]), Err(Error::NotUnitary { .. })));
        assert!(matches!(apply_gate(&s, &gates::x(), &[2]), Err(Error::QubitOutOfRange { .. })));
        assert!(matches!(apply_gate(&s, &gates::cx(), &[1, 1]), Err(Error::DuplicateQubit(1))));
    }

    #[test]
    fn cap_enforced() {
        assert!(matches!(PureState::zero(27), Err(Error::QubitCap { .. })));
    }

    #[test]
    fn measure_zero_is_certain() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p0 = LinOp::projector(&[ONE, ZERO]);
        let p1 = LinOp::projector(&[ZERO, ONE]);
        let r = measure(&PureState::zero(1).unwrap(), &[p0, p1], &mut rng).unwrap();
        assert_eq!(r.outcome_index, 0);
        assert!((r.probability - 1.0).abs() < 1e-12);
    }

    #[test]
    fn incomplete_projectors_rejected() {
        let p0 = LinOp::projector(&[ONE, ZERO]);
        let r = measure_forced(&PureState::zero(1).unwrap(), &[p0], 0);
        assert!(matches!(r, Err(Error::Incomplete { .. })));
    }

    #[test]
    fn forced_zero_probability_rejected() {
        let p0 = LinOp::projector(&[ONE, ZERO]);
        let p1 = LinOp::projector(&[ZERO, ONE]);
        let r = measure_forced(&PureState::zero(1).unwrap(), &[p0, p1], 1);
        assert!(matches!(r, Err(Error::ZeroProbability { .. })));
    }

    #[test]
    fn bell_measurement_on_singlet_pair() {
        // Brute force: probabilities of each Bell projector on qubits (1,2).
        let psi = singlet().tensor(&singlet()).unwrap();
        let bells = crate::bell::BellKind::ALL.map(|b| {
            let m = LinOp::projector(&b.vector()).matrix().clone();
            LinOp::with_support(m, vec![1, 2]).unwrap()
        });
        for k in 0..4 {
            let r = measure_forced(&psi, &bells, k).unwrap();
            assert!((r.probability - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn singlet_marginal_is_maximally_mixed() {
        let rho = reduced_density(&singlet(), &[0]).unwrap();
        let half = LinOp::new(DMatrix::identity(2, 2) * c(0.5)).unwrap();
        assert!(rho.distance(&half) < 1e-12);
        assert!(matches!(reduced_density(&singlet(), &[]), Err(Error::EmptyKeep)));
    }

    #[test]
    fn fidelity_basics() {
        let z = PureState::zero(1).unwrap();
        let o = PureState::basis(1, 1).unwrap();
        assert!((fidelity(&z, &z).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(fidelity(&z, &o).unwrap(), 0.0);
        assert!(fidelity(&z, &singlet()).is_err());
    }

    #[test]
    fn contract_removes_qubits() {
        let (rest, p) = singlet().contract(&[0], &[ONE, ZERO]).unwrap();
        assert!((p - 0.5).abs() < 1e-12);
        assert!((rest.amplitudes()[1].re.abs() - 1.0).abs() < 1e-12);
    }

    fn arb_state(n: usize) -> impl Strategy<Value = PureState> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1 << n)
            .prop_filter("nonzero", |v| v.iter().any(|(a, b)| a.abs() + b.abs() > 1e-3))
            .prop_map(|v| PureState::from_amplitudes(v.into_iter().map(|(a, b)| C64::new(a, b)).collect()).unwrap())
    }

    fn arb_gate() -> impl Strategy<Value = (LinOp, Vec<usize>)> {
        (0usize..4, 0usize..4, 0usize..4, -3.0f64..3.0).prop_filter_map("distinct", |(k, a, b, t)| {
            if a == b {
                return None;
            }
            Some(match k {
                0 => (gates::h(), vec![a]),
                1 => (gates::ry(t), vec![a]),
                2 => (gates::cx(), vec![a, b]),
                _ => (gates::cry(t), vec![a, b]),
            })
        })
    }

    proptest! {
        #[test]
        fn norm_preserved(psi in arb_state(4), seq in prop::collection::vec(arb_gate(), 0..20)) {
            let mut s = psi;
            for (g, t) in &seq {
                s.apply(g, t).unwrap();
                prop_assert!((s.norm() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn hadamard_twice_is_identity(psi in arb_state(3), q in 0usize..3) {
            let s = apply_gate(&apply_gate(&psi, &gates::h(), &[q]).unwrap(), &gates::h(), &[q]).unwrap();
            prop_assert!((fidelity(&s, &psi).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn reduced_density_follows_permutation(psi in arb_state(4), a in 0usize..4, b in 0usize..4) {
            prop_assume!(a != b);
            let ab = reduced_density(&psi, &[a, b]).unwrap();
            let ba = reduced_density(&psi, &[b, a]).unwrap();
            let swap = gates::swap();
            let conj = swap.mul(&ab).unwrap().mul(&swap).unwrap();
            prop_assert!(conj.distance(&ba) < 1e-12);
            prop_assert!((ab.trace().re - 1.0).abs() < 1e-10);
        }

        #[test]
        fn measurement_probabilities_sum_to_one(psi in arb_state(3), q in 0usize..3) {
            let p0 = LinOp::with_support(LinOp::projector(&[ONE, ZERO]).matrix().clone(), vec![q]).unwrap();
            let p1 = LinOp::with_support(LinOp::projector(&[ZERO, ONE]).matrix().clone(), vec![q]).unwrap();
            let a = measure_forced(&psi, &[p0.clone(), p1.clone()], 0).map(|r| r.probability).unwrap_or(0.0);
            let b = measure_forced(&psi, &[p0, p1], 1).map(|r| r.probability).unwrap_or(0.0);
            prop_assert!((a + b - 1.0).abs() < 1e-10);
        }
    }
}
