//! Matrix-product description of the (deformed) spin-1 chain: tensors,
//! transfer matrices, string order, exact small chains with a bond defect
//! and the closed-form single-site density matrix in the presence of a defect.
//!
//! Physical basis order is `m = +1, 0, -1`.

use crate::error::{Error, Result};
use crate::lattice::{make_lattice, LatticeSpec, SiteGraph};
use crate::pauli::{Axis, Pauli};
use crate::qstate::{LinOp, PureState, C64};
use crate::spin::{pi_rotation, spin_matrices};
use nalgebra::{DMatrix, Matrix2, Matrix4};
use serde::{Deserialize, Serialize};

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn max_abs(m: &Matrix4<C64>) -> f64 {
    m.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

/// `A_{+1}, A_0, A_{-1}` for deformation `a`.
#[derive(Clone, Debug, PartialEq)]
pub struct MpsTensor {
    pub a: f64,
    pub mats: [Matrix2<C64>; 3],
}

impl MpsTensor {
    pub fn new(a: f64) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::InvalidParameter(format!("deformation {a} must be positive")));
        }
        let n = (2.0 / (1.0 + 2.0 * a * a)).sqrt();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let plus = Matrix2::new(c(0.0), c(0.0), c(-a * n), c(0.0));
        let zero = Matrix2::new(c(h * n), c(0.0), c(0.0), c(-h * n));
        let minus = Matrix2::new(c(0.0), c(a * n), c(0.0), c(0.0));
        Ok(Self { a, mats: [plus, zero, minus] })
    }

    /// `Σ_{s,s'} O_{s's} A_s ⊗ A*_{s'}`; the plain transfer matrix for `O = I`.
    pub fn transfer(&self, op: Option<&DMatrix<C64>>) -> Matrix4<C64> {
        let mut m = Matrix4::zeros();
        for s in 0..3 {
            for t in 0..3 {
                let w = match op {
                    Some(o) => o[(t, s)],
                    None if s == t => c(1.0),
                    None => continue,
                };
                if w.norm() == 0.0 {
                    continue;
                }
                m += self.mats[s].kronecker(&self.mats[t].map(|x| x.conj())) * w;
            }
        }
        m
    }
}

/// `lim M^r / Tr M^r` by repeated squaring.
pub fn environment(t: &MpsTensor) -> Matrix4<C64> {
    let mut m = t.transfer(None);
    for _ in 0..200 {
        let next = m * m;
        let next = next / next.trace();
        if max_abs(&(next - m)) < 1e-15 {
            return next;
        }
        m = next;
    }
    m
}

fn axis_ops(axis: Axis) -> (DMatrix<C64>, DMatrix<C64>) {
    let s = spin_matrices(2)[axis.index()].matrix().clone();
    let u = pi_rotation(2, axis).matrix().clone();
    (s, u)
}

/// String order `⟨-S^α_i e^{iπ Σ S^α_j} S^α_{i+r}⟩` of the infinite chain
/// from transfer matrices: `-Tr[M_env M_α M_{U_α}^{r-2} M_α] / Tr[M_env M^r]`.
pub fn string_order_tm(a: f64, r: usize, axis: Axis) -> Result<f64> {
    if r < 2 {
        return Err(Error::InvalidParameter("string length must be at least 2".into()));
    }
    let t = MpsTensor::new(a)?;
    let (s, u) = axis_ops(axis);
    let m = t.transfer(None);
    let ms = t.transfer(Some(&s));
    let mu = t.transfer(Some(&u));
    let env = environment(&t);
    let num = env * ms * mu.pow((r - 2) as u32) * ms;
    let den = env * m.pow(r as u32);
    Ok(-(num.trace() / den.trace()).re)
}

/// `4a⁴ / (1 + 2a²)²`.
pub fn string_order_closed(a: f64) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::InvalidParameter(format!("deformation {a} must be positive")));
    }
    let d = 1.0 + 2.0 * a * a;
    Ok(4.0 * a.powi(4) / (d * d))
}

/// Exact string order on a ring of `n` sites between sites `0` and `r`,
/// with `r - 1` string sites in between: full transfer-matrix trace.
pub fn string_order_ring(a: f64, n: usize, r: usize, axis: Axis) -> Result<f64> {
    if r < 1 || r >= n {
        return Err(Error::InvalidParameter(format!("need 1 <= r < n, got r={r}, n={n}")));
    }
    let t = MpsTensor::new(a)?;
    let (s, u) = axis_ops(axis);
    let m = t.transfer(None);
    let ms = t.transfer(Some(&s));
    let mu = t.transfer(Some(&u));
    let num = ms * mu.pow((r - 1) as u32) * ms * m.pow((n - r - 1) as u32);
    let den = m.pow(n as u32);
    Ok(-(num.trace() / den.trace()).re)
}

/// An SU(2) bond defect `[[α, β], [-β*, α*]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BondDefect {
    pub alpha: C64,
    pub beta: C64,
}

impl BondDefect {
    pub fn new(alpha: C64, beta: C64) -> Result<Self> {
        let n = alpha.norm_sqr() + beta.norm_sqr();
        if (n - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("|α|²+|β|² = {n}, expected 1")));
        }
        Ok(Self { alpha, beta })
    }

    pub fn identity() -> Self {
        Self { alpha: c(1.0), beta: c(0.0) }
    }

    /// `iσ` for a Pauli letter (the identity for `I`).
    pub fn pauli(p: Pauli) -> Self {
        let i = C64::new(0.0, 1.0);
        match p {
            Pauli::I => Self::identity(),
            Pauli::X => Self { alpha: c(0.0), beta: i },
            Pauli::Y => Self { alpha: c(0.0), beta: c(1.0) },
            Pauli::Z => Self { alpha: i, beta: c(0.0) },
        }
    }

    pub fn matrix(&self) -> Matrix2<C64> {
        Matrix2::new(self.alpha, self.beta, -self.beta.conj(), self.alpha.conj())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainBoundary {
    /// Open chain with a spin-1/2 qubit at each end.
    Open,
    Ring,
}

/// Graph whose qubit layout [`exact_chain_state`] uses.
pub fn chain_graph(n: usize, boundary: ChainBoundary) -> Result<SiteGraph> {
    match boundary {
        ChainBoundary::Open => make_lattice(&LatticeSpec::ChainOpen { length: n, terminated: true }),
        ChainBoundary::Ring => make_lattice(&LatticeSpec::ChainRing { length: n }),
    }
}

/// Gauge taking the open-chain matrix product to the edge-qubit amplitude.
fn open_gauge() -> Matrix2<C64> {
    Matrix2::new(c(0.0), c(1.0), c(-1.0), c(0.0))
}

/// The spin-1 chain on `n` sites, lifted to the virtual qubits of
/// [`chain_graph`]. On a ring the amplitudes are `Tr(V A_{s_1}…A_{s_n})`;
/// the open chain ends in two edge qubits and ignores `defect`. A ring of
/// two sites is laid out site-major.
pub fn exact_chain_state(n: usize, boundary: ChainBoundary, defect: Option<&BondDefect>, a: f64) -> Result<PureState> {
    let t = MpsTensor::new(a)?;
    // Qubits of each chain position, and the two edge qubits when open. A
    // two-site ring has no graph (its bonds are parallel) and is laid out
    // site-major.
    let mut sites: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut ends = [usize::MAX; 2];
    let total = if boundary == ChainBoundary::Ring && n == 2 {
        sites = vec![vec![0, 1], vec![2, 3]];
        4
    } else {
        let g = chain_graph(n, boundary)?;
        for v in g.vertices() {
            let col = v.pos[1];
            if g.is_bulk(v.id) {
                sites[col as usize] = g.qubits(v.id).collect();
            } else {
                ends[usize::from(col >= 0)] = g.qubits(v.id).start;
            }
        }
        g.total_qubits()
    };
    let cap = crate::numeric::policy().max_qubits;
    if total > cap {
        return Err(Error::QubitCap { requested: total, cap });
    }
    let v = defect.copied().unwrap_or_else(BondDefect::identity).matrix();
    let gauge = open_gauge();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut amps = vec![c(0.0); 1usize << total];
    let bit = |b: usize, q: usize| (b >> (total - 1 - q)) & 1;
    for (b, amp) in amps.iter_mut().enumerate() {
        let mut prod = Matrix2::<C64>::identity();
        let mut weight = 1.0;
        for qs in &sites {
            let ones: usize = qs.iter().map(|&q| bit(b, q)).sum();
            // |+1⟩ = |00⟩, |0⟩ = (|01⟩+|10⟩)/√2, |-1⟩ = |11⟩.
            if ones == 1 {
                weight *= h;
            }
            prod *= t.mats[ones];
        }
        *amp = match boundary {
            ChainBoundary::Ring => (v * prod).trace() * weight,
            ChainBoundary::Open => {
                let (l, r) = (bit(b, ends[0]), bit(b, ends[1]));
                (prod * gauge)[(l, r)] * weight
            }
        };
    }
    PureState::from_amplitudes(amps)
}

/// Closed-form site-1 density matrix of a ring of `n` sites with defect `V`
/// on the bond `(n, 1)`, normalized to unit trace.
pub fn defect_rdm_closed(n: usize, v: &BondDefect) -> Result<LinOp> {
    if n < 2 {
        return Err(Error::InvalidParameter("ring needs at least 2 sites".into()));
    }
    let q = (-1.0f64 / 3.0).powi(n as i32 - 1);
    let (al, be) = (v.alpha, v.beta);
    let i = C64::new(0.0, 1.0);
    let s2 = 2f64.sqrt();
    let b2 = be.norm_sqr();
    let im = al.im;
    let corner = c((1.0 - q) / 2.0 + q * b2);
    let mid = c((1.0 + q) / 2.0 - q * b2 - q * (al * al).re);
    let e01 = i * s2 * q * be * im;
    let e10 = -i * s2 * q * be.conj() * im;
    let e12 = -i * s2 * q * be * im;
    let e21 = i * s2 * q * be.conj() * im;
    let rows = [corner, e01, be * be * q, e10, mid, e12, be.conj() * be.conj() * q, e21, corner];
    let m = DMatrix::from_row_slice(3, 3, &rows);
    let tr = m.trace();
    LinOp::new(m / tr)
}

/// Physical 3×3 density matrix of ring site `site` from a lifted state.
pub fn site_density(psi: &PureState, g: &SiteGraph, vertex: usize) -> Result<LinOp> {
    let qs: Vec<usize> = g.qubits(vertex).collect();
    let rho = crate::qstate::reduced_density(psi, &qs)?;
    crate::spin::spin_restrict(qs.len(), &LinOp::new(rho.matrix().clone())?)
}

/// Vertex id of chain position `p` in [`chain_graph`].
pub fn chain_vertex(g: &SiteGraph, p: usize) -> Option<usize> {
    g.vertices().iter().find(|v| g.is_bulk(v.id) && v.pos == [0, p as i32]).map(|v| v.id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::fidelity;
    use crate::vbs::vbs_state;
    use proptest::prelude::*;

    fn r4(rows: [[f64; 4]; 4], scale: f64) -> Matrix4<C64> {
        Matrix4::from_fn(|i, j| c(rows[i][j] * scale))
    }

    #[test]
    fn tensors_at_unit_deformation() {
        let t = MpsTensor::new(1.0).unwrap();
        let k = (2.0f64 / 3.0).sqrt();
        assert!((t.mats[1][(0, 0)].re - k / 2f64.sqrt()).abs() < 1e-15);
        assert!((t.mats[0][(1, 0)].re + k).abs() < 1e-15);
        assert!((t.mats[2][(0, 1)].re - k).abs() < 1e-15);
        assert!(MpsTensor::new(0.0).is_err());
    }

    #[test]
    fn transfer_matrices_match_printed_forms() {
        let a = 0.7;
        let t = MpsTensor::new(a).unwrap();
        let k = 2.0 / (1.0 + 2.0 * a * a);
        let a2 = a * a;
        let m = r4([[0.5, 0., 0., a2], [0., -0.5, 0., 0.], [0., 0., -0.5, 0.], [a2, 0., 0., 0.5]], k);
        assert!(max_abs(&(t.transfer(None) - m)) < 1e-14);
        let (sz, uz) = axis_ops(Axis::Z);
        let mz = r4([[0., 0., 0., -a2], [0.; 4], [0.; 4], [a2, 0., 0., 0.]], k);
        assert!(max_abs(&(t.transfer(Some(&sz)) - mz)) < 1e-14);
        let muz = r4([[0.5, 0., 0., -a2], [0., -0.5, 0., 0.], [0., 0., -0.5, 0.], [-a2, 0., 0., 0.5]], k);
        assert!(max_abs(&(t.transfer(Some(&uz)) - muz)) < 1e-14);
        let (sx, ux) = axis_ops(Axis::X);
        let h = a / 2.0;
        let mx = r4([[0., h, h, 0.], [-h, 0., 0., -h], [-h, 0., 0., -h], [0., h, h, 0.]], k);
        assert!(max_abs(&(t.transfer(Some(&sx)) - mx)) < 1e-14);
        let mux = r4([[-0.5, 0., 0., 0.], [0., 0.5, a2, 0.], [0., a2, 0.5, 0.], [0., 0., 0., -0.5]], k);
        assert!(max_abs(&(t.transfer(Some(&ux)) - mux)) < 1e-14);
    }

    #[test]
    fn environment_is_fixed_point() {
        for a in [0.3, 1.0, 2.0] {
            let t = MpsTensor::new(a).unwrap();
            let env = environment(&t);
            let m = t.transfer(None);
            assert!(max_abs(&(m * env - env)) < 1e-12);
            let printed = r4([[0.5, 0., 0., 0.5], [0.; 4], [0.; 4], [0.5, 0., 0., 0.5]], 1.0);
            assert!(max_abs(&(env - printed)) < 1e-12);
        }
    }

    #[test]
    fn string_order_values() {
        for axis in Axis::ALL {
            assert!((string_order_tm(1.0, 7, axis).unwrap() - 4.0 / 9.0).abs() < 1e-12);
        }
        assert!((string_order_tm(0.5, 5, Axis::Z).unwrap() - 1.0 / 9.0).abs() < 1e-12);
        assert!((string_order_closed(2.0).unwrap() - 64.0 / 81.0).abs() < 1e-15);
        assert!(string_order_closed(1e-6).unwrap() < 1e-20);
        assert!(string_order_tm(1.0, 1, Axis::X).is_err());
    }

    #[test]
    fn open_chain_matches_projected_singlets() {
        let psi = exact_chain_state(2, ChainBoundary::Open, None, 1.0).unwrap();
        let g = chain_graph(2, ChainBoundary::Open).unwrap();
        let vbs = vbs_state(&g, 1.0).unwrap();
        assert!((fidelity(&psi, &vbs).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deformed_chains_match_projected_bonds() {
        for a in [0.4, 1.7] {
            for boundary in [ChainBoundary::Open, ChainBoundary::Ring] {
                let psi = exact_chain_state(4, boundary, None, a).unwrap();
                let vbs = vbs_state(&chain_graph(4, boundary).unwrap(), a).unwrap();
                assert!((fidelity(&psi, &vbs).unwrap() - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn defect_free_ring_is_translation_invariant() {
        let n = 5;
        let g = chain_graph(n, ChainBoundary::Ring).unwrap();
        let psi = exact_chain_state(n, ChainBoundary::Ring, None, 1.0).unwrap();
        // Shift every site's qubit pair to the next chain position.
        let mut order = vec![0; g.total_qubits()];
        for p in 0..n {
            let from = chain_vertex(&g, p).unwrap();
            let to = chain_vertex(&g, (p + 1) % n).unwrap();
            for (qf, qt) in g.qubits(from).zip(g.qubits(to)) {
                order[qt] = qf;
            }
        }
        let shifted = psi.permute_qubits(&order).unwrap();
        assert!((fidelity(&psi, &shifted).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn defect_changes_ring_state() {
        let clean = exact_chain_state(4, ChainBoundary::Ring, None, 1.0).unwrap();
        let dz = BondDefect::pauli(Pauli::Z);
        let bad = exact_chain_state(4, ChainBoundary::Ring, Some(&dz), 1.0).unwrap();
        assert!(fidelity(&clean, &bad).unwrap() < 1.0 - 1e-6);
    }

    #[test]
    fn closed_form_rdm_identity_and_distinctness() {
        for n in 2..8 {
            let rho = defect_rdm_closed(n, &BondDefect::identity()).unwrap();
            let third = LinOp::new(DMatrix::identity(3, 3) * c(1.0 / 3.0)).unwrap();
            assert!(rho.distance(&third) < 1e-12);
            let x = defect_rdm_closed(n, &BondDefect::pauli(Pauli::X)).unwrap();
            assert!(x.distance(&third) > 1e-6);
        }
        assert!(BondDefect::new(c(1.0), c(1.0)).is_err());
    }

    #[test]
    fn closed_form_rdm_matches_ring_states() {
        for n in 3..=6 {
            let g = chain_graph(n, ChainBoundary::Ring).unwrap();
            let first = chain_vertex(&g, 0).unwrap();
            for p in [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z] {
                let v = BondDefect::pauli(p);
                let psi = exact_chain_state(n, ChainBoundary::Ring, Some(&v), 1.0).unwrap();
                let rho = site_density(&psi, &g, first).unwrap();
                let closed = defect_rdm_closed(n, &v).unwrap();
                assert!(rho.distance(&closed) < 1e-9, "n={n} V=i{p}");
            }
        }
    }

    #[test]
    fn finite_ring_string_order_matches_statevector() {
        // Oracle: expectation of the lifted string operator on the ring state.
        let n = 6;
        let g = chain_graph(n, ChainBoundary::Ring).unwrap();
        let psi = exact_chain_state(n, ChainBoundary::Ring, None, 0.8).unwrap();
        for axis in Axis::ALL {
            for r in 2..n {
                let (s, u) = axis_ops(axis);
                let mut phi = psi.clone();
                for p in 0..=r {
                    let op = if p == 0 || p == r { &s } else { &u };
                    let lifted = crate::spin::spin_embed(2, &LinOp::new(op.clone()).unwrap()).unwrap();
                    let qs: Vec<usize> = g.qubits(chain_vertex(&g, p).unwrap()).collect();
                    phi.apply_matrix(lifted.matrix(), &qs).unwrap();
                }
                let direct = -psi.inner(&phi).unwrap().re;
                let tm = string_order_ring(0.8, n, r, axis).unwrap();
                assert!((direct - tm).abs() < 1e-10, "axis={axis} r={r}");
            }
        }
    }

    #[test]
    fn transverse_string_order_differs_away_from_unit_deformation() {
        // Closed forms re-derived by hand from the transfer matrices at r = 2.
        for a in [0.3f64, 0.5, 2.0] {
            let d = (1.0 + 2.0 * a * a).powi(2);
            let x = string_order_tm(a, 4, Axis::X).unwrap();
            assert!((x - 4.0 * a * a / d).abs() < 1e-12);
            assert!((x - string_order_closed(a).unwrap()).abs() > 1e-3);
        }
    }

    proptest! {
        #[test]
        fn string_order_is_distance_free(a in 0.05f64..5.0, r in 2usize..12) {
            for axis in Axis::ALL {
                let v = string_order_tm(a, r, axis).unwrap();
                prop_assert!((string_order_tm(a, 2, axis).unwrap() - v).abs() < 1e-12);
            }
            let x = string_order_tm(a, r, Axis::X).unwrap();
            prop_assert!((string_order_tm(a, r, Axis::Y).unwrap() - x).abs() < 1e-12);
            let z = string_order_tm(a, r, Axis::Z).unwrap();
            prop_assert!((z - string_order_closed(a).unwrap()).abs() < 1e-12);
        }
    }
}
