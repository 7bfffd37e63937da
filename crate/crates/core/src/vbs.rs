//! Direct construction of valence-bond states: Bell pairs on every edge,
//! then the (deformed) symmetric projector on every bulk site.
//!
//! This is the reference against which prepared states are compared.

use crate::circuits::DeformationProfile;
use crate::error::Result;
use crate::lattice::SiteGraph;
use crate::qstate::{PureState, C64};
use crate::spin::dicke;
use nalgebra::DMatrix;

/// `⊗_e |bond_e⟩` in the graph's qubit layout, the lower-id endpoint first.
pub fn bond_product_state(g: &SiteGraph) -> Result<PureState> {
    let n = g.total_qubits();
    let mut amps = vec![C64::new(0.0, 0.0); 1usize << n];
    let mut pairs = Vec::with_capacity(g.num_edges());
    for (k, e) in g.edges().iter().enumerate() {
        let qu = g.qubit_on_edge(e.u, k)?;
        let qv = g.qubit_on_edge(e.v, k)?;
        let vec = e.bond.vector();
        // Two nonzero components per Bell state.
        let comps: Vec<(usize, C64)> = (0..4).filter(|&i| vec[i].norm() > 0.0).map(|i| (i, vec[i])).collect();
        pairs.push((qu, qv, comps));
    }
    for choice in 0..1usize << pairs.len() {
        let mut index = 0usize;
        let mut amp = C64::new(1.0, 0.0);
        for (j, (qu, qv, comps)) in pairs.iter().enumerate() {
            let (i, a) = comps[(choice >> j) & 1];
            if i >> 1 == 1 {
                index |= 1 << (n - 1 - qu);
            }
            if i & 1 == 1 {
                index |= 1 << (n - 1 - qv);
            }
            amp *= a;
        }
        amps[index] = amp;
    }
    PureState::from_amplitudes(amps)
}

/// Site map `Q_v P_v = Σ_k a_k |D(z,k)⟩⟨D(z,k)|` for a degree-`z` site.
pub fn site_map(z: usize, profile: &DeformationProfile) -> DMatrix<C64> {
    let d = 1usize << z;
    let mut m = DMatrix::zeros(d, d);
    for (k, &a) in profile.coefficients().iter().enumerate() {
        let v = dicke(z, k);
        for i in 0..d {
            if v[i].re == 0.0 {
                continue;
            }
            for j in 0..d {
                m[(i, j)] += v[i] * v[j].conj() * a;
            }
        }
    }
    m
}

/// The valence-bond state on `g` with deformation parameter `a` (1 for the
/// undeformed state), normalized. Decoration vertices are never deformed.
pub fn vbs_state(g: &SiteGraph, a: f64) -> Result<PureState> {
    let mut psi = bond_product_state(g)?;
    for v in 0..g.num_vertices() {
        if !g.is_bulk(v) {
            continue;
        }
        let z = g.degree(v);
        let a = if g.vertex(v).decoration_of.is_some() { 1.0 } else { a };
        let profile = DeformationProfile::from_parameter(z, a)?;
        let qs: Vec<usize> = g.qubits(v).collect();
        psi.apply_matrix(&site_map(z, &profile), &qs)?;
    }
    psi.normalize()?;
    Ok(psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{make_lattice, LatticeSpec};
    use crate::qstate::reduced_density;
    use crate::spin::symmetric_projector;

    #[test]
    fn bond_state_of_single_edge_is_singlet() {
        let g = make_lattice(&LatticeSpec::ChainOpen { length: 2, terminated: false }).unwrap();
        let s = bond_product_state(&g).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((s.amplitudes()[1].re - h).abs() < 1e-12 && (s.amplitudes()[2].re + h).abs() < 1e-12);
    }

    #[test]
    fn sites_are_symmetric() {
        let g = make_lattice(&LatticeSpec::HexPatch { rows: 1, cols: 1, terminated: false }).unwrap();
        let psi = vbs_state(&g, 1.0).unwrap();
        for v in 0..g.num_vertices() {
            let qs: Vec<usize> = g.qubits(v).collect();
            let rho = reduced_density(&psi, &qs).unwrap();
            let p = symmetric_projector(qs.len());
            let inside = p.mul(&rho).unwrap().trace().re;
            assert!((inside - 1.0).abs() < 1e-10);
        }
    }
}
