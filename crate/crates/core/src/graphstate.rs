//! From valence-bond states to graph states: the local three-outcome POVM,
//! domains and the domain graph, the stabilizers of the encoded graph state,
//! decoding of domains, graph-level Pauli measurements and recovery of the
//! undecorated graph from a decorated one.

use crate::error::{Error, Result};
use crate::lattice::SiteGraph;
use crate::numeric::policy;
use crate::pauli::{gf2_rank, measurement_update, Axis, Pauli, PauliString};
use crate::protocol::PreparedState;
use crate::qstate::{reduced_density, sample_index, LinOp, PureState, C64};
use crate::rng::Rng;
use crate::spin::symmetric_projector;
use crate::unionfind::UnionFind;
use nalgebra::DMatrix;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::FRAC_1_SQRT_2;

/// Eigenvectors of σ_a for eigenvalues +1 and −1.
fn axis_basis(a: Axis) -> [[C64; 2]; 2] {
    let h = C64::new(FRAC_1_SQRT_2, 0.0);
    let ih = C64::new(0.0, FRAC_1_SQRT_2);
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    match a {
        Axis::X => [[h, h], [h, -h]],
        Axis::Y => [[h, ih], [h, -ih]],
        Axis::Z => [[one, zero], [zero, one]],
    }
}

fn repeated(v: [C64; 2], n: usize) -> Vec<C64> {
    let mut out = vec![C64::new(1.0, 0.0)];
    for _ in 0..n {
        out = out.iter().flat_map(|&a| [a * v[0], a * v[1]]).collect();
    }
    out
}

/// POVM elements `F_x, F_y, F_z` on `two_s` virtual qubits:
/// `F_a = c (|0…0⟩⟨0…0| + |1…1⟩⟨1…1|)` in the eigenbasis of σ_a, with
/// `c² = (2S+1)/6`. Complete on the symmetric subspace for `2S ≤ 3`.
pub fn povm_elements(two_s: usize) -> Result<[LinOp; 3]> {
    if two_s == 0 || two_s > 12 {
        return Err(Error::InvalidParameter(format!("POVM needs 1 ≤ 2S ≤ 12, got {two_s}")));
    }
    let c = ((two_s as f64 + 1.0) / 6.0).sqrt();
    let d = 1usize << two_s;
    let make = |a: Axis| {
        let [up, down] = axis_basis(a);
        let (u, w) = (repeated(up, two_s), repeated(down, two_s));
        let m = DMatrix::from_fn(d, d, |i, j| (u[i] * u[j].conj() + w[i] * w[j].conj()) * c);
        LinOp::new(m)
    };
    Ok([make(Axis::X)?, make(Axis::Y)?, make(Axis::Z)?])
}

/// Max-entry deviation of `Σ_a F_a†F_a` from the symmetric projector.
pub fn completeness_defect(two_s: usize) -> Result<f64> {
    let fs = povm_elements(two_s)?;
    let mut sum = DMatrix::<C64>::zeros(1 << two_s, 1 << two_s);
    for f in &fs {
        sum += f.matrix().adjoint() * f.matrix();
    }
    let p = symmetric_projector(two_s);
    Ok((sum - p.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// One axis per bulk site; `None` on boundary qubits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PovmOutcome {
    axes: Vec<Option<Axis>>,
}

impl PovmOutcome {
    pub fn new(g: &SiteGraph, axes: Vec<Option<Axis>>) -> Result<Self> {
        if axes.len() != g.num_vertices() {
            return Err(Error::DimensionMismatch { expected: g.num_vertices(), found: axes.len() });
        }
        for (v, a) in axes.iter().enumerate() {
            if a.is_some() != g.is_bulk(v) {
                return Err(Error::InvalidParameter(format!("vertex {v}: outcome must be set exactly on bulk sites")));
            }
        }
        Ok(Self { axes })
    }

    pub fn uniform(g: &SiteGraph, a: Axis) -> Self {
        Self { axes: (0..g.num_vertices()).map(|v| g.is_bulk(v).then_some(a)).collect() }
    }

    /// Independent uniform axes on every bulk site.
    pub fn random(g: &SiteGraph, rng: &mut Rng) -> Self {
        Self { axes: (0..g.num_vertices()).map(|v| g.is_bulk(v).then(|| Axis::ALL[rng.random_range(0..3)])).collect() }
    }

    /// Parse one letter per vertex (`x`, `y`, `z`, or `-` for boundary qubits).
    pub fn parse(g: &SiteGraph, s: &str) -> Result<Self> {
        let axes = s
            .chars()
            .map(|c| match c {
                '-' => Ok(None),
                _ => Axis::parse(&c.to_string()).map(Some).ok_or_else(|| Error::Parse(format!("bad outcome letter `{c}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(g, axes)
    }

    pub fn axis(&self, v: usize) -> Option<Axis> {
        self.axes[v]
    }

    pub fn axes(&self) -> &[Option<Axis>] {
        &self.axes
    }

    pub fn letters(&self) -> String {
        self.axes.iter().map(|a| a.map_or('-', Axis::letter)).collect()
    }

    /// The outcome on the listed vertices, renumbered in that order.
    pub fn restrict(&self, keep: &[usize]) -> PovmOutcome {
        PovmOutcome { axes: keep.iter().map(|&v| self.axes[v]).collect() }
    }
}

fn site_povm(g: &SiteGraph, v: usize) -> Result<[LinOp; 3]> {
    povm_elements(g.two_s(v))
}

/// Apply `⊗_v F_{o(v)}` to `state`. Returns the normalized post-POVM state
/// and the outcome probability `‖⊗F ψ‖²`.
pub fn apply_povm(state: &PureState, g: &SiteGraph, o: &PovmOutcome) -> Result<(PureState, f64)> {
    let p = povm_probability(state, g, o)?;
    if p < policy().min_forced_probability {
        return Err(Error::ZeroProbability { outcome: 0, probability: p });
    }
    let mut psi = unnormalized_povm(state, g, o)?;
    psi.normalize()?;
    Ok((psi, p))
}

fn unnormalized_povm(state: &PureState, g: &SiteGraph, o: &PovmOutcome) -> Result<PureState> {
    if state.num_qubits() != g.total_qubits() {
        return Err(Error::DimensionMismatch { expected: g.total_qubits(), found: state.num_qubits() });
    }
    let mut psi = state.clone();
    for v in 0..g.num_vertices() {
        if let Some(a) = o.axis(v) {
            let f = &site_povm(g, v)?[a.index()];
            let qs: Vec<usize> = g.qubits(v).collect();
            psi.apply_matrix(f.matrix(), &qs)?;
        }
    }
    Ok(psi)
}

/// `‖⊗_v F_{o(v)} ψ‖²`.
pub fn povm_probability(state: &PureState, g: &SiteGraph, o: &PovmOutcome) -> Result<f64> {
    Ok(unnormalized_povm(state, g, o)?.norm().powi(2))
}

/// Sample the POVM site by site in `order` (every bulk site exactly once).
/// Returns the outcome, the post-POVM state and the outcome probability.
pub fn sample_povm_ordered(state: &PureState, g: &SiteGraph, order: &[usize], rng: &mut Rng) -> Result<(PovmOutcome, PureState, f64)> {
    if state.num_qubits() != g.total_qubits() {
        return Err(Error::DimensionMismatch { expected: g.total_qubits(), found: state.num_qubits() });
    }
    let bulk: BTreeSet<usize> = (0..g.num_vertices()).filter(|&v| g.is_bulk(v)).collect();
    let given: BTreeSet<usize> = order.iter().copied().collect();
    if given != bulk || order.len() != bulk.len() {
        return Err(Error::InvalidParameter("order must list every bulk site once".into()));
    }
    let mut psi = state.clone();
    let mut axes = vec![None; g.num_vertices()];
    let mut prob = 1.0;
    for &v in order {
        let qs: Vec<usize> = g.qubits(v).collect();
        let rho = reduced_density(&psi, &qs)?;
        let fs = site_povm(g, v)?;
        let mut ps: Vec<f64> = fs.iter().map(|f| (f.matrix() * f.matrix() * rho.matrix()).trace().re.max(0.0)).collect();
        let total: f64 = ps.iter().sum();
        if total <= 0.0 {
            return Err(Error::ZeroNorm);
        }
        ps.iter_mut().for_each(|p| *p /= total);
        let k = sample_index(&ps, rng);
        psi.apply_matrix(fs[k].matrix(), &qs)?;
        psi.normalize()?;
        prob *= ps[k];
        axes[v] = Some(Axis::ALL[k]);
    }
    Ok((PovmOutcome { axes }, psi, prob))
}

/// Sample the POVM on a prepared state, bulk sites in id order.
pub fn sample_povm(prep: &PreparedState, rng: &mut Rng) -> Result<(PovmOutcome, PureState, f64)> {
    let g = &prep.realized_graph;
    let order: Vec<usize> = (0..g.num_vertices()).filter(|&v| g.is_bulk(v)).collect();
    sample_povm_ordered(&prep.state, g, &order, rng)
}

/// Sign of the Bell stabilizer σ_a⊗σ_a on edge `e`.
fn bond_sign(g: &SiteGraph, e: usize, a: Axis) -> i8 {
    g.edges()[e].bond.sign(a)
}

/// Number of independent same-axis cycles whose bond signs multiply to −1.
/// Such outcomes have probability zero.
pub fn frustration(g: &SiteGraph, o: &PovmOutcome) -> usize {
    let mut uf = UnionFind::new(g.num_vertices());
    let mut bad = 0;
    for (k, e) in g.edges().iter().enumerate() {
        if let (Some(a), Some(b)) = (o.axis(e.u), o.axis(e.v)) {
            if a == b && uf.union_parity(e.u, e.v, bond_sign(g, k, a) < 0).is_none() {
                bad += 1;
            }
        }
    }
    bad
}

/// A maximal same-axis connected set of bulk sites.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Domain {
    pub axis: Axis,
    pub sites: Vec<usize>,
    pub qubits: Vec<usize>,
}

/// Local Clifford left on a vertex by a graph-level Pauli measurement
/// (for the + outcome).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalClifford {
    /// `√(−iZ)`, from a Y measurement on a neighbor.
    SqrtMinusIZ,
    /// `√(+iY)`, on the special neighbor of an X measurement.
    SqrtPlusIY,
    Z,
}

/// Domains as vertices; two domains are adjacent iff an odd number of
/// lattice edges join them.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainGraph {
    domains: Vec<Domain>,
    alive: Vec<bool>,
    adj: Vec<BTreeSet<usize>>,
    multiplicity: BTreeMap<(usize, usize), usize>,
    site_domain: Vec<Option<usize>>,
    corrections: Vec<(usize, LocalClifford)>,
}

/// Domain-graph shape keyed by the smallest retained site of each vertex.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CanonicalGraph {
    /// Key → retained member sites.
    pub vertices: BTreeMap<usize, Vec<usize>>,
    pub edges: BTreeSet<(usize, usize)>,
    /// Vertices with no retained member.
    pub orphans: usize,
}

pub fn build_domain_graph(g: &SiteGraph, o: &PovmOutcome) -> Result<DomainGraph> {
    if o.axes.len() != g.num_vertices() {
        return Err(Error::DimensionMismatch { expected: g.num_vertices(), found: o.axes.len() });
    }
    let mut uf = UnionFind::new(g.num_vertices());
    for e in g.edges() {
        if let (Some(a), Some(b)) = (o.axis(e.u), o.axis(e.v)) {
            if a == b {
                uf.union(e.u, e.v);
            }
        }
    }
    let mut root_id = BTreeMap::new();
    let mut domains: Vec<Domain> = Vec::new();
    let mut site_domain = vec![None; g.num_vertices()];
    for v in 0..g.num_vertices() {
        let Some(a) = o.axis(v) else { continue };
        let r = uf.find(v).0;
        let id = *root_id.entry(r).or_insert_with(|| {
            domains.push(Domain { axis: a, sites: Vec::new(), qubits: Vec::new() });
            domains.len() - 1
        });
        domains[id].sites.push(v);
        domains[id].qubits.extend(g.qubits(v));
        site_domain[v] = Some(id);
    }
    let mut multiplicity = BTreeMap::new();
    for e in g.edges() {
        if let (Some(p), Some(q)) = (site_domain[e.u], site_domain[e.v]) {
            if p != q {
                *multiplicity.entry((p.min(q), p.max(q))).or_insert(0) += 1;
            }
        }
    }
    let mut adj = vec![BTreeSet::new(); domains.len()];
    for (&(p, q), &m) in &multiplicity {
        if m % 2 == 1 {
            adj[p].insert(q);
            adj[q].insert(p);
        }
    }
    Ok(DomainGraph { alive: vec![true; domains.len()], domains, adj, multiplicity, site_domain, corrections: Vec::new() })
}

impl DomainGraph {
    /// An abstract simple graph on `n` vertices (one site each, axis z).
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj = vec![BTreeSet::new(); n];
        let mut multiplicity = BTreeMap::new();
        for &(u, v) in edges {
            if u == v || u >= n || v >= n {
                return Err(Error::InvalidParameter(format!("bad edge ({u}, {v})")));
            }
            adj[u].insert(v);
            adj[v].insert(u);
            multiplicity.insert((u.min(v), u.max(v)), 1);
        }
        let domains = (0..n).map(|v| Domain { axis: Axis::Z, sites: vec![v], qubits: vec![v] }).collect();
        Ok(Self { domains, alive: vec![true; n], adj, multiplicity, site_domain: (0..n).map(Some).collect(), corrections: Vec::new() })
    }

    /// All domains ever created, by id (removed ones included).
    pub fn domains(&self) -> &[Domain] {
        &self.domains
    }

    pub fn domain(&self, d: usize) -> &Domain {
        &self.domains[d]
    }

    pub fn is_alive(&self, d: usize) -> bool {
        self.alive.get(d).copied().unwrap_or(false)
    }

    pub fn vertices(&self) -> Vec<usize> {
        (0..self.domains.len()).filter(|&d| self.alive[d]).collect()
    }

    pub fn num_vertices(&self) -> usize {
        self.alive.iter().filter(|&&a| a).count()
    }

    pub fn neighbors(&self, d: usize) -> &BTreeSet<usize> {
        &self.adj[d]
    }

    pub fn has_edge(&self, p: usize, q: usize) -> bool {
        self.adj[p].contains(&q)
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (p, ns) in self.adj.iter().enumerate() {
            out.extend(ns.iter().filter(|&&q| q > p).map(|&q| (p, q)));
        }
        out
    }

    /// Lattice edges between two domains when the graph was built.
    pub fn multiplicity(&self, p: usize, q: usize) -> usize {
        self.multiplicity.get(&(p.min(q), p.max(q))).copied().unwrap_or(0)
    }

    pub fn domain_of(&self, site: usize) -> Option<usize> {
        self.site_domain.get(site).copied().flatten()
    }

    pub fn corrections(&self) -> &[(usize, LocalClifford)] {
        &self.corrections
    }

    pub fn canonical(&self, retained: impl Fn(usize) -> bool) -> CanonicalGraph {
        let mut key = BTreeMap::new();
        let mut vertices = BTreeMap::new();
        let mut orphans = 0;
        for d in self.vertices() {
            let kept: Vec<usize> = self.domains[d].sites.iter().copied().filter(|&s| retained(s)).collect();
            match kept.first() {
                Some(&k) => {
                    key.insert(d, k);
                    vertices.insert(k, kept);
                }
                None => orphans += 1,
            }
        }
        let edges = self
            .edges()
            .into_iter()
            .filter_map(|(p, q)| {
                let (a, b) = (*key.get(&p)?, *key.get(&q)?);
                Some((a.min(b), a.max(b)))
            })
            .collect();
        CanonicalGraph { vertices, edges, orphans }
    }

    fn check_alive(&self, d: usize) -> Result<()> {
        if self.is_alive(d) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("domain vertex {d} is not present")))
        }
    }

    /// Complement the subgraph induced on the neighborhood of `d`.
    pub fn local_complement(&mut self, d: usize) -> Result<()> {
        self.check_alive(d)?;
        let ns: Vec<usize> = self.adj[d].iter().copied().collect();
        for (i, &p) in ns.iter().enumerate() {
            for &q in &ns[i + 1..] {
                if !self.adj[p].remove(&q) {
                    self.adj[p].insert(q);
                    self.adj[q].insert(p);
                } else {
                    self.adj[q].remove(&p);
                }
            }
        }
        Ok(())
    }

    fn delete(&mut self, d: usize) {
        for q in std::mem::take(&mut self.adj[d]) {
            self.adj[q].remove(&d);
        }
        for &s in &self.domains[d].sites {
            self.site_domain[s] = None;
        }
        self.alive[d] = false;
    }

    /// Measure the logical Pauli `basis` on vertex `d` (outcome +) and
    /// update the graph in place. X uses the smallest neighbor as its
    /// special neighbor; an isolated vertex is refused for X.
    pub fn measure(&mut self, d: usize, basis: Pauli) -> Result<()> {
        self.check_alive(d)?;
        match basis {
            Pauli::I => return Err(Error::InvalidParameter("identity is not a measurement".into())),
            Pauli::Z => self.delete(d),
            Pauli::Y => {
                let ns: Vec<usize> = self.adj[d].iter().copied().collect();
                self.local_complement(d)?;
                self.delete(d);
                self.corrections.extend(ns.into_iter().map(|b| (b, LocalClifford::SqrtMinusIZ)));
            }
            Pauli::X => {
                let Some(&b0) = self.adj[d].iter().next() else {
                    return Err(Error::InvalidParameter(format!(
                        "X measurement on isolated vertex {d} degenerates to deletion"
                    )));
                };
                let na = self.adj[d].clone();
                let nb = self.adj[b0].clone();
                self.local_complement(b0)?;
                self.local_complement(d)?;
                self.delete(d);
                self.local_complement(b0)?;
                self.corrections.push((b0, LocalClifford::SqrtPlusIY));
                for b in na {
                    if b != b0 && !nb.contains(&b) {
                        self.corrections.push((b, LocalClifford::Z));
                    }
                }
            }
        }
        Ok(())
    }

    /// Move all sites of `from` into `into` (same axis required), then drop
    /// `from` from the graph.
    fn absorb(&mut self, into: usize, from: usize) -> Result<()> {
        if self.domains[into].axis != self.domains[from].axis {
            return Err(Error::InvalidParameter("cannot merge domains of different axes".into()));
        }
        let moved = std::mem::take(&mut self.domains[from].sites);
        let qs = std::mem::take(&mut self.domains[from].qubits);
        self.delete(from);
        for &s in &moved {
            self.site_domain[s] = Some(into);
        }
        let dom = &mut self.domains[into];
        dom.sites.extend(moved);
        dom.sites.sort_unstable();
        dom.qubits.extend(qs);
        dom.qubits.sort_unstable();
        Ok(())
    }
}

/// Graph-level Pauli measurement on a copy of `dg`.
pub fn graph_pauli_measure(dg: &DomainGraph, d: usize, basis: Pauli) -> Result<DomainGraph> {
    let mut out = dg.clone();
    out.measure(d, basis)?;
    Ok(out)
}

/// Logical operators of one domain: `Z̄ = z_sign·σ_a` on `z_qubit`,
/// `X̄ = x_sign·⊗σ_b` over `qubits`, where `z_qubit` carries the third
/// letter instead when `x_fix` is set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogicalOps {
    pub axis: Axis,
    pub qubits: Vec<usize>,
    pub x_letter: Axis,
    pub x_fix: bool,
    pub x_sign: i8,
    pub z_qubit: usize,
    pub z_sign: i8,
}

/// Logical operators per domain id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogicalFrame {
    pub ops: Vec<LogicalOps>,
}

fn letter_at(s: &mut PauliString, q: usize, a: Axis) {
    s.times_at(q, a.pauli());
}

fn with_sign(s: PauliString, sign: i8) -> PauliString {
    if sign < 0 {
        s.negate()
    } else {
        s
    }
}

impl LogicalFrame {
    /// Pick `b` per domain so that the domain's graph stabilizer restricts
    /// to `±X̄`: the number of boundary qubits carrying the third letter must
    /// be even. When neither choice works the third letter moves onto the
    /// `Z̄` qubit.
    pub fn select(g: &SiteGraph, dg: &DomainGraph) -> Result<Self> {
        let mut ops = Vec::with_capacity(dg.domains.len());
        for (d, dom) in dg.domains.iter().enumerate() {
            let a = dom.axis;
            let mut counts = [0usize; 3];
            for &v in &dom.sites {
                for &(w, _) in g.neighbors(v) {
                    if let Some(p) = dg.domain_of(w) {
                        if p != d {
                            counts[dg.domains[p].axis.index()] += 1;
                        }
                    }
                }
            }
            let choices: Vec<Axis> = Axis::ALL.into_iter().filter(|&b| b != a).collect();
            let fits = |b: Axis| counts[Axis::other(a, b).index()] % 2 == 0;
            let (b, fix) = match choices.iter().find(|&&b| fits(b)) {
                Some(&b) => (b, false),
                None => (choices[0], true),
            };
            let z_qubit = *dom.qubits.first().ok_or_else(|| Error::FrameInconsistent(format!("domain {d} has no qubits")))?;
            ops.push(LogicalOps { axis: a, qubits: dom.qubits.clone(), x_letter: b, x_fix: fix, x_sign: 1, z_qubit, z_sign: 1 });
        }
        Ok(Self { ops })
    }

    fn get(&self, d: usize) -> Result<&LogicalOps> {
        self.ops.get(d).ok_or_else(|| Error::FrameInconsistent(format!("no logical operators for domain {d}")))
    }

    pub fn x_bar(&self, d: usize, n: usize) -> Result<PauliString> {
        let op = self.get(d)?;
        let mut s = PauliString::identity(n);
        for &q in &op.qubits {
            let letter = if op.x_fix && q == op.z_qubit { Axis::other(op.axis, op.x_letter) } else { op.x_letter };
            letter_at(&mut s, q, letter);
        }
        Ok(with_sign(s, op.x_sign))
    }

    pub fn z_bar(&self, d: usize, n: usize) -> Result<PauliString> {
        let op = self.get(d)?;
        Ok(with_sign(PauliString::single(n, op.z_qubit, op.axis.pauli()), op.z_sign))
    }

    /// `Ȳ = i X̄ Z̄`.
    pub fn y_bar(&self, d: usize, n: usize) -> Result<PauliString> {
        Ok(self.x_bar(d, n)?.mul(&self.z_bar(d, n)?).times_i(1))
    }

    fn check(&self, dg: &DomainGraph) -> Result<()> {
        if self.ops.len() != dg.domains.len() {
            return Err(Error::FrameInconsistent(format!("{} domains, {} frames", dg.domains.len(), self.ops.len())));
        }
        for (d, (op, dom)) in self.ops.iter().zip(&dg.domains).enumerate() {
            if op.axis != dom.axis || op.x_letter == op.axis || !dom.qubits.contains(&op.z_qubit) {
                return Err(Error::FrameInconsistent(format!("domain {d}")));
            }
        }
        Ok(())
    }
}

/// Stabilizer generators of the post-POVM state.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilizerSet {
    /// `+σ_aσ_a` on neighboring qubits of one site.
    pub code: Vec<PauliString>,
    /// `s_e(a)σ_aσ_a` across the spanning-tree edges inside domains.
    pub bond: Vec<PauliString>,
    /// One graph stabilizer per domain, by domain id.
    pub graph: Vec<PauliString>,
}

impl StabilizerSet {
    pub fn all(&self) -> Vec<PauliString> {
        self.code.iter().chain(&self.bond).chain(&self.graph).copied().collect()
    }

    pub fn len(&self) -> usize {
        self.code.len() + self.bond.len() + self.graph.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn pair(n: usize, q1: usize, q2: usize, a: Axis, sign: i8) -> PauliString {
    let mut s = PauliString::identity(n);
    letter_at(&mut s, q1, a);
    letter_at(&mut s, q2, a);
    with_sign(s, sign)
}

/// Emit the stabilizers of the encoded graph state for outcome `o` on `g`
/// (bond kinds read from `g`).
pub fn encoded_stabilizers(g: &SiteGraph, o: &PovmOutcome, frame: &LogicalFrame) -> Result<StabilizerSet> {
    if (0..g.num_vertices()).any(|v| !g.is_bulk(v)) {
        return Err(Error::Unsupported("stabilizers need a graph without boundary qubits".into()));
    }
    let n = g.total_qubits();
    if n > 64 {
        return Err(Error::Unsupported(format!("{n} qubits exceed the 64-qubit Pauli string width")));
    }
    let cycles = frustration(g, o);
    if cycles > 0 {
        return Err(Error::Frustrated { cycles });
    }
    let dg = build_domain_graph(g, o)?;
    frame.check(&dg)?;
    let axis = |v: usize| o.axis(v).expect("bulk site has an outcome");

    let mut code = Vec::new();
    for v in 0..g.num_vertices() {
        let qs: Vec<usize> = g.qubits(v).collect();
        for w in qs.windows(2) {
            code.push(pair(n, w[0], w[1], axis(v), 1));
        }
    }

    let mut bond = Vec::new();
    let mut uf = UnionFind::new(g.num_vertices());
    for (k, e) in g.edges().iter().enumerate() {
        let a = axis(e.u);
        if a == axis(e.v) && uf.union(e.u, e.v) {
            bond.push(pair(n, g.qubit_on_edge(e.u, k)?, g.qubit_on_edge(e.v, k)?, a, bond_sign(g, k, a)));
        }
    }

    let mut graph = Vec::with_capacity(dg.domains.len());
    for (d, dom) in dg.domains.iter().enumerate() {
        let b = frame.ops[d].x_letter;
        let mut s = PauliString::identity(n);
        let mut sign = 1i8;
        for &v in &dom.sites {
            for &(w, k) in g.neighbors(v) {
                let inside = dg.domain_of(w) == Some(d);
                if inside && w < v {
                    continue;
                }
                let letter = if inside { b } else { axis(w) };
                letter_at(&mut s, g.qubit_on_edge(v, k)?, letter);
                letter_at(&mut s, g.qubit_on_edge(w, k)?, letter);
                sign *= bond_sign(g, k, letter);
            }
        }
        // Letters act on distinct qubits, so the coefficient is +1 up to sign.
        graph.push(with_sign(s, sign));
    }
    Ok(StabilizerSet { code, bond, graph })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub expectations: Vec<f64>,
    pub max_deviation: f64,
    pub commuting: bool,
    pub rank: usize,
    pub pass: bool,
}

/// Expectation of each stabilizer on `state`. Passes iff every value is
/// within 1e-8 of +1.
pub fn verify_stabilizers(state: &PureState, stabs: &[PauliString]) -> Result<VerifyReport> {
    let mut expectations = Vec::with_capacity(stabs.len());
    for s in stabs {
        if s.num_qubits() != state.num_qubits() {
            return Err(Error::DimensionMismatch { expected: state.num_qubits(), found: s.num_qubits() });
        }
        let e = s.expectation(state);
        expectations.push(if e.im.abs() > 1e-8 { f64::NAN } else { e.re });
    }
    let max_deviation = expectations.iter().map(|e| (e - 1.0).abs()).fold(0.0, |m: f64, d| if d.is_nan() { f64::INFINITY } else { m.max(d) });
    let commuting = stabs.iter().enumerate().all(|(i, s)| stabs[i + 1..].iter().all(|t| s.commutes(t)));
    Ok(VerifyReport { expectations, max_deviation, commuting, rank: gf2_rank(stabs), pass: max_deviation <= 1e-8 })
}

/// Measure `⊗σ_b` on `qubits` (a GHZ-like basis of axis `a` when the site
/// lies in the span of `|0…0⟩_a`, `|1…1⟩_a`). Returns the post-measurement
/// state, the sign and its probability.
pub fn measure_site_ghz(state: &PureState, qubits: &[usize], a: Axis, b: Axis, rng: &mut Rng) -> Result<(PureState, i8, f64)> {
    if a == b {
        return Err(Error::InvalidParameter("GHZ measurement letter must differ from the axis".into()));
    }
    let n = state.num_qubits();
    let mut m = PauliString::identity(n);
    for &q in qubits {
        letter_at(&mut m, q, b);
    }
    let mut plus = state.clone();
    let mut flipped = state.clone();
    m.apply(&mut flipped);
    for (p, f) in plus.amplitudes_mut().iter_mut().zip(flipped.amplitudes()) {
        *p = (*p + f) * 0.5;
    }
    let p_plus = plus.norm().powi(2).min(1.0);
    let sign = if rng.random::<f64>() < p_plus { 1 } else { -1 };
    let mut out = if sign > 0 {
        plus
    } else {
        let mut minus = state.clone();
        for (p, f) in minus.amplitudes_mut().iter_mut().zip(flipped.amplitudes()) {
            *p = (*p - f) * 0.5;
        }
        minus
    };
    out.normalize()?;
    Ok((out, sign, if sign > 0 { p_plus } else { 1.0 - p_plus }))
}

/// Decode domain `d`: every site but the smallest is measured in the
/// GHZ-like basis of the frame letter. The stabilizer list and the frame are
/// updated to the shrunken encoding. Returns the state and `(site, sign)`
/// per measured site.
pub fn decode_domain(
    state: &PureState,
    g: &SiteGraph,
    dg: &DomainGraph,
    d: usize,
    frame: &mut LogicalFrame,
    stabs: &mut [PauliString],
    rng: &mut Rng,
) -> Result<(PureState, Vec<(usize, i8)>)> {
    dg.check_alive(d)?;
    frame.check(dg)?;
    let n = state.num_qubits();
    let dom = dg.domain(d);
    let mut psi = state.clone();
    let mut signs = Vec::new();
    for &v in dom.sites.iter().skip(1) {
        let op = &frame.ops[d];
        let qs: Vec<usize> = g.qubits(v).collect();
        let (next, sign, _) = measure_site_ghz(&psi, &qs, op.axis, op.x_letter, rng)?;
        psi = next;
        let mut m = PauliString::identity(n);
        for &q in &qs {
            letter_at(&mut m, q, op.x_letter);
        }
        measurement_update(stabs, &m, sign < 0);
        let op = &mut frame.ops[d];
        op.qubits.retain(|q| !qs.contains(q));
        op.x_sign *= sign;
        signs.push((v, sign));
    }
    Ok((psi, signs))
}

/// How one decoration vertex is removed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecorationCase {
    /// Shares an axis with a flank: nothing to do.
    Absorbed,
    /// Flanks of different axes, separate from each other: Y measurement.
    Bridge,
    /// Flanks of equal axis, other than the decoration. `split` is whether
    /// the flanks are in different domains (X measurement and merge) rather
    /// than one (the decoration is isolated and dropped).
    SameAxis { split: bool },
    /// Flanks of different axes that are also joined directly: Y measurement.
    Extended,
}

impl DecorationCase {
    /// Case number 1 to 4.
    pub fn number(self) -> u8 {
        match self {
            DecorationCase::Absorbed => 1,
            DecorationCase::Bridge => 2,
            DecorationCase::SameAxis { .. } => 3,
            DecorationCase::Extended => 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Recovery {
    pub graph: DomainGraph,
    /// `(decoration vertex, case)` in processing order.
    pub cases: Vec<(usize, DecorationCase)>,
}

/// Decoration chains of `g` as `(start, chain, end)`, walked from the
/// lower-id endpoint.
fn decoration_chains(g: &SiteGraph) -> Result<Vec<(usize, Vec<usize>, usize)>> {
    let is_deco = |v: usize| g.vertex(v).decoration_of.is_some();
    let mut out = Vec::new();
    let mut seen = vec![false; g.num_vertices()];
    for u in 0..g.num_vertices() {
        if is_deco(u) {
            continue;
        }
        for &(w, _) in g.neighbors(u) {
            if !is_deco(w) || seen[w] {
                continue;
            }
            let (mut prev, mut cur) = (u, w);
            let mut chain = Vec::new();
            while is_deco(cur) {
                if g.degree(cur) != 2 {
                    return Err(Error::Unclassifiable(format!("decoration {cur} has degree {}", g.degree(cur))));
                }
                seen[cur] = true;
                chain.push(cur);
                let next = g.neighbors(cur).iter().map(|&(x, _)| x).find(|&x| x != prev).unwrap_or(prev);
                prev = cur;
                cur = next;
            }
            out.push((u, chain, cur));
        }
    }
    if let Some(v) = (0..g.num_vertices()).find(|&v| is_deco(v) && !seen[v]) {
        return Err(Error::Unclassifiable(format!("decoration {v} is not attached to a site")));
    }
    Ok(out)
}

/// Turn the domain graph of a decorated lattice into that of its
/// undecorated lattice by classifying and measuring each decoration.
pub fn recover_undecorated(dg: &DomainGraph, realized: &SiteGraph, o: &PovmOutcome) -> Result<Recovery> {
    if dg.site_domain.len() != realized.num_vertices() {
        return Err(Error::DimensionMismatch { expected: realized.num_vertices(), found: dg.site_domain.len() });
    }
    let mut graph = dg.clone();
    let mut cases = Vec::new();
    let axis_of = |v: usize| o.axis(v).ok_or_else(|| Error::Unclassifiable(format!("vertex {v} has no outcome")));
    let dom_of = |graph: &DomainGraph, v: usize| graph.domain_of(v).ok_or_else(|| Error::Unclassifiable(format!("site {v} has no domain")));
    for (start, chain, end) in decoration_chains(realized)? {
        for (i, &d) in chain.iter().enumerate() {
            let right = chain.get(i + 1).copied().unwrap_or(end);
            let (al, ad, ar) = (axis_of(start)?, axis_of(d)?, axis_of(right)?);
            let case = if ad == al || ad == ar {
                DecorationCase::Absorbed
            } else {
                let vd = dom_of(&graph, d)?;
                let (pl, pr) = (dom_of(&graph, start)?, dom_of(&graph, right)?);
                if al != ar {
                    let direct = direct_edges(&graph, realized, pl, pr);
                    graph.measure(vd, Pauli::Y)?;
                    if direct > 0 {
                        DecorationCase::Extended
                    } else {
                        DecorationCase::Bridge
                    }
                } else if pl == pr {
                    if !graph.neighbors(vd).is_empty() {
                        return Err(Error::Unclassifiable(format!("decoration {d} should be isolated")));
                    }
                    graph.measure(vd, Pauli::Z)?;
                    DecorationCase::SameAxis { split: false }
                } else {
                    let expect: BTreeSet<usize> = [pl, pr].into_iter().collect();
                    if graph.neighbors(vd) != &expect {
                        return Err(Error::Unclassifiable(format!("decoration {d} has unexpected neighbors")));
                    }
                    let (b0, keep) = (pl.min(pr), pl.max(pr));
                    graph.measure(vd, Pauli::X)?;
                    // b0 is now a leaf on `keep`; measuring it removes it and
                    // the survivor stands for the merged domain.
                    graph.absorb(keep, b0)?;
                    DecorationCase::SameAxis { split: true }
                }
            };
            cases.push((d, case));
        }
    }
    Ok(Recovery { graph, cases })
}

/// Compare a recovered graph with the domain graph of the undecorated
/// lattice under the same outcome restricted to original sites.
pub fn matches_undecorated(rec: &Recovery, realized: &SiteGraph, o: &PovmOutcome) -> Result<bool> {
    let plain = crate::lattice::dematerialize(realized)?;
    let keep: Vec<usize> = (0..plain.num_vertices()).collect();
    let oracle = build_domain_graph(&plain, &o.restrict(&keep))?.canonical(|_| true);
    let got = rec.graph.canonical(|v| realized.vertex(v).decoration_of.is_none());
    Ok(got == oracle && got.orphans == 0)
}

/// Lattice edges joining sites of domain vertices `p` and `q`.
fn direct_edges(dg: &DomainGraph, g: &SiteGraph, p: usize, q: usize) -> usize {
    g.edges()
        .iter()
        .filter(|e| {
            let (a, b) = (dg.domain_of(e.u), dg.domain_of(e.v));
            (a == Some(p) && b == Some(q)) || (a == Some(q) && b == Some(p))
        })
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bell::BellKind;
    use crate::lattice::{assign_bonds, decorate, dematerialize, make_lattice, materialize, BondPolicy, LatticeSpec};
    use crate::qstate::fidelity;
    use crate::rng::stream;
    use crate::vbs::vbs_state;
    use proptest::prelude::*;

    fn lattice(s: &str) -> SiteGraph {
        make_lattice(&s.parse::<LatticeSpec>().unwrap()).unwrap()
    }

    fn random_bonds(g: &SiteGraph, seed: u64) -> SiteGraph {
        assign_bonds(g, &BondPolicy::UniformRandom, &mut stream(seed, 0)).unwrap()
    }

    fn all_outcomes(g: &SiteGraph) -> Vec<PovmOutcome> {
        let n = g.num_vertices();
        (0..3usize.pow(n as u32))
            .map(|mut k| {
                let mut axes = Vec::with_capacity(n);
                for _ in 0..n {
                    axes.push(Some(Axis::ALL[k % 3]));
                    k /= 3;
                }
                PovmOutcome::new(g, axes).unwrap()
            })
            .collect()
    }

    /// Graph state `∏ CZ |+⟩^n` from its amplitude formula.
    fn graph_state(n: usize, edges: &[(usize, usize)]) -> PureState {
        let norm = (1u64 << n) as f64;
        let amps = (0..1usize << n)
            .map(|i| {
                let bit = |q: usize| (i >> (n - 1 - q)) & 1 == 1;
                let odd = edges.iter().filter(|&&(u, v)| bit(u) && bit(v)).count() % 2 == 1;
                C64::new(if odd { -1.0 } else { 1.0 } / norm.sqrt(), 0.0)
            })
            .collect();
        PureState::from_amplitudes(amps).unwrap()
    }

    #[test]
    fn povm_completeness_by_spin() {
        for two_s in 1..=3 {
            assert!(completeness_defect(two_s).unwrap() < 1e-12, "2S = {two_s}");
        }
        assert!(completeness_defect(4).unwrap() > 1e-3);
    }

    #[test]
    fn spin_one_m_zero_probabilities() {
        // Ψ⁺ is the m = 0 state along z: F_z annihilates it.
        let h = FRAC_1_SQRT_2;
        let psi = PureState::from_amplitudes(vec![C64::new(0.0, 0.0), C64::new(h, 0.0), C64::new(h, 0.0), C64::new(0.0, 0.0)]).unwrap();
        let fs = povm_elements(2).unwrap();
        let p: Vec<f64> = fs
            .iter()
            .map(|f| {
                let mut s = psi.clone();
                s.apply_matrix(f.matrix(), &[0, 1]).unwrap();
                s.norm().powi(2)
            })
            .collect();
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12 && p[2] < 1e-12, "{p:?}");
    }

    fn frustrated_hexagon() -> SiteGraph {
        let g = lattice("hex_patch:1x1");
        let mut bonds = vec![BellKind::PhiPlus; g.num_edges()];
        bonds[0] = BellKind::PsiMinus;
        assign_bonds(&g, &BondPolicy::FixedList(bonds), &mut stream(0, 0)).unwrap()
    }

    #[test]
    fn hexagon_frustration_matches_zero_probability() {
        let g = frustrated_hexagon();
        assert_eq!(g.num_vertices(), 6);
        let psi = vbs_state(&g, 1.0).unwrap();
        let mut frustrated = Vec::new();
        for o in all_outcomes(&g) {
            let f = frustration(&g, &o) > 0;
            let p = povm_probability(&psi, &g, &o).unwrap();
            assert_eq!(f, p < 1e-12, "{} p = {p}", o.letters());
            if f {
                frustrated.push(o.letters());
            }
        }
        assert_eq!(frustrated, vec!["xxxxxx".to_string(), "zzzzzz".to_string()]);
        let err = encoded_stabilizers(&g, &PovmOutcome::uniform(&g, Axis::X), &LogicalFrame { ops: vec![] });
        assert!(matches!(err, Err(Error::Frustrated { cycles: 1 })));
    }

    #[test]
    fn site_order_does_not_change_outcome_distribution() {
        let g = random_bonds(&lattice("chain_ring:3"), 5);
        let psi = vbs_state(&g, 1.0).unwrap();
        let exact: BTreeMap<String, f64> = all_outcomes(&g).iter().map(|o| (o.letters(), povm_probability(&psi, &g, o).unwrap())).collect();
        let runs = 10_000;
        for (seed, order) in [(1, vec![0, 1, 2]), (2, vec![2, 0, 1])] {
            let mut rng = stream(seed, 0);
            let mut hist: BTreeMap<String, usize> = BTreeMap::new();
            for _ in 0..runs {
                let (o, _, _) = sample_povm_ordered(&psi, &g, &order, &mut rng).unwrap();
                *hist.entry(o.letters()).or_default() += 1;
            }
            for (k, &p) in &exact {
                let f = *hist.get(k).unwrap_or(&0) as f64 / runs as f64;
                let sigma = (p * (1.0 - p) / runs as f64).sqrt();
                assert!((f - p).abs() <= 3.0 * sigma + 1e-9, "{k}: {f} vs {p}");
            }
        }
    }

    #[test]
    fn sequential_probability_equals_joint() {
        let g = random_bonds(&lattice("hex_patch:1x1"), 3);
        let psi = vbs_state(&g, 1.0).unwrap();
        let mut rng = stream(9, 0);
        for _ in 0..5 {
            let order: Vec<usize> = (0..6).collect();
            let (o, post, p) = sample_povm_ordered(&psi, &g, &order, &mut rng).unwrap();
            assert!((povm_probability(&psi, &g, &o).unwrap() - p).abs() < 1e-10);
            let (direct, _) = apply_povm(&psi, &g, &o).unwrap();
            assert!(fidelity(&direct, &post).unwrap() > 1.0 - 1e-10);
        }
    }

    #[test]
    fn doubled_edges_cancel() {
        let g = lattice("square_patch:2x2");
        assert_eq!(g.num_vertices(), 4);
        let e = &g.edges()[0];
        let axes = (0..4).map(|v| Some(if v == e.u || v == e.v { Axis::X } else { Axis::Z })).collect();
        let o = PovmOutcome::new(&g, axes).unwrap();
        let dg = build_domain_graph(&g, &o).unwrap();
        assert_eq!(dg.num_vertices(), 2);
        assert_eq!(dg.multiplicity(0, 1), 2);
        assert!(dg.edges().is_empty());
    }

    /// Domains by flood fill and adjacency by explicit edge counting.
    fn domain_oracle(g: &SiteGraph, o: &PovmOutcome) -> (Vec<BTreeSet<usize>>, BTreeSet<(usize, usize)>) {
        let n = g.num_vertices();
        let mut label = vec![usize::MAX; n];
        let mut groups = Vec::new();
        for s in 0..n {
            if label[s] != usize::MAX {
                continue;
            }
            let mut group = BTreeSet::new();
            let mut stack = vec![s];
            label[s] = groups.len();
            while let Some(v) = stack.pop() {
                group.insert(v);
                for &(w, _) in g.neighbors(v) {
                    if label[w] == usize::MAX && o.axis(w) == o.axis(v) {
                        label[w] = groups.len();
                        stack.push(w);
                    }
                }
            }
            groups.push(group);
        }
        let mut edges = BTreeSet::new();
        for p in 0..groups.len() {
            for q in p + 1..groups.len() {
                let count = g.edges().iter().filter(|e| (label[e.u] == p && label[e.v] == q) || (label[e.u] == q && label[e.v] == p)).count();
                if count % 2 == 1 {
                    edges.insert((p, q));
                }
            }
        }
        (groups, edges)
    }

    #[test]
    fn graph_stabilizers_commute_with_neighbor_codes() {
        // A z domain with y-site neighbors: its graph stabilizer must commute
        // with the neighbors' σ_yσ_y code generators.
        let g = random_bonds(&lattice("hex_patch:1x1"), 11);
        let axes = (0..6).map(|v| Some(if v < 2 { Axis::Z } else { Axis::Y })).collect();
        let o = PovmOutcome::new(&g, axes).unwrap();
        if frustration(&g, &o) > 0 {
            return;
        }
        let dg = build_domain_graph(&g, &o).unwrap();
        let frame = LogicalFrame::select(&g, &dg).unwrap();
        let set = encoded_stabilizers(&g, &o, &frame).unwrap();
        for s in &set.graph {
            assert!(set.code.iter().chain(&set.bond).all(|c| c.commutes(s)));
        }
    }

    fn check_group(g: &SiteGraph, o: &PovmOutcome) {
        let dg = build_domain_graph(g, o).unwrap();
        let frame = LogicalFrame::select(g, &dg).unwrap();
        let set = encoded_stabilizers(g, o, &frame).unwrap();
        let n = g.total_qubits();
        let all = set.all();
        assert_eq!(all.len(), n);
        assert_eq!(gf2_rank(&all), n);
        assert!(all.iter().enumerate().all(|(i, s)| all[i + 1..].iter().all(|t| s.commutes(t))));
        let base: Vec<PauliString> = set.code.iter().chain(&set.bond).copied().collect();
        let r = gf2_rank(&base);
        for d in 0..dg.domains().len() {
            let (x, z) = (frame.x_bar(d, n).unwrap(), frame.z_bar(d, n).unwrap());
            assert!(!x.commutes(&z));
            assert!(base.iter().all(|s| s.commutes(&x) && s.commutes(&z)));
            // O_C = ±X̄_C ∏ Z̄_μ over domain-graph neighbors, modulo the code.
            let mut target = set.graph[d].mul(&x);
            for &m in dg.neighbors(d) {
                target = target.mul(&frame.z_bar(m, n).unwrap());
            }
            let mut with = base.clone();
            with.push(target);
            assert_eq!(gf2_rank(&with), r, "domain {d}");
        }
    }

    #[test]
    fn sampled_states_satisfy_emitted_stabilizers() {
        for (spec, seed) in [("hex_patch:1x1", 1), ("square_patch:2x2", 2), ("hex_patch:1x1", 3)] {
            let g = random_bonds(&lattice(spec), seed);
            let psi = vbs_state(&g, 1.0).unwrap();
            let mut rng = stream(seed, 1);
            let order: Vec<usize> = (0..g.num_vertices()).collect();
            for _ in 0..10 {
                let (o, post, _) = sample_povm_ordered(&psi, &g, &order, &mut rng).unwrap();
                check_group(&g, &o);
                let dg = build_domain_graph(&g, &o).unwrap();
                let frame = LogicalFrame::select(&g, &dg).unwrap();
                let set = encoded_stabilizers(&g, &o, &frame).unwrap();
                let report = verify_stabilizers(&post, &set.all()).unwrap();
                assert!(report.pass && report.commuting && report.rank == g.total_qubits(), "{spec} {}: {report:?}", o.letters());
            }
        }
    }

    #[test]
    fn ghz_measurement_keeps_logical_amplitudes() {
        let (al, be) = (0.6, 0.8);
        let mut amps = vec![C64::new(0.0, 0.0); 64];
        amps[0b000111] = C64::new(al, 0.0);
        amps[0b111000] = C64::new(be, 0.0);
        let psi = PureState::from_amplitudes(amps).unwrap();
        let mut rng = stream(0, 0);
        let mut seen = BTreeSet::new();
        for _ in 0..20 {
            let (post, sign, p) = measure_site_ghz(&psi, &[3, 4, 5], Axis::Z, Axis::X, &mut rng).unwrap();
            assert!((p - 0.5).abs() < 1e-12);
            let s = sign as f64 * 0.5;
            let mut want = vec![C64::new(0.0, 0.0); 64];
            want[0b000000] = C64::new(al * s, 0.0);
            want[0b000111] = C64::new(al * 0.5, 0.0);
            want[0b111000] = C64::new(be * 0.5, 0.0);
            want[0b111111] = C64::new(be * s, 0.0);
            let want = PureState::from_amplitudes(want).unwrap();
            assert!(fidelity(&post, &want).unwrap() > 1.0 - 1e-12);
            seen.insert(sign);
        }
        assert_eq!(seen.len(), 2);
    }

    #[test]
    fn decoding_shrinks_domains_and_keeps_stabilizers() {
        let g = random_bonds(&lattice("hex_patch:1x1"), 21);
        let psi = vbs_state(&g, 1.0).unwrap();
        let mut rng = stream(21, 1);
        let order: Vec<usize> = (0..6).collect();
        let mut decoded = 0;
        for _ in 0..30 {
            let (o, post, _) = sample_povm_ordered(&psi, &g, &order, &mut rng).unwrap();
            let dg = build_domain_graph(&g, &o).unwrap();
            let mut frame = LogicalFrame::select(&g, &dg).unwrap();
            let mut stabs = encoded_stabilizers(&g, &o, &frame).unwrap().all();
            let mut state = post;
            for d in dg.vertices() {
                if dg.domain(d).sites.len() < 2 {
                    continue;
                }
                let (next, signs) = decode_domain(&state, &g, &dg, d, &mut frame, &mut stabs, &mut rng).unwrap();
                assert_eq!(signs.len(), dg.domain(d).sites.len() - 1);
                assert_eq!(frame.ops[d].qubits, g.qubits(dg.domain(d).sites[0]).collect::<Vec<_>>());
                state = next;
                decoded += 1;
            }
            let report = verify_stabilizers(&state, &stabs).unwrap();
            assert!(report.pass && report.commuting && report.rank == g.total_qubits());
            for d in dg.vertices() {
                let n = g.total_qubits();
                assert!(!frame.x_bar(d, n).unwrap().commutes(&frame.z_bar(d, n).unwrap()));
            }
        }
        assert!(decoded > 0);
    }

    #[test]
    fn y_and_z_rules_on_a_path() {
        let dg = DomainGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let y = graph_pauli_measure(&dg, 1, Pauli::Y).unwrap();
        assert_eq!(y.edges(), vec![(0, 2)]);
        let z = graph_pauli_measure(&dg, 1, Pauli::Z).unwrap();
        assert!(z.edges().is_empty() && z.num_vertices() == 2);
        let iso = DomainGraph::from_edges(2, &[]).unwrap();
        assert!(graph_pauli_measure(&iso, 0, Pauli::X).is_err());
    }

    fn sqrt_gate(p: Pauli, sign: f64) -> DMatrix<C64> {
        // (I + sign·i·σ)/√2
        let m = p.matrix();
        let id = DMatrix::<C64>::identity(2, 2);
        (id + m.matrix() * C64::new(0.0, sign)) * C64::new(FRAC_1_SQRT_2, 0.0)
    }

    /// Project `a` onto the + eigenstate of `basis` and compare with
    /// `U|G'⟩` built from the rule's graph and corrections.
    fn check_rule(n: usize, edges: &[(usize, usize)], a: usize, basis: Pauli) {
        let psi = graph_state(n, edges);
        let h = FRAC_1_SQRT_2;
        let bra = match basis {
            Pauli::X => [C64::new(h, 0.0), C64::new(h, 0.0)],
            Pauli::Y => [C64::new(h, 0.0), C64::new(0.0, h)],
            _ => [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
        };
        let (post, _) = psi.contract(&[a], &bra).unwrap();
        let dg = DomainGraph::from_edges(n, edges).unwrap();
        let out = graph_pauli_measure(&dg, a, basis).unwrap();
        let rest: Vec<usize> = (0..n).filter(|&v| v != a).collect();
        let pos = |v: usize| rest.iter().position(|&w| w == v).unwrap();
        let new_edges: Vec<(usize, usize)> = out.edges().into_iter().map(|(p, q)| (pos(p), pos(q))).collect();
        let mut want = graph_state(n - 1, &new_edges);
        for &(v, c) in out.corrections() {
            let m = match c {
                LocalClifford::SqrtMinusIZ => sqrt_gate(Pauli::Z, -1.0),
                LocalClifford::SqrtPlusIY => sqrt_gate(Pauli::Y, 1.0),
                LocalClifford::Z => Pauli::Z.matrix().matrix().clone(),
            };
            want.apply_matrix(&m, &[pos(v)]).unwrap();
        }
        let f = fidelity(&post, &want).unwrap();
        assert!((f - 1.0).abs() < 1e-10, "{basis:?} on {a} of {edges:?}: fidelity {f}");
    }

    #[test]
    fn pauli_rules_match_statevector() {
        let star = [(0, 1), (0, 2), (0, 3)];
        check_rule(4, &star, 0, Pauli::X);
        check_rule(4, &star, 0, Pauli::Y);
        check_rule(4, &star, 0, Pauli::Z);
        check_rule(4, &star, 2, Pauli::X);
        let mixed = [(0, 1), (1, 2), (2, 3), (3, 0), (1, 4), (4, 5), (0, 5)];
        for a in 0..6 {
            for b in [Pauli::X, Pauli::Y, Pauli::Z] {
                check_rule(6, &mixed, a, b);
            }
        }
    }

    /// Each edge gets `count` decorations with probability 1/2 (all edges
    /// when `count` is given as `all`).
    fn recovery_matches(u: &SiteGraph, count: usize, all: bool, seed: u64) -> Vec<DecorationCase> {
        let mut rng = stream(seed, 0);
        let mut d = u.clone();
        for e in 0..u.num_edges() {
            if all || rng.random::<bool>() {
                d = decorate(&d, e, count).unwrap();
            }
        }
        let r = materialize(&d).unwrap();
        let o = PovmOutcome::random(&r, &mut rng);
        let dg = build_domain_graph(&r, &o).unwrap();
        let rec = recover_undecorated(&dg, &r, &o).unwrap();
        let plain = dematerialize(&r).unwrap();
        let keep: Vec<usize> = (0..plain.num_vertices()).collect();
        let oracle = build_domain_graph(&plain, &o.restrict(&keep)).unwrap();
        let want = oracle.canonical(|_| true);
        let got = rec.graph.canonical(|v| r.vertex(v).decoration_of.is_none());
        assert_eq!(got, want, "seed {seed}: {}", o.letters());
        assert_eq!(got.orphans, 0);
        rec.cases.iter().map(|c| c.1).collect()
    }

    #[test]
    fn domain_with_a_cycle_keeps_full_rank() {
        // A y domain on hex_patch:2x2 that closes a hexagon.
        let seed = 807299;
        let g = random_bonds(&lattice("hex_patch:2x2"), seed);
        let o = PovmOutcome::random(&g, &mut stream(seed, 1));
        assert_eq!(o.letters(), "yzzyyyyyzyyxyyxy");
        assert_eq!(frustration(&g, &o), 0);
        check_group(&g, &o);
    }

    #[test]
    fn recovery_covers_all_cases() {
        let u = lattice("hex_patch:3x3");
        let mut seen = BTreeMap::new();
        for seed in 0..200 {
            for c in recovery_matches(&u, 1, seed % 2 == 0, seed) {
                *seen.entry(c.number()).or_insert(0) += 1;
            }
        }
        assert!((1..=4).all(|k| seen.get(&k).copied().unwrap_or(0) >= 10), "{seen:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn domain_graph_matches_flood_fill(seed in 0u64..1_000_000) {
            let g = lattice("hex_patch:2x2");
            let o = PovmOutcome::random(&g, &mut stream(seed, 0));
            let dg = build_domain_graph(&g, &o).unwrap();
            let (groups, edges) = domain_oracle(&g, &o);
            let got: Vec<BTreeSet<usize>> = dg.vertices().iter().map(|&d| dg.domain(d).sites.iter().copied().collect()).collect();
            prop_assert_eq!(got, groups);
            prop_assert_eq!(dg.edges().into_iter().collect::<BTreeSet<_>>(), edges);
        }

        #[test]
        fn stabilizer_group_is_consistent(seed in 0u64..1_000_000) {
            let g = random_bonds(&lattice("hex_patch:2x2"), seed);
            let o = PovmOutcome::random(&g, &mut stream(seed, 1));
            if frustration(&g, &o) == 0 {
                check_group(&g, &o);
            }
        }

        #[test]
        fn recovery_with_longer_chains(seed in 0u64..1_000_000, count in 1usize..4) {
            recovery_matches(&lattice("hex_patch:1x2"), count, seed % 3 == 0, seed);
        }
    }
}
