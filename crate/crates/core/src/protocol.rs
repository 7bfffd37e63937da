//! Fusion preparation: per-site block states are fused pairwise over the
//! edges, Bell-measurement byproducts are tracked in a ledger and either
//! corrected (trees), folded into the bond kinds, or replaced by the
//! decorations that the Hadamard test leaves behind.
//!
//! Blocks are added one site at a time and every edge is fused as soon as
//! both of its blocks are present, so the register never holds more than the
//! already-fused part plus one fresh block.

use crate::bell::BellKind;
use crate::circuits::{simulate_zero, synth_block, DeformationProfile};
use crate::error::{Error, Result};
use crate::lattice::{assign_bonds, decorate, materialize, BondPolicy, SiteGraph};
use crate::numeric::policy;
use crate::pauli::{Pauli, PauliString};
use crate::qstate::{sample_index, PureState, C64};
use crate::rng::{stream, Rng};
use crate::mps::{chain_graph, chain_vertex, ChainBoundary};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Bell measurements, byproducts pushed to the boundary. Trees only.
    BsmCorrected,
    /// Bell measurements, outcomes kept as random bond kinds.
    BsmRandombond,
    /// Hadamard tests, triplet outcomes kept as decorations.
    HtDecorated,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::BsmCorrected => "bsm_corrected",
            Strategy::BsmRandombond => "bsm_randombond",
            Strategy::HtDecorated => "ht_decorated",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "bsm_corrected" | "bsm" => Ok(Strategy::BsmCorrected),
            "bsm_randombond" | "randombond" => Ok(Strategy::BsmRandombond),
            "ht_decorated" | "ht" => Ok(Strategy::HtDecorated),
            _ => Err(Error::Parse(format!("unknown strategy '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FusionMode {
    Bsm,
    Ht,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FusionOutcome {
    Bell(BellKind),
    /// Hadamard test found the singlet: the edge is fused clean.
    Singlet,
    /// Hadamard test found a triplet: the pair stays as a spin-1 decoration.
    Triplet,
}

impl FusionOutcome {
    pub fn label(self) -> &'static str {
        match self {
            FusionOutcome::Bell(b) => b.name(),
            FusionOutcome::Singlet => "A",
            FusionOutcome::Triplet => "S",
        }
    }

    pub fn parse(s: &str) -> Option<FusionOutcome> {
        match s {
            "A" => Some(FusionOutcome::Singlet),
            "S" => Some(FusionOutcome::Triplet),
            _ => BellKind::parse(s).map(FusionOutcome::Bell),
        }
    }

    /// Byproduct relative to the singlet. Hadamard-test outcomes have none.
    pub fn byproduct(self) -> Pauli {
        match self {
            FusionOutcome::Bell(b) => b.byproduct(),
            _ => Pauli::I,
        }
    }
}

impl Serialize for FusionOutcome {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for FusionOutcome {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        FusionOutcome::parse(&s).ok_or_else(|| serde::de::Error::custom(format!("unknown fusion outcome '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionRecord {
    pub edge: usize,
    pub outcome: FusionOutcome,
    pub probability: f64,
}

/// Per-edge byproducts (phases dropped) and the corrections applied so far.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DefectLedger {
    bonds: Vec<Pauli>,
    corrections: Vec<(usize, Pauli)>,
}

impl DefectLedger {
    pub fn new(num_edges: usize) -> Self {
        Self { bonds: vec![Pauli::I; num_edges], corrections: Vec::new() }
    }

    pub fn from_bonds(bonds: Vec<Pauli>) -> Self {
        Self { bonds, corrections: Vec::new() }
    }

    pub fn bonds(&self) -> &[Pauli] {
        &self.bonds
    }

    pub fn get(&self, edge: usize) -> Pauli {
        self.bonds[edge]
    }

    /// Multiply `p` into the entry of `edge`.
    pub fn record(&mut self, edge: usize, p: Pauli) {
        self.bonds[edge] = self.bonds[edge].times(p);
    }

    /// `(vertex, Pauli)` corrections in the order they were applied.
    pub fn corrections(&self) -> &[(usize, Pauli)] {
        &self.corrections
    }

    pub fn is_clear(&self) -> bool {
        self.bonds.iter().all(|&p| p == Pauli::I)
    }

    /// Ledger effect of applying `⊗σ` on every virtual qubit of `v`: `p` is
    /// multiplied into each incident edge.
    pub fn push_through(&mut self, g: &SiteGraph, v: usize, p: Pauli) {
        for &(_, e) in g.neighbors(v) {
            self.record(e, p);
        }
    }

    /// Product of all entries.
    pub fn net(&self) -> Pauli {
        self.bonds.iter().fold(Pauli::I, |acc, &p| acc.times(p))
    }
}

#[derive(Clone, Debug)]
pub struct PreparedState {
    /// Amplitudes in the qubit layout of `realized_graph`.
    pub state: PureState,
    /// The graph the state lives on: materialized decorations, realized bond kinds.
    pub realized_graph: SiteGraph,
    pub strategy: Strategy,
    pub deformation: f64,
    pub seed: u64,
    pub run: u64,
    /// Fusion outcomes in the order they were drawn.
    pub transcript: Vec<FusionRecord>,
    /// Byproducts left on the realized graph's edges (all `I` after correction).
    pub ledger: DefectLedger,
}

/// Where a register qubit sits. Edge ids refer to the graph being assembled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Slot {
    /// Virtual qubit of vertex `.0` on edge `.1`.
    Site(usize, usize),
    /// Unfused dangling qubit of `.0`'s block on edge `.1`.
    Dangling(usize, usize),
    /// Decoration on edge `.0`, the qubit facing vertex `.1`.
    Deco(usize, usize),
}

/// A partially assembled register over a graph without decorations.
pub struct Assembly<'g> {
    graph: &'g SiteGraph,
    a: f64,
    state: PureState,
    slots: Vec<Slot>,
    added: Vec<bool>,
    fused: Vec<bool>,
    blocks: HashMap<(usize, u64), PureState>,
}

impl<'g> Assembly<'g> {
    pub fn new(graph: &'g SiteGraph, a: f64) -> Result<Self> {
        if graph.total_decorations() > 0 {
            return Err(Error::Unsupported("materialize decorations before assembly".into()));
        }
        if graph.edges().iter().any(|e| !graph.is_bulk(e.u) && !graph.is_bulk(e.v)) {
            return Err(Error::Unsupported("edge between two boundary qubits".into()));
        }
        Ok(Self {
            graph,
            a,
            state: PureState::zero(0)?,
            slots: Vec::new(),
            added: vec![false; graph.num_vertices()],
            fused: vec![false; graph.num_edges()],
            blocks: HashMap::new(),
        })
    }

    pub fn state(&self) -> &PureState {
        &self.state
    }

    pub fn num_qubits(&self) -> usize {
        self.slots.len()
    }

    fn block(&mut self, z: usize, a: f64) -> Result<PureState> {
        let key = (z, a.to_bits());
        if let Some(b) = self.blocks.get(&key) {
            return Ok(b.clone());
        }
        let profile = DeformationProfile::from_parameter(z, a)?;
        let b = simulate_zero(&synth_block(z, &profile)?)?;
        self.blocks.insert(key, b.clone());
        Ok(b)
    }

    /// Append the block of `v`. Dangling qubits on edges to boundary qubits
    /// become those boundary qubits. Boundary vertices add nothing.
    pub fn add_site(&mut self, v: usize) -> Result<()> {
        let g = self.graph;
        if self.added[v] {
            return Err(Error::InvalidParameter(format!("site {v} already added")));
        }
        self.added[v] = true;
        if !g.is_bulk(v) {
            return Ok(());
        }
        let z = g.degree(v);
        if z == 0 {
            return Err(Error::InvalidParameter(format!("site {v} has no bonds")));
        }
        let requested = self.slots.len() + 2 * z;
        let cap = policy().max_qubits;
        if requested > cap {
            return Err(Error::QubitCap { requested, cap });
        }
        // Decorations are plain spin-1 sites.
        let a = if g.vertex(v).decoration_of.is_some() { 1.0 } else { self.a };
        let block = self.block(z, a)?;
        self.state = self.state.tensor(&block)?;
        let nbrs = g.neighbors(v);
        self.slots.extend(nbrs.iter().map(|&(_, e)| Slot::Site(v, e)));
        for &(w, e) in nbrs {
            self.slots.push(if g.is_bulk(w) { Slot::Dangling(v, e) } else { Slot::Site(w, e) });
        }
        Ok(())
    }

    fn position(&self, slot: Slot) -> Result<usize> {
        self.slots.iter().position(|&s| s == slot).ok_or_else(|| Error::InvalidParameter(format!("{slot:?} not in register")))
    }

    /// Fuse the two dangling qubits of edge `e`.
    pub fn fuse(&mut self, e: usize, mode: FusionMode, rng: &mut Rng) -> Result<FusionRecord> {
        let edge = self.graph.edge(e)?;
        if self.fused[e] {
            return Err(Error::AlreadyFused(e));
        }
        let (u, v) = (edge.u, edge.v);
        if !self.graph.is_bulk(u) || !self.graph.is_bulk(v) {
            return Err(Error::InvalidParameter(format!("edge {e} ends in a boundary qubit")));
        }
        let targets = [self.position(Slot::Dangling(u, e))?, self.position(Slot::Dangling(v, e))?];
        let (outcome, probability) = match mode {
            FusionMode::Bsm => {
                let mut branches = BellKind::ALL
                    .iter()
                    .map(|b| self.state.contract(&targets, &b.vector()))
                    .collect::<Result<Vec<_>>>()?;
                let probs: Vec<f64> = branches.iter().map(|b| b.1).collect();
                let k = sample_index(&probs, rng);
                let (s, p) = branches.swap_remove(k);
                self.state = s;
                self.drop_slots(&targets);
                (FusionOutcome::Bell(BellKind::ALL[k]), p)
            }
            FusionMode::Ht => {
                let (singlet, p) = self.state.contract(&targets, &BellKind::PsiMinus.vector())?;
                if sample_index(&[p, (1.0 - p).max(0.0)], rng) == 0 {
                    self.state = singlet;
                    self.drop_slots(&targets);
                    (FusionOutcome::Singlet, p)
                } else {
                    drop(singlet);
                    self.state.apply_matrix(&triplet_projector(), &targets)?;
                    self.state.normalize()?;
                    self.slots[targets[0]] = Slot::Deco(e, u);
                    self.slots[targets[1]] = Slot::Deco(e, v);
                    (FusionOutcome::Triplet, 1.0 - p)
                }
            }
        };
        self.fused[e] = true;
        Ok(FusionRecord { edge: e, outcome, probability })
    }

    fn drop_slots(&mut self, targets: &[usize]) {
        let mut i = 0;
        self.slots.retain(|_| {
            i += 1;
            !targets.contains(&(i - 1))
        });
    }

    /// Reorder the register into the layout of `realized`, which must be
    /// the assembled graph with the decorations in `decorated` materialized.
    fn into_layout(self, realized: &SiteGraph, decorated: &[bool]) -> Result<PureState> {
        let g = self.graph;
        let base = g.num_vertices();
        let mut deco_vertex = vec![usize::MAX; g.num_edges()];
        let mut next = base;
        for (e, &d) in decorated.iter().enumerate() {
            if d {
                deco_vertex[e] = next;
                next += 1;
            }
        }
        let qubit = |x: usize, y: usize| -> Result<usize> {
            let e = realized.find_edge(x, y).ok_or_else(|| Error::InvalidParameter(format!("no realized edge ({x}, {y})")))?;
            realized.qubit_on_edge(x, e)
        };
        let n = self.slots.len();
        if n != realized.total_qubits() {
            return Err(Error::DimensionMismatch { expected: realized.total_qubits(), found: n });
        }
        let mut order = vec![usize::MAX; n];
        for (reg, &slot) in self.slots.iter().enumerate() {
            let target = match slot {
                Slot::Site(v, e) => {
                    let w = if decorated[e] { deco_vertex[e] } else { g.edges()[e].other(v) };
                    qubit(v, w)?
                }
                Slot::Deco(e, v) => qubit(deco_vertex[e], v)?,
                Slot::Dangling(..) => return Err(Error::InvalidParameter(format!("{slot:?} left unfused"))),
            };
            order[target] = reg;
        }
        self.state.permute_qubits(&order)
    }
}

fn triplet_projector() -> nalgebra::DMatrix<C64> {
    let s = BellKind::PsiMinus.vector();
    nalgebra::DMatrix::from_fn(4, 4, |i, j| {
        let id = if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
        id - s[i] * s[j].conj()
    })
}

/// Tensor product of every site's block state, nothing fused. Register
/// order: sites by id, each block's virtual qubits then its dangling qubits
/// (dangling qubits on boundary edges stand for the boundary qubit).
pub fn assemble_blocks(g: &SiteGraph, a: f64) -> Result<PureState> {
    let mut asm = Assembly::new(g, a)?;
    for v in 0..g.num_vertices() {
        asm.add_site(v)?;
    }
    Ok(asm.state)
}

/// Apply `p` to every qubit in `qubits`.
fn apply_on(state: &mut PureState, qubits: impl IntoIterator<Item = usize>, p: Pauli) {
    let mut s = PauliString::identity(state.num_qubits());
    for q in qubits {
        s.times_at(q, p);
    }
    s.apply(state);
}

/// Push every ledger entry away from a fixed root (the lowest-id bulk site
/// of each component) to the leaves. Crossing site `v` applies `⊗σ` on its
/// virtual qubits, which is its π-rotation up to a phase; at a boundary
/// qubit `σ` is applied directly.
pub fn correct_tree(state: &PureState, g: &SiteGraph, ledger: &mut DefectLedger) -> Result<PureState> {
    if g.cycle_rank() > 0 {
        return Err(Error::CycleDetected);
    }
    if ledger.bonds.len() != g.num_edges() {
        return Err(Error::DimensionMismatch { expected: g.num_edges(), found: ledger.bonds.len() });
    }
    let mut out = state.clone();
    let n = g.num_vertices();
    let mut seen = vec![false; n];
    let mut roots: Vec<usize> = (0..n).filter(|&v| g.is_bulk(v)).collect();
    roots.extend((0..n).filter(|&v| !g.is_bulk(v)));
    for root in roots {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            for &(c, e) in g.neighbors(v) {
                if seen[c] {
                    continue;
                }
                seen[c] = true;
                queue.push_back(c);
                let p = ledger.bonds[e];
                if p == Pauli::I {
                    continue;
                }
                apply_on(&mut out, g.qubits(c), p);
                ledger.corrections.push((c, p));
                if g.is_bulk(c) {
                    ledger.push_through(g, c, p);
                } else {
                    ledger.record(e, p);
                }
            }
        }
    }
    debug_assert!(ledger.is_clear());
    Ok(out)
}

/// Outcome of [`remove_trapped_defect`].
#[derive(Clone, Debug)]
pub struct RingRemoval {
    /// The clean ring, in the layout of `chain_graph(final_length, Ring)`;
    /// for two sites, site-major in ring order.
    pub state: PureState,
    pub final_length: usize,
    /// Projections of the consumed sites, in sweep order.
    pub outcomes: Vec<BellKind>,
}

/// Sites of a ring in cyclic order, starting at vertex 0 towards its
/// lower-id neighbor.
fn ring_order(g: &SiteGraph) -> Result<Vec<usize>> {
    let n = g.num_vertices();
    if n < 3 || g.num_edges() != n || (0..n).any(|v| g.degree(v) != 2 || !g.is_bulk(v)) || !g.is_connected() {
        return Err(Error::InvalidParameter("not a ring of spin-1 sites".into()));
    }
    let mut order = vec![0, g.neighbors(0)[0].0];
    while order.len() < n {
        let (prev, cur) = (order[order.len() - 2], order[order.len() - 1]);
        let next = g.neighbors(cur).iter().map(|&(w, _)| w).find(|&w| w != prev).expect("degree 2");
        order.push(next);
    }
    Ok(order)
}

/// Clear the net defect of a ring by measuring sites. All ledger entries
/// are first pushed onto the bond closing the ring; then the sites after
/// that bond are projected one by one onto `{Φ⁺, Φ⁻, Ψ⁺}` (the spin-1
/// `x, y, z` states), each outcome's byproduct multiplying into the bond,
/// until the product is `I`.
pub fn remove_trapped_defect(state: &PureState, ring: &SiteGraph, ledger: &DefectLedger, rng: &mut Rng) -> Result<RingRemoval> {
    let order = ring_order(ring)?;
    let n = order.len();
    if state.num_qubits() != ring.total_qubits() {
        return Err(Error::DimensionMismatch { expected: ring.total_qubits(), found: state.num_qubits() });
    }
    let mut psi = state.clone();
    let mut bonds = ledger.bonds.clone();
    let edge = |i: usize, j: usize| ring.find_edge(order[i], order[j]).expect("ring edge");
    for i in 1..n {
        let p = bonds[edge(i - 1, i)];
        if p != Pauli::I {
            apply_on(&mut psi, ring.qubits(order[i]), p);
            bonds[edge(i - 1, i)] = Pauli::I;
            let f = edge(i, (i + 1) % n);
            bonds[f] = bonds[f].times(p);
        }
    }
    let mut net = bonds[edge(n - 1, 0)];
    // Register position of each original qubit still present.
    let mut register: Vec<usize> = (0..psi.num_qubits()).collect();
    let mut outcomes = Vec::new();
    let kinds = [BellKind::PhiPlus, BellKind::PhiMinus, BellKind::PsiPlus];
    while net != Pauli::I {
        let remaining = n - outcomes.len();
        if remaining <= 2 {
            return Err(Error::RingExhausted { consumed: outcomes.len(), residual: net.letter() });
        }
        let site: Vec<usize> = ring.qubits(order[outcomes.len()]).collect();
        let targets: Vec<usize> = site.iter().map(|q| register.iter().position(|r| r == q).expect("present")).collect();
        let mut branches = kinds.iter().map(|b| psi.contract(&targets, &b.vector())).collect::<Result<Vec<_>>>()?;
        let probs: Vec<f64> = branches.iter().map(|b| b.1).collect();
        let k = sample_index(&probs, rng);
        psi = branches.swap_remove(k).0;
        register.retain(|q| !site.contains(q));
        outcomes.push(kinds[k]);
        net = net.times(kinds[k].byproduct());
    }
    let rest = &order[outcomes.len()..];
    let final_length = rest.len();
    // Target qubit lists per chain position.
    let layout: Vec<Vec<usize>> = if final_length >= 3 {
        let cg = chain_graph(final_length, ChainBoundary::Ring)?;
        (0..final_length).map(|p| cg.qubits(chain_vertex(&cg, p).expect("chain position")).collect()).collect()
    } else {
        (0..final_length).map(|p| vec![2 * p, 2 * p + 1]).collect()
    };
    let mut perm = vec![usize::MAX; register.len()];
    for (p, &v) in rest.iter().enumerate() {
        for (&t, q) in layout[p].iter().zip(ring.qubits(v)) {
            perm[t] = register.iter().position(|&r| r == q).expect("present");
        }
    }
    Ok(RingRemoval { state: psi.permute_qubits(&perm)?, final_length, outcomes })
}

/// Run the whole protocol on `g` with deformation `a` using the random
/// stream `(seed, run)`. Decorations already on `g` are materialized first.
pub fn prepare(g: &SiteGraph, strategy: Strategy, a: f64, seed: u64, run: u64) -> Result<PreparedState> {
    let mut base = if g.total_decorations() > 0 { materialize(g)? } else { g.clone() };
    if strategy == Strategy::BsmCorrected && base.cycle_rank() > 0 {
        return Err(Error::CycleDetected);
    }
    if strategy == Strategy::HtDecorated {
        base = assign_bonds(&base, &BondPolicy::AllSinglet, &mut stream(seed, run))?;
    }
    let mut rng = stream(seed, run);
    let mode = if strategy == Strategy::HtDecorated { FusionMode::Ht } else { FusionMode::Bsm };
    let mut asm = Assembly::new(&base, a)?;
    let mut transcript = Vec::new();
    let mut by_max: Vec<Vec<usize>> = vec![Vec::new(); base.num_vertices()];
    for (e, edge) in base.edges().iter().enumerate() {
        if base.is_bulk(edge.u) && base.is_bulk(edge.v) {
            by_max[edge.v].push(e);
        }
    }
    for (v, edges) in by_max.iter().enumerate() {
        asm.add_site(v)?;
        for &e in edges {
            transcript.push(asm.fuse(e, mode, &mut rng)?);
        }
    }
    let m = base.num_edges();
    let mut outcome = vec![None; m];
    for r in &transcript {
        outcome[r.edge] = Some(r.outcome);
    }
    let (state, realized_graph, ledger) = match strategy {
        Strategy::BsmCorrected => {
            let bonds = (0..m)
                .map(|e| {
                    let got = outcome[e].map_or(Pauli::I, FusionOutcome::byproduct);
                    got.times(base.edges()[e].bond.byproduct())
                })
                .collect();
            let mut ledger = DefectLedger::from_bonds(bonds);
            let raw = asm.into_layout(&base, &vec![false; m])?;
            let state = correct_tree(&raw, &base, &mut ledger)?;
            (state, base, ledger)
        }
        Strategy::BsmRandombond => {
            let kinds: Vec<BellKind> = (0..m)
                .map(|e| match outcome[e] {
                    Some(FusionOutcome::Bell(b)) => b,
                    _ => BellKind::PsiMinus,
                })
                .collect();
            let ledger = DefectLedger::from_bonds(kinds.iter().map(|b| b.byproduct()).collect());
            let realized = assign_bonds(&base, &BondPolicy::FixedList(kinds), &mut stream(seed, run))?;
            let state = asm.into_layout(&realized, &vec![false; m])?;
            (state, realized, ledger)
        }
        Strategy::HtDecorated => {
            let decorated: Vec<bool> = outcome.iter().map(|o| *o == Some(FusionOutcome::Triplet)).collect();
            let mut dg = base.clone();
            for (e, &d) in decorated.iter().enumerate() {
                if d {
                    dg = decorate(&dg, e, 1)?;
                }
            }
            let realized = materialize(&dg)?;
            let state = asm.into_layout(&realized, &decorated)?;
            let ledger = DefectLedger::new(realized.num_edges());
            (state, realized, ledger)
        }
    };
    Ok(PreparedState { state, realized_graph, strategy, deformation: a, seed, run, transcript, ledger })
}
