//! Graph-level Monte Carlo on large patches. POVM outcomes are drawn i.i.d.
//! uniform over {x, y, z} and whole configurations with a frustrated cycle are
//! rejected; this approximates the correlated outcome distribution, which is
//! sampled exactly only at statevector scale.

use crate::bell::BellKind;
use crate::error::{Error, Result};
use crate::graphstate::{build_domain_graph, recover_undecorated, DomainGraph, PovmOutcome};
use crate::lattice::{decorate, make_lattice, materialize, LatticeSpec, SiteGraph};
use crate::pauli::Axis;
use crate::rng::{stream, Rng};
use crate::unionfind::UnionFind;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Draws allowed for a single trial before giving up.
const MAX_DRAWS_PER_TRIAL: u64 = 100_000;

pub fn sample_iid(g: &SiteGraph, rng: &mut Rng) -> PovmOutcome {
    PovmOutcome::random(g, rng)
}

/// Parity labels from a spanning forest of each same-axis domain, and the
/// edges that close an inconsistent cycle.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedCycleCheck {
    /// Relative orientation of each bulk site within its domain.
    pub parity: Vec<Option<bool>>,
    pub violated: Vec<usize>,
}

/// True iff some same-axis cycle has bond-sign product −1.
pub fn is_frustrated(g: &SiteGraph, o: &PovmOutcome) -> (bool, SignedCycleCheck) {
    let mut uf = UnionFind::new(g.num_vertices());
    let mut violated = Vec::new();
    for (k, e) in g.edges().iter().enumerate() {
        if let (Some(a), Some(b)) = (o.axis(e.u), o.axis(e.v)) {
            if a == b && uf.union_parity(e.u, e.v, e.bond.sign(a) < 0).is_none() {
                violated.push(k);
            }
        }
    }
    let parity = (0..g.num_vertices()).map(|v| o.axis(v).map(|_| uf.find(v).1)).collect();
    (!violated.is_empty(), SignedCycleCheck { parity, violated })
}

/// Patch families for size-indexed runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchFamily {
    Hex,
    Star,
    Square,
}

impl std::str::FromStr for PatchFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hex" | "hex_patch" => Ok(PatchFamily::Hex),
            "star" | "star_patch" => Ok(PatchFamily::Star),
            "square" | "square_patch" => Ok(PatchFamily::Square),
            _ => Err(Error::Parse(format!("unknown patch family `{s}`"))),
        }
    }
}

/// An unterminated patch about `l` sites across. Hexagonal patches use
/// `(l−1) × (l/2−1)` faces, which spans `l` site rows and `l` site columns.
pub fn patch_for_size(family: PatchFamily, l: usize) -> Result<LatticeSpec> {
    if l < 4 {
        return Err(Error::InvalidParameter(format!("patch size {l} is below 4")));
    }
    Ok(match family {
        PatchFamily::Hex => LatticeSpec::HexPatch { rows: l - 1, cols: l / 2 - 1, terminated: false },
        PatchFamily::Star => LatticeSpec::StarPatch { rows: l - 1, cols: l / 2 - 1, terminated: false },
        PatchFamily::Square => LatticeSpec::SquarePatch { rows: l, cols: l, terminated: false },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BondChoice {
    Singlet,
    /// Each bond uniform over the four Bell states, fresh per trial.
    Random,
}

impl std::str::FromStr for BondChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "singlet" => Ok(BondChoice::Singlet),
            "random" => Ok(BondChoice::Random),
            _ => Err(Error::Parse(format!("unknown bond choice `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PercolationSpec {
    pub lattice: LatticeSpec,
    pub bonds: BondChoice,
    /// Probability that an edge carries one decoration (0 for none).
    #[serde(default)]
    pub decoration_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub spanning: bool,
    pub largest_cluster_fraction: f64,
    pub frustrated_rejections: u64,
    /// Independent-face estimate of the per-draw rejection probability.
    pub predicted_rejection: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PercolationRun {
    pub spec: PercolationSpec,
    pub trials: usize,
    pub seed: u64,
    pub results: Vec<TrialResult>,
}

impl PercolationRun {
    pub fn spanning_frequency(&self) -> f64 {
        self.results.iter().filter(|r| r.spanning).count() as f64 / self.trials as f64
    }

    /// Binomial standard error of the spanning frequency.
    pub fn spanning_stderr(&self) -> f64 {
        let p = self.spanning_frequency();
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }

    pub fn mean_largest_cluster(&self) -> f64 {
        self.results.iter().map(|r| r.largest_cluster_fraction).sum::<f64>() / self.trials as f64
    }

    pub fn total_draws(&self) -> u64 {
        self.trials as u64 + self.rejections()
    }

    pub fn rejections(&self) -> u64 {
        self.results.iter().map(|r| r.frustrated_rejections).sum()
    }

    pub fn rejection_rate(&self) -> f64 {
        self.rejections() as f64 / self.total_draws() as f64
    }

    /// Per-face estimate averaged over draws.
    pub fn predicted_rejection_rate(&self) -> f64 {
        let weighted: f64 = self.results.iter().map(|r| r.predicted_rejection * (r.frustrated_rejections + 1) as f64).sum();
        weighted / self.total_draws() as f64
    }

    /// Binomial standard error of the rejection rate at the predicted value.
    pub fn rejection_stderr(&self) -> f64 {
        let p = self.predicted_rejection_rate();
        (p * (1.0 - p) / self.total_draws() as f64).sqrt()
    }
}

/// Probability that the cycle `face` is all one axis with sign product −1
/// under i.i.d. outcomes. Decorated edges lengthen the cycle and add a
/// singlet sign per extra segment.
pub fn face_frustration_probability(g: &SiteGraph, face: &[usize]) -> Result<f64> {
    let mut sites = face.len();
    let mut sign = [1i8; 3];
    for i in 0..face.len() {
        let (u, v) = (face[i], face[(i + 1) % face.len()]);
        let k = g.find_edge(u, v).ok_or_else(|| Error::InvalidParameter(format!("face edge ({u}, {v}) missing")))?;
        let e = &g.edges()[k];
        sites += e.decorations;
        for a in Axis::ALL {
            let extra = if e.decorations % 2 == 1 { BellKind::PsiMinus.sign(a) } else { 1 };
            sign[a.index()] *= e.bond.sign(a) * extra;
        }
    }
    let bad = sign.iter().filter(|&&s| s < 0).count();
    Ok(bad as f64 * 3f64.powi(-(sites as i32)))
}

/// `1 − ∏_f (1 − p_f)` over the faces of `g`.
pub fn predicted_rejection(g: &SiteGraph) -> Result<f64> {
    let mut keep = 1.0;
    for f in g.faces() {
        keep *= 1.0 - face_frustration_probability(g, f)?;
    }
    Ok(1.0 - keep)
}

/// Sites touching the left and right edges of the layout (two columns each,
/// so every row of a brick-wall patch is represented).
fn boundary_sets(g: &SiteGraph, keep: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let cols: Vec<i32> = keep.iter().map(|&v| g.vertex(v).pos[1]).collect();
    let (lo, hi) = (*cols.iter().min().unwrap_or(&0), *cols.iter().max().unwrap_or(&0));
    let left = keep.iter().copied().filter(|&v| g.vertex(v).pos[1] <= lo + 1).collect();
    let right = keep.iter().copied().filter(|&v| g.vertex(v).pos[1] >= hi - 1).collect();
    (left, right)
}

/// Spanning indicator and largest-component site fraction of a domain graph,
/// counting only the sites in `keep`.
pub fn cluster_statistics(dg: &DomainGraph, g: &SiteGraph, keep: &[usize]) -> (bool, f64) {
    let n = dg.domains().len();
    let mut uf = UnionFind::new(n);
    for (p, q) in dg.edges() {
        uf.union(p, q);
    }
    let mut size = vec![0usize; n];
    for &s in keep {
        if let Some(d) = dg.domain_of(s) {
            size[uf.find(d).0] += 1;
        }
    }
    let largest = size.iter().copied().max().unwrap_or(0) as f64 / keep.len().max(1) as f64;
    let (left, right) = boundary_sets(g, keep);
    let mut left_roots: Vec<usize> = left.iter().filter_map(|&s| dg.domain_of(s)).map(|d| uf.find(d).0).collect();
    left_roots.sort_unstable();
    let spanning = right.iter().filter_map(|&s| dg.domain_of(s)).any(|d| left_roots.binary_search(&uf.find(d).0).is_ok());
    (spanning, largest)
}

fn run_trial(base: &SiteGraph, spec: &PercolationSpec, seed: u64, trial: usize) -> Result<TrialResult> {
    let mut rng = stream(seed, trial as u64);
    let mut g = base.clone();
    if spec.bonds == BondChoice::Random {
        let bonds = (0..g.num_edges()).map(|_| BellKind::ALL[rng.random_range(0..4)]).collect();
        g = crate::lattice::assign_bonds(&g, &crate::lattice::BondPolicy::FixedList(bonds), &mut rng)?;
    }
    if spec.decoration_rate > 0.0 {
        for e in 0..g.num_edges() {
            let ends = &g.edges()[e];
            if g.is_bulk(ends.u) && g.is_bulk(ends.v) && rng.random::<f64>() < spec.decoration_rate {
                g = decorate(&g, e, 1)?;
            }
        }
    }
    let predicted = predicted_rejection(&g)?;
    let realized = if g.total_decorations() > 0 { materialize(&g)? } else { g.clone() };
    let mut rejections = 0u64;
    let o = loop {
        let o = sample_iid(&realized, &mut rng);
        if !is_frustrated(&realized, &o).0 {
            break o;
        }
        rejections += 1;
        if rejections >= MAX_DRAWS_PER_TRIAL {
            return Err(Error::RejectionRate { rate: 1.0, draws: rejections });
        }
    };
    let dg = build_domain_graph(&realized, &o)?;
    let dg = if g.total_decorations() > 0 { recover_undecorated(&dg, &realized, &o)?.graph } else { dg };
    let keep: Vec<usize> = (0..realized.num_vertices())
        .filter(|&v| realized.is_bulk(v) && realized.vertex(v).decoration_of.is_none())
        .collect();
    let (spanning, largest_cluster_fraction) = cluster_statistics(&dg, &realized, &keep);
    Ok(TrialResult { spanning, largest_cluster_fraction, frustrated_rejections: rejections, predicted_rejection: predicted })
}

/// Run `trials` independent trials; trial `t` draws from stream `(seed, t)`.
/// `threads = 0` uses the default pool size. Results do not depend on it.
pub fn run_percolation(spec: &PercolationSpec, trials: usize, seed: u64, threads: usize) -> Result<PercolationRun> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&spec.decoration_rate) {
        return Err(Error::InvalidParameter(format!("decoration rate {} outside [0, 1]", spec.decoration_rate)));
    }
    let base = make_lattice(&spec.lattice)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let results: Vec<TrialResult> =
        pool.install(|| (0..trials).into_par_iter().map(|t| run_trial(&base, spec, seed, t)).collect::<Result<_>>())?;
    let run = PercolationRun { spec: spec.clone(), trials, seed, results };
    let rate = run.rejection_rate();
    if rate > 0.5 {
        return Err(Error::RejectionRate { rate, draws: run.total_draws() });
    }
    Ok(run)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceConstant {
    pub name: &'static str,
    pub value: f64,
    pub note: &'static str,
}

/// Literature constants used to annotate reports.
pub fn reference_constants() -> Vec<ReferenceConstant> {
    vec![
        ReferenceConstant { name: "kagome_bond_threshold", value: 0.5244, note: "bond percolation threshold of the kagome lattice" },
        ReferenceConstant {
            name: "hex_site_threshold",
            value: 1.0 - 2.0 * (std::f64::consts::PI / 18.0).sin(),
            note: "site percolation threshold of the hexagonal lattice, 1 - 2 sin(pi/18)",
        },
        ReferenceConstant { name: "star_edge_deletion", value: 0.4712, note: "star lattice, average edge deletion probability with random bonds" },
        ReferenceConstant { name: "hex_face_frustration", value: 2.0 / 729.0, note: "one hexagon with bonds (psi-, phi+ x5)" },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{assign_bonds, decorate_all, BondPolicy, Edge, Role, Vertex};
    use proptest::prelude::*;

    fn worked_hexagon() -> SiteGraph {
        let g = make_lattice(&LatticeSpec::HexPatch { rows: 1, cols: 1, terminated: false }).unwrap();
        let mut bonds = vec![BellKind::PhiPlus; 6];
        bonds[0] = BellKind::PsiMinus;
        assign_bonds(&g, &BondPolicy::FixedList(bonds), &mut stream(0, 0)).unwrap()
    }

    #[test]
    fn iid_axes_are_uniform() {
        let g = make_lattice(&LatticeSpec::ChainRing { length: 10 }).unwrap();
        let mut rng = stream(3, 0);
        let mut counts = [0usize; 3];
        let draws = 10_000;
        for _ in 0..draws {
            for a in sample_iid(&g, &mut rng).axes().iter().flatten() {
                counts[a.index()] += 1;
            }
        }
        let n = (draws * 10) as f64;
        let sigma = (n * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for c in counts {
            assert!((c as f64 - n / 3.0).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn worked_hexagon_frustration() {
        let g = worked_hexagon();
        assert!(is_frustrated(&g, &PovmOutcome::uniform(&g, Axis::Z)).0);
        assert!(is_frustrated(&g, &PovmOutcome::uniform(&g, Axis::X)).0);
        assert!(!is_frustrated(&g, &PovmOutcome::uniform(&g, Axis::Y)).0);
        let p = face_frustration_probability(&g, &g.faces()[0]).unwrap();
        assert!((p - 2.0 / 729.0).abs() < 1e-15);
        // Exhaustive: exactly two of 729 configurations are frustrated.
        let mut bad = 0;
        for k in 0..729usize {
            let axes = (0..6).map(|i| Some(Axis::ALL[(k / 3usize.pow(i)) % 3])).collect();
            if is_frustrated(&g, &PovmOutcome::new(&g, axes).unwrap()).0 {
                bad += 1;
            }
        }
        assert_eq!(bad, 2);
    }

    #[test]
    fn singlet_even_cycles_never_frustrate() {
        let g = make_lattice(&LatticeSpec::HexPatch { rows: 2, cols: 2, terminated: false }).unwrap();
        for a in Axis::ALL {
            assert!(!is_frustrated(&g, &PovmOutcome::uniform(&g, a)).0);
        }
        assert_eq!(predicted_rejection(&g).unwrap(), 0.0);
    }

    #[test]
    fn trees_never_frustrate() {
        let g = make_lattice(&LatticeSpec::BetheTree { z: 3, depth: 3, terminated: false }).unwrap();
        let mut rng = stream(1, 0);
        for _ in 0..50 {
            let g = assign_bonds(&g, &BondPolicy::UniformRandom, &mut rng).unwrap();
            assert!(!is_frustrated(&g, &sample_iid(&g, &mut rng)).0);
        }
    }

    #[test]
    fn random_bond_face_mean() {
        // Averaged over the 4⁶ bond assignments of one hexagon, the expected
        // number of frustrated uniform-axis configurations is 1.5.
        let g = make_lattice(&LatticeSpec::HexPatch { rows: 1, cols: 1, terminated: false }).unwrap();
        let mut total = 0.0;
        for k in 0..4096usize {
            let bonds = (0..6).map(|i| BellKind::ALL[(k >> (2 * i)) & 3]).collect();
            let h = assign_bonds(&g, &BondPolicy::FixedList(bonds), &mut stream(0, 0)).unwrap();
            total += face_frustration_probability(&h, &h.faces()[0]).unwrap() * 729.0;
        }
        assert!((total / 4096.0 - 1.5).abs() < 1e-12);
    }

    #[test]
    fn runs_are_reproducible_and_thread_independent() {
        let spec = PercolationSpec { lattice: patch_for_size(PatchFamily::Hex, 8).unwrap(), bonds: BondChoice::Random, decoration_rate: 0.3 };
        let a = run_percolation(&spec, 40, 11, 1).unwrap();
        let b = run_percolation(&spec, 40, 11, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.results.iter().all(|r| (0.0..=1.0).contains(&r.largest_cluster_fraction)));
        assert_eq!(a.total_draws(), 40 + a.rejections());
    }

    #[test]
    fn hex_patch_size_mapping() {
        let g = make_lattice(&patch_for_size(PatchFamily::Hex, 8).unwrap()).unwrap();
        let rows: std::collections::BTreeSet<i32> = g.vertices().iter().map(|v| v.pos[0]).collect();
        let cols: std::collections::BTreeSet<i32> = g.vertices().iter().map(|v| v.pos[1]).collect();
        assert_eq!((rows.len(), cols.len()), (8, 8));
    }

    #[test]
    fn reference_values() {
        let c = reference_constants();
        let get = |n: &str| c.iter().find(|r| r.name == n).unwrap().value;
        assert_eq!(get("kagome_bond_threshold"), 0.5244);
        assert!((get("hex_site_threshold") - 0.6527).abs() < 1e-4);
        assert_eq!(get("star_edge_deletion"), 0.4712);
    }

    /// Frustrated iff some element of the same-axis cycle space has sign −1.
    fn brute_frustrated(g: &SiteGraph, o: &PovmOutcome) -> bool {
        let inner: Vec<(usize, i8)> = g
            .edges()
            .iter()
            .enumerate()
            .filter_map(|(k, e)| {
                let (a, b) = (o.axis(e.u)?, o.axis(e.v)?);
                (a == b).then(|| (k, e.bond.sign(a)))
            })
            .collect();
        (1..1usize << inner.len()).any(|mask| {
            let mut deg = vec![0usize; g.num_vertices()];
            let mut sign = 1i8;
            for (i, &(k, s)) in inner.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    deg[g.edges()[k].u] += 1;
                    deg[g.edges()[k].v] += 1;
                    sign *= s;
                }
            }
            sign < 0 && deg.iter().all(|d| d % 2 == 0)
        })
    }

    fn small_graph(n: usize, pairs: &[(usize, usize)], bonds: &[usize]) -> Option<SiteGraph> {
        let mut seen = std::collections::BTreeSet::new();
        let mut edges = Vec::new();
        for (&(a, b), &k) in pairs.iter().zip(bonds) {
            let (u, v) = (a % n, b % n);
            if u != v && seen.insert((u.min(v), u.max(v))) {
                edges.push(Edge { u: u.min(v), v: u.max(v), bond: BellKind::ALL[k], decorations: 0 });
            }
        }
        let vertices = (0..n).map(|id| Vertex { id, role: Role::Bulk, pos: [0, id as i32], decoration_of: None }).collect();
        let g = SiteGraph::new("test", vertices, edges, vec![]).ok()?;
        (0..n).all(|v| g.degree(v) > 0).then_some(g)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn parity_union_find_matches_cycle_space(
            n in 3usize..8,
            pairs in proptest::collection::vec((0usize..8, 0usize..8), 3..13),
            bonds in proptest::collection::vec(0usize..4, 12),
            axes in proptest::collection::vec(0usize..3, 8),
        ) {
            if let Some(g) = small_graph(n, &pairs, &bonds) {
                let o = PovmOutcome::new(&g, (0..n).map(|v| Some(Axis::ALL[axes[v]])).collect()).unwrap();
                prop_assert_eq!(is_frustrated(&g, &o).0, brute_frustrated(&g, &o));
            }
        }

        #[test]
        fn decoration_never_reduces_spanning(seed in 0u64..100_000) {
            let u = make_lattice(&patch_for_size(PatchFamily::Hex, 6).unwrap()).unwrap();
            let r = materialize(&decorate_all(&u, 1).unwrap()).unwrap();
            let mut rng = stream(seed, 0);
            let o = sample_iid(&r, &mut rng);
            let keep: Vec<usize> = (0..u.num_vertices()).collect();
            let plain = build_domain_graph(&u, &o.restrict(&keep)).unwrap();
            let dg = build_domain_graph(&r, &o).unwrap();
            let rec = recover_undecorated(&dg, &r, &o).unwrap().graph;
            let (s_plain, _) = cluster_statistics(&plain, &u, &keep);
            let (s_deco, _) = cluster_statistics(&rec, &r, &keep);
            prop_assert!(s_deco >= s_plain);
        }
    }
}
