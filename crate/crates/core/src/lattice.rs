//! Site graphs: physical sites, valence bonds, decorations and the
//! site-to-virtual-qubit map.
//!
//! Every bond between two sites carries one virtual qubit at each end, so a
//! site of degree `z` holds `z` virtual qubits and has spin `z/2`. A site's
//! qubits are contiguous and ordered by neighbor id.

use crate::bell::BellKind;
use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Bulk,
    BoundaryQubit,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: usize,
    pub role: Role,
    /// Layout coordinate `[row, col]`; used for drawing and spanning tests.
    pub pos: [i32; 2],
    /// Edge of the abstract graph this vertex decorates, once materialized.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoration_of: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub bond: BellKind,
    #[serde(default)]
    pub decorations: usize,
}

impl Edge {
    pub fn other(&self, x: usize) -> usize {
        if x == self.u {
            self.v
        } else {
            self.u
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SiteGraph {
    family: String,
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    faces: Vec<Vec<usize>>,
    /// `(neighbor, edge)` sorted by neighbor.
    adjacency: Vec<Vec<(usize, usize)>>,
    qubit_offsets: Vec<usize>,
}

impl SiteGraph {
    /// Validate and index a graph. Edges are stored with `u < v` in
    /// lexicographic order.
    pub fn new(family: impl Into<String>, vertices: Vec<Vertex>, mut edges: Vec<Edge>, faces: Vec<Vec<usize>>) -> Result<Self> {
        let n = vertices.len();
        if n == 0 {
            return Err(Error::InvalidParameter("graph has no vertices".into()));
        }
        for (i, v) in vertices.iter().enumerate() {
            if v.id != i {
                return Err(Error::InvalidParameter(format!("vertex {i} carries id {}", v.id)));
            }
        }
        for e in &mut edges {
            if e.u == e.v || e.u >= n || e.v >= n {
                return Err(Error::InvalidParameter(format!("bad edge ({}, {})", e.u, e.v)));
            }
            if e.u > e.v {
                std::mem::swap(&mut e.u, &mut e.v);
            }
        }
        edges.sort_by_key(|e| (e.u, e.v));
        if edges.windows(2).any(|w| (w[0].u, w[0].v) == (w[1].u, w[1].v)) {
            return Err(Error::InvalidParameter("parallel edges".into()));
        }
        let mut adjacency = vec![Vec::new(); n];
        for (k, e) in edges.iter().enumerate() {
            adjacency[e.u].push((e.v, k));
            adjacency[e.v].push((e.u, k));
        }
        for a in &mut adjacency {
            a.sort_unstable();
        }
        for v in &vertices {
            let d = adjacency[v.id].len();
            match v.role {
                Role::Bulk if d == 0 && n > 1 => {
                    return Err(Error::InvalidParameter(format!("bulk vertex {} is isolated", v.id)))
                }
                Role::BoundaryQubit if d != 1 => {
                    return Err(Error::InvalidParameter(format!("boundary qubit {} has degree {d}", v.id)))
                }
                _ => {}
            }
        }
        for f in &faces {
            if f.iter().any(|&x| x >= n) {
                return Err(Error::InvalidParameter("face references a missing vertex".into()));
            }
        }
        let mut qubit_offsets = Vec::with_capacity(n + 1);
        let mut acc = 0;
        for a in &adjacency {
            qubit_offsets.push(acc);
            acc += a.len();
        }
        qubit_offsets.push(acc);
        Ok(Self { family: family.into(), vertices, edges, faces, adjacency, qubit_offsets })
    }

    pub fn family(&self) -> &str {
        &self.family
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> &Vertex {
        &self.vertices[v]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> Result<&Edge> {
        self.edges.get(e).ok_or(Error::MissingEdge(e))
    }

    pub fn faces(&self) -> &[Vec<usize>] {
        &self.faces
    }

    /// `(neighbor, edge)` pairs sorted by neighbor id.
    pub fn neighbors(&self, v: usize) -> &[(usize, usize)] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    /// Twice the spin of `v`.
    pub fn two_s(&self, v: usize) -> usize {
        self.degree(v)
    }

    pub fn is_bulk(&self, v: usize) -> bool {
        self.vertices[v].role == Role::Bulk
    }

    pub fn find_edge(&self, u: usize, v: usize) -> Option<usize> {
        self.adjacency[u].iter().find(|(w, _)| *w == v).map(|&(_, e)| e)
    }

    pub fn total_qubits(&self) -> usize {
        *self.qubit_offsets.last().unwrap_or(&0)
    }

    /// Virtual qubits of `v`, in neighbor order.
    pub fn qubits(&self, v: usize) -> std::ops::Range<usize> {
        self.qubit_offsets[v]..self.qubit_offsets[v + 1]
    }

    /// The qubit of `v` that sits on edge `e`.
    pub fn qubit_on_edge(&self, v: usize, e: usize) -> Result<usize> {
        let pos = self.adjacency[v].iter().position(|&(_, k)| k == e).ok_or(Error::MissingEdge(e))?;
        Ok(self.qubit_offsets[v] + pos)
    }

    pub fn qubit_map(&self) -> Vec<Vec<usize>> {
        (0..self.num_vertices()).map(|v| self.qubits(v).collect()).collect()
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.num_vertices()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &(w, _) in &self.adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Number of independent cycles (`|E| - |V| + components`).
    pub fn cycle_rank(&self) -> usize {
        let mut uf = crate::unionfind::UnionFind::new(self.num_vertices());
        for e in &self.edges {
            uf.union(e.u, e.v);
        }
        self.num_edges() + uf.count() - self.num_vertices()
    }

    pub fn total_decorations(&self) -> usize {
        self.edges.iter().map(|e| e.decorations).sum()
    }

    /// Rebuild with the same vertices and faces but new edge attributes.
    fn with_edges(&self, edges: Vec<Edge>) -> Result<Self> {
        SiteGraph::new(self.family.clone(), self.vertices.clone(), edges, self.faces.clone())
    }
}

/// Add `count` decorations to edge `edge`.
pub fn decorate(g: &SiteGraph, edge: usize, count: usize) -> Result<SiteGraph> {
    g.edge(edge)?;
    let mut edges = g.edges.clone();
    edges[edge].decorations += count;
    g.with_edges(edges)
}

/// Add `count` decorations to every edge between bulk sites.
pub fn decorate_all(g: &SiteGraph, count: usize) -> Result<SiteGraph> {
    let mut edges = g.edges.clone();
    for e in &mut edges {
        if g.is_bulk(e.u) && g.is_bulk(e.v) {
            e.decorations += count;
        }
    }
    g.with_edges(edges)
}

/// Replace every decorated edge by a path of spin-1 vertices. New vertices
/// are appended in edge order; the first segment keeps the edge's bond and
/// the others are singlets.
pub fn materialize(g: &SiteGraph) -> Result<SiteGraph> {
    let mut vertices = g.vertices.clone();
    let mut edges = Vec::with_capacity(g.num_edges() + g.total_decorations());
    for (k, e) in g.edges.iter().enumerate() {
        let mut prev = e.u;
        let (pu, pv) = (g.vertices[e.u].pos, g.vertices[e.v].pos);
        for i in 0..e.decorations {
            let id = vertices.len();
            let t = (i + 1) as f64 / (e.decorations + 1) as f64;
            let lerp = |a: i32, b: i32| (a as f64 + t * (b - a) as f64).round() as i32;
            vertices.push(Vertex { id, role: Role::Bulk, pos: [lerp(pu[0], pv[0]), lerp(pu[1], pv[1])], decoration_of: Some(k) });
            let bond = if i == 0 { e.bond } else { BellKind::PsiMinus };
            edges.push(Edge { u: prev, v: id, bond, decorations: 0 });
            prev = id;
        }
        let bond = if e.decorations == 0 { e.bond } else { BellKind::PsiMinus };
        edges.push(Edge { u: prev, v: e.v, bond, decorations: 0 });
    }
    SiteGraph::new(g.family.clone(), vertices, edges, g.faces.clone())
}

/// Inverse of [`materialize`]: fold decoration vertices back into counts.
pub fn dematerialize(g: &SiteGraph) -> Result<SiteGraph> {
    let keep: Vec<usize> = (0..g.num_vertices()).filter(|&v| g.vertices[v].decoration_of.is_none()).collect();
    let mut new_id = vec![usize::MAX; g.num_vertices()];
    for (i, &v) in keep.iter().enumerate() {
        new_id[v] = i;
    }
    let vertices: Vec<Vertex> = keep.iter().enumerate().map(|(i, &v)| Vertex { id: i, ..g.vertices[v].clone() }).collect();
    let mut edges = Vec::new();
    for &v in &keep {
        for &(w, k) in g.neighbors(v) {
            // Walk each path once, from its lower endpoint.
            let mut prev = v;
            let mut cur = w;
            let mut count = 0;
            while g.vertices[cur].decoration_of.is_some() {
                count += 1;
                let &(next, _) = g.neighbors(cur).iter().find(|&&(x, _)| x != prev).ok_or_else(|| {
                    Error::InvalidParameter(format!("decoration vertex {cur} is not on a path"))
                })?;
                prev = cur;
                cur = next;
            }
            if v < cur {
                let bond = g.edges[k].bond;
                edges.push(Edge { u: new_id[v], v: new_id[cur], bond, decorations: count });
            }
        }
    }
    SiteGraph::new(g.family.clone(), vertices, edges, g.faces.clone())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", content = "bonds", rename_all = "snake_case")]
pub enum BondPolicy {
    AllSinglet,
    UniformRandom,
    FixedList(Vec<BellKind>),
}

pub fn assign_bonds(g: &SiteGraph, policy: &BondPolicy, rng: &mut impl Rng) -> Result<SiteGraph> {
    let mut edges = g.edges.clone();
    match policy {
        BondPolicy::AllSinglet => edges.iter_mut().for_each(|e| e.bond = BellKind::PsiMinus),
        BondPolicy::UniformRandom => edges.iter_mut().for_each(|e| e.bond = BellKind::ALL[rng.random_range(0..4)]),
        BondPolicy::FixedList(list) => {
            if list.len() != edges.len() {
                return Err(Error::BondListLength { expected: edges.len(), found: list.len() });
            }
            edges.iter_mut().zip(list).for_each(|(e, b)| e.bond = *b);
        }
    }
    g.with_edges(edges)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LatticeSpec {
    ChainOpen { length: usize, terminated: bool },
    ChainRing { length: usize },
    HexPatch { rows: usize, cols: usize, terminated: bool },
    SquarePatch { rows: usize, cols: usize, terminated: bool },
    BetheTree { z: usize, depth: usize, terminated: bool },
    StarPatch { rows: usize, cols: usize, terminated: bool },
    Quasichain { length: usize, terminated: bool },
}

impl LatticeSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LatticeSpec::ChainOpen { .. } => "chain_open",
            LatticeSpec::ChainRing { .. } => "chain_ring",
            LatticeSpec::HexPatch { .. } => "hex_patch",
            LatticeSpec::SquarePatch { .. } => "square_patch",
            LatticeSpec::BetheTree { .. } => "bethe_tree",
            LatticeSpec::StarPatch { .. } => "star_patch",
            LatticeSpec::Quasichain { .. } => "quasichain",
        }
    }
}

/// Compact form `family:size[:qubits]`, e.g. `chain_open:3:qubits`,
/// `hex_patch:2x2`, `bethe_tree:3x2:qubits` (z × depth).
impl FromStr for LatticeSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::Parse(format!("bad lattice spec `{s}`"));
        if parts.len() < 2 || parts.len() > 3 {
            return Err(bad());
        }
        let terminated = match parts.get(2) {
            None => false,
            Some(&"qubits") => true,
            Some(_) => return Err(bad()),
        };
        let one = || parts[1].parse::<usize>().map_err(|_| bad());
        let two = || -> Result<(usize, usize)> {
            let (a, b) = parts[1].split_once('x').ok_or_else(bad)?;
            Ok((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?))
        };
        Ok(match parts[0] {
            "chain_open" => LatticeSpec::ChainOpen { length: one()?, terminated },
            "chain_ring" => LatticeSpec::ChainRing { length: one()? },
            "hex_patch" => {
                let (rows, cols) = two()?;
                LatticeSpec::HexPatch { rows, cols, terminated }
            }
            "square_patch" => {
                let (rows, cols) = two()?;
                LatticeSpec::SquarePatch { rows, cols, terminated }
            }
            "bethe_tree" => {
                let (z, depth) = two()?;
                LatticeSpec::BetheTree { z, depth, terminated }
            }
            "star_patch" => {
                let (rows, cols) = two()?;
                LatticeSpec::StarPatch { rows, cols, terminated }
            }
            "quasichain" => LatticeSpec::Quasichain { length: one()?, terminated },
            _ => return Err(bad()),
        })
    }
}

impl fmt::Display for LatticeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = |b: bool| if b { ":qubits" } else { "" };
        match *self {
            LatticeSpec::ChainOpen { length, terminated } => write!(f, "chain_open:{length}{}", t(terminated)),
            LatticeSpec::ChainRing { length } => write!(f, "chain_ring:{length}"),
            LatticeSpec::HexPatch { rows, cols, terminated } => write!(f, "hex_patch:{rows}x{cols}{}", t(terminated)),
            LatticeSpec::SquarePatch { rows, cols, terminated } => write!(f, "square_patch:{rows}x{cols}{}", t(terminated)),
            LatticeSpec::BetheTree { z, depth, terminated } => write!(f, "bethe_tree:{z}x{depth}{}", t(terminated)),
            LatticeSpec::StarPatch { rows, cols, terminated } => write!(f, "star_patch:{rows}x{cols}{}", t(terminated)),
            LatticeSpec::Quasichain { length, terminated } => write!(f, "quasichain:{length}{}", t(terminated)),
        }
    }
}

/// Graph under construction, keyed by insertion index.
#[derive(Default)]
struct Proto {
    verts: Vec<(Role, [i32; 2])>,
    index: BTreeMap<[i32; 2], usize>,
    edges: Vec<(usize, usize)>,
    faces: Vec<Vec<usize>>,
}

impl Proto {
    fn site(&mut self, pos: [i32; 2]) -> usize {
        if let Some(&i) = self.index.get(&pos) {
            return i;
        }
        self.verts.push((Role::Bulk, pos));
        self.index.insert(pos, self.verts.len() - 1);
        self.verts.len() - 1
    }

    fn fresh(&mut self, role: Role, pos: [i32; 2]) -> usize {
        self.verts.push((role, pos));
        self.verts.len() - 1
    }

    fn edge(&mut self, a: usize, b: usize) {
        let key = (a.min(b), a.max(b));
        if !self.edges.contains(&key) {
            self.edges.push(key);
        }
    }

    fn degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|&&(a, b)| a == v || b == v).count()
    }

    /// Attach boundary qubits until every bulk site has degree `target`.
    fn terminate(&mut self, target: usize) {
        let n = self.verts.len();
        for v in 0..n {
            if self.verts[v].0 != Role::Bulk {
                continue;
            }
            for _ in self.degree(v)..target {
                let q = self.fresh(Role::BoundaryQubit, self.verts[v].1);
                self.edge(v, q);
            }
        }
    }

    /// Breadth-first renumbering from the vertex with the smallest
    /// `(pos, index)`, visiting neighbors in the same order.
    fn finish(self, family: &str) -> Result<SiteGraph> {
        let n = self.verts.len();
        let key = |i: usize| (self.verts[i].1, i);
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for a in &mut adj {
            a.sort_by_key(|&i| key(i));
        }
        let start = (0..n).min_by_key(|&i| key(i)).ok_or_else(|| Error::InvalidParameter("empty lattice".into()))?;
        let mut order = Vec::with_capacity(n);
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        if order.len() != n {
            return Err(Error::InvalidParameter("lattice is disconnected".into()));
        }
        let mut new_id = vec![0; n];
        for (i, &v) in order.iter().enumerate() {
            new_id[v] = i;
        }
        let vertices = order
            .iter()
            .enumerate()
            .map(|(i, &v)| Vertex { id: i, role: self.verts[v].0, pos: self.verts[v].1, decoration_of: None })
            .collect();
        let edges = self
            .edges
            .iter()
            .map(|&(a, b)| Edge { u: new_id[a], v: new_id[b], bond: BellKind::PsiMinus, decorations: 0 })
            .collect();
        let faces = self.faces.iter().map(|f| f.iter().map(|&v| new_id[v]).collect()).collect();
        SiteGraph::new(family, vertices, edges, faces)
    }
}

fn positive(name: &str, x: usize) -> Result<()> {
    if x == 0 {
        return Err(Error::InvalidParameter(format!("{name} must be positive")));
    }
    Ok(())
}

/// Brick-wall honeycomb made of `rows × cols` complete hexagons. Face `(i, j)`
/// spans site rows `i, i+1` and columns `2j + (i mod 2)` through `+2`.
fn hex_proto(rows: usize, cols: usize) -> Proto {
    let mut p = Proto::default();
    for i in 0..rows as i32 {
        for j in 0..cols as i32 {
            let x = 2 * j + (i % 2);
            let top: Vec<usize> = (0..3).map(|d| p.site([i, x + d])).collect();
            let bot: Vec<usize> = (0..3).map(|d| p.site([i + 1, x + d])).collect();
            p.edge(top[0], top[1]);
            p.edge(top[1], top[2]);
            p.edge(bot[0], bot[1]);
            p.edge(bot[1], bot[2]);
            p.edge(top[0], bot[0]);
            p.edge(top[2], bot[2]);
            p.faces.push(vec![top[0], top[1], top[2], bot[2], bot[1], bot[0]]);
        }
    }
    p
}

pub fn make_lattice(spec: &LatticeSpec) -> Result<SiteGraph> {
    let mut p = Proto::default();
    match *spec {
        LatticeSpec::ChainOpen { length, terminated } => {
            positive("length", length)?;
            let sites: Vec<usize> = (0..length as i32).map(|c| p.site([0, c])).collect();
            for w in sites.windows(2) {
                p.edge(w[0], w[1]);
            }
            if terminated {
                let l = p.fresh(Role::BoundaryQubit, [0, -1]);
                let r = p.fresh(Role::BoundaryQubit, [0, length as i32]);
                p.edge(l, sites[0]);
                p.edge(sites[length - 1], r);
            }
        }
        LatticeSpec::ChainRing { length } => {
            if length < 3 {
                return Err(Error::InvalidParameter("ring length must be at least 3".into()));
            }
            let sites: Vec<usize> = (0..length as i32).map(|c| p.site([0, c])).collect();
            for i in 0..length {
                p.edge(sites[i], sites[(i + 1) % length]);
            }
            p.faces.push(sites);
        }
        LatticeSpec::HexPatch { rows, cols, terminated } => {
            positive("rows", rows)?;
            positive("cols", cols)?;
            p = hex_proto(rows, cols);
            if terminated {
                p.terminate(3);
            }
        }
        LatticeSpec::SquarePatch { rows, cols, terminated } => {
            positive("rows", rows)?;
            positive("cols", cols)?;
            if rows * cols < 2 {
                return Err(Error::InvalidParameter("square patch needs at least two sites".into()));
            }
            for r in 0..rows as i32 {
                for c in 0..cols as i32 {
                    let v = p.site([r, c]);
                    if c + 1 < cols as i32 {
                        let w = p.site([r, c + 1]);
                        p.edge(v, w);
                    }
                    if r + 1 < rows as i32 {
                        let w = p.site([r + 1, c]);
                        p.edge(v, w);
                    }
                }
            }
            for r in 0..rows as i32 - 1 {
                for c in 0..cols as i32 - 1 {
                    let f = [[r, c], [r, c + 1], [r + 1, c + 1], [r + 1, c]].map(|q| p.index[&q]);
                    p.faces.push(f.to_vec());
                }
            }
            if terminated {
                p.terminate(4);
            }
        }
        LatticeSpec::BetheTree { z, depth, terminated } => {
            if z < 2 {
                return Err(Error::InvalidParameter("bethe_tree requires z >= 2".into()));
            }
            positive("depth", depth)?;
            let root = p.site([0, 0]);
            let mut frontier = vec![root];
            for level in 1..=depth as i32 {
                let leaf = level == depth as i32;
                let mut next = Vec::new();
                let mut col = 0;
                for (k, &parent) in frontier.iter().enumerate() {
                    let children = if k == 0 && level == 1 { z } else { z - 1 };
                    for _ in 0..children {
                        let role = if leaf && terminated { Role::BoundaryQubit } else { Role::Bulk };
                        let c = p.fresh(role, [level, col]);
                        col += 1;
                        p.edge(parent, c);
                        next.push(c);
                    }
                }
                frontier = next;
            }
        }
        LatticeSpec::StarPatch { rows, cols, terminated } => {
            positive("rows", rows)?;
            positive("cols", cols)?;
            let hex = hex_proto(rows, cols);
            let mut cluster: BTreeMap<(usize, usize), usize> = BTreeMap::new();
            for (k, &(a, b)) in hex.edges.iter().enumerate() {
                for (x, y) in [(a, b), (b, a)] {
                    let (px, py) = (hex.verts[x].1, hex.verts[y].1);
                    let pos = [4 * px[0] + (py[0] - px[0]), 4 * px[1] + (py[1] - px[1])];
                    let id = p.fresh(Role::Bulk, pos);
                    cluster.insert((x, k), id);
                }
                p.edge(cluster[&(a, k)], cluster[&(b, k)]);
            }
            for v in 0..hex.verts.len() {
                let members: Vec<usize> = cluster.iter().filter(|((x, _), _)| *x == v).map(|(_, &id)| id).collect();
                for i in 0..members.len() {
                    for j in i + 1..members.len() {
                        p.edge(members[i], members[j]);
                    }
                }
                if members.len() == 3 {
                    p.faces.push(members);
                }
            }
            if terminated {
                p.terminate(3);
            }
        }
        LatticeSpec::Quasichain { length, terminated } => {
            positive("length", length)?;
            let sites: Vec<usize> = (0..length as i32).map(|c| p.site([0, c])).collect();
            for w in sites.windows(2) {
                p.edge(w[0], w[1]);
            }
            for (c, &s) in sites.iter().enumerate() {
                let d = p.site([1, c as i32]);
                p.edge(s, d);
            }
            if terminated {
                let l = p.fresh(Role::BoundaryQubit, [0, -1]);
                let r = p.fresh(Role::BoundaryQubit, [0, length as i32]);
                p.edge(l, sites[0]);
                p.edge(sites[length - 1], r);
            }
        }
    }
    p.finish(spec.name())
}

pub const SITEGRAPH_SCHEMA: &str = "sitegraph/v1";

#[derive(Serialize, Deserialize)]
struct VertexDoc {
    #[serde(flatten)]
    vertex: Vertex,
    spin: f64,
    qubits: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct GraphDoc {
    schema: String,
    family: String,
    vertices: Vec<VertexDoc>,
    edges: Vec<Edge>,
    #[serde(default)]
    faces: Vec<Vec<usize>>,
}

pub fn to_json(g: &SiteGraph) -> String {
    let doc = GraphDoc {
        schema: SITEGRAPH_SCHEMA.into(),
        family: g.family.clone(),
        vertices: g
            .vertices
            .iter()
            .map(|v| VertexDoc { vertex: v.clone(), spin: g.two_s(v.id) as f64 / 2.0, qubits: g.qubits(v.id).collect() })
            .collect(),
        edges: g.edges.clone(),
        faces: g.faces.clone(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("serializable");
    s.push('\n');
    s
}

/// Parse a `sitegraph/v1` document. Spin and qubit fields are checked against
/// the recomputed values.
pub fn from_json(text: &str) -> Result<SiteGraph> {
    let doc: GraphDoc = serde_json::from_str(text)?;
    if doc.schema != SITEGRAPH_SCHEMA {
        return Err(Error::UnknownFormat(doc.schema));
    }
    let claims: Vec<(f64, Vec<usize>)> = doc.vertices.iter().map(|v| (v.spin, v.qubits.clone())).collect();
    let vertices = doc.vertices.into_iter().map(|v| v.vertex).collect();
    let g = SiteGraph::new(doc.family, vertices, doc.edges, doc.faces)?;
    for (v, (spin, qubits)) in claims.iter().enumerate() {
        if (spin * 2.0 - g.two_s(v) as f64).abs() > 1e-9 {
            return Err(Error::Parse(format!("vertex {v}: spin {spin} disagrees with degree {}", g.degree(v))));
        }
        if *qubits != g.qubits(v).collect::<Vec<_>>() {
            return Err(Error::Parse(format!("vertex {v}: qubit list disagrees with the canonical map")));
        }
    }
    Ok(g)
}
