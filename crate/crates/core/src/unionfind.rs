//! Disjoint sets with an optional Z₂ label on each element relative to its root.

#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
    /// Parity of the path from an element to its parent.
    parity: Vec<bool>,
    sets: usize,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), rank: vec![0; n], parity: vec![false; n], sets: n }
    }

    /// Root of `x` and the parity of `x` relative to it.
    pub fn find(&mut self, x: usize) -> (usize, bool) {
        let p = self.parent[x];
        if p == x {
            return (x, false);
        }
        let (root, pp) = self.find(p);
        self.parity[x] ^= pp;
        self.parent[x] = root;
        (root, self.parity[x])
    }

    /// Join the sets of `a` and `b`. Returns whether they were separate.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        self.union_parity(a, b, false) == Some(true)
    }

    /// Join `a` and `b` with relative parity `odd`. Returns `Some(true)` if the
    /// sets were merged, `Some(false)` if already joined consistently, and
    /// `None` if already joined with the opposite parity.
    pub fn union_parity(&mut self, a: usize, b: usize, odd: bool) -> Option<bool> {
        let (ra, pa) = self.find(a);
        let (rb, pb) = self.find(b);
        if ra == rb {
            return if pa ^ pb == odd { Some(false) } else { None };
        }
        let (hi, lo) = if self.rank[ra] >= self.rank[rb] { (ra, rb) } else { (rb, ra) };
        self.parent[lo] = hi;
        self.parity[lo] = pa ^ pb ^ odd;
        if self.rank[hi] == self.rank[lo] {
            self.rank[hi] += 1;
        }
        self.sets -= 1;
        Some(true)
    }

    pub fn same(&mut self, a: usize, b: usize) -> bool {
        self.find(a).0 == self.find(b).0
    }

    pub fn count(&self) -> usize {
        self.sets
    }

    /// Component label per element, numbered by first appearance.
    pub fn labels(&mut self) -> Vec<usize> {
        let n = self.parent.len();
        let mut id = vec![usize::MAX; n];
        let mut out = Vec::with_capacity(n);
        let mut next = 0;
        for x in 0..n {
            let r = self.find(x).0;
            if id[r] == usize::MAX {
                id[r] = next;
                next += 1;
            }
            out.push(id[r]);
        }
        out
    }
}
