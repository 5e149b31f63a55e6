//! Integer cochains on finite windows: vertex, edge and arrow functions, the
//! vertex-sum operator, harmonic extension, the matrix action, and orbit
//! invariants for the subgroups acting on a window.
//!
//! Conventions. A cochain carries the window kind and parameter its indices
//! refer to: `Vertices` at n is indexed by the window's vertex order, `Edges`
//! at n by its edge order, `Arrows` at n by the source-major arrow order
//! (sources in V_n, targets possibly one step outside). The vertex-sum
//! operator takes an edge function on the (n+1)-window to a vertex function
//! on the n-window, summing over all q+1 incident edges. A current is an
//! antisymmetric arrow function; its edge form reads the arrow whose source
//! is the even-parity endpoint.

use crate::bttree::{Mat2, Tree, TreeError, VertexLabel, Window, WindowKind};
use crate::intlin::{Int, IntMatrix};
use num::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum CochainError {
    #[error("cochain domains or windows do not match")]
    Mismatch,
    #[error("the action moves part of the window outside itself")]
    WindowEscape,
    #[error("the cochain is not constant on the given orbits")]
    NotInvariant,
    #[error("tree: {0}")]
    Tree(#[from] TreeError),
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum Domain {
    Vertices,
    Edges,
    Arrows,
}

/// An integer-valued function on the vertices, edges or arrows of a window.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Cochain {
    pub kind: WindowKind,
    pub n: usize,
    pub domain: Domain,
    pub values: Vec<Int>,
}

fn domain_len(w: &Window, domain: Domain) -> usize {
    match domain {
        Domain::Vertices => w.vertices.len(),
        Domain::Edges => w.edges.len(),
        Domain::Arrows => w.arrows.len(),
    }
}

impl Cochain {
    pub fn zero(tree: &Tree, kind: WindowKind, n: usize, domain: Domain) -> Cochain {
        let w = tree.window(kind, n);
        Cochain { kind, n, domain, values: vec![Int::zero(); domain_len(&w, domain)] }
    }

    pub fn indicator(tree: &Tree, kind: WindowKind, n: usize, domain: Domain, at: usize) -> Cochain {
        let mut c = Cochain::zero(tree, kind, n, domain);
        c.values[at] = Int::from(1);
        c
    }

    pub fn from_values(
        tree: &Tree,
        kind: WindowKind,
        n: usize,
        domain: Domain,
        values: Vec<Int>,
    ) -> Result<Cochain, CochainError> {
        let w = tree.window(kind, n);
        if values.len() != domain_len(&w, domain) {
            return Err(CochainError::Mismatch);
        }
        Ok(Cochain { kind, n, domain, values })
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.is_zero())
    }

    pub fn add(&self, other: &Cochain) -> Result<Cochain, CochainError> {
        if (self.kind, self.n, self.domain) != (other.kind, other.n, other.domain) {
            return Err(CochainError::Mismatch);
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(Cochain { values, ..*self })
    }

    pub fn sub(&self, other: &Cochain) -> Result<Cochain, CochainError> {
        Ok(self.add(&other.neg())?)
    }

    pub fn neg(&self) -> Cochain {
        Cochain { values: self.values.iter().map(|v| -v).collect(), ..*self }
    }

    pub fn scale(&self, k: &Int) -> Cochain {
        Cochain { values: self.values.iter().map(|v| v * k).collect(), ..*self }
    }

    /// Restriction to a smaller window of the same kind. All domain orders
    /// are prefixes of the corresponding larger windows.
    pub fn restrict(&self, tree: &Tree, m: usize) -> Result<Cochain, CochainError> {
        if m > self.n {
            return Err(CochainError::Mismatch);
        }
        let w = tree.window(self.kind, m);
        let len = domain_len(&w, self.domain);
        Ok(Cochain { kind: self.kind, n: m, domain: self.domain, values: self.values[..len].to_vec() })
    }
}

/// Vertex sums: an edge function on the (n+1)-window yields a vertex function
/// on the n-window, where all q+1 incident edges are visible.
pub fn sigma(tree: &Tree, phi: &Cochain) -> Result<Cochain, CochainError> {
    if phi.domain != Domain::Edges || phi.n == 0 {
        return Err(CochainError::Mismatch);
    }
    let big = tree.window(phi.kind, phi.n);
    let small = tree.window(phi.kind, phi.n - 1);
    let mut out = vec![Int::zero(); small.vertices.len()];
    for (v, slot) in out.iter_mut().enumerate() {
        let mut acc = Int::zero();
        for e in big.incident_edges(v) {
            acc += &phi.values[e];
        }
        *slot = acc;
    }
    Ok(Cochain { kind: phi.kind, n: phi.n - 1, domain: Domain::Vertices, values: out })
}

/// An edge function is harmonic when every visible vertex sum vanishes.
pub fn is_harmonic(tree: &Tree, phi: &Cochain) -> Result<bool, CochainError> {
    Ok(sigma(tree, phi)?.is_zero())
}

/// Section of the vertex-sum operator along the breadth-first tree order:
/// each vertex pays its required sum into its first child edge.
pub fn solve_sigma(tree: &Tree, eta: &Cochain) -> Result<Cochain, CochainError> {
    if eta.domain != Domain::Vertices {
        return Err(CochainError::Mismatch);
    }
    let big = tree.window(eta.kind, eta.n + 1);
    let small = tree.window(eta.kind, eta.n);
    if eta.values.len() != small.vertices.len() {
        return Err(CochainError::Mismatch);
    }
    let mut values = vec![Int::zero(); big.edges.len()];
    for v in 0..small.vertices.len() {
        let parent_val = match big.parent[v] {
            Some(p) => values[big.edge_index(p, v).expect("parent edge")].clone(),
            None => Int::zero(),
        };
        let first_child = *big.children[v]
            .first()
            .expect("window vertices have children one level up");
        let e = big.edge_index(v, first_child).expect("child edge");
        values[e] = &eta.values[v] - &parent_val;
    }
    Ok(Cochain { kind: eta.kind, n: eta.n + 1, domain: Domain::Edges, values })
}

/// Extend a harmonic edge function one window outward, keeping it harmonic:
/// every vertex that gains child edges pushes its balance into the first one.
pub fn extend_harmonic(tree: &Tree, phi: &Cochain) -> Result<Cochain, CochainError> {
    if phi.domain != Domain::Edges || phi.n == 0 {
        return Err(CochainError::Mismatch);
    }
    let old = tree.window(phi.kind, phi.n);
    let big = tree.window(phi.kind, phi.n + 1);
    let mut values = vec![Int::zero(); big.edges.len()];
    values[..phi.values.len()].clone_from_slice(&phi.values);
    for v in 0..old.vertices.len() {
        let new_children: Vec<usize> = big.children[v]
            .iter()
            .copied()
            .filter(|&ch| ch >= old.vertices.len())
            .collect();
        if new_children.is_empty() {
            continue;
        }
        let mut balance = Int::zero();
        if let Some(p) = big.parent[v] {
            balance += &values[big.edge_index(p, v).unwrap()];
        }
        for &ch in &big.children[v] {
            if ch < old.vertices.len() {
                balance += &values[big.edge_index(v, ch).unwrap()];
            }
        }
        let e = big.edge_index(v, new_children[0]).unwrap();
        values[e] = -balance;
    }
    Ok(Cochain { kind: phi.kind, n: phi.n + 1, domain: Domain::Edges, values })
}

/// A harmonic edge function drawn by balancing a seeded random one.
pub fn random_harmonic(
    tree: &Tree,
    kind: WindowKind,
    n: usize,
    seed: u64,
    bound: i64,
) -> Cochain {
    assert!(n >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = tree.window(kind, n);
    let psi = Cochain {
        kind,
        n,
        domain: Domain::Edges,
        values: (0..w.edges.len()).map(|_| Int::from(rng.gen_range(-bound..=bound))).collect(),
    };
    let eta = sigma(tree, &psi).unwrap();
    let fix = solve_sigma(tree, &eta.restrict(tree, n - 1).unwrap()).unwrap();
    psi.sub(&fix).unwrap()
}

/// Convert an arrow function to its edge form on the next window: each edge
/// reads the arrow out of its even-parity endpoint, falling back to minus the
/// arrow out of the odd endpoint when the even one is outside the source set.
pub fn arrows_to_edges(tree: &Tree, phi: &Cochain) -> Result<Cochain, CochainError> {
    if phi.domain != Domain::Arrows {
        return Err(CochainError::Mismatch);
    }
    let small = tree.window(phi.kind, phi.n);
    let big = tree.window(phi.kind, phi.n + 1);
    let mut values = vec![Int::zero(); big.edges.len()];
    for (e, &(i, j)) in big.edges.iter().enumerate() {
        // i is the parent, always a source in the smaller window
        debug_assert!(i < small.vertices.len());
        let parent_even = big.depth[i] % 2 == 0;
        let label_i = &big.vertices[i];
        let label_j = &big.vertices[j];
        values[e] = if parent_even {
            phi.values[small.arrow_index(i, label_j).expect("arrow from parent")].clone()
        } else if j < small.vertices.len() {
            phi.values[small.arrow_index(j, label_i).expect("arrow from child")].clone()
        } else {
            -&phi.values[small.arrow_index(i, label_j).expect("arrow from parent")]
        };
    }
    Ok(Cochain { kind: phi.kind, n: phi.n + 1, domain: Domain::Edges, values })
}

/// Inverse of `arrows_to_edges` on antisymmetric functions: the arrow out of
/// an even vertex reads the edge value, the arrow out of an odd one reads its
/// negative.
pub fn edges_to_arrows(tree: &Tree, psi: &Cochain) -> Result<Cochain, CochainError> {
    if psi.domain != Domain::Edges || psi.n == 0 {
        return Err(CochainError::Mismatch);
    }
    let small = tree.window(psi.kind, psi.n - 1);
    let big = tree.window(psi.kind, psi.n);
    let mut values = vec![Int::zero(); small.arrows.len()];
    for (a, arrow) in small.arrows.iter().enumerate() {
        let j = big.vindex[&arrow.dst_label];
        let e = big.edge_index(arrow.src, j).expect("arrow underlies a window edge");
        let even = big.depth[arrow.src] % 2 == 0;
        values[a] = if even { psi.values[e].clone() } else { -&psi.values[e] };
    }
    Ok(Cochain { kind: psi.kind, n: psi.n - 1, domain: Domain::Arrows, values })
}

/// Antisymmetry of an arrow function, checked on every arrow whose reverse is
/// also inside the window.
pub fn is_antisymmetric(tree: &Tree, phi: &Cochain) -> Result<bool, CochainError> {
    if phi.domain != Domain::Arrows {
        return Err(CochainError::Mismatch);
    }
    let w = tree.window(phi.kind, phi.n);
    for (a, arrow) in w.arrows.iter().enumerate() {
        if let Some(j) = arrow.dst_idx {
            if let Some(rev) = w.arrow_index(j, &w.vertices[arrow.src]) {
                if phi.values[a] != -&phi.values[rev] {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// A current: antisymmetric with vanishing vertex sums in edge form.
pub fn is_current(tree: &Tree, phi: &Cochain) -> Result<bool, CochainError> {
    Ok(is_antisymmetric(tree, phi)? && sigma(tree, &arrows_to_edges(tree, phi)?)?.is_zero())
}

fn act_vertex_table(
    tree: &Tree,
    w: &Window,
    g_inv: &Mat2,
) -> Result<Vec<(VertexLabel, Option<usize>)>, CochainError> {
    let mut out = Vec::with_capacity(w.vertices.len());
    for v in &w.vertices {
        let img = tree.act_vertex(g_inv, v)?;
        let idx = w.vindex.get(&img).copied();
        out.push((img, idx));
    }
    Ok(out)
}

/// The left action (g phi)(x) = phi(g^{-1} x). Errors with `WindowEscape`
/// when some needed preimage leaves the window.
pub fn act_cochain(tree: &Tree, g: &Mat2, phi: &Cochain) -> Result<Cochain, CochainError> {
    let f = &tree.field;
    let g_inv = g.inverse(f)?;
    let w = tree.window(phi.kind, phi.n);
    let table = act_vertex_table(tree, &w, &g_inv)?;
    let mut values = vec![Int::zero(); phi.values.len()];
    match phi.domain {
        Domain::Vertices => {
            for (x, slot) in values.iter_mut().enumerate() {
                let (_, idx) = &table[x];
                let i = idx.ok_or(CochainError::WindowEscape)?;
                *slot = phi.values[i].clone();
            }
        }
        Domain::Edges => {
            for (x, &(i, j)) in w.edges.iter().enumerate() {
                let gi = table[i].1.ok_or(CochainError::WindowEscape)?;
                let gj = table[j].1.ok_or(CochainError::WindowEscape)?;
                let e = w.edge_index(gi, gj).expect("isometries preserve adjacency");
                values[x] = phi.values[e].clone();
            }
        }
        Domain::Arrows => {
            for (x, arrow) in w.arrows.iter().enumerate() {
                let gi = table[arrow.src].1.ok_or(CochainError::WindowEscape)?;
                let dst_img = tree.act_vertex(&g_inv, &arrow.dst_label)?;
                let a = w.arrow_index(gi, &dst_img).expect("isometries preserve arrows");
                values[x] = phi.values[a].clone();
            }
        }
    }
    Ok(Cochain { values, ..*phi })
}

/// The twisted involution on edge functions of a double window:
/// (s phi)(e) = -phi(s e). Applying it twice gives back phi.
pub fn s_twisted_act(tree: &Tree, s: &Mat2, phi: &Cochain) -> Result<Cochain, CochainError> {
    Ok(act_cochain(tree, s, phi)?.neg())
}

/// Orbits of a generated group on the vertices and edges of a window.
/// Generators act together with their inverses; moves that leave the window
/// are dropped, so the partition is the trace of the true orbit partition
/// provided the generator set is rich enough (the callers' sets are).
pub struct OrbitDecomposition {
    pub vertex_orbits: Vec<Vec<usize>>,
    pub edge_orbits: Vec<Vec<usize>>,
    pub vertex_orbit_of: Vec<usize>,
    pub edge_orbit_of: Vec<usize>,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> UnionFind {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins, keeping orbit representatives minimal
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }

    fn groups(&mut self, n: usize) -> (Vec<Vec<usize>>, Vec<usize>) {
        let mut reps: Vec<usize> = Vec::new();
        let mut orbit_of = vec![usize::MAX; n];
        let mut orbits: Vec<Vec<usize>> = Vec::new();
        for x in 0..n {
            let r = self.find(x);
            let k = match reps.iter().position(|&y| y == r) {
                Some(k) => k,
                None => {
                    reps.push(r);
                    orbits.push(Vec::new());
                    reps.len() - 1
                }
            };
            orbits[k].push(x);
            orbit_of[x] = k;
        }
        (orbits, orbit_of)
    }
}

pub fn orbits_on_window(
    tree: &Tree,
    w: &Window,
    gens: &[Mat2],
) -> Result<OrbitDecomposition, CochainError> {
    let f = &tree.field;
    let mut moves: Vec<Vec<Option<usize>>> = Vec::new();
    for g in gens {
        for h in [g.clone(), g.inverse(f)?] {
            let mut row = Vec::with_capacity(w.vertices.len());
            for v in &w.vertices {
                let img = tree.act_vertex(&h, v)?;
                row.push(w.vindex.get(&img).copied());
            }
            moves.push(row);
        }
    }
    let mut vuf = UnionFind::new(w.vertices.len());
    for row in &moves {
        for (v, img) in row.iter().enumerate() {
            if let Some(i) = img {
                vuf.union(v, *i);
            }
        }
    }
    let mut euf = UnionFind::new(w.edges.len());
    for row in &moves {
        for (e, &(i, j)) in w.edges.iter().enumerate() {
            if let (Some(gi), Some(gj)) = (row[i], row[j]) {
                let ge = w.edge_index(gi, gj).expect("isometries preserve adjacency");
                euf.union(e, ge);
            }
        }
    }
    let (vertex_orbits, vertex_orbit_of) = vuf.groups(w.vertices.len());
    let (edge_orbits, edge_orbit_of) = euf.groups(w.edges.len());
    Ok(OrbitDecomposition { vertex_orbits, edge_orbits, vertex_orbit_of, edge_orbit_of })
}

/// Orbits ordered along the standard apartment: each orbit is keyed by the
/// least i such that it contains the standard vertex v_i (resp. the edge
/// {v_i, v_{i+1}}). Every orbit arising here meets the apartment.
pub struct OrbitBasis {
    pub kind: WindowKind,
    pub n: usize,
    pub domain: Domain,
    pub orbits: Vec<Vec<usize>>,
    pub apartment_index: Vec<i64>,
}

fn apartment_vertex_indices(w: &Window) -> Vec<(i64, usize)> {
    let span = w.n as i64 + 2;
    let mut out = Vec::new();
    for i in -span..=span {
        if let Some(&idx) = w.vindex.get(&VertexLabel::standard(i)) {
            out.push((i, idx));
        }
    }
    out
}

pub fn vertex_orbit_basis(
    tree: &Tree,
    kind: WindowKind,
    n: usize,
    gens: &[Mat2],
) -> Result<OrbitBasis, CochainError> {
    let w = tree.window(kind, n);
    let dec = orbits_on_window(tree, &w, gens)?;
    order_basis(&w, kind, n, Domain::Vertices, dec.vertex_orbits, &dec.vertex_orbit_of, None)
}

pub fn edge_orbit_basis(
    tree: &Tree,
    kind: WindowKind,
    n: usize,
    gens: &[Mat2],
) -> Result<OrbitBasis, CochainError> {
    let w = tree.window(kind, n);
    let dec = orbits_on_window(tree, &w, gens)?;
    order_basis(&w, kind, n, Domain::Edges, dec.edge_orbits, &dec.edge_orbit_of, Some(()))
}

fn order_basis(
    w: &Window,
    kind: WindowKind,
    n: usize,
    domain: Domain,
    orbits: Vec<Vec<usize>>,
    orbit_of: &[usize],
    edges: Option<()>,
) -> Result<OrbitBasis, CochainError> {
    let verts = apartment_vertex_indices(w);
    let mut key: Vec<Option<i64>> = vec![None; orbits.len()];
    // prefer the standard index closest to zero, non-negative on ties, so
    // sphere orbits are keyed by their depth and apartment-segment orbits by
    // their unique standard member
    let better = |cand: i64, cur: Option<i64>| match cur {
        None => true,
        Some(k) => (cand.abs(), cand < 0) < (k.abs(), k < 0),
    };
    match edges {
        None => {
            for &(i, idx) in &verts {
                let o = orbit_of[idx];
                if better(i, key[o]) {
                    key[o] = Some(i);
                }
            }
        }
        Some(()) => {
            for &(i, idx) in &verts {
                if let Some(&(_, jdx)) = verts.iter().find(|&&(j, _)| j == i + 1) {
                    if let Some(e) = w.edge_index(idx, jdx) {
                        let o = orbit_of[e];
                        if better(i, key[o]) {
                            key[o] = Some(i);
                        }
                    }
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..orbits.len()).collect();
    for (o, k) in key.iter().enumerate() {
        assert!(k.is_some(), "orbit {} misses the standard apartment", o);
    }
    order.sort_by_key(|&o| key[o].unwrap());
    let orbits_sorted: Vec<Vec<usize>> = order.iter().map(|&o| orbits[o].clone()).collect();
    let apartment_index: Vec<i64> = order.iter().map(|&o| key[o].unwrap()).collect();
    Ok(OrbitBasis { kind, n, domain, orbits: orbits_sorted, apartment_index })
}

impl OrbitBasis {
    /// Invariant cochain with the given coefficient per orbit.
    pub fn cochain_from_coefficients(
        &self,
        tree: &Tree,
        coeffs: &[Int],
    ) -> Result<Cochain, CochainError> {
        if coeffs.len() != self.orbits.len() {
            return Err(CochainError::Mismatch);
        }
        let mut c = Cochain::zero(tree, self.kind, self.n, self.domain);
        for (orbit, k) in self.orbits.iter().zip(coeffs) {
            for &x in orbit {
                c.values[x] = k.clone();
            }
        }
        Ok(c)
    }

    /// Coefficients of an invariant cochain, or an error if it is not
    /// constant on some orbit.
    pub fn coefficients_of(&self, phi: &Cochain) -> Result<Vec<Int>, CochainError> {
        if (phi.kind, phi.n, phi.domain) != (self.kind, self.n, self.domain) {
            return Err(CochainError::Mismatch);
        }
        let mut out = Vec::with_capacity(self.orbits.len());
        for orbit in &self.orbits {
            let first = phi.values[orbit[0]].clone();
            if orbit.iter().any(|&x| phi.values[x] != first) {
                return Err(CochainError::NotInvariant);
            }
            out.push(first);
        }
        Ok(out)
    }
}

/// The vertex-sum operator restricted to orbit invariants: rows are vertex
/// orbits of the n-window, columns are edge orbits of the (n+1)-window, and
/// each column is checked to be genuinely constant on every vertex orbit.
pub fn sigma_matrix_on_invariants(
    tree: &Tree,
    kind: WindowKind,
    n: usize,
    gens: &[Mat2],
) -> Result<(IntMatrix, OrbitBasis, OrbitBasis), CochainError> {
    let vb = vertex_orbit_basis(tree, kind, n, gens)?;
    let eb = edge_orbit_basis(tree, kind, n + 1, gens)?;
    let mut m = IntMatrix::zero(vb.orbits.len(), eb.orbits.len());
    for (col, orbit) in eb.orbits.iter().enumerate() {
        let mut ind = Cochain::zero(tree, kind, n + 1, Domain::Edges);
        for &e in orbit {
            ind.values[e] = Int::from(1);
        }
        let sums = sigma(tree, &ind)?;
        let coeffs = vb.coefficients_of(&sums)?;
        for (row, v) in coeffs.into_iter().enumerate() {
            m.set(row, col, v);
        }
    }
    Ok((m, vb, eb))
}

/// Largest absolute value in a cochain, for shaping test draws.
pub fn sup_norm(phi: &Cochain) -> Int {
    phi.values.iter().map(|v| v.abs()).max().unwrap_or_else(Int::zero)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::{self, SubgroupTag};
    use crate::localfield::{Backend, Field};

    fn tree(p: u64) -> Tree {
        Tree::new(Field::from_parts(Backend::RationalP, p, 1, None).unwrap())
    }

    fn mat_rows(m: &IntMatrix) -> Vec<Vec<i64>> {
        (0..m.rows())
            .map(|i| {
                (0..m.cols())
                    .map(|j| {
                        let s = m.at(i, j).to_string();
                        s.parse::<i64>().unwrap()
                    })
                    .collect()
            })
            .collect()
    }

    fn compact_gens(t: &Tree, level: usize) -> Vec<Mat2> {
        groups::generators(&t.field, SubgroupTag::MaxCompact, level)
            .unwrap()
            .into_iter()
            .map(|g| g.m)
            .collect()
    }

    fn iwahori_gens(t: &Tree, level: usize) -> Vec<Mat2> {
        groups::generators(&t.field, SubgroupTag::Iwahori, level)
            .unwrap()
            .into_iter()
            .map(|g| g.m)
            .collect()
    }

    fn detzero_gens(t: &Tree, level: usize) -> Vec<Mat2> {
        groups::detzero_window_generators(&t.field, level)
            .into_iter()
            .map(|g| g.m)
            .collect()
    }

    #[test]
    fn compact_orbits_on_radius_windows_are_spheres() {
        let t = tree(2);
        let w = t.window(WindowKind::Radius, 2);
        let dec = orbits_on_window(&t, &w, &compact_gens(&t, 3)).unwrap();
        let mut sizes: Vec<usize> = dec.vertex_orbits.iter().map(|o| o.len()).collect();
        sizes.sort();
        assert_eq!(sizes, vec![1, 3, 6]);
        for orbit in &dec.vertex_orbits {
            let d = w.depth[orbit[0]];
            assert!(orbit.iter().all(|&v| w.depth[v] == d));
        }
        let w3 = t.window(WindowKind::Radius, 3);
        let dec3 = orbits_on_window(&t, &w3, &compact_gens(&t, 3)).unwrap();
        assert_eq!(dec3.edge_orbits.len(), 3);
        let mut esizes: Vec<usize> = dec3.edge_orbits.iter().map(|o| o.len()).collect();
        esizes.sort();
        assert_eq!(esizes, vec![3, 6, 12]);
    }

    #[test]
    fn iwahori_orbit_sizes_on_double_window() {
        let t = tree(2);
        let w = t.window(WindowKind::Double, 2);
        let basis = vertex_orbit_basis(&t, WindowKind::Double, 2, &iwahori_gens(&t, 4)).unwrap();
        assert_eq!(basis.apartment_index, vec![-2, -1, 0, 1, 2, 3]);
        let sizes: Vec<usize> = basis.orbits.iter().map(|o| o.len()).collect();
        assert_eq!(sizes, vec![4, 2, 1, 1, 2, 4]);
        assert_eq!(sizes.iter().sum::<usize>(), w.vertices.len());
    }

    #[test]
    fn detzero_orbits_are_parity_classes() {
        for (p, n) in [(2u64, 2usize), (3, 3)] {
            let t = tree(p);
            let w = t.window(WindowKind::Radius, n);
            let dec = orbits_on_window(&t, &w, &detzero_gens(&t, n + 1)).unwrap();
            assert_eq!(dec.vertex_orbits.len(), 2);
            for orbit in &dec.vertex_orbits {
                let parity = w.depth[orbit[0]] % 2;
                assert!(orbit.iter().all(|&v| w.depth[v] % 2 == parity));
            }
            assert_eq!(dec.edge_orbits.len(), 1);
        }
    }

    #[test]
    fn sigma_matrix_for_compact_group_matches_closed_form() {
        let t2 = tree(2);
        let (m1, _, _) =
            sigma_matrix_on_invariants(&t2, WindowKind::Radius, 1, &compact_gens(&t2, 3)).unwrap();
        assert_eq!(mat_rows(&m1), vec![vec![3, 0], vec![1, 2]]);
        let (m2, _, _) =
            sigma_matrix_on_invariants(&t2, WindowKind::Radius, 2, &compact_gens(&t2, 3)).unwrap();
        assert_eq!(mat_rows(&m2), vec![vec![3, 0, 0], vec![1, 2, 0], vec![0, 1, 2]]);
        let t3 = tree(3);
        let (m3, _, _) =
            sigma_matrix_on_invariants(&t3, WindowKind::Radius, 1, &compact_gens(&t3, 2)).unwrap();
        assert_eq!(mat_rows(&m3), vec![vec![4, 0], vec![1, 3]]);
    }

    #[test]
    fn sigma_matrix_for_iwahori_matches_closed_form() {
        let t2 = tree(2);
        let (m0, vb, eb) =
            sigma_matrix_on_invariants(&t2, WindowKind::Double, 0, &iwahori_gens(&t2, 3)).unwrap();
        assert_eq!(vb.apartment_index, vec![0, 1]);
        assert_eq!(eb.apartment_index, vec![-1, 0, 1]);
        assert_eq!(mat_rows(&m0), vec![vec![2, 1, 0], vec![0, 1, 2]]);
        let (m1, vb1, _) =
            sigma_matrix_on_invariants(&t2, WindowKind::Double, 1, &iwahori_gens(&t2, 4)).unwrap();
        assert_eq!(vb1.apartment_index, vec![-1, 0, 1, 2]);
        assert_eq!(
            mat_rows(&m1),
            vec![
                vec![2, 1, 0, 0, 0],
                vec![0, 2, 1, 0, 0],
                vec![0, 0, 1, 2, 0],
                vec![0, 0, 0, 1, 2],
            ]
        );
        let t3 = tree(3);
        let (m3, _, _) =
            sigma_matrix_on_invariants(&t3, WindowKind::Double, 0, &iwahori_gens(&t3, 3)).unwrap();
        assert_eq!(mat_rows(&m3), vec![vec![3, 1, 0], vec![0, 1, 3]]);
    }

    #[test]
    fn sigma_matrix_for_detzero_group_is_constant_column() {
        for p in [2u64, 3] {
            let t = tree(p);
            let (m, vb, eb) =
                sigma_matrix_on_invariants(&t, WindowKind::Radius, 2, &detzero_gens(&t, 3)).unwrap();
            assert_eq!(vb.apartment_index, vec![0, 1]);
            assert_eq!(eb.apartment_index, vec![0]);
            let q = p as i64;
            assert_eq!(mat_rows(&m), vec![vec![q + 1], vec![q + 1]]);
        }
    }

    #[test]
    fn solve_sigma_is_a_right_inverse() {
        // seed 1414: random vertex data, both window kinds
        for p in [2u64, 3] {
            let t = tree(p);
            let mut rng = ChaCha8Rng::seed_from_u64(1414);
            for kind in [WindowKind::Radius, WindowKind::Double] {
                for n in 0..3usize {
                    let w = t.window(kind, n);
                    let eta = Cochain {
                        kind,
                        n,
                        domain: Domain::Vertices,
                        values: (0..w.vertices.len())
                            .map(|_| Int::from(rng.gen_range(-9i64..=9)))
                            .collect(),
                    };
                    let phi = solve_sigma(&t, &eta).unwrap();
                    assert_eq!(sigma(&t, &phi).unwrap(), eta);
                }
            }
        }
    }

    #[test]
    fn random_harmonic_extends_and_restricts() {
        for p in [2u64, 3] {
            let t = tree(p);
            for kind in [WindowKind::Radius, WindowKind::Double] {
                for seed in 0..8u64 {
                    let phi = random_harmonic(&t, kind, 2, 1500 + seed, 7);
                    assert!(is_harmonic(&t, &phi).unwrap());
                    let ext = extend_harmonic(&t, &phi).unwrap();
                    assert!(is_harmonic(&t, &ext).unwrap());
                    assert_eq!(ext.restrict(&t, 2).unwrap(), phi);
                }
            }
        }
    }

    #[test]
    fn arrow_and_edge_forms_are_mutually_inverse() {
        let t = tree(2);
        for kind in [WindowKind::Radius, WindowKind::Double] {
            let psi = random_harmonic(&t, kind, 2, 1600, 5);
            let arrows = edges_to_arrows(&t, &psi).unwrap();
            assert!(is_antisymmetric(&t, &arrows).unwrap());
            assert!(is_current(&t, &arrows).unwrap());
            assert_eq!(arrows_to_edges(&t, &arrows).unwrap(), psi);
        }
    }

    #[test]
    fn action_permutes_indicators() {
        let t = tree(2);
        let w = t.window(WindowKind::Radius, 2);
        let g = groups::random_element(&t.field, SubgroupTag::MaxCompact, 42).m;
        let gi = g.inverse(&t.field).unwrap();
        for v in 0..w.vertices.len() {
            let ind = Cochain::indicator(&t, WindowKind::Radius, 2, Domain::Vertices, v);
            let acted = act_cochain(&t, &g, &ind).unwrap();
            // g moves the indicator at v to the indicator at g v
            let img = t.act_vertex(&g, &w.vertices[v]).unwrap();
            let expect = Cochain::indicator(&t, WindowKind::Radius, 2, Domain::Vertices, w.vindex[&img]);
            assert_eq!(acted, expect);
            let back = act_cochain(&t, &gi, &acted).unwrap();
            assert_eq!(back, ind);
        }
    }

    #[test]
    fn action_escaping_the_window_is_detected() {
        let t = tree(2);
        let g = groups::apartment_translation(&t.field).m;
        let phi = Cochain::indicator(&t, WindowKind::Radius, 2, Domain::Vertices, 0);
        assert_eq!(act_cochain(&t, &g, &phi), Err(CochainError::WindowEscape));
    }

    #[test]
    fn twisted_involution_squares_to_identity() {
        let t = tree(3);
        let s = crate::groups::GroupElement::s(&t.field).m;
        let phi = random_harmonic(&t, WindowKind::Double, 2, 1700, 6);
        let once = s_twisted_act(&t, &s, &phi).unwrap();
        let twice = s_twisted_act(&t, &s, &once).unwrap();
        assert_eq!(twice, phi);
        assert!(is_harmonic(&t, &once).unwrap());
    }

    #[test]
    fn orbit_coefficients_roundtrip() {
        let t = tree(2);
        let basis = vertex_orbit_basis(&t, WindowKind::Radius, 2, &compact_gens(&t, 3)).unwrap();
        let coeffs = vec![Int::from(5), Int::from(-1), Int::from(2)];
        let phi = basis.cochain_from_coefficients(&t, &coeffs).unwrap();
        assert_eq!(basis.coefficients_of(&phi).unwrap(), coeffs);
        let mut broken = phi.clone();
        broken.values[1] += 1;
        assert_eq!(basis.coefficients_of(&broken), Err(CochainError::NotInvariant));
    }

    #[test]
    fn restriction_is_a_prefix() {
        let t = tree(2);
        let phi = random_harmonic(&t, WindowKind::Radius, 3, 1800, 4);
        let r = phi.restrict(&t, 2).unwrap();
        assert_eq!(r.values[..], phi.values[..r.values.len()]);
    }
}
