//! Brute-force group cohomology over the integers: a finite matrix-group
//! quotient acts on the harmonic currents of a finite window, and H^0 / H^1
//! are computed directly from the cocycle and coboundary equations. This is
//! the independent stand-in for the Smith-normal-form route: slow, literal,
//! and with no shared machinery beyond the integer kernel/solve primitives.

use crate::bttree::{Tree, TreeError, WindowKind};
use crate::groups::{
    self, enumerate_quotient, lift_mat, reduce_mat, FiniteQuotient, GroupError, SubgroupTag,
};
use crate::intlin::{
    class_order, cokernel_structure, kernel_basis, solve_integer, ClassOrder, CokernelStructure,
    Int, IntMatrix, KernelAccum, SolveError,
};
use num::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::cell::RefCell;
use std::collections::HashMap;

use thiserror::Error;

/// Guard on h1 problem size, in matrix entries.
pub const H1_BOUND: u128 = 50_000_000;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("cohomology problem too large: {entries} entries")]
    TooLarge { entries: u128 },
    #[error("quotient level {level} cannot act on the level-{need} window")]
    LevelTooShallow { level: usize, need: usize },
    #[error("the action tables are inconsistent: {0}")]
    Inconsistent(&'static str),
    #[error("the supplied map is not a cocycle")]
    NotCocycle,
    #[error("group: {0}")]
    Group(#[from] GroupError),
    #[error("tree: {0}")]
    Tree(#[from] TreeError),
    #[error("solve: {0}")]
    Solve(#[from] SolveError),
}

/// A finite quotient acting on the lattice of harmonic currents of a window:
/// the module is ker(sigma) inside the edge functions of the (n+1)-window,
/// and each group element acts through an r x r integer matrix solved from
/// the edge permutation against the kernel basis.
pub struct FiniteGroupAction {
    pub quotient: FiniteQuotient,
    pub kind: WindowKind,
    pub n: usize,
    pub rank: usize,
    /// kernel basis of sigma, one column per module generator
    pub kernel: IntMatrix,
    /// quotient indices of the subgroup's standard generators
    pub generator_indices: Vec<u32>,
    edge_count: usize,
    rho_cache: RefCell<HashMap<u32, IntMatrix>>,
}

impl FiniteGroupAction {
    /// The action of the tag's level quotient on the harmonic currents of
    /// the (n+1)-window. The level must be deep enough for the window action
    /// to be well defined: n+1 for radius windows, n+2 for double windows.
    pub fn harmonic(
        tree: &Tree,
        tag: SubgroupTag,
        level: usize,
        kind: WindowKind,
        n: usize,
    ) -> Result<FiniteGroupAction, OracleError> {
        let need = match kind {
            WindowKind::Radius => n + 1,
            WindowKind::Double => n + 2,
        };
        if level < need {
            return Err(OracleError::LevelTooShallow { level, need });
        }
        let quotient = enumerate_quotient(&tree.field, tag, level)?;
        let sig = sigma_matrix(tree, kind, n);
        let kernel = kernel_basis(&sig);
        let rank = kernel.cols();
        let mut generator_indices = Vec::new();
        for g in groups::generators(&tree.field, tag, level)? {
            let code = reduce_mat(&tree.field, &g.m, level)?;
            let idx = quotient
                .idx(&code)
                .ok_or(OracleError::Inconsistent("generator missing from quotient"))?;
            if !generator_indices.contains(&idx) {
                generator_indices.push(idx);
            }
        }
        let action = FiniteGroupAction {
            quotient,
            kind,
            n,
            rank,
            kernel,
            generator_indices,
            edge_count: sig.cols(),
            rho_cache: RefCell::new(HashMap::new()),
        };
        action.spot_check(tree, 200)?;
        Ok(action)
    }

    /// A hand-assembled action for tests and degenerate cases: rho given
    /// outright for every element, module = Z^rank with identity kernel.
    pub fn from_rho_table(
        quotient: FiniteQuotient,
        rank: usize,
        generator_indices: Vec<u32>,
        rho: Vec<IntMatrix>,
    ) -> FiniteGroupAction {
        let cache: HashMap<u32, IntMatrix> =
            rho.into_iter().enumerate().map(|(i, m)| (i as u32, m)).collect();
        FiniteGroupAction {
            quotient,
            kind: WindowKind::Radius,
            n: 0,
            rank,
            kernel: IntMatrix::identity(rank),
            generator_indices,
            edge_count: rank,
            rho_cache: RefCell::new(cache),
        }
    }

    pub fn order(&self) -> usize {
        self.quotient.len()
    }

    /// The r x r matrix of the quotient element, solved once and cached.
    pub fn rho(&self, tree: &Tree, idx: u32) -> Result<IntMatrix, OracleError> {
        if let Some(m) = self.rho_cache.borrow().get(&idx) {
            return Ok(m.clone());
        }
        let moved = self.permute_edges(tree, idx, &self.kernel)?;
        let mut rho = IntMatrix::zero(self.rank, self.rank);
        for c in 0..self.rank {
            let x = solve_integer(&self.kernel, &moved.column(c))?;
            for rr in 0..self.rank {
                rho.set(rr, c, x[rr].clone());
            }
        }
        self.rho_cache.borrow_mut().insert(idx, rho.clone());
        Ok(rho)
    }

    /// Apply the edge permutation of the element to each column of an
    /// edge-indexed matrix: (g phi)(e) = phi(g^{-1} e), realized by sending
    /// row e to row g.e.
    fn permute_edges(
        &self,
        tree: &Tree,
        idx: u32,
        cols: &IntMatrix,
    ) -> Result<IntMatrix, OracleError> {
        let w = tree.window(self.kind, self.n + 1);
        let g = lift_mat(&tree.field, &self.quotient.elements[idx as usize], self.quotient.level);
        let mut out = IntMatrix::zero(cols.rows(), cols.cols());
        for (e, &(i, j)) in w.edges.iter().enumerate() {
            let gi = tree.act_vertex(&g, &w.vertices[i])?;
            let gj = tree.act_vertex(&g, &w.vertices[j])?;
            let (gi, gj) = (w.vindex[&gi], w.vindex[&gj]);
            let target = w
                .edge_index(gi, gj)
                .ok_or(OracleError::Inconsistent("moved edge left the window"))?;
            for c in 0..cols.cols() {
                out.set(target, c, cols.at(e, c).clone());
            }
        }
        Ok(out)
    }

    /// Module coordinates of an edge vector known to be harmonic.
    pub fn coordinates(&self, edge_vector: &[Int]) -> Result<Vec<Int>, OracleError> {
        Ok(solve_integer(&self.kernel, edge_vector)?)
    }

    fn spot_check(&self, tree: &Tree, pairs: usize) -> Result<(), OracleError> {
        let one = self.quotient.identity_idx();
        if self.rho(tree, one)? != IntMatrix::identity(self.rank) {
            return Err(OracleError::Inconsistent("identity does not act trivially"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let m = self.order() as u32;
        for _ in 0..pairs {
            let g = rng.gen_range(0..m);
            let h = rng.gen_range(0..m);
            let gh = self.quotient.mul_idx(g, h);
            if self.rho(tree, gh)? != self.rho(tree, g)?.mul(&self.rho(tree, h)?) {
                return Err(OracleError::Inconsistent("rho is not multiplicative"));
            }
        }
        Ok(())
    }
}

/// The incidence matrix of sigma: edge functions of the (n+1)-window summed
/// over the edges at each vertex of the n-window.
pub fn sigma_matrix(tree: &Tree, kind: WindowKind, n: usize) -> IntMatrix {
    let we = tree.window(kind, n + 1);
    let wv = tree.window(kind, n);
    let mut m = IntMatrix::zero(wv.vertices.len(), we.edges.len());
    for (e, &(i, j)) in we.edges.iter().enumerate() {
        for end in [i, j] {
            if let Some(&row) = wv.vindex.get(&we.vertices[end]) {
                let cur = m.at(row, e).clone();
                m.set(row, e, cur + Int::one());
            }
        }
    }
    m
}

/// Invariants of the action: the kernel of the stacked (rho(g) - 1) over the
/// subgroup generators, returned as its rank and a basis in module
/// coordinates.
pub struct Invariants {
    pub rank: usize,
    pub basis: IntMatrix,
}

pub fn h0(tree: &Tree, action: &FiniteGroupAction) -> Result<Invariants, OracleError> {
    let r = action.rank;
    let gens = &action.generator_indices;
    let mut stacked = IntMatrix::zero(gens.len() * r, r);
    for (k, &g) in gens.iter().enumerate() {
        let rho = action.rho(tree, g)?;
        for i in 0..r {
            for j in 0..r {
                let v = rho.at(i, j).clone() - if i == j { Int::one() } else { Int::zero() };
                stacked.set(k * r + i, j, v);
            }
        }
    }
    let basis = kernel_basis(&stacked);
    Ok(Invariants { rank: basis.cols(), basis })
}

/// Explicit 1-cocycles the class-order oracle understands: a coboundary of a
/// module element, or the connecting-map cocycle g phi - phi of an edge
/// vector phi whose sigma image is invariant.
pub enum ExplicitCocycle {
    Coboundary(Vec<Int>),
    Delta(Vec<Int>),
}

impl ExplicitCocycle {
    pub fn value(
        &self,
        tree: &Tree,
        action: &FiniteGroupAction,
        g: u32,
    ) -> Result<Vec<Int>, OracleError> {
        match self {
            ExplicitCocycle::Coboundary(m) => {
                let mut v = action.rho(tree, g)?.mul_vec(m);
                for (a, b) in v.iter_mut().zip(m) {
                    *a -= b;
                }
                Ok(v)
            }
            ExplicitCocycle::Delta(phi) => {
                if phi.len() != action.edge_count {
                    return Err(OracleError::Inconsistent("phi has the wrong edge count"));
                }
                let col = IntMatrix::from_fn(phi.len(), 1, |i, _| phi[i].clone());
                let moved = action.permute_edges(tree, g, &col)?;
                let diff: Vec<Int> =
                    (0..phi.len()).map(|i| moved.at(i, 0).clone() - &phi[i]).collect();
                action.coordinates(&diff)
            }
        }
    }
}

/// H^1 of the action by direct linear algebra over the whole quotient:
/// cocycles from the generator rows of the cocycle equation (re-verified on
/// all pairs, sampled when too many), coboundaries expressed in the cocycle
/// basis, and the quotient read off the Smith normal form.
pub fn h1(tree: &Tree, action: &FiniteGroupAction) -> Result<CokernelStructure, OracleError> {
    h1_with_generators(tree, action, &action.generator_indices.clone())
}

pub fn h1_with_generators(
    tree: &Tree,
    action: &FiniteGroupAction,
    gens: &[u32],
) -> Result<CokernelStructure, OracleError> {
    let m = action.order();
    let r = action.rank;
    let entries = (m as u128) * (m as u128) * (r as u128);
    if entries > H1_BOUND {
        return Err(OracleError::TooLarge { entries });
    }
    let unknowns = m * r;
    let one = action.quotient.identity_idx();

    // z(1) = 0, and z(gh) = rho(g) z(h) + z(g) for g a generator, h anything
    let mut acc = KernelAccum::new(unknowns);
    let mut row = vec![Int::zero(); unknowns];
    for j in 0..r {
        row[one as usize * r + j] = Int::one();
        acc.add_row(&row);
        row[one as usize * r + j] = Int::zero();
    }
    for &g in gens {
        let rho = action.rho(tree, g)?;
        for h in 0..m as u32 {
            let gh = action.quotient.mul_idx(g, h);
            for i in 0..r {
                let mut row = vec![Int::zero(); unknowns];
                row[gh as usize * r + i] += Int::one();
                for j in 0..r {
                    row[h as usize * r + j] -= rho.at(i, j);
                }
                row[g as usize * r + i] -= Int::one();
                acc.add_row(&row);
            }
        }
    }
    let zbasis = acc.into_basis();

    // every kernel column must satisfy the full cocycle equation
    let max_pairs = 1_000_000usize;
    let all_pairs = m * m <= max_pairs;
    let mut rng = ChaCha8Rng::seed_from_u64(78);
    let pair_list: Vec<(u32, u32)> = if all_pairs {
        (0..m as u32).flat_map(|g| (0..m as u32).map(move |h| (g, h))).collect()
    } else {
        (0..max_pairs)
            .map(|_| (rng.gen_range(0..m as u32), rng.gen_range(0..m as u32)))
            .collect()
    };
    for c in 0..zbasis.cols() {
        let z = zbasis.column(c);
        for &(g, h) in &pair_list {
            let gh = action.quotient.mul_idx(g, h);
            let rho = action.rho(tree, g)?;
            let zh = &z[h as usize * r..(h as usize + 1) * r];
            let mut expect = rho.mul_vec(zh);
            for (a, b) in expect.iter_mut().zip(&z[g as usize * r..(g as usize + 1) * r]) {
                *a += b;
            }
            if expect != z[gh as usize * r..(gh as usize + 1) * r] {
                return Err(OracleError::Inconsistent(
                    "generator-row kernel violates the full cocycle equation",
                ));
            }
        }
    }

    // coboundaries d0(m): column j stacks (rho(g) - 1) e_j over all g
    let mut d0 = IntMatrix::zero(unknowns, r);
    for g in 0..m as u32 {
        let rho = action.rho(tree, g)?;
        for i in 0..r {
            for j in 0..r {
                let v = rho.at(i, j).clone() - if i == j { Int::one() } else { Int::zero() };
                d0.set(g as usize * r + i, j, v);
            }
        }
    }
    // express the coboundaries in the cocycle basis and take the quotient
    let mut x = IntMatrix::zero(zbasis.cols(), r);
    for j in 0..r {
        let sol = solve_integer(&zbasis, &d0.column(j))?;
        for i in 0..zbasis.cols() {
            x.set(i, j, sol[i].clone());
        }
    }
    Ok(cokernel_structure(&x))
}

/// The least k for which k z is a coboundary, certified by solving the
/// generator rows (the cocycle equation extends any generator solution to
/// the whole group). The cocycle condition itself is spot-checked first.
pub fn class_order_in_h1(
    tree: &Tree,
    action: &FiniteGroupAction,
    z: &ExplicitCocycle,
) -> Result<Int, OracleError> {
    let m = action.order() as u32;
    let mut rng = ChaCha8Rng::seed_from_u64(79);
    let checks = 200.min(m as usize * m as usize);
    for _ in 0..checks {
        let g = rng.gen_range(0..m);
        let h = rng.gen_range(0..m);
        let gh = action.quotient.mul_idx(g, h);
        let mut expect = action.rho(tree, g)?.mul_vec(&z.value(tree, action, h)?);
        for (a, b) in expect.iter_mut().zip(z.value(tree, action, g)?) {
            *a += b;
        }
        if expect != z.value(tree, action, gh)? {
            return Err(OracleError::NotCocycle);
        }
    }

    let gens = &action.generator_indices;
    let r = action.rank;
    let mut stacked = IntMatrix::zero(gens.len() * r, r);
    let mut target = Vec::with_capacity(gens.len() * r);
    for (k, &g) in gens.iter().enumerate() {
        let rho = action.rho(tree, g)?;
        for i in 0..r {
            for j in 0..r {
                let v = rho.at(i, j).clone() - if i == j { Int::one() } else { Int::zero() };
                stacked.set(k * r + i, j, v);
            }
        }
        target.extend(z.value(tree, action, g)?);
    }
    match class_order(&target, &stacked) {
        ClassOrder::Finite(k) => Ok(k),
        ClassOrder::Infinite => Err(OracleError::Inconsistent("class has infinite order")),
    }
}

/// The connecting-map cocycle of the invariant vertex function eta: solve
/// sigma phi = eta and send g to the class of g phi - phi.
pub fn delta_cocycle_of_base_orbit(
    tree: &Tree,
    action: &FiniteGroupAction,
) -> Result<ExplicitCocycle, OracleError> {
    let wv = tree.window(action.kind, action.n);
    let sig = sigma_matrix(tree, action.kind, action.n);
    let eta: Vec<Int> = (0..wv.vertices.len())
        .map(|i| if i == 0 { Int::one() } else { Int::zero() })
        .collect();
    let phi = solve_integer(&sig, &eta)?;
    Ok(ExplicitCocycle::Delta(phi))
}
