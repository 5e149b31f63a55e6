//! The combinatorial Van der Put transform: currents supported on geodesic
//! lines between boundary points, evaluable lazily at any arrow, and the
//! explicit cocycles built from them (the j-cocycle of a base line, the
//! theta-cocycle summed over unit-representative lines, and the coset-sum
//! beta cocycle that vanishes on a prescribed window).
//!
//! Laziness is deliberate: a current is a finite list of weighted boundary
//! pairs, and its value at any arrow needs only geodesic steps, so cocycle
//! identities can be checked exactly anywhere with no truncation bookkeeping.

use crate::bttree::{act_end, End, Mat2, Tree, TreeError, VertexLabel, WindowKind};
use crate::cochains::{sigma, Cochain, CochainError, Domain};
use crate::groups::coset_reps_upper;
use crate::intlin::Int;
use num::Zero;
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum VdpError {
    #[error("the two boundary lines coincide")]
    EqualLines,
    #[error("formal unit has nonzero total multiplicity")]
    DegreeNotZero,
    #[error("tree: {0}")]
    Tree(#[from] TreeError),
    #[error("cochain: {0}")]
    Cochain(#[from] CochainError),
}

/// Value at the arrow (v, w) of the unit current flowing from L' to L:
/// +1 when the arrow lies on the L'-L geodesic and points toward L, -1 when
/// it points toward L', 0 off the line. The source is on the line exactly
/// when the two geodesic steps differ.
pub fn pair_value(
    tree: &Tree,
    l: &End,
    lp: &End,
    v: &VertexLabel,
    w: &VertexLabel,
) -> Result<i64, VdpError> {
    if l == lp {
        return Err(VdpError::EqualLines);
    }
    let toward_l = tree.step_toward_end(v, l)?;
    let toward_lp = tree.step_toward_end(v, lp)?;
    if toward_l == toward_lp {
        return Ok(0);
    }
    Ok(if *w == toward_l {
        1
    } else if *w == toward_lp {
        -1
    } else {
        0
    })
}

/// A finite weighted sum of boundary-pair currents. Terms with coinciding
/// lines are dropped at construction (they are the zero current).
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct LineCurrent {
    pub terms: Vec<(End, End, Int)>,
}

impl LineCurrent {
    pub fn zero() -> LineCurrent {
        LineCurrent { terms: vec![] }
    }

    pub fn pair(l: &End, lp: &End) -> LineCurrent {
        LineCurrent::weighted_pair(l, lp, Int::from(1))
    }

    pub fn weighted_pair(l: &End, lp: &End, w: Int) -> LineCurrent {
        if l == lp || w.is_zero() {
            return LineCurrent::zero();
        }
        LineCurrent { terms: vec![(l.clone(), lp.clone(), w)] }
    }

    pub fn add(&self, other: &LineCurrent) -> LineCurrent {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        LineCurrent { terms }
    }

    pub fn sub(&self, other: &LineCurrent) -> LineCurrent {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> LineCurrent {
        LineCurrent {
            terms: self.terms.iter().map(|(l, lp, w)| (l.clone(), lp.clone(), -w)).collect(),
        }
    }

    pub fn scale(&self, k: i64) -> LineCurrent {
        if k == 0 {
            return LineCurrent::zero();
        }
        LineCurrent {
            terms: self
                .terms
                .iter()
                .map(|(l, lp, w)| (l.clone(), lp.clone(), w * Int::from(k)))
                .collect(),
        }
    }

    /// The left translate g applied to the current: every boundary pair moves
    /// by g, which evaluates (g phi)(a) = phi(g^{-1} a) exactly everywhere.
    pub fn acted(&self, tree: &Tree, g: &Mat2) -> Result<LineCurrent, VdpError> {
        let f = &tree.field;
        let mut terms = Vec::with_capacity(self.terms.len());
        for (l, lp, w) in &self.terms {
            let gl = act_end(f, g, l)?;
            let glp = act_end(f, g, lp)?;
            if gl != glp {
                terms.push((gl, glp, w.clone()));
            }
        }
        Ok(LineCurrent { terms })
    }

    /// Exact value at the arrow (v, w).
    pub fn value_at(&self, tree: &Tree, v: &VertexLabel, w: &VertexLabel) -> Result<Int, VdpError> {
        let mut acc = Int::zero();
        for (l, lp, weight) in &self.terms {
            let s = pair_value(tree, l, lp, v, w)?;
            if s != 0 {
                acc += weight * Int::from(s);
            }
        }
        Ok(acc)
    }

    /// Edge form on a window: each edge reads the arrow out of its
    /// even-parity endpoint.
    pub fn to_edge_cochain(
        &self,
        tree: &Tree,
        kind: WindowKind,
        n: usize,
    ) -> Result<Cochain, VdpError> {
        let w = tree.window(kind, n);
        let mut values = Vec::with_capacity(w.edges.len());
        for &(i, j) in &w.edges {
            let (even, odd) = if w.depth[i] % 2 == 0 { (i, j) } else { (j, i) };
            values.push(self.value_at(tree, &w.vertices[even], &w.vertices[odd])?);
        }
        Ok(Cochain { kind, n, domain: Domain::Edges, values })
    }

    /// Arrow form on a window, source-major.
    pub fn to_arrow_cochain(
        &self,
        tree: &Tree,
        kind: WindowKind,
        n: usize,
    ) -> Result<Cochain, VdpError> {
        let w = tree.window(kind, n);
        let mut values = Vec::with_capacity(w.arrows.len());
        for a in &w.arrows {
            values.push(self.value_at(tree, &w.vertices[a.src], &a.dst_label)?);
        }
        Ok(Cochain { kind, n, domain: Domain::Arrows, values })
    }

    /// True when the current vanishes at every arrow of the window.
    pub fn vanishes_on(&self, tree: &Tree, kind: WindowKind, n: usize) -> Result<bool, VdpError> {
        Ok(self.to_arrow_cochain(tree, kind, n)?.is_zero())
    }
}

/// A quotient of linear forms recorded by kernel lines and multiplicities;
/// only degree zero is meaningful for the transform (scalars are invisible).
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct FormalUnit {
    pub terms: Vec<(End, i64)>,
}

impl FormalUnit {
    pub fn new(terms: Vec<(End, i64)>) -> Result<FormalUnit, VdpError> {
        if terms.iter().map(|(_, m)| m).sum::<i64>() != 0 {
            return Err(VdpError::DegreeNotZero);
        }
        Ok(FormalUnit { terms })
    }

    /// The transform against the first listed line as base. Telescoping makes
    /// the result independent of the base at every arrow.
    pub fn transform(&self) -> LineCurrent {
        self.transform_with_base(0)
    }

    pub fn transform_with_base(&self, base: usize) -> LineCurrent {
        let base_line = &self.terms[base].0;
        let mut out = LineCurrent::zero();
        for (l, m) in &self.terms {
            out = out.add(&LineCurrent::weighted_pair(l, base_line, Int::from(*m)));
        }
        out
    }
}

/// The j-cocycle of a base line: g maps to the current from L to g L. The
/// identity c(gh) = g c(h) + c(g) holds exactly by telescoping.
pub fn j_cocycle(tree: &Tree, base: &End, g: &Mat2) -> Result<LineCurrent, VdpError> {
    let gl = act_end(&tree.field, g, base)?;
    Ok(LineCurrent::pair(&gl, base))
}

/// The base line used by the theta and beta cocycles.
pub fn standard_base_line(field: &crate::localfield::Field) -> End {
    End::Unit(field.zero()) // the line [1 : 0]
}

/// The q lines of the theta construction: [1 : 0] together with
/// [1 : -pi zeta] for the q - 1 unit representatives zeta.
pub fn theta_lines(field: &crate::localfield::Field) -> Vec<End> {
    let mut out = vec![standard_base_line(field)];
    for code in 1..field.q() as u16 {
        let zeta = field.from_residue_code(code);
        let z = field.neg(&field.mul(&field.pi(), &zeta));
        out.push(End::Unit(z));
    }
    out
}

/// The theta-cocycle: the sum of the j-cocycles of all theta lines.
pub fn theta_cocycle(tree: &Tree, g: &Mat2) -> Result<LineCurrent, VdpError> {
    let mut out = LineCurrent::zero();
    for line in theta_lines(&tree.field) {
        out = out.add(&j_cocycle(tree, &line, g)?);
    }
    Ok(out)
}

/// The correction current c = sum over unit lines of pair(L_zeta, L_0).
pub fn theta_correction(tree: &Tree) -> LineCurrent {
    let lines = theta_lines(&tree.field);
    let base = &lines[0];
    let mut out = LineCurrent::zero();
    for l in &lines[1..] {
        out = out.add(&LineCurrent::pair(l, base));
    }
    out
}

/// Verify P(theta(g)) - q P(j(g)) = g c - c at every arrow of the radius-n
/// window. The identity is exact, so any failure is a real one.
pub fn theta_identity(tree: &Tree, n: usize, g: &Mat2) -> Result<bool, VdpError> {
    let q = tree.q() as i64;
    let base = standard_base_line(&tree.field);
    let lhs = theta_cocycle(tree, g)?.sub(&j_cocycle(tree, &base, g)?.scale(q));
    let c = theta_correction(tree);
    let rhs = c.acted(tree, g)?.sub(&c);
    let w = tree.window(WindowKind::Radius, n);
    for a in &w.arrows {
        let v = &w.vertices[a.src];
        if lhs.value_at(tree, v, &a.dst_label)? != rhs.value_at(tree, v, &a.dst_label)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// The coset-sum cocycle: over the section representatives g_i of the
/// level-(n+1) upper cosets, the sum of pair(g_i L, L) - pair(g g_i L, L).
pub fn beta_cocycle(tree: &Tree, n: usize, g: &Mat2) -> Result<LineCurrent, VdpError> {
    let f = &tree.field;
    let base = standard_base_line(f);
    let mut out = LineCurrent::zero();
    for rep in coset_reps_upper(f, n) {
        out = out.add(&j_cocycle(tree, &base, &rep.m)?);
        out = out.sub(&j_cocycle(tree, &base, &Mat2::mul(f, g, &rep.m))?);
    }
    Ok(out)
}

/// True when the beta cocycle of g vanishes at every arrow with source in
/// the radius-n window.
pub fn beta_vanishing(tree: &Tree, n: usize, g: &Mat2) -> Result<bool, VdpError> {
    beta_cocycle(tree, n, g)?.vanishes_on(tree, WindowKind::Radius, n)
}

/// Unit flow toward the end U, as the edge vector over the (n+1)-window:
/// an edge carries 1 exactly when its even-to-odd arrow points toward U.
/// Also returns the vertex sums, which equal 1 on even and q on odd vertices.
pub fn flow_phi(
    tree: &Tree,
    u: &End,
    kind: WindowKind,
    n: usize,
) -> Result<(Cochain, Cochain), VdpError> {
    let w = tree.window(kind, n + 1);
    let mut values = Vec::with_capacity(w.edges.len());
    for &(i, j) in &w.edges {
        let (even, odd) = if w.depth[i] % 2 == 0 { (i, j) } else { (j, i) };
        let step = tree.step_toward_end(&w.vertices[even], u)?;
        values.push(if step == w.vertices[odd] { Int::from(1) } else { Int::zero() });
    }
    let phi = Cochain { kind, n: n + 1, domain: Domain::Edges, values };
    let sums = sigma(tree, &phi)?;
    Ok((phi, sums))
}

/// The path current along the geodesic ray from the base vertex toward U, as
/// the edge vector over the (n+1)-window; its vertex sums form the indicator
/// of the base vertex.
pub fn path_psi(tree: &Tree, u: &End, kind: WindowKind, n: usize) -> Result<Cochain, VdpError> {
    let w = tree.window(kind, n + 1);
    let mut phi = Cochain::zero(tree, kind, n + 1, Domain::Edges);
    let mut cur = VertexLabel::base();
    for step_count in 0..=n {
        let next = tree.step_toward_end(&cur, u)?;
        let i = w.vindex[&cur];
        let j = w.vindex[&next];
        let e = w.edge_index(i, j).expect("ray stays inside the window");
        // the edge reads its even-to-odd arrow; ray arrows alternate
        phi.values[e] = if step_count % 2 == 0 { Int::from(1) } else { Int::from(-1) };
        cur = next;
    }
    Ok(phi)
}
