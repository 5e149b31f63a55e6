//! The (q+1)-regular tree of homothety classes of rank-2 lattices.
//!
//! A vertex is a homothety class of O-lattices in F^2, stored as the canonical
//! triple (a, c, b): the class of the column span of [[pi^a, b~], [0, pi^c]]
//! with b in O/pi^a and min(a, c, ord b) = 0. The triple is computed by a
//! column Hermite reduction over O followed by the homothety normalization,
//! and is a complete invariant of the class.
//!
//! Windows are finite subtrees enumerated breadth-first from the base vertex
//! with a fixed child order, so vertex, edge and arrow indices are stable
//! across runs and across growing radii (smaller windows are prefixes of
//! larger ones).

use crate::localfield::{Field, FieldError, QuotientElement, Scalar};
use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, RwLock};
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum TreeError {
    #[error("matrix is singular")]
    Singular,
    #[error("projective point needs a nonzero coordinate pair")]
    ZeroPoint,
    #[error("scalar arithmetic: {0}")]
    Scalar(#[from] FieldError),
}

/// 2x2 matrix over the field; columns span lattices, so the lattice meaning
/// of a matrix is its column span over O.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Mat2 {
    pub e: [[Scalar; 2]; 2],
}

impl Mat2 {
    pub fn new(e: [[Scalar; 2]; 2]) -> Mat2 {
        Mat2 { e }
    }

    pub fn identity(field: &Field) -> Mat2 {
        Mat2::from_i64(field, [[1, 0], [0, 1]])
    }

    pub fn from_i64(field: &Field, m: [[i64; 2]; 2]) -> Mat2 {
        Mat2 {
            e: [
                [field.from_i64(m[0][0]), field.from_i64(m[0][1])],
                [field.from_i64(m[1][0]), field.from_i64(m[1][1])],
            ],
        }
    }

    pub fn mul(field: &Field, a: &Mat2, b: &Mat2) -> Mat2 {
        let mut out = [[field.zero(), field.zero()], [field.zero(), field.zero()]];
        for i in 0..2 {
            for j in 0..2 {
                let t1 = field.mul(&a.e[i][0], &b.e[0][j]);
                let t2 = field.mul(&a.e[i][1], &b.e[1][j]);
                out[i][j] = field.add(&t1, &t2);
            }
        }
        Mat2 { e: out }
    }

    pub fn det(&self, field: &Field) -> Scalar {
        field.sub(
            &field.mul(&self.e[0][0], &self.e[1][1]),
            &field.mul(&self.e[0][1], &self.e[1][0]),
        )
    }

    pub fn adjugate(&self, field: &Field) -> Mat2 {
        Mat2 {
            e: [
                [self.e[1][1].clone(), field.neg(&self.e[0][1])],
                [field.neg(&self.e[1][0]), self.e[0][0].clone()],
            ],
        }
    }

    pub fn inverse(&self, field: &Field) -> Result<Mat2, TreeError> {
        let det = self.det(field);
        if field.is_zero(&det) {
            return Err(TreeError::Singular);
        }
        let inv = field.inv(&det)?;
        let adj = self.adjugate(field);
        Ok(Mat2 {
            e: [
                [field.mul(&adj.e[0][0], &inv), field.mul(&adj.e[0][1], &inv)],
                [field.mul(&adj.e[1][0], &inv), field.mul(&adj.e[1][1], &inv)],
            ],
        })
    }

    pub fn mul_col(&self, field: &Field, x: &Scalar, y: &Scalar) -> (Scalar, Scalar) {
        (
            field.add(&field.mul(&self.e[0][0], x), &field.mul(&self.e[0][1], y)),
            field.add(&field.mul(&self.e[1][0], x), &field.mul(&self.e[1][1], y)),
        )
    }
}

/// Canonical label of a lattice class. `b` always has exactly `a` digits.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct VertexLabel {
    pub a: u32,
    pub c: u32,
    pub b: QuotientElement,
}

impl VertexLabel {
    /// The standard apartment vertex v_i = [O + pi^i O] (negative i allowed).
    pub fn standard(i: i64) -> VertexLabel {
        if i >= 0 {
            VertexLabel { a: 0, c: i as u32, b: QuotientElement { digits: vec![] } }
        } else {
            VertexLabel {
                a: (-i) as u32,
                c: 0,
                b: QuotientElement { digits: vec![0; (-i) as usize] },
            }
        }
    }

    pub fn base() -> VertexLabel {
        VertexLabel::standard(0)
    }

    /// Distance to the base vertex, read off the normalized triple.
    pub fn depth(&self) -> u64 {
        self.a as u64 + self.c as u64
    }

    pub fn parity(&self) -> u8 {
        (self.depth() % 2) as u8
    }

    pub fn describe(&self) -> String {
        let digits: Vec<String> = self.b.digits.iter().map(|d| d.to_string()).collect();
        format!("({},{},[{}])", self.a, self.c, digits.join(""))
    }
}

/// Boundary point of the tree: a line in F^2 in normalized homogeneous form,
/// either [1 : z] with z integral or [w : 1] with w of positive valuation.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum End {
    Unit(Scalar),
    Pi(Scalar),
}

impl End {
    pub fn coords(&self, field: &Field) -> (Scalar, Scalar) {
        match self {
            End::Unit(z) => (field.one(), z.clone()),
            End::Pi(w) => (w.clone(), field.one()),
        }
    }

    pub fn describe(&self, field: &Field) -> String {
        let (x, y) = self.coords(field);
        format!("[{:?}:{:?}]", x, y)
    }
}

/// Normalize a nonzero coordinate pair to an `End`.
pub fn canonical_end(field: &Field, x: &Scalar, y: &Scalar) -> Result<End, TreeError> {
    let vx = field.valuation(x);
    let vy = field.valuation(y);
    match (vx, vy) {
        (None, None) => Err(TreeError::ZeroPoint),
        (Some(_), None) => Ok(End::Unit(field.zero())),
        (None, Some(_)) => Ok(End::Pi(field.zero())),
        (Some(a), Some(b)) => {
            if a <= b {
                Ok(End::Unit(field.div(y, x)?))
            } else {
                Ok(End::Pi(field.div(x, y)?))
            }
        }
    }
}

pub fn act_end(field: &Field, g: &Mat2, u: &End) -> Result<End, TreeError> {
    let (x, y) = u.coords(field);
    let (nx, ny) = g.mul_col(field, &x, &y);
    canonical_end(field, &nx, &ny)
}

/// Window shapes: `Radius` is the ball T_n around the base vertex; `Double`
/// is T'_n, the union of the radius-n balls around v_0 and v_1.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub enum WindowKind {
    Radius,
    Double,
}

/// An arrow with source inside the window; the target may live one step
/// outside the vertex list, so it is kept as a label with an optional index.
#[derive(Clone, Debug)]
pub struct Arrow {
    pub src: usize,
    pub dst_label: VertexLabel,
    pub dst_idx: Option<usize>,
}

/// Finite subtree with stable vertex, edge and arrow orderings.
#[derive(Debug)]
pub struct Window {
    pub kind: WindowKind,
    pub n: usize,
    pub q: u64,
    pub vertices: Vec<VertexLabel>,
    pub vindex: HashMap<VertexLabel, usize>,
    pub depth: Vec<usize>,
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    /// Edges as (parent index, child index), ordered by child index.
    pub edges: Vec<(usize, usize)>,
    pub eindex: HashMap<(usize, usize), usize>,
    /// All (q+1) arrows out of each window vertex, source-major, targets in
    /// child-line order.
    pub arrows: Vec<Arrow>,
    pub aindex: HashMap<(usize, VertexLabel), usize>,
}

impl Window {
    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        let key = if i < j { (i, j) } else { (j, i) };
        self.eindex.get(&key).copied()
    }

    pub fn arrow_index(&self, src: usize, dst: &VertexLabel) -> Option<usize> {
        self.aindex.get(&(src, dst.clone())).copied()
    }

    /// Edges incident to a vertex: the parent edge plus child edges.
    pub fn incident_edges(&self, v: usize) -> Vec<usize> {
        let mut out = Vec::new();
        if let Some(p) = self.parent[v] {
            out.push(self.edge_index(p, v).unwrap());
        }
        for &ch in &self.children[v] {
            out.push(self.edge_index(v, ch).unwrap());
        }
        out
    }
}

/// Tree context: the field plus memoized geodesic steps and windows. All
/// methods are exact; caches are internal and do not affect results.
pub struct Tree {
    pub field: Field,
    step_cache: RwLock<HashMap<(VertexLabel, End), VertexLabel>>,
    window_cache: RwLock<HashMap<(WindowKind, usize), Arc<Window>>>,
}

impl Tree {
    pub fn new(field: Field) -> Tree {
        Tree { field, step_cache: RwLock::new(HashMap::new()), window_cache: RwLock::new(HashMap::new()) }
    }

    pub fn q(&self) -> u64 {
        self.field.q()
    }

    /// Canonical triple of the lattice class spanned by the columns of `m`.
    pub fn canonical_vertex(&self, m: &Mat2) -> Result<VertexLabel, TreeError> {
        let f = &self.field;
        if f.is_zero(&m.det(f)) {
            return Err(TreeError::Singular);
        }
        // Column reduction to [[x, y], [0, z]] by right GL2(O) moves.
        let mut cols = [
            [m.e[0][0].clone(), m.e[1][0].clone()],
            [m.e[0][1].clone(), m.e[1][1].clone()],
        ];
        let v21 = f.valuation(&cols[0][1]);
        let v22 = f.valuation(&cols[1][1]);
        let swap = match (v21, v22) {
            (None, _) => false,
            (Some(_), None) => true,
            (Some(a), Some(b)) => a < b,
        };
        if swap {
            cols.swap(0, 1);
        }
        if !f.is_zero(&cols[0][1]) {
            // coefficient is integral because the bottom-right valuation is minimal
            let t = f.div(&cols[0][1], &cols[1][1])?;
            debug_assert!(f.is_integral(&t));
            cols[0][0] = f.sub(&cols[0][0], &f.mul(&t, &cols[1][0]));
            cols[0][1] = f.zero();
        }
        let x = cols[0][0].clone();
        let y = cols[1][0].clone();
        let z = cols[1][1].clone();
        let va = f.valuation(&x).expect("triangular with nonzero det");
        let vc = f.valuation(&z).expect("triangular with nonzero det");
        // y normalized by the unit part of z so the triple is basis-free
        let uz = f.mul(&z, &f.pi_pow(-vc));
        let y = f.div(&y, &uz)?;
        let vy = f.valuation(&y);
        let m0 = match vy {
            Some(v) => va.min(vc).min(v),
            None => va.min(vc),
        };
        let a = (va - m0) as u32;
        let c = (vc - m0) as u32;
        let b = if a == 0 {
            QuotientElement { digits: vec![] }
        } else {
            let ys = f.mul(&y, &f.pi_pow(-m0));
            f.reduce(&ys, a as usize)?
        };
        Ok(VertexLabel { a, c, b })
    }

    /// The canonical matrix whose column span represents the label.
    pub fn vertex_matrix(&self, v: &VertexLabel) -> Mat2 {
        let f = &self.field;
        Mat2::new([
            [f.pi_pow(v.a as i64), f.lift(&v.b)],
            [f.zero(), f.pi_pow(v.c as i64)],
        ])
    }

    /// Tree distance: the gap between the two elementary divisor valuations
    /// of M_v^{-1} M_w, computed division-free via the adjugate.
    pub fn distance(&self, v: &VertexLabel, w: &VertexLabel) -> u64 {
        let f = &self.field;
        let x = Mat2::mul(f, &self.vertex_matrix(v).adjugate(f), &self.vertex_matrix(w));
        let vdet = f.valuation(&x.det(f)).expect("nonsingular");
        let vmin = x
            .e
            .iter()
            .flatten()
            .filter_map(|s| f.valuation(s))
            .min()
            .expect("nonzero matrix");
        let d = vdet - 2 * vmin;
        debug_assert!(d >= 0);
        d as u64
    }

    pub fn parity(&self, v: &VertexLabel) -> u8 {
        v.parity()
    }

    /// Apply a matrix to a lattice class.
    pub fn act_vertex(&self, g: &Mat2, v: &VertexLabel) -> Result<VertexLabel, TreeError> {
        let m = Mat2::mul(&self.field, g, &self.vertex_matrix(v));
        self.canonical_vertex(&m)
    }

    /// Residue lines in fixed order: [1 : y] for ascending codes y, then
    /// [0 : 1]. This order drives child enumeration everywhere.
    fn neighbor_for_line(&self, mv: &Mat2, line: usize) -> Result<VertexLabel, TreeError> {
        let f = &self.field;
        let q = self.q() as usize;
        let (x, y, keep_second) = if line < q {
            (f.one(), f.from_residue_code(line as u16), true)
        } else {
            (f.zero(), f.one(), false)
        };
        let (c0, c1) = mv.mul_col(f, &x, &y);
        let (k0, k1) = if keep_second {
            (f.mul(&f.pi(), &mv.e[0][1]), f.mul(&f.pi(), &mv.e[1][1]))
        } else {
            (f.mul(&f.pi(), &mv.e[0][0]), f.mul(&f.pi(), &mv.e[1][0]))
        };
        self.canonical_vertex(&Mat2::new([[c0, k0], [c1, k1]]))
    }

    /// The q+1 neighbors in line order.
    pub fn neighbors(&self, v: &VertexLabel) -> Result<Vec<VertexLabel>, TreeError> {
        let mv = self.vertex_matrix(v);
        (0..=self.q() as usize).map(|l| self.neighbor_for_line(&mv, l)).collect()
    }

    /// One step from v along the geodesic to the end U: pi L + (L ∩ U).
    pub fn step_toward_end(&self, v: &VertexLabel, u: &End) -> Result<VertexLabel, TreeError> {
        let key = (v.clone(), u.clone());
        if let Some(hit) = self.step_cache.read().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let f = &self.field;
        let mv = self.vertex_matrix(v);
        let (ux, uy) = u.coords(f);
        let inv = mv.inverse(f)?;
        let (z0, z1) = inv.mul_col(f, &ux, &uy);
        let v0 = f.valuation(&z0);
        let v1 = f.valuation(&z1);
        let m = match (v0, v1) {
            (Some(a), Some(b)) => a.min(b),
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => return Err(TreeError::ZeroPoint),
        };
        let sc = f.pi_pow(-m);
        let z0 = f.mul(&z0, &sc);
        let z1 = f.mul(&z1, &sc);
        // primitive coordinates; keep pi times the basis column whose residue
        // coordinate is a unit
        let (c0, c1) = mv.mul_col(f, &z0, &z1);
        let (k0, k1) = if f.is_unit(&z0) {
            (f.mul(&f.pi(), &mv.e[0][1]), f.mul(&f.pi(), &mv.e[1][1]))
        } else {
            (f.mul(&f.pi(), &mv.e[0][0]), f.mul(&f.pi(), &mv.e[1][0]))
        };
        let result = self.canonical_vertex(&Mat2::new([[c0, k0], [c1, k1]]))?;
        self.step_cache.write().unwrap().insert(key, result.clone());
        Ok(result)
    }

    /// First vertex after v on the geodesic to w; v and w must differ.
    pub fn step_toward_vertex(&self, v: &VertexLabel, w: &VertexLabel) -> Result<VertexLabel, TreeError> {
        let d = self.distance(v, w);
        assert!(d > 0, "step from a vertex to itself");
        for nb in self.neighbors(v)? {
            if self.distance(&nb, w) == d - 1 {
                return Ok(nb);
            }
        }
        unreachable!("some neighbor strictly decreases the distance");
    }

    /// Full geodesic from v to w inclusive.
    pub fn geodesic(&self, v: &VertexLabel, w: &VertexLabel) -> Result<Vec<VertexLabel>, TreeError> {
        let mut path = vec![v.clone()];
        let mut cur = v.clone();
        while &cur != w {
            cur = self.step_toward_vertex(&cur, w)?;
            path.push(cur.clone());
        }
        Ok(path)
    }

    /// Vertices at distance exactly `i` from the base vertex, keyed by the
    /// points of P^1(O/pi^i): classes [1 : c] by ascending code, then
    /// [c : 1] with c divisible by pi, ascending.
    pub fn sphere_from_projective_classes(&self, i: usize) -> Result<Vec<VertexLabel>, TreeError> {
        if i == 0 {
            return Ok(vec![VertexLabel::base()]);
        }
        let f = &self.field;
        let q = self.q();
        let mut out = Vec::new();
        let total = q.pow(i as u32);
        for code in 0..total {
            let digits = decode_base_q(code, q, i);
            let c = f.lift(&QuotientElement { digits });
            // lattice pi^i O^2 + O (1, c)
            out.push(self.canonical_vertex(&Mat2::new([
                [f.one(), f.zero()],
                [c, f.pi_pow(i as i64)],
            ]))?);
        }
        for code in 0..q.pow((i - 1) as u32) {
            let mut digits = vec![0u16];
            digits.extend(decode_base_q(code, q, i - 1));
            let c = f.lift(&QuotientElement { digits });
            // lattice pi^i O^2 + O (c, 1)
            out.push(self.canonical_vertex(&Mat2::new([
                [c, f.pi_pow(i as i64)],
                [f.one(), f.zero()],
            ]))?);
        }
        Ok(out)
    }

    /// Memoized window construction.
    pub fn window(&self, kind: WindowKind, n: usize) -> Arc<Window> {
        if let Some(w) = self.window_cache.read().unwrap().get(&(kind, n)) {
            return w.clone();
        }
        let w = Arc::new(self.build_window(kind, n));
        self.window_cache.write().unwrap().insert((kind, n), w.clone());
        w
    }

    fn build_window(&self, kind: WindowKind, n: usize) -> Window {
        let q = self.q();
        let v0 = VertexLabel::base();
        let v1 = VertexLabel::standard(1);
        let mut vertices = vec![v0.clone()];
        let mut vindex = HashMap::new();
        vindex.insert(v0.clone(), 0usize);
        let mut depth = vec![0usize];
        let mut parent: Vec<Option<usize>> = vec![None];
        let mut children: Vec<Vec<usize>> = vec![vec![]];
        let mut under_v1 = vec![false];
        let mut edges = Vec::new();
        let mut queue = VecDeque::from([0usize]);
        while let Some(i) = queue.pop_front() {
            let d = depth[i];
            let expand = match kind {
                WindowKind::Radius => d < n,
                WindowKind::Double => d < n || (d == n && (under_v1[i] || i == 0)),
            };
            if !expand {
                continue;
            }
            let here = vertices[i].clone();
            let nbs = self.neighbors(&here).expect("window vertices are nonsingular");
            for nb in nbs {
                if parent[i].map_or(false, |p| vertices[p] == nb) {
                    continue;
                }
                let nd = d + 1;
                let under = if i == 0 { nb == v1 } else { under_v1[i] };
                let include = match kind {
                    WindowKind::Radius => nd <= n,
                    WindowKind::Double => nd <= n || (nd == n + 1 && under),
                };
                if !include {
                    continue;
                }
                let j = vertices.len();
                vindex.insert(nb.clone(), j);
                vertices.push(nb);
                depth.push(nd);
                parent.push(Some(i));
                children.push(vec![]);
                under_v1.push(under);
                children[i].push(j);
                edges.push((i, j));
                queue.push_back(j);
            }
        }
        let mut eindex = HashMap::new();
        for (k, &(i, j)) in edges.iter().enumerate() {
            eindex.insert((i, j), k);
        }
        let mut arrows = Vec::new();
        let mut aindex = HashMap::new();
        for i in 0..vertices.len() {
            let nbs = self.neighbors(&vertices[i]).expect("nonsingular");
            for nb in nbs {
                let k = arrows.len();
                aindex.insert((i, nb.clone()), k);
                arrows.push(Arrow { src: i, dst_idx: vindex.get(&nb).copied(), dst_label: nb });
            }
        }
        Window { kind, n, q, vertices, vindex, depth, parent, children, edges, eindex, arrows, aindex }
    }
}

fn decode_base_q(code: u64, q: u64, len: usize) -> Vec<u16> {
    let mut c = code;
    (0..len)
        .map(|_| {
            let d = c % q;
            c /= q;
            d as u16
        })
        .collect()
}

/// Closed-form vertex count of T_n.
pub fn vertex_count(q: u64, n: usize) -> u64 {
    if n == 0 {
        return 1;
    }
    1 + (q + 1) * (q.pow(n as u32) - 1) / (q - 1)
}

/// Closed-form edge count of T_n.
pub fn edge_count(q: u64, n: usize) -> u64 {
    vertex_count(q, n) - 1
}

/// Closed-form vertex count of T'_n.
pub fn double_vertex_count(q: u64, n: usize) -> u64 {
    vertex_count(q, n) + q.pow(n as u32)
}

/// Deterministic DOT rendering of a window.
pub fn window_to_dot(w: &Window) -> String {
    let mut s = String::from("graph window {\n  node [shape=circle fontsize=10];\n");
    for (i, v) in w.vertices.iter().enumerate() {
        s.push_str(&format!("  v{} [label=\"{}\"];\n", i, v.describe()));
    }
    for &(i, j) in &w.edges {
        s.push_str(&format!("  v{} -- v{};\n", i, j));
    }
    s.push_str("}\n");
    s
}

/// Deterministic JSON rendering of a window.
pub fn window_to_json(w: &Window) -> serde_json::Value {
    let verts: Vec<serde_json::Value> = w
        .vertices
        .iter()
        .map(|v| {
            serde_json::json!({
                "a": v.a,
                "c": v.c,
                "b": v.b.digits,
            })
        })
        .collect();
    let edges: Vec<serde_json::Value> =
        w.edges.iter().map(|&(i, j)| serde_json::json!([i, j])).collect();
    let arrows: Vec<serde_json::Value> = w
        .arrows
        .iter()
        .map(|a| {
            serde_json::json!({
                "src": a.src,
                "dst": { "a": a.dst_label.a, "c": a.dst_label.c, "b": a.dst_label.b.digits },
                "dst_index": a.dst_idx,
            })
        })
        .collect();
    serde_json::json!({
        "kind": match w.kind { WindowKind::Radius => "radius", WindowKind::Double => "double" },
        "n": w.n,
        "q": w.q,
        "vertices": verts,
        "edges": edges,
        "arrows": arrows,
    })
}
