//! Dense linear algebra over arbitrary-precision integers.
//!
//! Provides Smith normal form with recorded unimodular transforms, saturated
//! kernel bases, exact linear solvers with refutation certificates, cokernel
//! invariants, and the order of a class in a cokernel. All pivoting is
//! deterministic so downstream certificate output is byte-stable.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{Integer, One, Signed, Zero};
use thiserror::Error;

pub type Int = BigInt;

/// Dense row-major integer matrix.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct IntMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Int>,
}

impl IntMatrix {
    pub fn zero(rows: usize, cols: usize) -> Self {
        IntMatrix { rows, cols, data: vec![Int::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = IntMatrix::zero(n, n);
        for i in 0..n {
            m.set(i, i, Int::one());
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Int) -> Self {
        let mut m = IntMatrix::zero(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn from_i64_rows(rows: &[Vec<i64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        assert!(rows.iter().all(|x| x.len() == c), "ragged rows");
        IntMatrix::from_fn(r, c, |i, j| Int::from(rows[i][j]))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, i: usize, j: usize) -> &Int {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, x: Int) {
        self.data[i * self.cols + j] = x;
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|x| x.is_zero())
    }

    pub fn column(&self, j: usize) -> Vec<Int> {
        (0..self.rows).map(|i| self.at(i, j).clone()).collect()
    }

    pub fn row(&self, i: usize) -> Vec<Int> {
        (0..self.cols).map(|j| self.at(i, j).clone()).collect()
    }

    pub fn transpose(&self) -> IntMatrix {
        IntMatrix::from_fn(self.cols, self.rows, |i, j| self.at(j, i).clone())
    }

    pub fn mul(&self, other: &IntMatrix) -> IntMatrix {
        assert_eq!(self.cols, other.rows, "dimension mismatch");
        let mut out = IntMatrix::zero(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let b = other.at(k, j);
                    if !b.is_zero() {
                        let cur = out.at(i, j) + a * b;
                        out.set(i, j, cur);
                    }
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[Int]) -> Vec<Int> {
        assert_eq!(self.cols, v.len(), "dimension mismatch");
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.at(i, j) * &v[j]).sum())
            .collect()
    }

    /// Exact determinant by fraction-free Gaussian elimination. Intended for
    /// the small matrices that end up inside certificates.
    pub fn det(&self) -> Int {
        assert_eq!(self.rows, self.cols, "det of non-square matrix");
        let n = self.rows;
        if n == 0 {
            return Int::one();
        }
        let mut m: Vec<Vec<Int>> = (0..n).map(|i| self.row(i)).collect();
        let mut sign = 1i32;
        let mut prev = Int::one();
        for k in 0..n - 1 {
            if m[k][k].is_zero() {
                match (k + 1..n).find(|&i| !m[i][k].is_zero()) {
                    Some(i) => {
                        m.swap(k, i);
                        sign = -sign;
                    }
                    None => return Int::zero(),
                }
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    let t = &m[i][j] * &m[k][k] - &m[i][k] * &m[k][j];
                    m[i][j] = &t / &prev;
                }
                m[i][k] = Int::zero();
            }
            prev = m[k][k].clone();
        }
        let d = m[n - 1][n - 1].clone();
        if sign < 0 {
            -d
        } else {
            d
        }
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    fn swap_cols(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for i in 0..self.rows {
            self.data.swap(i * self.cols + a, i * self.cols + b);
        }
    }

    /// row[dst] += q * row[src]
    fn add_row_multiple(&mut self, dst: usize, src: usize, q: &Int) {
        if q.is_zero() {
            return;
        }
        for j in 0..self.cols {
            let t = self.at(dst, j) + q * self.at(src, j);
            self.set(dst, j, t);
        }
    }

    /// col[dst] += q * col[src]
    fn add_col_multiple(&mut self, dst: usize, src: usize, q: &Int) {
        if q.is_zero() {
            return;
        }
        for i in 0..self.rows {
            let t = self.at(i, dst) + q * self.at(i, src);
            self.set(i, dst, t);
        }
    }

    fn negate_row(&mut self, i: usize) {
        for j in 0..self.cols {
            let t = -self.at(i, j).clone();
            self.set(i, j, t);
        }
    }
}

impl std::fmt::Display for IntMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|j| self.at(i, j).to_string()).collect();
            writeln!(f, "[{}]", row.join(", "))?;
        }
        Ok(())
    }
}

/// Smith normal form data: `d = u * a * v` with `u`, `v` unimodular and the
/// diagonal of `d` nonnegative with each entry dividing the next. The identity
/// is re-multiplied on construction; a decomposition that does not check out
/// is a panic, not a value.
#[derive(Clone, Debug)]
pub struct SmithDecomposition {
    pub a: IntMatrix,
    pub u: IntMatrix,
    pub d: IntMatrix,
    pub v: IntMatrix,
}

impl SmithDecomposition {
    pub fn diagonal(&self) -> Vec<Int> {
        let k = self.d.rows().min(self.d.cols());
        (0..k).map(|i| self.d.at(i, i).clone()).collect()
    }

    pub fn rank(&self) -> usize {
        self.diagonal().iter().filter(|x| !x.is_zero()).count()
    }

    pub fn verify(&self) -> bool {
        if self.u.mul(&self.a).mul(&self.v) != self.d {
            return false;
        }
        let diag = self.diagonal();
        for i in 0..diag.len() {
            if diag[i].is_negative() {
                return false;
            }
            if i + 1 < diag.len() && !diag[i].is_zero() && !(&diag[i + 1] % &diag[i]).is_zero() {
                return false;
            }
            if diag[i].is_zero() && i + 1 < diag.len() && !diag[i + 1].is_zero() {
                return false;
            }
        }
        for i in 0..self.d.rows() {
            for j in 0..self.d.cols() {
                if i != j && !self.d.at(i, j).is_zero() {
                    return false;
                }
            }
        }
        true
    }
}

/// Deterministic pivot choice: smallest nonzero absolute value in the
/// submatrix at (k,k), ties broken row-major.
fn find_pivot(d: &IntMatrix, k: usize) -> Option<(usize, usize)> {
    let mut best: Option<(Int, usize, usize)> = None;
    for i in k..d.rows() {
        for j in k..d.cols() {
            let x = d.at(i, j);
            if x.is_zero() {
                continue;
            }
            let a = x.abs();
            match &best {
                Some((b, _, _)) if *b <= a => {}
                _ => best = Some((a, i, j)),
            }
        }
    }
    best.map(|(_, i, j)| (i, j))
}

struct SnfEngine {
    d: IntMatrix,
    u: Option<IntMatrix>,
    v: Option<IntMatrix>,
}

impl SnfEngine {
    fn run(a: &IntMatrix, want_u: bool, want_v: bool) -> SnfEngine {
        let mut e = SnfEngine {
            d: a.clone(),
            u: want_u.then(|| IntMatrix::identity(a.rows())),
            v: want_v.then(|| IntMatrix::identity(a.cols())),
        };
        let steps = a.rows().min(a.cols());
        for k in 0..steps {
            e.reduce_step(k);
        }
        for k in 0..steps {
            if e.d.at(k, k).is_negative() {
                e.d.negate_row(k);
                if let Some(u) = e.u.as_mut() {
                    u.negate_row(k);
                }
            }
        }
        e
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        self.d.swap_rows(a, b);
        if let Some(u) = self.u.as_mut() {
            u.swap_rows(a, b);
        }
    }

    fn swap_cols(&mut self, a: usize, b: usize) {
        self.d.swap_cols(a, b);
        if let Some(v) = self.v.as_mut() {
            v.swap_cols(a, b);
        }
    }

    fn add_row_multiple(&mut self, dst: usize, src: usize, q: &Int) {
        self.d.add_row_multiple(dst, src, q);
        if let Some(u) = self.u.as_mut() {
            u.add_row_multiple(dst, src, q);
        }
    }

    fn add_col_multiple(&mut self, dst: usize, src: usize, q: &Int) {
        self.d.add_col_multiple(dst, src, q);
        if let Some(v) = self.v.as_mut() {
            v.add_col_multiple(dst, src, q);
        }
    }

    /// Clears row k and column k beyond the diagonal and leaves d[k][k]
    /// dividing every entry of the remaining submatrix, so the diagonal comes
    /// out already in chain order.
    fn reduce_step(&mut self, k: usize) {
        loop {
            let Some((pi, pj)) = find_pivot(&self.d, k) else {
                return;
            };
            self.swap_rows(k, pi);
            self.swap_cols(k, pj);
            let mut dirty = false;
            for i in k + 1..self.d.rows() {
                if !self.d.at(i, k).is_zero() {
                    let q = -(self.d.at(i, k) / self.d.at(k, k));
                    self.add_row_multiple(i, k, &q);
                    if !self.d.at(i, k).is_zero() {
                        dirty = true;
                    }
                }
            }
            for j in k + 1..self.d.cols() {
                if !self.d.at(k, j).is_zero() {
                    let q = -(self.d.at(k, j) / self.d.at(k, k));
                    self.add_col_multiple(j, k, &q);
                    if !self.d.at(k, j).is_zero() {
                        dirty = true;
                    }
                }
            }
            if dirty {
                continue;
            }
            // Force divisibility of the remaining block by the pivot.
            let pivot = self.d.at(k, k).clone();
            let mut fixed = true;
            'scan: for i in k + 1..self.d.rows() {
                for j in k + 1..self.d.cols() {
                    if !(self.d.at(i, j) % &pivot).is_zero() {
                        self.add_row_multiple(k, i, &Int::one());
                        fixed = false;
                        break 'scan;
                    }
                }
            }
            if fixed {
                return;
            }
        }
    }
}

/// Smith normal form with both transforms recorded.
pub fn snf(a: &IntMatrix) -> SmithDecomposition {
    let e = SnfEngine::run(a, true, true);
    let out = SmithDecomposition { a: a.clone(), u: e.u.unwrap(), d: e.d, v: e.v.unwrap() };
    assert!(out.verify(), "smith decomposition failed self-check");
    out
}

/// Saturated basis of the integer kernel of `a`, returned as the columns of a
/// cols-by-nullity matrix. Tracks only the column transform.
pub fn kernel_basis(a: &IntMatrix) -> IntMatrix {
    let e = SnfEngine::run(a, false, true);
    let v = e.v.unwrap();
    let diag_len = e.d.rows().min(e.d.cols());
    let rank = (0..diag_len).filter(|&i| !e.d.at(i, i).is_zero()).count();
    let null = a.cols() - rank;
    IntMatrix::from_fn(a.cols(), null, |i, j| v.at(i, rank + j).clone())
}

/// Incremental kernel of a stream of row constraints; avoids materializing
/// tall constraint matrices. The held basis stays saturated throughout.
pub struct KernelAccum {
    basis: Vec<Vec<Int>>, // columns, each of length n
    n: usize,
}

impl KernelAccum {
    pub fn new(n: usize) -> Self {
        let basis = (0..n)
            .map(|j| {
                let mut col = vec![Int::zero(); n];
                col[j] = Int::one();
                col
            })
            .collect();
        KernelAccum { basis, n }
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn add_row(&mut self, row: &[Int]) {
        assert_eq!(row.len(), self.n, "dimension mismatch");
        let mut t: Vec<Int> = self
            .basis
            .iter()
            .map(|col| col.iter().zip(row).map(|(c, r)| c * r).sum())
            .collect();
        loop {
            let nz: Vec<usize> = (0..t.len()).filter(|&j| !t[j].is_zero()).collect();
            match nz.len() {
                0 => return,
                1 => {
                    self.basis.remove(nz[0]);
                    return;
                }
                _ => {
                    let &piv = nz
                        .iter()
                        .min_by(|&&a, &&b| t[a].abs().cmp(&t[b].abs()).then(a.cmp(&b)))
                        .unwrap();
                    for &j in &nz {
                        if j == piv {
                            continue;
                        }
                        let q = &t[j] / &t[piv];
                        if !q.is_zero() {
                            t[j] = &t[j] - &q * &t[piv];
                            for i in 0..self.n {
                                let upd = &self.basis[j][i] - &q * &self.basis[piv][i];
                                self.basis[j][i] = upd;
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn into_basis(self) -> IntMatrix {
        IntMatrix::from_fn(self.n, self.basis.len(), |i, j| self.basis[j][i].clone())
    }
}

/// Finitely generated abelian group shape of a cokernel: free rank plus the
/// invariant factors larger than 1, in divisibility order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CokernelStructure {
    pub free_rank: usize,
    pub invariant_factors: Vec<Int>,
}

impl CokernelStructure {
    pub fn describe(&self) -> String {
        let mut parts: Vec<String> = Vec::new();
        for _ in 0..self.free_rank {
            parts.push("Z".to_string());
        }
        for f in &self.invariant_factors {
            parts.push(format!("Z/{}", f));
        }
        if parts.is_empty() {
            "0".to_string()
        } else {
            parts.join(" + ")
        }
    }
}

/// Cokernel of the column span of `a` inside Z^rows.
pub fn cokernel_structure(a: &IntMatrix) -> CokernelStructure {
    let e = SnfEngine::run(a, false, false);
    let diag_len = e.d.rows().min(e.d.cols());
    let diag: Vec<Int> = (0..diag_len).map(|i| e.d.at(i, i).clone()).collect();
    let rank = diag.iter().filter(|x| !x.is_zero()).count();
    CokernelStructure {
        free_rank: a.rows() - rank,
        invariant_factors: diag.into_iter().filter(|x| !x.is_zero() && !x.is_one()).collect(),
    }
}

/// Refutation that `a x = b` has no integer solution: a rational functional
/// that takes integer values on every column of `a` but a non-integer value on
/// `b`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NoSolutionCert {
    pub functional: Vec<BigRational>,
}

impl NoSolutionCert {
    pub fn verify(&self, a: &IntMatrix, b: &[Int]) -> bool {
        if self.functional.len() != a.rows() || b.len() != a.rows() {
            return false;
        }
        for j in 0..a.cols() {
            let s: BigRational = (0..a.rows())
                .map(|i| &self.functional[i] * BigRational::from(a.at(i, j).clone()))
                .sum();
            if !s.is_integer() {
                return false;
            }
        }
        let s: BigRational = (0..a.rows())
            .map(|i| &self.functional[i] * BigRational::from(b[i].clone()))
            .sum();
        !s.is_integer()
    }
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum SolveError {
    #[error("no integer solution")]
    NoSolution(NoSolutionCert),
    #[error("dimension mismatch: matrix has {rows} rows, vector has {len}")]
    Dimension { rows: usize, len: usize },
}

/// Exact solution of `a x = b` over the integers, or a verified refutation.
pub fn solve_integer(a: &IntMatrix, b: &[Int]) -> Result<Vec<Int>, SolveError> {
    if b.len() != a.rows() {
        return Err(SolveError::Dimension { rows: a.rows(), len: b.len() });
    }
    let dec = snf(a);
    let w = dec.u.mul_vec(b);
    let diag = dec.diagonal();
    let mut y = vec![Int::zero(); a.cols()];
    for i in 0..a.rows() {
        let di = if i < diag.len() { diag[i].clone() } else { Int::zero() };
        if di.is_zero() {
            if !w[i].is_zero() {
                // u_i * a = 0 but u_i * b != 0; scale to land strictly between integers.
                let m = Int::from(w[i].abs() + Int::one());
                let functional = dec
                    .u
                    .row(i)
                    .into_iter()
                    .map(|x| BigRational::new(x, m.clone()))
                    .collect();
                return Err(SolveError::NoSolution(NoSolutionCert { functional }));
            }
        } else {
            let (q, r) = w[i].div_rem(&di);
            if !r.is_zero() {
                let functional = dec
                    .u
                    .row(i)
                    .into_iter()
                    .map(|x| BigRational::new(x, di.clone()))
                    .collect();
                return Err(SolveError::NoSolution(NoSolutionCert { functional }));
            }
            y[i] = q;
        }
    }
    Ok(dec.v.mul_vec(&y))
}

/// Order of `v + im(a)` in the cokernel of `a`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ClassOrder {
    Finite(Int),
    Infinite,
}

impl ClassOrder {
    pub fn as_finite(&self) -> Option<&Int> {
        match self {
            ClassOrder::Finite(k) => Some(k),
            ClassOrder::Infinite => None,
        }
    }
}

/// Least k >= 1 with k*v in the integer column span of `a`, if any.
pub fn class_order(v: &[Int], a: &IntMatrix) -> ClassOrder {
    assert_eq!(v.len(), a.rows(), "dimension mismatch");
    let dec = snf(a);
    let w = dec.u.mul_vec(v);
    let diag = dec.diagonal();
    let mut k = Int::one();
    for i in 0..a.rows() {
        let di = if i < diag.len() { diag[i].clone() } else { Int::zero() };
        if di.is_zero() {
            if !w[i].is_zero() {
                return ClassOrder::Infinite;
            }
        } else if !w[i].is_zero() {
            let g = di.gcd(&w[i]);
            k = k.lcm(&(&di / &g));
        }
    }
    ClassOrder::Finite(k)
}
