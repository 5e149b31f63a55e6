//! Subgroups of GL_2(F) acting on the tree: membership predicates, exact
//! generator sets, finite congruence quotients by direct enumeration, and
//! coset sections for the upper-triangular cosets.
//!
//! Group elements are exact 2x2 matrices; finite quotients pack a matrix over
//! O/pi^N into four base-q digit codes so that scans and closures stay cheap.

use crate::bttree::Mat2;
use crate::localfield::{Backend, Field, FieldError, Fq, QuotientElement, Scalar};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum GroupError {
    #[error("matrix is singular")]
    Singular,
    #[error("matrix has a non-integral entry at the requested level")]
    NotIntegral,
    #[error("quotient with {size} elements exceeds the enumeration bound")]
    QuotientTooLarge { size: u64 },
    #[error("operation is not available for this subgroup")]
    Unsupported,
    #[error("scalar arithmetic: {0}")]
    Field(#[from] FieldError),
}

/// The subgroups that occur in the orbit and cohomology computations.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum SubgroupTag {
    /// All of GL_2(F).
    FullG,
    /// Determinant of valuation zero.
    G0Det,
    /// GL_2(O).
    MaxCompact,
    /// The conjugate s GL_2(O) s^{-1}.
    ConjMaxCompact,
    /// Upper Iwahori: integral, c below the diagonal divisible by pi.
    Iwahori,
    /// Principal congruence subgroup 1 + pi^n M_2(O).
    Congruence(usize),
    /// Upper-triangular matrices in GL_2(O).
    UpperBorel,
}

/// An invertible matrix with its determinant data cached.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct GroupElement {
    pub m: Mat2,
    pub det: Scalar,
    pub det_val: i64,
}

impl GroupElement {
    pub fn new(field: &Field, m: Mat2) -> Result<GroupElement, GroupError> {
        let det = m.det(field);
        match field.valuation(&det) {
            None => Err(GroupError::Singular),
            Some(v) => Ok(GroupElement { m, det, det_val: v }),
        }
    }

    pub fn identity(field: &Field) -> GroupElement {
        GroupElement::new(field, Mat2::identity(field)).unwrap()
    }

    /// The element s = [[0, 1], [pi, 0]]; conjugation by s swaps the two
    /// standard vertices and reverses the base edge.
    pub fn s(field: &Field) -> GroupElement {
        let m = Mat2::new([
            [field.zero(), field.one()],
            [field.pi(), field.zero()],
        ]);
        GroupElement::new(field, m).unwrap()
    }

    pub fn mul(field: &Field, a: &GroupElement, b: &GroupElement) -> GroupElement {
        GroupElement::new(field, Mat2::mul(field, &a.m, &b.m)).unwrap()
    }

    pub fn inverse(&self, field: &Field) -> GroupElement {
        let inv = self.m.inverse(field).expect("group elements are invertible");
        GroupElement::new(field, inv).unwrap()
    }
}

fn val_at_least(field: &Field, x: &Scalar, bound: i64) -> bool {
    match field.valuation(x) {
        None => true, // zero has infinite valuation
        Some(v) => v >= bound,
    }
}

/// Subgroup membership by valuation conditions on the entries.
pub fn member(field: &Field, g: &Mat2, tag: SubgroupTag) -> bool {
    let det = g.det(field);
    let dv = match field.valuation(&det) {
        None => return false,
        Some(v) => v,
    };
    let a = &g.e[0][0];
    let b = &g.e[0][1];
    let c = &g.e[1][0];
    let d = &g.e[1][1];
    match tag {
        SubgroupTag::FullG => true,
        SubgroupTag::G0Det => dv == 0,
        SubgroupTag::MaxCompact => {
            dv == 0 && [a, b, c, d].iter().all(|x| field.is_integral(x))
        }
        SubgroupTag::ConjMaxCompact => {
            dv == 0
                && val_at_least(field, a, 0)
                && val_at_least(field, d, 0)
                && val_at_least(field, c, 1)
                && val_at_least(field, b, -1)
        }
        SubgroupTag::Iwahori => {
            member(field, g, SubgroupTag::MaxCompact) && val_at_least(field, c, 1)
        }
        SubgroupTag::Congruence(n) => {
            let one = field.one();
            dv == 0
                && val_at_least(field, &field.sub(a, &one), n as i64)
                && val_at_least(field, b, n as i64)
                && val_at_least(field, c, n as i64)
                && val_at_least(field, &field.sub(d, &one), n as i64)
        }
        SubgroupTag::UpperBorel => {
            dv == 0
                && field.is_zero(c)
                && field.is_unit(a)
                && field.is_unit(d)
                && field.is_integral(b)
        }
    }
}

/// Membership in the product set (1 + pi^level M_2(O)) B_0: integral with
/// unit diagonal and lower-left entry divisible by pi^level.
pub fn member_gn_b0(field: &Field, g: &Mat2, level: usize) -> bool {
    assert!(level >= 1);
    field.is_unit(&g.e[0][0])
        && field.is_unit(&g.e[1][1])
        && field.is_integral(&g.e[0][1])
        && val_at_least(field, &g.e[1][0], level as i64)
}

fn modpow(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut acc: u64 = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = ((acc as u128 * b as u128) % m as u128) as u64;
        }
        b = ((b as u128 * b as u128) % m as u128) as u64;
        e >>= 1;
    }
    acc
}

fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            out.push(d);
            while n % d == 0 {
                n /= d;
            }
        }
        d += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

fn odd_primitive_root(p: u64, level: usize) -> u64 {
    let m = p.pow(level as u32);
    let phi = p.pow(level as u32 - 1) * (p - 1);
    let primes = prime_factors(phi);
    for g in 2..m {
        if g % p == 0 {
            continue;
        }
        if primes.iter().all(|&ell| modpow(g, phi / ell, m) != 1) {
            return g;
        }
    }
    unreachable!("the unit group modulo an odd prime power is cyclic");
}

/// Generators of the additive group O/pi^level as exact scalars.
pub fn additive_level_generators(field: &Field, level: usize) -> Vec<Scalar> {
    match field.cfg.backend {
        Backend::RationalP => {
            if level == 0 {
                vec![]
            } else {
                vec![field.one()]
            }
        }
        Backend::LaurentQ => {
            let mut out = Vec::new();
            for j in 0..level {
                for i in 0..field.cfg.f {
                    let basis = field.from_residue_code(field.cfg.p.pow(i as u32) as u16);
                    out.push(field.mul(&basis, &field.pi_pow(j as i64)));
                }
            }
            out
        }
    }
}

/// Generators of the unit group (O/pi^level)^x as exact scalars.
pub fn unit_level_generators(field: &Field, level: usize) -> Vec<Scalar> {
    if level == 0 {
        return vec![];
    }
    match field.cfg.backend {
        Backend::RationalP => {
            let p = field.cfg.p;
            if p == 2 {
                match level {
                    1 => vec![],
                    2 => vec![field.from_i64(3)],
                    _ => vec![
                        field.from_i64(2i64.pow(level as u32) - 1),
                        field.from_i64(5),
                    ],
                }
            } else {
                vec![field.from_i64(odd_primitive_root(p, level) as i64)]
            }
        }
        Backend::LaurentQ => {
            let mut out = Vec::new();
            if field.q() > 2 {
                out.push(field.from_residue_code(field.fq.multiplicative_generator()));
            }
            for j in 1..level {
                for i in 0..field.cfg.f {
                    let basis = field.from_residue_code(field.cfg.p.pow(i as u32) as u16);
                    out.push(field.add(&field.one(), &field.mul(&basis, &field.pi_pow(j as i64))));
                }
            }
            out
        }
    }
}

fn elem12(field: &Field, r: &Scalar) -> GroupElement {
    GroupElement::new(
        field,
        Mat2::new([
            [field.one(), r.clone()],
            [field.zero(), field.one()],
        ]),
    )
    .unwrap()
}

fn elem21(field: &Field, r: &Scalar) -> GroupElement {
    GroupElement::new(
        field,
        Mat2::new([
            [field.one(), field.zero()],
            [r.clone(), field.one()],
        ]),
    )
    .unwrap()
}

fn diag(field: &Field, a: &Scalar, d: &Scalar) -> GroupElement {
    GroupElement::new(
        field,
        Mat2::new([
            [a.clone(), field.zero()],
            [field.zero(), d.clone()],
        ]),
    )
    .unwrap()
}

/// Exact matrices whose images generate the level-`level` quotient of the
/// subgroup. Supported for `MaxCompact` and `Iwahori`; everything else has no
/// finite quotient here.
pub fn generators(
    field: &Field,
    tag: SubgroupTag,
    level: usize,
) -> Result<Vec<GroupElement>, GroupError> {
    assert!(level >= 1);
    let mut out = Vec::new();
    match tag {
        SubgroupTag::MaxCompact => {
            for r in additive_level_generators(field, level) {
                out.push(elem12(field, &r));
            }
            for r in additive_level_generators(field, level) {
                out.push(elem21(field, &r));
            }
        }
        SubgroupTag::Iwahori => {
            for r in additive_level_generators(field, level) {
                out.push(elem12(field, &r));
            }
            // the lower-left entries range over pi O / pi^level
            for r in additive_level_generators(field, level - 1) {
                out.push(elem21(field, &field.mul(&r, &field.pi())));
            }
        }
        _ => return Err(GroupError::Unsupported),
    }
    for u in unit_level_generators(field, level) {
        out.push(diag(field, &u, &field.one()));
        out.push(diag(field, &field.one(), &u));
    }
    Ok(out)
}

/// diag(pi, pi^{-1}): translation by two steps along the standard apartment.
pub fn apartment_translation(field: &Field) -> GroupElement {
    diag(field, &field.pi(), &field.pi_pow(-1))
}

/// [[0, pi^{-1}], [pi, 0]]: a determinant-valuation-zero involution fixing
/// the odd standard vertex and swapping its even neighbors v_0 and v_2.
pub fn edge_flip(field: &Field) -> GroupElement {
    GroupElement::new(
        field,
        Mat2::new([
            [field.zero(), field.pi_pow(-1)],
            [field.pi(), field.zero()],
        ]),
    )
    .unwrap()
}

/// Generator set for orbit closures of the valuation-zero-determinant group
/// on a finite window: compact generators at the given level, their conjugates
/// by s (single-step moves stabilizing the odd base vertex; conjugation keeps
/// the determinant, so these stay in the group), the apartment translation,
/// and the edge flip.
pub fn detzero_window_generators(field: &Field, level: usize) -> Vec<GroupElement> {
    let mut out = generators(field, SubgroupTag::MaxCompact, level).unwrap();
    let s = GroupElement::s(field);
    let s_inv = Mat2::new([
        [field.zero(), field.pi_pow(-1)],
        [field.one(), field.zero()],
    ]);
    let conjugates: Vec<GroupElement> = out
        .iter()
        .map(|g| {
            let m = Mat2::mul(field, &Mat2::mul(field, &s.m, &g.m), &s_inv);
            GroupElement::new(field, m).unwrap()
        })
        .collect();
    out.extend(conjugates);
    out.push(apartment_translation(field));
    out.push(edge_flip(field));
    out
}

fn random_digits(field: &Field, rng: &mut ChaCha8Rng, len: usize, unit: bool) -> Scalar {
    loop {
        let digits: Vec<u16> = (0..len).map(|_| rng.gen_range(0..field.q() as u16)).collect();
        if !unit || digits[0] != 0 {
            return field.lift(&QuotientElement { digits });
        }
    }
}

/// Seeded sampling of a subgroup element; the draw is constructive per tag,
/// so it terminates quickly and the result always satisfies `member`.
pub fn random_element_with(field: &Field, tag: SubgroupTag, rng: &mut ChaCha8Rng) -> GroupElement {
    let g = match tag {
        SubgroupTag::MaxCompact | SubgroupTag::Congruence(0) => loop {
            let m = Mat2::new([
                [random_digits(field, rng, 3, false), random_digits(field, rng, 3, false)],
                [random_digits(field, rng, 3, false), random_digits(field, rng, 3, false)],
            ]);
            if field.is_unit(&m.det(field)) {
                break GroupElement::new(field, m).unwrap();
            }
        },
        SubgroupTag::Iwahori => {
            let m = Mat2::new([
                [random_digits(field, rng, 3, true), random_digits(field, rng, 3, false)],
                [
                    field.mul(&field.pi(), &random_digits(field, rng, 2, false)),
                    random_digits(field, rng, 3, true),
                ],
            ]);
            GroupElement::new(field, m).unwrap()
        }
        SubgroupTag::UpperBorel => {
            let m = Mat2::new([
                [random_digits(field, rng, 3, true), random_digits(field, rng, 3, false)],
                [field.zero(), random_digits(field, rng, 3, true)],
            ]);
            GroupElement::new(field, m).unwrap()
        }
        SubgroupTag::Congruence(n) => {
            let sc = field.pi_pow(n as i64);
            let mut e = [
                [field.one(), field.zero()],
                [field.zero(), field.one()],
            ];
            for row in e.iter_mut() {
                for x in row.iter_mut() {
                    *x = field.add(x, &field.mul(&sc, &random_digits(field, rng, 2, false)));
                }
            }
            GroupElement::new(field, Mat2::new(e)).unwrap()
        }
        SubgroupTag::ConjMaxCompact => {
            let k = random_element_with(field, SubgroupTag::MaxCompact, rng);
            let s = GroupElement::s(field);
            GroupElement::mul(field, &GroupElement::mul(field, &s, &k), &s.inverse(field))
        }
        SubgroupTag::G0Det => {
            let k1 = random_element_with(field, SubgroupTag::MaxCompact, rng);
            let k2 = random_element_with(field, SubgroupTag::MaxCompact, rng);
            let j = rng.gen_range(0i64..3);
            let t = diag(field, &field.pi_pow(j), &field.pi_pow(-j));
            GroupElement::mul(field, &GroupElement::mul(field, &k1, &t), &k2)
        }
        SubgroupTag::FullG => {
            let g0 = random_element_with(field, SubgroupTag::G0Det, rng);
            let e = rng.gen_range(-2i64..3);
            GroupElement::mul(field, &g0, &diag(field, &field.one(), &field.pi_pow(e)))
        }
    };
    debug_assert!(member(field, &g.m, tag));
    g
}

pub fn random_element(field: &Field, tag: SubgroupTag, seed: u64) -> GroupElement {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_element_with(field, tag, &mut rng)
}

/// The finite ring O/pi^level with elements packed as base-q digit codes.
#[derive(Clone, Debug)]
pub struct QuotRing {
    pub q: u64,
    pub level: usize,
    kind: RingKind,
}

#[derive(Clone, Debug)]
enum RingKind {
    /// Integers modulo p^level; the digit code is the integer itself.
    PadicInt { modulus: u64 },
    /// F_q[t]/t^level with table-backed residue arithmetic.
    PolyFq { fq: Fq },
}

impl QuotRing {
    pub fn new(field: &Field, level: usize) -> QuotRing {
        assert!(level >= 1);
        let q = field.q();
        let kind = match field.cfg.backend {
            Backend::RationalP => RingKind::PadicInt { modulus: q.pow(level as u32) },
            Backend::LaurentQ => RingKind::PolyFq { fq: field.fq.clone() },
        };
        QuotRing { q, level, kind }
    }

    pub fn size(&self) -> u64 {
        self.q.pow(self.level as u32)
    }

    pub fn unit_count(&self) -> u64 {
        self.size() - self.size() / self.q
    }

    pub fn add(&self, a: u64, b: u64) -> u64 {
        match &self.kind {
            RingKind::PadicInt { modulus } => (a + b) % modulus,
            RingKind::PolyFq { fq } => {
                let mut out = 0u64;
                let mut pw = 1u64;
                let (mut x, mut y) = (a, b);
                for _ in 0..self.level {
                    let s = fq.add((x % self.q) as u16, (y % self.q) as u16) as u64;
                    out += s * pw;
                    pw *= self.q;
                    x /= self.q;
                    y /= self.q;
                }
                out
            }
        }
    }

    pub fn neg(&self, a: u64) -> u64 {
        match &self.kind {
            RingKind::PadicInt { modulus } => (modulus - a % modulus) % modulus,
            RingKind::PolyFq { fq } => {
                let mut out = 0u64;
                let mut pw = 1u64;
                let mut x = a;
                for _ in 0..self.level {
                    out += fq.neg((x % self.q) as u16) as u64 * pw;
                    pw *= self.q;
                    x /= self.q;
                }
                out
            }
        }
    }

    pub fn sub(&self, a: u64, b: u64) -> u64 {
        self.add(a, self.neg(b))
    }

    pub fn mul(&self, a: u64, b: u64) -> u64 {
        match &self.kind {
            RingKind::PadicInt { modulus } => {
                ((a as u128 * b as u128) % *modulus as u128) as u64
            }
            RingKind::PolyFq { fq } => {
                let da = self.digits(a);
                let db = self.digits(b);
                let mut out = vec![0u16; self.level];
                for (i, &x) in da.iter().enumerate() {
                    if x == 0 {
                        continue;
                    }
                    for (j, &y) in db.iter().enumerate() {
                        if i + j >= self.level {
                            break;
                        }
                        out[i + j] = fq.add(out[i + j], fq.mul(x, y));
                    }
                }
                self.from_digits(&out)
            }
        }
    }

    pub fn is_unit(&self, a: u64) -> bool {
        a % self.q != 0
    }

    pub fn inv(&self, a: u64) -> u64 {
        assert!(self.is_unit(a));
        // the unit group has order q^{level-1}(q-1)
        let e = self.unit_count() - 1;
        let mut acc = self.one();
        let mut base = a;
        let mut k = e;
        while k > 0 {
            if k & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            k >>= 1;
        }
        acc
    }

    pub fn zero(&self) -> u64 {
        0
    }

    pub fn one(&self) -> u64 {
        1
    }

    pub fn digits(&self, a: u64) -> Vec<u16> {
        let mut x = a;
        (0..self.level)
            .map(|_| {
                let d = (x % self.q) as u16;
                x /= self.q;
                d
            })
            .collect()
    }

    pub fn from_digits(&self, d: &[u16]) -> u64 {
        let mut out = 0u64;
        for i in (0..self.level).rev() {
            out = out * self.q + d.get(i).copied().unwrap_or(0) as u64;
        }
        out
    }
}

/// A matrix over O/pi^level: row-major digit codes [a, b, c, d].
pub type QuotMat = [u64; 4];

pub fn qmat_identity(r: &QuotRing) -> QuotMat {
    [r.one(), r.zero(), r.zero(), r.one()]
}

pub fn qmat_mul(r: &QuotRing, x: &QuotMat, y: &QuotMat) -> QuotMat {
    [
        r.add(r.mul(x[0], y[0]), r.mul(x[1], y[2])),
        r.add(r.mul(x[0], y[1]), r.mul(x[1], y[3])),
        r.add(r.mul(x[2], y[0]), r.mul(x[3], y[2])),
        r.add(r.mul(x[2], y[1]), r.mul(x[3], y[3])),
    ]
}

pub fn qmat_det(r: &QuotRing, x: &QuotMat) -> u64 {
    r.sub(r.mul(x[0], x[3]), r.mul(x[1], x[2]))
}

pub fn qmat_inv(r: &QuotRing, x: &QuotMat) -> QuotMat {
    let det = qmat_det(r, x);
    let di = r.inv(det);
    [
        r.mul(di, x[3]),
        r.mul(di, r.neg(x[1])),
        r.mul(di, r.neg(x[2])),
        r.mul(di, x[0]),
    ]
}

/// Reduce an integral matrix modulo pi^level.
pub fn reduce_mat(field: &Field, m: &Mat2, level: usize) -> Result<QuotMat, GroupError> {
    let ring = QuotRing::new(field, level);
    let mut out = [0u64; 4];
    for (k, (i, j)) in [(0, 0), (0, 1), (1, 0), (1, 1)].iter().enumerate() {
        let digits = field
            .reduce(&m.e[*i][*j], level)
            .map_err(|_| GroupError::NotIntegral)?;
        out[k] = ring.from_digits(&digits.digits);
    }
    Ok(out)
}

/// Exact lift with digit entries.
pub fn lift_mat(field: &Field, x: &QuotMat, level: usize) -> Mat2 {
    let ring = QuotRing::new(field, level);
    let lift = |code: u64| field.lift(&QuotientElement { digits: ring.digits(code) });
    Mat2::new([[lift(x[0]), lift(x[1])], [lift(x[2]), lift(x[3])]])
}

/// Order of the level-N quotient of the subgroup.
pub fn quotient_order(q: u64, tag: SubgroupTag, level: usize) -> Result<u64, GroupError> {
    assert!(level >= 1);
    let full = q.pow(4 * (level as u32 - 1)) * (q * q - 1) * (q * q - q);
    match tag {
        SubgroupTag::MaxCompact => Ok(full),
        SubgroupTag::Iwahori => Ok(full / (q + 1)),
        _ => Err(GroupError::Unsupported),
    }
}

const QUOTIENT_BOUND: u64 = 1_000_000;

/// Image of the subgroup in GL_2(O/pi^level), enumerated by direct scan in
/// lexicographic entry order.
pub struct FiniteQuotient {
    pub tag: SubgroupTag,
    pub level: usize,
    pub ring: QuotRing,
    pub elements: Vec<QuotMat>,
    pub index: HashMap<QuotMat, u32>,
}

pub fn enumerate_quotient(
    field: &Field,
    tag: SubgroupTag,
    level: usize,
) -> Result<FiniteQuotient, GroupError> {
    let q = field.q();
    let expected = quotient_order(q, tag, level)?;
    if expected > QUOTIENT_BOUND {
        return Err(GroupError::QuotientTooLarge { size: expected });
    }
    let ring = QuotRing::new(field, level);
    let m = ring.size();
    let c_step = if tag == SubgroupTag::Iwahori { q } else { 1 };
    let mut elements = Vec::with_capacity(expected as usize);
    let mut index = HashMap::with_capacity(expected as usize);
    for a in 0..m {
        for b in 0..m {
            for c in (0..m).step_by(c_step as usize) {
                for d in 0..m {
                    let x: QuotMat = [a, b, c, d];
                    if ring.is_unit(qmat_det(&ring, &x)) {
                        index.insert(x, elements.len() as u32);
                        elements.push(x);
                    }
                }
            }
        }
    }
    assert_eq!(elements.len() as u64, expected, "quotient order formula");
    Ok(FiniteQuotient { tag, level, ring, elements, index })
}

impl FiniteQuotient {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn idx(&self, x: &QuotMat) -> Option<u32> {
        self.index.get(x).copied()
    }

    pub fn identity_idx(&self) -> u32 {
        self.idx(&qmat_identity(&self.ring)).unwrap()
    }

    pub fn mul_idx(&self, i: u32, j: u32) -> u32 {
        let x = qmat_mul(&self.ring, &self.elements[i as usize], &self.elements[j as usize]);
        self.idx(&x).expect("quotient is closed under multiplication")
    }

    pub fn inv_idx(&self, i: u32) -> u32 {
        let x = qmat_inv(&self.ring, &self.elements[i as usize]);
        self.idx(&x).expect("quotient is closed under inversion")
    }
}

/// Multiplicative closure of a generating set inside GL_2(O/pi^level),
/// breadth-first in discovery order. `cap` aborts runaway closures.
pub fn closure(ring: &QuotRing, gens: &[QuotMat], cap: usize) -> Result<Vec<QuotMat>, GroupError> {
    let mut seen: HashMap<QuotMat, ()> = HashMap::new();
    let mut order: Vec<QuotMat> = Vec::new();
    let id = qmat_identity(ring);
    seen.insert(id, ());
    order.push(id);
    let mut frontier = vec![id];
    while let Some(x) = frontier.pop() {
        for g in gens {
            for y in [qmat_mul(ring, &x, g), qmat_mul(ring, g, &x)] {
                if !seen.contains_key(&y) {
                    if order.len() >= cap {
                        return Err(GroupError::QuotientTooLarge { size: cap as u64 });
                    }
                    seen.insert(y, ());
                    order.push(y);
                    frontier.push(y);
                }
            }
        }
    }
    Ok(order)
}

/// Section matrices for the cosets of (1 + pi^{n+1} M_2(O)) B_0 in GL_2(O),
/// indexed by P^1(O/pi^{n+1}): first [[1,0],[c,1]] for every c ascending,
/// then [[c,1],[1,0]] for c in pi O ascending. There are q^n (q+1) of them.
pub fn coset_reps_upper(field: &Field, n: usize) -> Vec<GroupElement> {
    let level = n + 1;
    let ring = QuotRing::new(field, level);
    let lift = |code: u64| field.lift(&QuotientElement { digits: ring.digits(code) });
    let mut out = Vec::new();
    for code in 0..ring.size() {
        let c = lift(code);
        out.push(
            GroupElement::new(
                field,
                Mat2::new([
                    [field.one(), field.zero()],
                    [c, field.one()],
                ]),
            )
            .unwrap(),
        );
    }
    for code in (0..ring.size()).step_by(field.q() as usize) {
        let c = lift(code);
        out.push(
            GroupElement::new(
                field,
                Mat2::new([
                    [c, field.one()],
                    [field.one(), field.zero()],
                ]),
            )
            .unwrap(),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::localfield::{Backend, Field};
    use std::collections::HashSet;

    fn rational(p: u64) -> Field {
        Field::from_parts(Backend::RationalP, p, 1, None).unwrap()
    }

    fn laurent(p: u64, f: usize) -> Field {
        Field::from_parts(Backend::LaurentQ, p, f, None).unwrap()
    }

    #[test]
    fn s_has_determinant_of_valuation_one() {
        let f = rational(2);
        let s = GroupElement::s(&f);
        assert_eq!(s.det_val, 1);
        assert!(!member(&f, &s.m, SubgroupTag::G0Det));
        assert!(member(&f, &s.m, SubgroupTag::FullG));
        assert!(!member(&f, &s.m, SubgroupTag::ConjMaxCompact));
    }

    #[test]
    fn membership_respects_subgroup_inclusions() {
        use SubgroupTag::*;
        for field in [rational(2), rational(3), laurent(2, 2)] {
            let mut rng = ChaCha8Rng::seed_from_u64(808);
            let inclusions: [(SubgroupTag, SubgroupTag); 8] = [
                (Iwahori, MaxCompact),
                (MaxCompact, G0Det),
                (G0Det, FullG),
                (UpperBorel, Iwahori),
                (Congruence(2), Congruence(1)),
                (Congruence(1), MaxCompact),
                (ConjMaxCompact, G0Det),
                (Congruence(1), Iwahori),
            ];
            for _ in 0..40 {
                for (small, big) in inclusions {
                    let g = random_element_with(&field, small, &mut rng);
                    assert!(member(&field, &g.m, small), "{:?} sample not a member", small);
                    assert!(member(&field, &g.m, big), "{:?} not inside {:?}", small, big);
                }
            }
        }
    }

    #[test]
    fn s_conjugation_swaps_the_two_maximal_compacts() {
        let field = rational(3);
        let s = GroupElement::s(&field);
        let si = s.inverse(&field);
        let mut rng = ChaCha8Rng::seed_from_u64(909);
        for _ in 0..50 {
            let k = random_element_with(&field, SubgroupTag::MaxCompact, &mut rng);
            let conj = GroupElement::mul(&field, &GroupElement::mul(&field, &s, &k), &si);
            assert!(member(&field, &conj.m, SubgroupTag::ConjMaxCompact));
            let g = random_element_with(&field, SubgroupTag::ConjMaxCompact, &mut rng);
            let back = GroupElement::mul(&field, &GroupElement::mul(&field, &si, &g), &s);
            assert!(member(&field, &back.m, SubgroupTag::MaxCompact));
            // s normalizes the Iwahori subgroup
            let i = random_element_with(&field, SubgroupTag::Iwahori, &mut rng);
            let ic = GroupElement::mul(&field, &GroupElement::mul(&field, &s, &i), &si);
            assert!(member(&field, &ic.m, SubgroupTag::Iwahori));
        }
    }

    #[test]
    fn random_elements_are_reproducible() {
        let field = rational(2);
        let a = random_element(&field, SubgroupTag::G0Det, 99);
        let b = random_element(&field, SubgroupTag::G0Det, 99);
        assert_eq!(a, b);
    }

    #[test]
    fn quotient_orders_match_closed_form() {
        let cases: [(Field, SubgroupTag, usize, u64); 7] = [
            (rational(2), SubgroupTag::MaxCompact, 1, 6),
            (rational(2), SubgroupTag::MaxCompact, 2, 96),
            (rational(3), SubgroupTag::MaxCompact, 1, 48),
            (rational(5), SubgroupTag::MaxCompact, 1, 480),
            (rational(2), SubgroupTag::Iwahori, 2, 32),
            (laurent(2, 2), SubgroupTag::MaxCompact, 1, 180),
            (laurent(2, 1), SubgroupTag::MaxCompact, 2, 96),
        ];
        for (field, tag, level, order) in cases {
            let quo = enumerate_quotient(&field, tag, level).unwrap();
            assert_eq!(quo.len() as u64, order);
            assert_eq!(quotient_order(field.q(), tag, level).unwrap(), order);
        }
        // the Iwahori image has index q + 1
        for field in [rational(2), rational(3)] {
            let q = field.q();
            let full = enumerate_quotient(&field, SubgroupTag::MaxCompact, 2).unwrap();
            let iw = enumerate_quotient(&field, SubgroupTag::Iwahori, 2).unwrap();
            assert_eq!(full.len() as u64, iw.len() as u64 * (q + 1));
        }
    }

    #[test]
    fn quotient_bound_is_enforced() {
        let field = rational(5);
        match enumerate_quotient(&field, SubgroupTag::MaxCompact, 4) {
            Err(GroupError::QuotientTooLarge { size }) => assert!(size > QUOTIENT_BOUND),
            other => panic!("expected a size guard, got {:?}", other.map(|q| q.len())),
        }
    }

    #[test]
    fn quotient_indices_form_a_group() {
        let field = rational(2);
        let quo = enumerate_quotient(&field, SubgroupTag::MaxCompact, 2).unwrap();
        let e = quo.identity_idx();
        let mut rng = ChaCha8Rng::seed_from_u64(1212);
        for _ in 0..200 {
            let i = rng.gen_range(0..quo.len() as u32);
            let j = rng.gen_range(0..quo.len() as u32);
            assert_eq!(quo.mul_idx(i, quo.inv_idx(i)), e);
            let _ = quo.mul_idx(i, j); // panics if the product escapes
        }
        assert_eq!(quo.mul_idx(e, 5), 5);
    }

    #[test]
    fn generator_closures_fill_their_quotients() {
        let cases: [(Field, SubgroupTag, usize); 6] = [
            (rational(2), SubgroupTag::MaxCompact, 1),
            (rational(2), SubgroupTag::MaxCompact, 2),
            (rational(3), SubgroupTag::MaxCompact, 1),
            (rational(2), SubgroupTag::Iwahori, 2),
            (laurent(2, 1), SubgroupTag::MaxCompact, 2),
            (laurent(2, 2), SubgroupTag::MaxCompact, 1),
        ];
        for (field, tag, level) in cases {
            let quo = enumerate_quotient(&field, tag, level).unwrap();
            let gens: Vec<QuotMat> = generators(&field, tag, level)
                .unwrap()
                .iter()
                .map(|g| reduce_mat(&field, &g.m, level).unwrap())
                .collect();
            for g in &generators(&field, tag, level).unwrap() {
                assert!(member(&field, &g.m, tag));
            }
            let cl = closure(&quo.ring, &gens, 2_000_000).unwrap();
            let got: HashSet<QuotMat> = cl.into_iter().collect();
            let want: HashSet<QuotMat> = quo.elements.iter().copied().collect();
            assert_eq!(got, want, "{:?} at level {} not generated", tag, level);
        }
    }

    #[test]
    fn unit_generators_span_the_unit_group() {
        // (Z/9)^x is cyclic of order 6; (Z/8)^x is {1,3,5,7}
        let f3 = rational(3);
        let ring9 = QuotRing::new(&f3, 2);
        let gens9: Vec<u64> = unit_level_generators(&f3, 2)
            .iter()
            .map(|u| ring9.from_digits(&f3.reduce(u, 2).unwrap().digits))
            .collect();
        assert_eq!(unit_closure(&ring9, &gens9).len() as u64, ring9.unit_count());

        let f2 = rational(2);
        let ring8 = QuotRing::new(&f2, 3);
        let gens8: Vec<u64> = unit_level_generators(&f2, 3)
            .iter()
            .map(|u| ring8.from_digits(&f2.reduce(u, 3).unwrap().digits))
            .collect();
        assert_eq!(unit_closure(&ring8, &gens8).len() as u64, ring8.unit_count());

        // units of F_4[t]/t^2 have order q(q-1) = 12
        let f4 = laurent(2, 2);
        let ring = QuotRing::new(&f4, 2);
        let gens: Vec<u64> = unit_level_generators(&f4, 2)
            .iter()
            .map(|u| ring.from_digits(&f4.reduce(u, 2).unwrap().digits))
            .collect();
        assert_eq!(unit_closure(&ring, &gens).len() as u64, ring.unit_count());
    }

    fn unit_closure(ring: &QuotRing, gens: &[u64]) -> HashSet<u64> {
        let mut seen = HashSet::from([ring.one()]);
        let mut frontier = vec![ring.one()];
        while let Some(x) = frontier.pop() {
            for &g in gens {
                let y = ring.mul(x, g);
                if seen.insert(y) {
                    frontier.push(y);
                }
            }
        }
        seen
    }

    #[test]
    fn reduce_and_lift_are_mutually_inverse() {
        for field in [rational(3), laurent(2, 2)] {
            let ring = QuotRing::new(&field, 2);
            let mut rng = ChaCha8Rng::seed_from_u64(1010);
            for _ in 0..100 {
                let x: QuotMat = [
                    rng.gen_range(0..ring.size()),
                    rng.gen_range(0..ring.size()),
                    rng.gen_range(0..ring.size()),
                    rng.gen_range(0..ring.size()),
                ];
                let lifted = lift_mat(&field, &x, 2);
                assert_eq!(reduce_mat(&field, &lifted, 2).unwrap(), x);
            }
        }
    }

    #[test]
    fn reduction_is_multiplicative() {
        let field = rational(3);
        let ring = QuotRing::new(&field, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1313);
        for _ in 0..100 {
            let g = random_element_with(&field, SubgroupTag::MaxCompact, &mut rng);
            let h = random_element_with(&field, SubgroupTag::MaxCompact, &mut rng);
            let gh = GroupElement::mul(&field, &g, &h);
            let rg = reduce_mat(&field, &g.m, 2).unwrap();
            let rh = reduce_mat(&field, &h.m, 2).unwrap();
            assert_eq!(reduce_mat(&field, &gh.m, 2).unwrap(), qmat_mul(&ring, &rg, &rh));
        }
    }

    #[test]
    fn coset_sections_are_complete_and_disjoint() {
        for (field, n) in [(rational(2), 0), (rational(2), 1), (rational(2), 2), (rational(3), 1)] {
            let q = field.q();
            let reps = coset_reps_upper(&field, n);
            assert_eq!(reps.len() as u64, q.pow(n as u32) * (q + 1));
            for r in &reps {
                assert!(member(&field, &r.m, SubgroupTag::MaxCompact));
            }
            for (i, r) in reps.iter().enumerate() {
                for (j, t) in reps.iter().enumerate() {
                    let x = Mat2::mul(&field, &r.inverse(&field).m, &t.m);
                    assert_eq!(member_gn_b0(&field, &x, n + 1), i == j);
                }
            }
            // every compact element lands in exactly one section coset
            let mut rng = ChaCha8Rng::seed_from_u64(1111);
            for _ in 0..60 {
                let g = random_element_with(&field, SubgroupTag::MaxCompact, &mut rng);
                let hits = reps
                    .iter()
                    .filter(|r| member_gn_b0(&field, &Mat2::mul(&field, &r.inverse(&field).m, &g.m), n + 1))
                    .count();
                assert_eq!(hits, 1);
            }
        }
    }

    #[test]
    fn congruence_subgroup_has_expected_index() {
        // |GL_2(O/pi^2)| for q = 3 is 3^4 * 48
        let field = rational(3);
        let quo = enumerate_quotient(&field, SubgroupTag::MaxCompact, 2).unwrap();
        assert_eq!(quo.len(), 81 * 48);
    }
}
