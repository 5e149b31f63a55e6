//! Exact scalar arithmetic for the base local field.
//!
//! Two interchangeable backends sit behind [`Field`]:
//! - `RationalP`: the rationals viewed inside the p-adics; the uniformizer is
//!   p itself and the residue field is F_p (so `f` must be 1).
//! - `LaurentQ`: rational functions over F_q viewed inside Laurent series in
//!   t; the uniformizer is t and the residue field is F_q with q = p^f.
//!
//! Every scalar is kept in a canonical exact form, so equality and hashing
//! are structural and nothing is ever rounded. Valuations, unit parts and
//! digit expansions modulo pi^N are exact ring computations.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{Integer, One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum FieldError {
    #[error("p = {0} is not prime")]
    NotPrime(u64),
    #[error("backend RationalP requires f = 1, got f = {0}")]
    RationalNeedsPrime(usize),
    #[error("f must be at least 1")]
    ZeroDegree,
    #[error("modulus must be monic of degree f with coefficients below p")]
    MalformedModulus,
    #[error("modulus is reducible over F_p")]
    ReducibleModulus,
    #[error("division by zero scalar")]
    DivisionByZero,
    #[error("digit expansion of a scalar with negative valuation")]
    NegativeValuation,
}

/// Which concrete field realizes the local field.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize, Hash)]
pub enum Backend {
    #[serde(rename = "rational")]
    RationalP,
    #[serde(rename = "laurent")]
    LaurentQ,
}

fn is_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= p {
        if p % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// Residue field element, i.e. an element of O/pi, as a coefficient vector
/// over F_p in the power basis of the chosen modulus.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct ResidueElement {
    pub coeffs: Vec<u16>,
}

/// Multiplication and inversion tables for F_q, q = p^f. Element codes are
/// integers below q: the code of a coefficient vector (c_0, ..., c_{f-1}) is
/// sum c_i p^i.
#[derive(Clone, Debug)]
pub struct Fq {
    pub p: u64,
    pub f: usize,
    pub q: u64,
    add: Vec<u16>,
    mul: Vec<u16>,
    neg: Vec<u16>,
    inv: Vec<u16>,
}

impl Fq {
    fn build(p: u64, f: usize, modulus: &[u16]) -> Fq {
        let q = p.pow(f as u32);
        assert!(q <= u16::MAX as u64, "residue field too large for code table");
        let qs = q as usize;
        let decode = |code: u16| -> Vec<u64> {
            let mut c = code as u64;
            (0..f)
                .map(|_| {
                    let d = c % p;
                    c /= p;
                    d
                })
                .collect()
        };
        let encode = |coeffs: &[u64]| -> u16 {
            let mut code = 0u64;
            for i in (0..f).rev() {
                code = code * p + coeffs[i] % p;
            }
            code as u16
        };
        let mut add = vec![0u16; qs * qs];
        let mut neg = vec![0u16; qs];
        for a in 0..qs {
            let ca = decode(a as u16);
            let cn: Vec<u64> = ca.iter().map(|&x| (p - x) % p).collect();
            neg[a] = encode(&cn);
            for b in 0..qs {
                let cb = decode(b as u16);
                let cs: Vec<u64> = (0..f).map(|i| (ca[i] + cb[i]) % p).collect();
                add[a * qs + b] = encode(&cs);
            }
        }
        // schoolbook product reduced by the monic modulus
        let reduce_poly = |prod: &mut Vec<u64>| {
            while prod.len() > f {
                let top = prod.len() - 1;
                let lead = prod[top];
                if lead != 0 {
                    let shift = top - f;
                    for i in 0..f {
                        let sub = (lead * (modulus[i] as u64)) % p;
                        prod[shift + i] = (prod[shift + i] + p * p - sub) % p;
                    }
                }
                prod.pop();
            }
        };
        let mut mul = vec![0u16; qs * qs];
        for a in 0..qs {
            let ca = decode(a as u16);
            for b in 0..qs {
                let cb = decode(b as u16);
                let mut prod = vec![0u64; 2 * f - 1];
                for i in 0..f {
                    for j in 0..f {
                        prod[i + j] = (prod[i + j] + ca[i] * cb[j]) % p;
                    }
                }
                reduce_poly(&mut prod);
                prod.resize(f, 0);
                mul[a * qs + b] = encode(&prod);
            }
        }
        let mut inv = vec![0u16; qs];
        for a in 1..qs {
            for b in 1..qs {
                if mul[a * qs + b] == 1 {
                    inv[a] = b as u16;
                    break;
                }
            }
        }
        Fq { p, f, q, add, mul, neg, inv }
    }

    pub fn add(&self, a: u16, b: u16) -> u16 {
        self.add[a as usize * self.q as usize + b as usize]
    }

    pub fn sub(&self, a: u16, b: u16) -> u16 {
        self.add(a, self.neg(b))
    }

    pub fn mul(&self, a: u16, b: u16) -> u16 {
        self.mul[a as usize * self.q as usize + b as usize]
    }

    pub fn neg(&self, a: u16) -> u16 {
        self.neg[a as usize]
    }

    pub fn inv(&self, a: u16) -> u16 {
        assert!(a != 0, "inverse of zero residue");
        self.inv[a as usize]
    }

    pub fn coeffs_of(&self, code: u16) -> Vec<u16> {
        let mut c = code as u64;
        (0..self.f)
            .map(|_| {
                let d = c % self.p;
                c /= self.p;
                d as u16
            })
            .collect()
    }

    pub fn code_of(&self, coeffs: &[u16]) -> u16 {
        let mut code = 0u64;
        for i in (0..self.f).rev() {
            code = code * self.p + (coeffs.get(i).copied().unwrap_or(0) as u64) % self.p;
        }
        code as u16
    }

    pub fn residue(&self, code: u16) -> ResidueElement {
        ResidueElement { coeffs: self.coeffs_of(code) }
    }

    /// Smallest code generating the cyclic group F_q^x.
    pub fn multiplicative_generator(&self) -> u16 {
        'cand: for g in 1..self.q as u16 {
            let mut x = g;
            for _ in 1..self.q - 1 {
                if x == 1 {
                    continue 'cand;
                }
                x = self.mul(x, g);
            }
            if x == 1 {
                return g;
            }
        }
        unreachable!("F_q^x is cyclic");
    }
}

/// Polynomial over F_q in the ring variable, coefficients low to high as
/// element codes, no trailing zeros.
#[derive(Clone, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct FPoly(pub Vec<u16>);

impl FPoly {
    pub fn zero() -> FPoly {
        FPoly(vec![])
    }

    pub fn one() -> FPoly {
        FPoly(vec![1])
    }

    pub fn constant(c: u16) -> FPoly {
        if c == 0 {
            FPoly::zero()
        } else {
            FPoly(vec![c])
        }
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    pub fn degree(&self) -> Option<usize> {
        if self.is_zero() {
            None
        } else {
            Some(self.0.len() - 1)
        }
    }

    pub fn c0(&self) -> u16 {
        self.0.first().copied().unwrap_or(0)
    }

    fn trim(mut v: Vec<u16>) -> FPoly {
        while v.last() == Some(&0) {
            v.pop();
        }
        FPoly(v)
    }

    /// Number of leading zero coefficients, i.e. the t-adic valuation.
    pub fn t_order(&self) -> Option<usize> {
        self.0.iter().position(|&c| c != 0)
    }

    pub fn shift_down(&self, k: usize) -> FPoly {
        FPoly(self.0[k..].to_vec())
    }
}

fn padd(fq: &Fq, a: &FPoly, b: &FPoly) -> FPoly {
    let n = a.0.len().max(b.0.len());
    let v = (0..n)
        .map(|i| fq.add(a.0.get(i).copied().unwrap_or(0), b.0.get(i).copied().unwrap_or(0)))
        .collect();
    FPoly::trim(v)
}

fn pneg(fq: &Fq, a: &FPoly) -> FPoly {
    FPoly(a.0.iter().map(|&c| fq.neg(c)).collect())
}

fn pmul(fq: &Fq, a: &FPoly, b: &FPoly) -> FPoly {
    if a.is_zero() || b.is_zero() {
        return FPoly::zero();
    }
    let mut v = vec![0u16; a.0.len() + b.0.len() - 1];
    for (i, &x) in a.0.iter().enumerate() {
        if x == 0 {
            continue;
        }
        for (j, &y) in b.0.iter().enumerate() {
            v[i + j] = fq.add(v[i + j], fq.mul(x, y));
        }
    }
    FPoly::trim(v)
}

fn pscale(fq: &Fq, a: &FPoly, c: u16) -> FPoly {
    FPoly::trim(a.0.iter().map(|&x| fq.mul(x, c)).collect())
}

fn pdivrem(fq: &Fq, a: &FPoly, b: &FPoly) -> (FPoly, FPoly) {
    assert!(!b.is_zero(), "polynomial division by zero");
    let db = b.degree().unwrap();
    let lead_inv = fq.inv(*b.0.last().unwrap());
    let mut rem = a.0.clone();
    let mut quo = vec![0u16; a.0.len().saturating_sub(db)];
    while rem.len() > db && !rem.is_empty() {
        let top = rem.len() - 1;
        let c = fq.mul(rem[top], lead_inv);
        if c != 0 {
            let shift = top - db;
            quo[shift] = c;
            for i in 0..=db {
                rem[shift + i] = fq.sub(rem[shift + i], fq.mul(c, b.0[i]));
            }
        }
        rem.pop();
    }
    (FPoly::trim(quo), FPoly::trim(rem))
}

fn pgcd(fq: &Fq, a: &FPoly, b: &FPoly) -> FPoly {
    let mut x = a.clone();
    let mut y = b.clone();
    while !y.is_zero() {
        let (_, r) = pdivrem(fq, &x, &y);
        x = y;
        y = r;
    }
    if x.is_zero() {
        x
    } else {
        // monic normalization keeps gcd canonical
        let c = fq.inv(*x.0.last().unwrap());
        pscale(fq, &x, c)
    }
}

/// Function-field scalar t^k * num/den in canonical form: num and den coprime
/// with nonzero constant terms, den normalized to den(0) = 1. Zero is the
/// zero numerator with k = 0, den = 1.
#[derive(Clone, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct Fun {
    pub k: i64,
    pub num: FPoly,
    pub den: FPoly,
}

/// One exact scalar of the base field.
#[derive(Clone, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub enum Scalar {
    Rat(BigRational),
    Fun(Fun),
}

/// Digit expansion of an integral scalar modulo pi^N: digit i is the residue
/// field code of the coefficient of pi^i.
#[derive(Clone, PartialEq, Eq, Hash, Debug, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QuotientElement {
    pub digits: Vec<u16>,
}

impl QuotientElement {
    pub fn level(&self) -> usize {
        self.digits.len()
    }

    pub fn is_zero(&self) -> bool {
        self.digits.iter().all(|&d| d == 0)
    }

    /// Index of the first nonzero digit, if any.
    pub fn order(&self) -> Option<usize> {
        self.digits.iter().position(|&d| d != 0)
    }
}

/// Backend plus residue data; validated on construction.
#[derive(Clone, Debug, Serialize)]
pub struct FieldConfig {
    pub backend: Backend,
    pub p: u64,
    pub f: usize,
    pub modulus: Vec<u16>,
    #[serde(skip)]
    pub q: u64,
}

#[derive(Deserialize)]
struct FieldConfigWire {
    backend: Backend,
    p: u64,
    f: usize,
    modulus: Vec<u16>,
}

impl<'de> Deserialize<'de> for FieldConfig {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let w = FieldConfigWire::deserialize(d)?;
        FieldConfig::new(w.backend, w.p, w.f, Some(w.modulus)).map_err(serde::de::Error::custom)
    }
}

fn default_modulus(p: u64, f: usize) -> Option<Vec<u16>> {
    match (p, f) {
        (_, 1) => Some(vec![0, 1]),
        (2, 2) => Some(vec![1, 1, 1]),    // x^2 + x + 1
        (2, 3) => Some(vec![1, 1, 0, 1]), // x^3 + x + 1
        (3, 2) => Some(vec![1, 0, 1]),    // x^2 + 1
        _ => None,
    }
}

fn poly_is_irreducible_mod_p(p: u64, poly: &[u16]) -> bool {
    // trial division by every monic polynomial of degree 1..=deg/2
    let deg = poly.len() - 1;
    let fq = Fq::build(p, 1, &[0, 1]);
    let target = FPoly::trim(poly.iter().map(|&c| c).collect());
    for d in 1..=deg / 2 {
        let count = p.pow(d as u32);
        for idx in 0..count {
            let mut coeffs = Vec::with_capacity(d + 1);
            let mut x = idx;
            for _ in 0..d {
                coeffs.push((x % p) as u16);
                x /= p;
            }
            coeffs.push(1);
            let divisor = FPoly(coeffs);
            let (_, r) = pdivrem(&fq, &target, &divisor);
            if r.is_zero() {
                return false;
            }
        }
    }
    true
}

impl FieldConfig {
    pub fn new(
        backend: Backend,
        p: u64,
        f: usize,
        modulus: Option<Vec<u16>>,
    ) -> Result<FieldConfig, FieldError> {
        if !is_prime(p) {
            return Err(FieldError::NotPrime(p));
        }
        if f == 0 {
            return Err(FieldError::ZeroDegree);
        }
        if backend == Backend::RationalP && f != 1 {
            return Err(FieldError::RationalNeedsPrime(f));
        }
        let modulus = match modulus {
            Some(m) => m,
            None => default_modulus(p, f).ok_or(FieldError::MalformedModulus)?,
        };
        if modulus.len() != f + 1
            || modulus[f] != 1
            || modulus.iter().any(|&c| (c as u64) >= p)
        {
            return Err(FieldError::MalformedModulus);
        }
        if f > 1 && !poly_is_irreducible_mod_p(p, &modulus) {
            return Err(FieldError::ReducibleModulus);
        }
        Ok(FieldConfig { backend, p, f, modulus, q: p.pow(f as u32) })
    }
}

/// The field context: configuration plus residue tables. All scalar
/// operations go through this.
#[derive(Clone, Debug)]
pub struct Field {
    pub cfg: FieldConfig,
    pub fq: Fq,
}

impl Field {
    pub fn new(cfg: FieldConfig) -> Field {
        let fq = Fq::build(cfg.p, cfg.f, &cfg.modulus);
        Field { cfg, fq }
    }

    pub fn from_parts(
        backend: Backend,
        p: u64,
        f: usize,
        modulus: Option<Vec<u16>>,
    ) -> Result<Field, FieldError> {
        Ok(Field::new(FieldConfig::new(backend, p, f, modulus)?))
    }

    pub fn q(&self) -> u64 {
        self.cfg.q
    }

    pub fn zero(&self) -> Scalar {
        match self.cfg.backend {
            Backend::RationalP => Scalar::Rat(BigRational::zero()),
            Backend::LaurentQ => Scalar::Fun(Fun { k: 0, num: FPoly::zero(), den: FPoly::one() }),
        }
    }

    pub fn one(&self) -> Scalar {
        self.from_i64(1)
    }

    pub fn pi(&self) -> Scalar {
        self.pi_pow(1)
    }

    pub fn pi_pow(&self, k: i64) -> Scalar {
        match self.cfg.backend {
            Backend::RationalP => {
                let p = BigInt::from(self.cfg.p);
                let r = if k >= 0 {
                    BigRational::from(p.pow(k as u32))
                } else {
                    BigRational::new(BigInt::one(), p.pow((-k) as u32))
                };
                Scalar::Rat(r)
            }
            Backend::LaurentQ => {
                Scalar::Fun(Fun { k, num: FPoly::one(), den: FPoly::one() })
            }
        }
    }

    pub fn from_i64(&self, n: i64) -> Scalar {
        match self.cfg.backend {
            Backend::RationalP => Scalar::Rat(BigRational::from(BigInt::from(n))),
            Backend::LaurentQ => {
                let p = self.cfg.p as i64;
                let c = n.rem_euclid(p) as u16;
                self.from_residue_code(c)
            }
        }
    }

    /// Constant scalar with the given residue field code.
    pub fn from_residue_code(&self, code: u16) -> Scalar {
        match self.cfg.backend {
            Backend::RationalP => {
                assert!((code as u64) < self.cfg.p);
                Scalar::Rat(BigRational::from(BigInt::from(code)))
            }
            Backend::LaurentQ => {
                if code == 0 {
                    self.zero()
                } else {
                    Scalar::Fun(Fun { k: 0, num: FPoly::constant(code), den: FPoly::one() })
                }
            }
        }
    }

    pub fn is_zero(&self, x: &Scalar) -> bool {
        match x {
            Scalar::Rat(r) => r.is_zero(),
            Scalar::Fun(f) => f.num.is_zero(),
        }
    }

    fn norm_fun(&self, k: i64, num: FPoly, den: FPoly) -> Scalar {
        assert!(!den.is_zero(), "zero denominator");
        if num.is_zero() {
            return self.zero();
        }
        let fq = &self.fq;
        let mut k = k;
        let mut num = num;
        let mut den = den;
        if let Some(j) = num.t_order() {
            if j > 0 {
                num = num.shift_down(j);
                k += j as i64;
            }
        }
        if let Some(j) = den.t_order() {
            if j > 0 {
                den = den.shift_down(j);
                k -= j as i64;
            }
        }
        let g = pgcd(fq, &num, &den);
        if g.degree() != Some(0) {
            num = pdivrem(fq, &num, &g).0;
            den = pdivrem(fq, &den, &g).0;
        }
        let c = fq.inv(den.c0());
        num = pscale(fq, &num, c);
        den = pscale(fq, &den, c);
        debug_assert_eq!(den.c0(), 1);
        Scalar::Fun(Fun { k, num, den })
    }

    pub fn add(&self, x: &Scalar, y: &Scalar) -> Scalar {
        match (x, y) {
            (Scalar::Rat(a), Scalar::Rat(b)) => Scalar::Rat(a + b),
            (Scalar::Fun(a), Scalar::Fun(b)) => {
                if a.num.is_zero() {
                    return y.clone();
                }
                if b.num.is_zero() {
                    return x.clone();
                }
                let fq = &self.fq;
                let k = a.k.min(b.k);
                let ta = (a.k - k) as usize;
                let tb = (b.k - k) as usize;
                let mut na = a.num.0.clone();
                let mut nb = b.num.0.clone();
                na.splice(0..0, std::iter::repeat(0).take(ta));
                nb.splice(0..0, std::iter::repeat(0).take(tb));
                let na = FPoly::trim(na);
                let nb = FPoly::trim(nb);
                let num = padd(fq, &pmul(fq, &na, &b.den), &pmul(fq, &nb, &a.den));
                let den = pmul(fq, &a.den, &b.den);
                self.norm_fun(k, num, den)
            }
            _ => panic!("mixed scalar backends"),
        }
    }

    pub fn neg(&self, x: &Scalar) -> Scalar {
        match x {
            Scalar::Rat(a) => Scalar::Rat(-a),
            Scalar::Fun(a) => {
                if a.num.is_zero() {
                    return x.clone();
                }
                Scalar::Fun(Fun { k: a.k, num: pneg(&self.fq, &a.num), den: a.den.clone() })
            }
        }
    }

    pub fn sub(&self, x: &Scalar, y: &Scalar) -> Scalar {
        self.add(x, &self.neg(y))
    }

    pub fn mul(&self, x: &Scalar, y: &Scalar) -> Scalar {
        match (x, y) {
            (Scalar::Rat(a), Scalar::Rat(b)) => Scalar::Rat(a * b),
            (Scalar::Fun(a), Scalar::Fun(b)) => {
                if a.num.is_zero() || b.num.is_zero() {
                    return self.zero();
                }
                let fq = &self.fq;
                self.norm_fun(a.k + b.k, pmul(fq, &a.num, &b.num), pmul(fq, &a.den, &b.den))
            }
            _ => panic!("mixed scalar backends"),
        }
    }

    pub fn inv(&self, x: &Scalar) -> Result<Scalar, FieldError> {
        if self.is_zero(x) {
            return Err(FieldError::DivisionByZero);
        }
        Ok(match x {
            Scalar::Rat(a) => Scalar::Rat(a.recip()),
            Scalar::Fun(a) => self.norm_fun(-a.k, a.den.clone(), a.num.clone()),
        })
    }

    pub fn div(&self, x: &Scalar, y: &Scalar) -> Result<Scalar, FieldError> {
        Ok(self.mul(x, &self.inv(y)?))
    }

    /// pi-adic valuation; None means the scalar is zero.
    pub fn valuation(&self, x: &Scalar) -> Option<i64> {
        match x {
            Scalar::Rat(r) => {
                if r.is_zero() {
                    return None;
                }
                let p = BigInt::from(self.cfg.p);
                let count = |mut n: BigInt| -> i64 {
                    let mut v = 0;
                    n = n.abs();
                    loop {
                        let (q, r) = n.div_rem(&p);
                        if r.is_zero() {
                            v += 1;
                            n = q;
                        } else {
                            return v;
                        }
                    }
                };
                Some(count(r.numer().clone()) - count(r.denom().clone()))
            }
            Scalar::Fun(f) => {
                if f.num.is_zero() {
                    None
                } else {
                    Some(f.k)
                }
            }
        }
    }

    pub fn is_integral(&self, x: &Scalar) -> bool {
        self.valuation(x).map_or(true, |v| v >= 0)
    }

    pub fn is_unit(&self, x: &Scalar) -> bool {
        self.valuation(x) == Some(0)
    }

    /// Digit expansion modulo pi^level; requires valuation >= 0.
    pub fn reduce(&self, x: &Scalar, level: usize) -> Result<QuotientElement, FieldError> {
        if let Some(v) = self.valuation(x) {
            if v < 0 {
                return Err(FieldError::NegativeValuation);
            }
        }
        match x {
            Scalar::Rat(r) => {
                if r.is_zero() {
                    return Ok(QuotientElement { digits: vec![0; level] });
                }
                let p = BigInt::from(self.cfg.p);
                let pn = p.pow(level as u32);
                // r = a/b with p not dividing b once common powers are removed
                let mut a = r.numer().clone();
                let mut b = r.denom().clone();
                loop {
                    let (qa, ra) = a.div_rem(&p);
                    let (qb, rb) = b.div_rem(&p);
                    if ra.is_zero() && rb.is_zero() {
                        a = qa;
                        b = qb;
                    } else {
                        break;
                    }
                }
                let e = b.extended_gcd(&pn);
                debug_assert!(e.gcd.is_one(), "denominator shares a factor with p");
                let binv = e.x.mod_floor(&pn);
                let mut rep = (a * binv).mod_floor(&pn);
                let mut digits = Vec::with_capacity(level);
                for _ in 0..level {
                    let (q, d) = rep.div_rem(&p);
                    let code: u64 = d.to_string().parse().unwrap();
                    digits.push(code as u16);
                    rep = q;
                }
                Ok(QuotientElement { digits })
            }
            Scalar::Fun(f) => {
                let mut digits = vec![0u16; level];
                if f.num.is_zero() {
                    return Ok(QuotientElement { digits });
                }
                let k = f.k as usize;
                if k >= level {
                    return Ok(QuotientElement { digits });
                }
                // power series of num/den, den(0) = 1
                let fq = &self.fq;
                let mut rem = f.num.0.clone();
                for slot in k..level {
                    let d = rem.first().copied().unwrap_or(0);
                    digits[slot] = d;
                    if d != 0 {
                        for (i, &dc) in f.den.0.iter().enumerate() {
                            if i >= rem.len() {
                                rem.resize(i + 1, 0);
                            }
                            rem[i] = fq.sub(rem[i], fq.mul(d, dc));
                        }
                    }
                    if !rem.is_empty() {
                        debug_assert_eq!(rem[0], 0);
                        rem.remove(0);
                    }
                }
                Ok(QuotientElement { digits })
            }
        }
    }

    /// Canonical integral lift of a digit expansion.
    pub fn lift(&self, digits: &QuotientElement) -> Scalar {
        let mut acc = self.zero();
        for (i, &d) in digits.digits.iter().enumerate() {
            if d == 0 {
                continue;
            }
            let term = self.mul(&self.from_residue_code(d), &self.pi_pow(i as i64));
            acc = self.add(&acc, &term);
        }
        acc
    }

    /// Unit-part digits: x = pi^v * u with u a unit; returns (v, digits of u).
    pub fn unit_digits(&self, x: &Scalar, level: usize) -> Option<(i64, QuotientElement)> {
        let v = self.valuation(x)?;
        let u = self.mul(x, &self.pi_pow(-v));
        Some((v, self.reduce(&u, level).expect("unit is integral")))
    }
}
