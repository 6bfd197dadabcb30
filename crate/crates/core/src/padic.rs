//! Exact arithmetic in `Q_p` on rational representatives: valuations, unit
//! digits and the `rv` data `valuation + first d unit digits`.

use std::cmp::Ordering;
use std::fmt;
use std::ops::Add;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{Error, Result};

pub type Rat = num_rational::BigRational;

/// A validated prime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Prime(u64);

impl Prime {
    pub fn new(p: u64) -> Result<Self> {
        if p < 2 || !is_prime(p) {
            return Err(Error::InvalidPrime(p));
        }
        Ok(Prime(p))
    }

    pub fn get(self) -> u64 {
        self.0
    }

    pub fn big(self) -> BigInt {
        BigInt::from(self.0)
    }

    /// `p^e` as an integer.
    pub fn pow(self, e: u32) -> BigInt {
        num_traits::pow(self.big(), e as usize)
    }

    /// `p^e` as a rational, `e` may be negative.
    pub fn rpow(self, e: i64) -> Rat {
        let base = Rat::from_integer(self.pow(e.unsigned_abs() as u32));
        if e >= 0 {
            base
        } else {
            base.recip()
        }
    }
}

impl fmt::Display for Prime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

fn is_prime(n: u64) -> bool {
    if n < 4 {
        return n >= 2;
    }
    if n.is_multiple_of(2) {
        return false;
    }
    let mut d = 3u64;
    while d.saturating_mul(d) <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

/// A valuation: an integer or `+∞` (the valuation of zero).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Val {
    Fin(i64),
    Inf,
}

impl Val {
    pub fn is_inf(self) -> bool {
        matches!(self, Val::Inf)
    }

    pub fn finite(self) -> Option<i64> {
        match self {
            Val::Fin(v) => Some(v),
            Val::Inf => None,
        }
    }

    /// Panics on `Inf`; callers must have ruled it out.
    pub fn unwrap(self) -> i64 {
        self.finite().expect("finite valuation")
    }
}

impl Serialize for Val {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Val::Fin(v) => s.serialize_i64(*v),
            Val::Inf => s.serialize_str("inf"),
        }
    }
}

impl PartialOrd for Val {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Val {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Val::Inf, Val::Inf) => Ordering::Equal,
            (Val::Inf, _) => Ordering::Greater,
            (_, Val::Inf) => Ordering::Less,
            (Val::Fin(a), Val::Fin(b)) => a.cmp(b),
        }
    }
}

impl Add for Val {
    type Output = Val;
    fn add(self, rhs: Val) -> Val {
        match (self, rhs) {
            (Val::Fin(a), Val::Fin(b)) => Val::Fin(a + b),
            _ => Val::Inf,
        }
    }
}

impl Add<i64> for Val {
    type Output = Val;
    fn add(self, rhs: i64) -> Val {
        self + Val::Fin(rhs)
    }
}

impl fmt::Display for Val {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Val::Fin(v) => write!(f, "{v}"),
            Val::Inf => write!(f, "inf"),
        }
    }
}

/// Valuation of a nonzero integer.
pub fn ord_int(n: &BigInt, p: Prime) -> Val {
    if n.is_zero() {
        return Val::Inf;
    }
    let pb = p.big();
    let mut v = 0i64;
    let mut m = n.clone();
    loop {
        let (q, r) = m.div_rem(&pb);
        if !r.is_zero() {
            break;
        }
        m = q;
        v += 1;
    }
    Val::Fin(v)
}

pub fn ord_p(x: &Rat, p: Prime) -> Val {
    if x.is_zero() {
        return Val::Inf;
    }
    ord_int(x.numer(), p) + Val::Fin(-ord_int(x.denom(), p).unwrap())
}

/// Nonnegative remainder of `a` modulo `m`.
pub fn modulo(a: &BigInt, m: &BigInt) -> BigInt {
    a.mod_floor(m)
}

/// Inverse of `a` modulo `m`, if it exists.
pub fn mod_inverse(a: &BigInt, m: &BigInt) -> Option<BigInt> {
    let e = a.extended_gcd(m);
    if !e.gcd.is_one() {
        return None;
    }
    Some(modulo(&e.x, m))
}

/// Reduce a p-integral rational modulo `p^k`; `None` when `p` divides the denominator.
pub fn reduce_mod(x: &Rat, p: Prime, k: u32) -> Option<BigInt> {
    let m = p.pow(k);
    let inv = mod_inverse(&modulo(x.denom(), &m), &m)?;
    Some(modulo(&(x.numer() * inv), &m))
}

/// Unit digits `(x / p^{ord x}) mod p^d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct UnitDigits {
    pub depth: u32,
    #[serde(serialize_with = "crate::ser::big")]
    pub digits: BigInt,
}

impl UnitDigits {
    pub fn new(depth: u32, digits: BigInt, p: Prime) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InvalidInput("unit digit depth must be positive".into()));
        }
        let m = p.pow(depth);
        let digits = modulo(&digits, &m);
        if (&digits % p.big()).is_zero() {
            return Err(Error::InvalidInput(format!("{digits} is not a unit mod {p}")));
        }
        Ok(UnitDigits { depth, digits })
    }

    /// Projection to a smaller depth.
    pub fn truncate(&self, depth: u32, p: Prime) -> UnitDigits {
        assert!(depth >= 1 && depth <= self.depth);
        UnitDigits {
            depth,
            digits: modulo(&self.digits, &p.pow(depth)),
        }
    }
}

pub fn unit_digits(x: &Rat, p: Prime, d: u32) -> Result<UnitDigits> {
    if x.is_zero() {
        return Err(Error::ZeroInput("unit_digits"));
    }
    if d == 0 {
        return Err(Error::InvalidInput("unit digit depth must be positive".into()));
    }
    let v = ord_p(x, p).unwrap();
    let unit = x * p.rpow(-v);
    let digits = reduce_mod(&unit, p, d).expect("unit part is p-integral");
    Ok(UnitDigits { depth: d, digits })
}

/// `rv_d(x)`: zero, or valuation together with `d` unit digits.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum RvData {
    Zero,
    NonZero { valuation: i64, unit: UnitDigits },
}

impl RvData {
    pub fn depth(&self) -> Option<u32> {
        match self {
            RvData::Zero => None,
            RvData::NonZero { unit, .. } => Some(unit.depth),
        }
    }

    /// Natural projection `RV_d -> RV_{d'}` for `d' <= d`.
    pub fn project(&self, depth: u32, p: Prime) -> RvData {
        match self {
            RvData::Zero => RvData::Zero,
            RvData::NonZero { valuation, unit } => RvData::NonZero {
                valuation: *valuation,
                unit: unit.truncate(depth, p),
            },
        }
    }

    /// The canonical representative `p^m * digits`.
    pub fn representative(&self, p: Prime) -> Rat {
        match self {
            RvData::Zero => Rat::zero(),
            RvData::NonZero { valuation, unit } => {
                Rat::from_integer(unit.digits.clone()) * p.rpow(*valuation)
            }
        }
    }
}

pub fn rv(x: &Rat, p: Prime, d: u32) -> Result<RvData> {
    if x.is_zero() {
        return Ok(RvData::Zero);
    }
    Ok(RvData::NonZero {
        valuation: ord_p(x, p).unwrap(),
        unit: unit_digits(x, p, d)?,
    })
}

/// A rational with only powers of `p` in the denominator, congruent to `x`
/// modulo `p^prec` (i.e. `ord(x - result) >= prec`).
pub fn truncate(x: &Rat, p: Prime, prec: i64) -> Rat {
    if x.is_zero() {
        return Rat::zero();
    }
    let v = ord_p(x, p).unwrap();
    if v >= prec {
        return Rat::zero();
    }
    let unit = x * p.rpow(-v);
    let digits = reduce_mod(&unit, p, (prec - v) as u32).expect("unit part is p-integral");
    Rat::from_integer(digits) * p.rpow(v)
}

/// All units modulo `p^d`, ascending.
pub fn units_mod(p: Prime, d: u32) -> Vec<BigInt> {
    let m = p.pow(d);
    let pb = p.big();
    let mut out = Vec::new();
    let mut u = BigInt::one();
    while u < m {
        if !(&u % &pb).is_zero() {
            out.push(u.clone());
        }
        u += 1;
    }
    out
}

pub fn rat(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

pub fn ratio(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

pub fn is_integer(x: &Rat) -> bool {
    x.denom().is_one()
}
