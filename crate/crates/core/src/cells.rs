//! Univariate cells with centers.
//!
//! A (1)-cell is `{ y : ord(y - c) in M, ac_d(y - c) in R }` for a center `c`,
//! an arithmetic progression `M` of orders and a set `R` of units modulo
//! `p^d`. Its presentation is `y -> (ord(y - c), ac_d(y - c))`, and every
//! fiber of it is one open ball. A (0)-cell is the single point `{c}`.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::{Arc, Mutex};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::Zero;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::hensel::{h, refine_root, root_ord, HenselValue, PadicApprox};
use crate::padic::{modulo, ord_p, reduce_mod, truncate, units_mod, unit_digits, Prime, Rat, RvData, Val};
use crate::poly::{fmt_rat, resultant_val, Poly};

// ---------------------------------------------------------------------------
// Terms

/// Terms over constants, the main variable, ring operations, `rv_d` and the
/// Henselian function symbols `h_{m,d}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Const(Rat),
    Var,
    Add(Box<Term>, Box<Term>),
    Sub(Box<Term>, Box<Term>),
    Mul(Box<Term>, Box<Term>),
    Rv { depth: u32, arg: Box<Term> },
    /// An auxiliary-sort constant: the `rv`-argument slot of a Henselian function.
    RvConst(RvData),
    /// `h_{m,d}(a_0, ..., a_m, xi)`; always `m + 2` children.
    Hens { m: usize, depth: u32, coeffs: Vec<Term>, arg: Box<Term> },
}

impl Term {
    pub fn hens(coeffs: Vec<Term>, depth: u32, arg: Term) -> Term {
        assert!(!coeffs.is_empty());
        Term::Hens { m: coeffs.len() - 1, depth, coeffs, arg: Box::new(arg) }
    }

    pub fn add(a: Term, b: Term) -> Term {
        Term::Add(Box::new(a), Box::new(b))
    }

    pub fn children(&self) -> usize {
        match self {
            Term::Const(_) | Term::Var | Term::RvConst(_) => 0,
            Term::Add(..) | Term::Sub(..) | Term::Mul(..) => 2,
            Term::Rv { .. } => 1,
            Term::Hens { coeffs, .. } => coeffs.len() + 1,
        }
    }

    /// Evaluate with Henselian-function semantics; `y` binds `Var`.
    pub fn eval(&self, y: Option<&Rat>, p: Prime) -> Result<TermValue> {
        use TermValue::*;
        Ok(match self {
            Term::Const(c) => Exact(c.clone()),
            Term::Var => Exact(y.cloned().ok_or_else(|| Error::InvalidInput("unbound variable".into()))?),
            Term::RvConst(r) => Aux(r.clone()),
            Term::Rv { depth, arg } => match arg.eval(y, p)? {
                Exact(x) => Aux(crate::padic::rv(&x, p, *depth)?),
                _ => return Err(Error::InvalidInput("rv of a non-rational term".into())),
            },
            Term::Add(a, b) => match (a.eval(y, p)?, b.eval(y, p)?) {
                (Exact(x), Exact(z)) => Exact(x + z),
                (Exact(x), Root(base, r)) | (Root(base, r), Exact(x)) => Root(base + x, r),
                _ => return Err(Error::InvalidInput("unsupported term sum".into())),
            },
            Term::Sub(a, b) => match (a.eval(y, p)?, b.eval(y, p)?) {
                (Exact(x), Exact(z)) => Exact(x - z),
                _ => return Err(Error::InvalidInput("unsupported term difference".into())),
            },
            Term::Mul(a, b) => match (a.eval(y, p)?, b.eval(y, p)?) {
                (Exact(x), Exact(z)) => Exact(x * z),
                _ => return Err(Error::InvalidInput("unsupported term product".into())),
            },
            Term::Hens { coeffs, arg, .. } => {
                let mut a = Vec::with_capacity(coeffs.len());
                for c in coeffs {
                    match c.eval(y, p)? {
                        Exact(x) => a.push(x),
                        _ => return Err(Error::InvalidInput("non-rational Henselian coefficient".into())),
                    }
                }
                let Aux(x0) = arg.eval(y, p)? else {
                    return Err(Error::InvalidInput("Henselian argument must be auxiliary".into()));
                };
                match h(&a, &x0, p) {
                    HenselValue::Zero => Exact(Rat::zero()),
                    HenselValue::Root(r) if r.is_exact() => Exact(r.approx),
                    HenselValue::Root(r) => Root(Rat::zero(), r),
                }
            }
        })
    }
}

/// Value of a term: a rational, `base + root`, or an auxiliary `rv` value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TermValue {
    Exact(Rat),
    Root(Rat, PadicApprox),
    Aux(RvData),
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(c) => write!(f, "{}", fmt_rat(c)),
            Term::Var => write!(f, "y"),
            Term::Add(a, b) => write!(f, "({a} + {b})"),
            Term::Sub(a, b) => write!(f, "({a} - {b})"),
            Term::Mul(a, b) => write!(f, "({a} * {b})"),
            Term::Rv { depth, arg } => write!(f, "rv_{depth}({arg})"),
            Term::RvConst(RvData::Zero) => write!(f, "xi[0]"),
            Term::RvConst(RvData::NonZero { valuation, unit }) => {
                write!(f, "xi[m={valuation},u={},d={}]", unit.digits, unit.depth)
            }
            Term::Hens { m, depth, coeffs, arg } => {
                write!(f, "h_{{{m},{depth}}}(")?;
                for c in coeffs {
                    write!(f, "{c}, ")?;
                }
                write!(f, "{arg})")
            }
        }
    }
}

impl Serialize for Term {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

// ---------------------------------------------------------------------------
// Centers

#[derive(Debug, Clone)]
pub struct RootCenter {
    /// Refined in place; the root it denotes never changes.
    root: Arc<Mutex<PadicApprox>>,
    witness: Poly,
}

impl RootCenter {
    fn snapshot(&self) -> PadicApprox {
        self.root.lock().expect("root cache poisoned").clone()
    }

    fn refined(&self, prec: i64, p: Prime) -> PadicApprox {
        let mut guard = self.root.lock().expect("root cache poisoned");
        if guard.precision < Val::Fin(prec) {
            *guard = refine_root(&guard, prec, p);
        }
        guard.clone()
    }
}

#[derive(Debug, Clone)]
pub enum CenterValue {
    Exact(Rat),
    Root(RootCenter),
}

/// A center: an exact rational or a Hensel root, with the term that defines it.
#[derive(Debug, Clone)]
pub struct Center {
    value: CenterValue,
    term: Option<Term>,
    prime: Prime,
}

impl PartialEq for Center {
    fn eq(&self, other: &Self) -> bool {
        self.prime == other.prime && self.distance(other).is_inf()
    }
}

impl Center {
    pub fn exact(c: Rat, p: Prime) -> Center {
        Center { term: Some(Term::Const(c.clone())), value: CenterValue::Exact(c), prime: p }
    }

    /// A hand-built center without term provenance.
    pub fn bare(c: Rat, p: Prime) -> Center {
        Center { term: None, value: CenterValue::Exact(c), prime: p }
    }

    pub fn with_term(c: Rat, term: Term, p: Prime) -> Center {
        Center { term: Some(term), value: CenterValue::Exact(c), prime: p }
    }

    /// `base + r`, where `r` is a root of `r.witness`.
    pub fn root(base: &Rat, r: PadicApprox, term: Term, p: Prime) -> Center {
        if r.is_exact() {
            return Center::with_term(base + &r.approx, term, p);
        }
        let witness = r.witness.taylor_shift(&-base.clone());
        let global = PadicApprox {
            witness: witness.clone(),
            approx: base + &r.approx,
            precision: r.precision,
            rv_tag: r.rv_tag,
        };
        Center {
            value: CenterValue::Root(RootCenter { root: Arc::new(Mutex::new(global)), witness }),
            term: Some(term),
            prime: p,
        }
    }

    pub fn prime(&self) -> Prime {
        self.prime
    }

    pub fn term(&self) -> Option<&Term> {
        self.term.as_ref()
    }

    pub fn value(&self) -> &CenterValue {
        &self.value
    }

    pub fn exact_value(&self) -> Option<&Rat> {
        match &self.value {
            CenterValue::Exact(c) => Some(c),
            CenterValue::Root(_) => None,
        }
    }

    /// The center as a root approximation (exact centers have infinite precision).
    pub fn as_approx(&self) -> PadicApprox {
        match &self.value {
            CenterValue::Exact(c) => PadicApprox::exact(Poly::linear_root(c), c.clone(), RvData::Zero),
            CenterValue::Root(r) => r.snapshot(),
        }
    }

    /// A rational `x` with `ord(center - x) >= prec`.
    pub fn approx(&self, prec: i64) -> Rat {
        match &self.value {
            CenterValue::Exact(c) => c.clone(),
            CenterValue::Root(r) => r.refined(prec, self.prime).approx,
        }
    }

    /// Exact `ord f(center)`.
    pub fn ord_of(&self, f: &Poly) -> Val {
        match &self.value {
            CenterValue::Exact(c) => ord_p(&f.eval(c), self.prime),
            CenterValue::Root(r) => root_ord(f, &r.snapshot(), self.prime),
        }
    }

    /// Exact valuations of the Taylor coefficients of `f` at the center.
    pub fn taylor_vals(&self, f: &Poly) -> Vec<Val> {
        match &self.value {
            CenterValue::Exact(c) => f.taylor_shift(c).coeffs().iter().map(|a| ord_p(a, self.prime)).collect(),
            CenterValue::Root(_) => (0..=f.degree().max(0) as usize)
                .map(|i| self.ord_of(&f.taylor_coefficient(i)))
                .collect(),
        }
    }

    /// `ord(y - center)`.
    pub fn dist_rat(&self, y: &Rat) -> Val {
        match &self.value {
            CenterValue::Exact(c) => ord_p(&(y - c), self.prime),
            CenterValue::Root(r) => {
                let snap = r.snapshot();
                let v = ord_p(&(y - &snap.approx), self.prime);
                if v < snap.precision {
                    return v;
                }
                root_ord(&Poly::linear_root(y), &snap, self.prime)
            }
        }
    }

    /// `ord(self - other)`, exactly.
    pub fn distance(&self, other: &Center) -> Val {
        let p = self.prime;
        match (&self.value, &other.value) {
            (CenterValue::Exact(a), _) => other.dist_rat(a),
            (_, CenterValue::Exact(b)) => self.dist_rat(b),
            (CenterValue::Root(ra), CenterValue::Root(rb)) => {
                let g = ra.witness.gcd(&rb.witness);
                let shared = g.degree() >= 1
                    && root_ord(&g, &ra.snapshot(), p).is_inf()
                    && root_ord(&g, &rb.snapshot(), p).is_inf();
                let mut n = ra.snapshot().precision.unwrap().min(rb.snapshot().precision.unwrap()).max(1);
                let sep = if shared { separation_bound(&g, p) } else { i64::MAX };
                loop {
                    let (xa, xb) = (ra.refined(n, p).approx, rb.refined(n, p).approx);
                    let v = ord_p(&(xa - xb), p);
                    if v < Val::Fin(n) {
                        return v;
                    }
                    if n > sep {
                        return Val::Inf;
                    }
                    n *= 2;
                }
            }
        }
    }

    /// `ac_depth(y - center)`; `y` must differ from the center.
    pub fn digits_from(&self, y: &Rat, depth: u32) -> Option<BigInt> {
        let t = self.dist_rat(y).finite()?;
        let c = self.approx(t + depth as i64 + 1);
        Some(unit_digits(&(y - c), self.prime, depth).ok()?.digits)
    }
}

/// Digits beyond which two distinct roots of the squarefree `g` cannot agree.
fn separation_bound(g: &Poly, p: Prime) -> i64 {
    let g = g.primitive();
    let n = g.degree().max(1) as i64;
    let lc = ord_p(&g.leading(), p).finite().unwrap_or(0);
    let disc = resultant_val(&g, &g.derivative(), p).ok().and_then(Val::finite).unwrap_or(0);
    (n - 1) * (n - 2) * lc + disc.max(0) + 2
}

impl Serialize for Center {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("Center", 4)?;
        match &self.value {
            CenterValue::Exact(c) => {
                st.serialize_field("value", &fmt_rat(c))?;
                st.serialize_field("exact", &true)?;
                st.serialize_field("precision", &Val::Inf)?;
            }
            CenterValue::Root(r) => {
                let snap = r.snapshot();
                st.serialize_field("value", &fmt_rat(&snap.approx))?;
                st.serialize_field("exact", &false)?;
                st.serialize_field("precision", &snap.precision)?;
            }
        }
        st.serialize_field("term", &self.term)?;
        st.end()
    }
}

// ---------------------------------------------------------------------------
// Balls

/// The ball `{ y : ord(y - center) >= min_ord }`, i.e. `center + p^min_ord Z_p`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Ball {
    #[serde(serialize_with = "crate::ser::rat")]
    pub center: Rat,
    pub min_ord: i64,
}

impl Ball {
    pub fn zp() -> Ball {
        Ball { center: Rat::zero(), min_ord: 0 }
    }

    /// The open ball `{ x : |x - b| < |a| }`.
    pub fn open(a: &Rat, b: Rat, p: Prime) -> Result<Ball> {
        match ord_p(a, p) {
            Val::Fin(v) => Ok(Ball { center: b, min_ord: v + 1 }),
            Val::Inf => Err(Error::ZeroInput("ball radius")),
        }
    }

    pub fn contains(&self, y: &Rat, p: Prime) -> bool {
        ord_p(&(y - &self.center), p) >= Val::Fin(self.min_ord)
    }

    pub fn measure(&self, p: Prime) -> Rat {
        p.rpow(-self.min_ord)
    }
}

// ---------------------------------------------------------------------------
// Order ranges and residue sets

/// `{ lo, lo + step, ... }` up to `hi` (inclusive) or unbounded.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct MRange {
    pub lo: i64,
    pub hi: Option<i64>,
    pub step: i64,
}

impl MRange {
    pub fn new(lo: i64, hi: Option<i64>, step: i64) -> Option<MRange> {
        assert!(step >= 1);
        match hi {
            Some(h) if h < lo => None,
            Some(h) => Some(MRange { lo, hi: Some(h - (h - lo).rem_euclid(step)), step }),
            None => Some(MRange { lo, hi: None, step }),
        }
    }

    pub fn single(m: i64) -> MRange {
        MRange { lo: m, hi: Some(m), step: 1 }
    }

    pub fn from(lo: i64) -> MRange {
        MRange { lo, hi: None, step: 1 }
    }

    pub fn between(lo: i64, hi: i64) -> Option<MRange> {
        MRange::new(lo, Some(hi), 1)
    }

    pub fn contains(&self, m: i64) -> bool {
        m >= self.lo && self.hi.is_none_or(|h| m <= h) && (m - self.lo) % self.step == 0
    }

    pub fn is_infinite(&self) -> bool {
        self.hi.is_none()
    }

    /// Number of elements, `None` when infinite.
    pub fn len(&self) -> Option<u64> {
        self.hi.map(|h| ((h - self.lo) / self.step + 1) as u64)
    }

    pub fn at_least(&self, x: i64) -> Option<MRange> {
        if x <= self.lo {
            return Some(self.clone());
        }
        let first = self.lo + (x - self.lo + self.step - 1) / self.step * self.step;
        MRange::new(first, self.hi, self.step)
    }

    pub fn at_most(&self, x: i64) -> Option<MRange> {
        let hi = self.hi.map_or(x, |h| h.min(x));
        MRange::new(self.lo, Some(hi), self.step)
    }

    pub fn intersect(&self, other: &MRange) -> Option<MRange> {
        let lo = self.lo.max(other.lo);
        let hi = match (self.hi, other.hi) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        let step = self.step.lcm(&other.step);
        let first = (lo..lo + step).find(|&m| self.contains_ap(m) && other.contains_ap(m))?;
        MRange::new(first, hi, step)
    }

    fn contains_ap(&self, m: i64) -> bool {
        (m - self.lo).rem_euclid(self.step) == 0
    }

    /// Elements in `[lo, upto]`.
    pub fn iter_upto(&self, upto: i64) -> impl Iterator<Item = i64> + '_ {
        let end = self.hi.map_or(upto, |h| h.min(upto));
        (self.lo..=end).step_by(self.step as usize)
    }

    /// Split into the parts strictly below, equal to, and above `x`.
    pub fn split_at(&self, x: i64) -> (Option<MRange>, bool, Option<MRange>) {
        (self.at_most(x - 1), self.contains(x), self.at_least(x + 1))
    }
}

/// Allowed unit digits of `y - c`: all units, or an explicit set modulo `p^depth`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Residue {
    All,
    Set { depth: u32, units: BTreeSet<BigInt> },
}

impl Residue {
    pub fn depth(&self) -> u32 {
        match self {
            Residue::All => 1,
            Residue::Set { depth, .. } => *depth,
        }
    }

    pub fn count(&self, p: Prime) -> BigInt {
        match self {
            Residue::All => BigInt::from(p.get() - 1),
            Residue::Set { units, .. } => BigInt::from(units.len()),
        }
    }

    /// Whether the unit `u` (given modulo `p^D` with `D >= depth`) is allowed.
    pub fn admits(&self, u: &BigInt, p: Prime) -> bool {
        match self {
            Residue::All => true,
            Residue::Set { depth, units } => units.contains(&modulo(u, &p.pow(*depth))),
        }
    }

    /// The allowed units modulo `p^depth` for `depth >= self.depth()`.
    pub fn lift(&self, depth: u32, p: Prime) -> BTreeSet<BigInt> {
        units_mod(p, depth).into_iter().filter(|u| self.admits(u, p)).collect()
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Residue::Set { units, .. } if units.is_empty())
    }

    pub fn set(depth: u32, units: impl IntoIterator<Item = BigInt>) -> Residue {
        Residue::Set { depth, units: units.into_iter().collect() }
    }
}

impl Serialize for Residue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Residue::All => s.serialize_str("all"),
            Residue::Set { depth, units } => {
                let mut st = s.serialize_struct("Residue", 2)?;
                st.serialize_field("depth", depth)?;
                st.serialize_field("units", &units.iter().map(|u| u.to_string()).collect::<Vec<_>>())?;
                st.end()
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Cells

/// `ord f(y) = e0 + i0 * ord(y - center)` on every member of the owning cell.
/// On point cells `i0 = 0` and `e0 = ord f(center)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct OrderLaw {
    pub e0: Val,
    pub i0: u32,
}

impl OrderLaw {
    pub fn at(&self, m: Val) -> Val {
        if self.i0 == 0 {
            self.e0
        } else {
            self.e0 + m.finite().map(|m| m * self.i0 as i64).map_or(Val::Inf, Val::Fin)
        }
    }

    /// The law re-expressed for a region where `ord(y - old center) = t` is constant.
    fn frozen(&self, t: i64) -> OrderLaw {
        OrderLaw { e0: self.e0 + t * self.i0 as i64, i0: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Point,
    Annuli { range: MRange, residue: Residue },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum CellKind {
    #[serde(rename = "0")]
    Zero,
    #[serde(rename = "1")]
    One,
}

impl CellKind {
    pub fn as_u8(self) -> u8 {
        match self {
            CellKind::Zero => 0,
            CellKind::One => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell1 {
    pub center: Center,
    pub shape: Shape,
    pub laws: Vec<(Poly, OrderLaw)>,
}

impl Cell1 {
    pub fn point(center: Center) -> Cell1 {
        Cell1 { center, shape: Shape::Point, laws: Vec::new() }
    }

    pub fn annuli(center: Center, range: MRange, residue: Residue) -> Cell1 {
        Cell1 { center, shape: Shape::Annuli { range, residue }, laws: Vec::new() }
    }

    pub fn with_law(mut self, f: &Poly, law: OrderLaw) -> Cell1 {
        self.set_law(f, law);
        self
    }

    pub fn set_law(&mut self, f: &Poly, law: OrderLaw) {
        match self.laws.iter_mut().find(|(g, _)| g == f) {
            Some(slot) => slot.1 = law,
            None => self.laws.push((f.clone(), law)),
        }
    }

    pub fn law_for(&self, f: &Poly) -> Option<OrderLaw> {
        self.laws.iter().find(|(g, _)| g == f).map(|(_, l)| *l)
    }

    pub fn kind(&self) -> CellKind {
        match self.shape {
            Shape::Point => CellKind::Zero,
            Shape::Annuli { .. } => CellKind::One,
        }
    }

    pub fn prime(&self) -> Prime {
        self.center.prime()
    }

    pub fn contains(&self, y: &Rat) -> bool {
        let t = self.center.dist_rat(y);
        match &self.shape {
            Shape::Point => t.is_inf(),
            Shape::Annuli { range, residue } => {
                let Val::Fin(t) = t else { return false };
                if !range.contains(t) {
                    return false;
                }
                match residue {
                    Residue::All => true,
                    Residue::Set { depth, .. } => self
                        .center
                        .digits_from(y, *depth)
                        .is_some_and(|u| residue.admits(&u, self.prime())),
                }
            }
        }
    }

    /// The fiber over `(m, u)` as the ball `{ x : ord(x - b) >= r }`.
    pub fn fiber_ball(&self, m: i64, u: &BigInt) -> Option<Ball> {
        let Shape::Annuli { range, residue } = &self.shape else { return None };
        let p = self.prime();
        if !range.contains(m) || !residue.admits(u, p) {
            return None;
        }
        let d = residue.depth() as i64;
        let c = truncate(&self.center.approx(m + d + 1), p, m + d);
        Some(Ball { center: c + Rat::from_integer(u.clone()) * p.rpow(m), min_ord: m + d })
    }

    /// How this cell meets the ball `r + p^j Z_p`.
    pub fn ball_status(&self, r: &Rat, j: i64) -> BallStatus {
        let p = self.prime();
        let t = self.center.dist_rat(r);
        match &self.shape {
            Shape::Point => {
                if t >= Val::Fin(j) {
                    BallStatus::Partial
                } else {
                    BallStatus::Outside
                }
            }
            Shape::Annuli { range, residue } => {
                if t >= Val::Fin(j) {
                    return match range.at_least(j) {
                        Some(_) => BallStatus::Partial,
                        None => BallStatus::Outside,
                    };
                }
                let t = t.unwrap();
                if !range.contains(t) {
                    return BallStatus::Outside;
                }
                let Residue::Set { depth, units } = residue else {
                    return BallStatus::Inside;
                };
                let known = (j - t) as u32;
                let w = self.center.digits_from(r, known.min(*depth)).expect("r differs from center");
                if known >= *depth {
                    return if units.contains(&w) { BallStatus::Inside } else { BallStatus::Outside };
                }
                let modulus = p.pow(known);
                let hits = units.iter().filter(|u| modulo(u, &modulus) == w).count();
                let total = num_traits::ToPrimitive::to_usize(&p.pow(depth - known)).unwrap_or(usize::MAX);
                match hits {
                    0 => BallStatus::Outside,
                    n if n == total => BallStatus::Inside,
                    _ => BallStatus::Partial,
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BallStatus {
    Inside,
    Outside,
    Partial,
}

impl Serialize for Cell1 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct LawView<'a> {
            poly: &'a Poly,
            e0: Val,
            i0: u32,
        }
        let mut st = s.serialize_struct("Cell1", 5)?;
        st.serialize_field("kind", &self.kind())?;
        st.serialize_field("center", &self.center)?;
        match &self.shape {
            Shape::Point => {
                st.serialize_field("m_range", &"point")?;
                st.serialize_field("residue", &Option::<Residue>::None)?;
            }
            Shape::Annuli { range, residue } => {
                st.serialize_field("m_range", range)?;
                st.serialize_field("residue", residue)?;
            }
        }
        let laws: Vec<LawView> =
            self.laws.iter().map(|(f, l)| LawView { poly: f, e0: l.e0, i0: l.i0 }).collect();
        st.serialize_field("laws", &laws)?;
        st.end()
    }
}

// ---------------------------------------------------------------------------
// Decompositions and products

/// Pairwise disjoint cells inside `domain`. A decomposition *of the domain*
/// additionally covers it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decomposition {
    pub prime: Prime,
    pub domain: Ball,
    pub cells: Vec<Cell1>,
    /// Per tracked polynomial, the constant `ord k` of the dominance inequality.
    pub k: Vec<(Poly, i64)>,
}

impl Decomposition {
    pub fn new(prime: Prime, domain: Ball, cells: Vec<Cell1>) -> Decomposition {
        Decomposition { prime, domain, cells, k: Vec::new() }
    }

    pub fn empty(prime: Prime, domain: Ball) -> Decomposition {
        Decomposition::new(prime, domain, Vec::new())
    }

    pub fn k_for(&self, f: &Poly) -> Option<i64> {
        self.k.iter().find(|(g, _)| g == f).map(|(_, k)| *k)
    }

    /// `{c} ∪ {ord(y - c) >= lo}` split at `ac_depth`: the point plus one cell
    /// carrying every unit modulo `p^depth`.
    pub fn rv_split(p: Prime, center: Rat, lo: i64, depth: u32, with_point: bool) -> Decomposition {
        let ball = Ball { center: center.clone(), min_ord: lo };
        let c = Center::exact(center, p);
        let mut cells = Vec::new();
        if with_point {
            cells.push(Cell1::point(c.clone()));
        }
        cells.push(Cell1::annuli(c, MRange::from(lo), Residue::set(depth, units_mod(p, depth))));
        Decomposition::new(p, ball, cells)
    }

    pub fn members(&self, y: &Rat) -> Vec<usize> {
        self.cells.iter().enumerate().filter(|(_, c)| c.contains(y)).map(|(i, _)| i).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductCell {
    pub factors: Vec<Cell1>,
    pub cell_type: Vec<u8>,
}

impl ProductCell {
    pub fn contains(&self, ys: &[Rat]) -> bool {
        ys.len() == self.factors.len() && self.factors.iter().zip(ys).all(|(c, y)| c.contains(y))
    }
}

pub fn product(cs: &[Cell1]) -> Result<ProductCell> {
    if cs.windows(2).any(|w| w[0].prime() != w[1].prime()) {
        return Err(Error::DomainMismatch);
    }
    Ok(ProductCell {
        factors: cs.to_vec(),
        cell_type: cs.iter().map(|c| c.kind().as_u8()).collect(),
    })
}

/// The type of a cell or product cell.
pub trait CellType {
    fn cell_type(&self) -> Vec<u8>;
}

impl CellType for Cell1 {
    fn cell_type(&self) -> Vec<u8> {
        vec![self.kind().as_u8()]
    }
}

impl CellType for ProductCell {
    fn cell_type(&self) -> Vec<u8> {
        self.cell_type.clone()
    }
}

pub fn cell_type<C: CellType>(c: &C) -> Vec<u8> {
    c.cell_type()
}

pub fn center_term(c: &Cell1) -> Result<Term> {
    c.center.term().cloned().ok_or(Error::NoProvenance)
}

// ---------------------------------------------------------------------------
// Intersections and common refinement

fn merge_laws(mut a: Vec<(Poly, OrderLaw)>, b: impl IntoIterator<Item = (Poly, OrderLaw)>) -> Vec<(Poly, OrderLaw)> {
    for (f, l) in b {
        if !a.iter().any(|(g, _)| *g == f) {
            a.push((f, l));
        }
    }
    a
}

fn frozen_laws(laws: &[(Poly, OrderLaw)], t: i64) -> Vec<(Poly, OrderLaw)> {
    laws.iter().map(|(f, l)| (f.clone(), l.frozen(t))).collect()
}

fn residue_from(depth: u32, units: BTreeSet<BigInt>) -> Option<Residue> {
    (!units.is_empty()).then_some(Residue::Set { depth, units })
}

/// `A ∩ B` as a list of cells, each expressed around the center of `A` or of `B`.
pub fn intersect(a: &Cell1, b: &Cell1) -> Vec<Cell1> {
    let p = a.prime();
    let t = a.center.distance(&b.center);
    match (&a.shape, &b.shape) {
        (Shape::Point, Shape::Point) => {
            if t.is_inf() {
                vec![Cell1 { center: a.center.clone(), shape: Shape::Point, laws: merge_laws(a.laws.clone(), b.laws.clone()) }]
            } else {
                Vec::new()
            }
        }
        (Shape::Point, _) => point_in(a, b, t),
        (_, Shape::Point) => point_in(b, a, t),
        (Shape::Annuli { range: ra, residue: qa }, Shape::Annuli { range: rb, residue: qb }) => {
            let laws = || merge_laws(a.laws.clone(), b.laws.clone());
            if t.is_inf() {
                let Some(range) = ra.intersect(rb) else { return Vec::new() };
                let residue = match (qa, qb) {
                    (Residue::All, Residue::All) => Residue::All,
                    _ => {
                        let depth = qa.depth().max(qb.depth());
                        let units: BTreeSet<BigInt> =
                            qa.lift(depth, p).into_iter().filter(|u| qb.admits(u, p)).collect();
                        match residue_from(depth, units) {
                            Some(r) => r,
                            None => return Vec::new(),
                        }
                    }
                };
                return vec![Cell1 { center: a.center.clone(), shape: Shape::Annuli { range, residue }, laws: laws() }];
            }
            let t = t.unwrap();
            let depth = qa.depth().max(qb.depth());
            let d = depth as i64;
            let modulus = p.pow(depth);
            // delta = b - a, known to t + depth digits
            let prec = t + d + 1;
            let delta = b.center.approx(prec) - a.center.approx(prec);
            let digits_of = |x: &Rat, m: i64| -> BigInt {
                reduce_mod(&truncate(&(x * p.rpow(-m)), p, d), p, depth).expect("p-integral")
            };
            let e = digits_of(&delta, t);
            let units = units_mod(p, depth);
            let mut out = Vec::new();

            // Region I: m < t, ord(y - b) = m.
            if let Some(both) = ra.intersect(rb).and_then(|r| r.at_most(t - 1)) {
                if let Some(far) = both.at_most(t - d) {
                    let residue = match (qa, qb) {
                        (Residue::All, Residue::All) => Some(Residue::All),
                        _ => residue_from(depth, units.iter().filter(|u| qa.admits(u, p) && qb.admits(u, p)).cloned().collect()),
                    };
                    if let Some(residue) = residue {
                        out.push(Cell1 { center: a.center.clone(), shape: Shape::Annuli { range: far, residue }, laws: laws() });
                    }
                }
                for m in both.iter_upto(t - 1).filter(|&m| m > t - d) {
                    let s = digits_of(&delta, m);
                    let set = units
                        .iter()
                        .filter(|u| qa.admits(u, p) && qb.admits(&modulo(&(*u - &s), &modulus), p))
                        .cloned()
                        .collect();
                    if let Some(residue) = residue_from(depth, set) {
                        out.push(Cell1 { center: a.center.clone(), shape: Shape::Annuli { range: MRange::single(m), residue }, laws: laws() });
                    }
                }
            }
            // Region III: m = t away from b's residue disc.
            if ra.contains(t) && rb.contains(t) {
                let pb = p.big();
                let set = units
                    .iter()
                    .filter(|u| {
                        modulo(&(*u - &e), &pb) != BigInt::zero()
                            && qa.admits(u, p)
                            && qb.admits(&modulo(&(*u - &e), &modulus), p)
                    })
                    .cloned()
                    .collect();
                if let Some(residue) = residue_from(depth, set) {
                    let laws = merge_laws(a.laws.clone(), frozen_laws(&b.laws, t));
                    out.push(Cell1 { center: a.center.clone(), shape: Shape::Annuli { range: MRange::single(t), residue }, laws });
                }
            }
            // Region II around a (m > t) and its mirror around b (n > t).
            let neg_e = modulo(&-e.clone(), &modulus);
            out.extend(near_region(a, ra, qa, b, rb, qb, t, depth, &neg_e));
            out.extend(near_region(b, rb, qb, a, ra, qa, t, depth, &e));
            out
        }
    }
}

fn point_in(pt: &Cell1, other: &Cell1, t: Val) -> Vec<Cell1> {
    let Shape::Annuli { range, residue } = &other.shape else { unreachable!() };
    let Val::Fin(t) = t else { return Vec::new() };
    if !range.contains(t) {
        return Vec::new();
    }
    if let Residue::Set { depth, .. } = residue {
        let p = pt.prime();
        let y = pt.center.approx(t + *depth as i64 + 1);
        let c = other.center.approx(t + *depth as i64 + 1);
        let u = unit_digits(&(y - c), p, *depth).expect("distinct").digits;
        if !residue.admits(&u, p) {
            return Vec::new();
        }
    }
    vec![Cell1 {
        center: pt.center.clone(),
        shape: Shape::Point,
        laws: merge_laws(pt.laws.clone(), frozen_laws(&other.laws, t)),
    }]
}

/// Members of `x ∩ z` with `ord(y - x.center) > t`, expressed around `x`'s
/// center. There `ord(y - z.center) = t` and the unit digits of
/// `(y - z.center) / p^t` are `eps + p^{n - t} u`.
#[allow(clippy::too_many_arguments)]
fn near_region(
    x: &Cell1,
    rx: &MRange,
    qx: &Residue,
    z: &Cell1,
    rz: &MRange,
    qz: &Residue,
    t: i64,
    depth: u32,
    eps: &BigInt,
) -> Vec<Cell1> {
    let p = x.prime();
    if !rz.contains(t) {
        return Vec::new();
    }
    let Some(near) = rx.at_least(t + 1) else { return Vec::new() };
    let d = depth as i64;
    let modulus = p.pow(depth);
    let laws = || merge_laws(x.laws.clone(), frozen_laws(&z.laws, t));
    let mut out = Vec::new();
    if let Some(deep) = near.at_least(t + d) {
        if qz.admits(eps, p) {
            out.push(Cell1 { center: x.center.clone(), shape: Shape::Annuli { range: deep, residue: qx.clone() }, laws: laws() });
        }
    }
    for n in near.iter_upto(t + d - 1) {
        let shift = p.pow((n - t) as u32);
        let set = units_mod(p, depth)
            .into_iter()
            .filter(|u| qx.admits(u, p) && qz.admits(&modulo(&(eps + &shift * u), &modulus), p))
            .collect();
        if let Some(residue) = residue_from(depth, set) {
            out.push(Cell1 { center: x.center.clone(), shape: Shape::Annuli { range: MRange::single(n), residue }, laws: laws() });
        }
    }
    out
}

/// Common refinement: every output cell lies in exactly one cell of each input.
pub fn refine_common(d1: &Decomposition, d2: &Decomposition) -> Result<Decomposition> {
    if d1.prime != d2.prime || d1.domain != d2.domain {
        return Err(Error::DomainMismatch);
    }
    let pieces: Vec<Vec<Cell1>> = crate::par::map(&d1.cells, |a| {
        d2.cells.iter().flat_map(|b| intersect(a, b)).collect()
    });
    let mut k = d1.k.clone();
    for (f, v) in &d2.k {
        if !k.iter().any(|(g, _)| g == f) {
            k.push((f.clone(), *v));
        }
    }
    Ok(Decomposition { prime: d1.prime, domain: d1.domain.clone(), cells: pieces.into_iter().flatten().collect(), k })
}

/// Result of the exact disjointness/cover check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionCheck {
    pub overlaps: Vec<(usize, usize)>,
    #[serde(serialize_with = "crate::ser::rat")]
    pub covered_measure: Rat,
    #[serde(serialize_with = "crate::ser::rat")]
    pub domain_measure: Rat,
    /// Candidate boundary points (cell centers) not covered exactly once.
    pub bad_points: Vec<String>,
}

impl PartitionCheck {
    pub fn is_partition(&self) -> bool {
        self.overlaps.is_empty() && self.bad_points.is_empty() && self.covered_measure == self.domain_measure
    }

    pub fn is_disjoint(&self) -> bool {
        self.overlaps.is_empty()
    }
}

/// Decide disjointness and cover of the domain by exact constraint algebra.
///
/// A point missed by a finite union of cells whose measure fills the domain
/// must be a center: away from every center, membership is locally constant.
pub fn check_partition(d: &Decomposition) -> Result<PartitionCheck> {
    let n = d.cells.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let overlaps: Vec<(usize, usize)> = crate::par::map(&pairs, |&(i, j)| {
        (!intersect(&d.cells[i], &d.cells[j]).is_empty()).then_some((i, j))
    })
    .into_iter()
    .flatten()
    .collect();
    let mut covered = Rat::zero();
    for c in &d.cells {
        covered += crate::measure::cell_measure(c, d.prime)?;
    }
    let mut bad_points = Vec::new();
    let domain_center = Center::exact(d.domain.center.clone(), d.prime);
    let mut exact_seen = BTreeSet::new();
    let mut roots: Vec<&Center> = Vec::new();
    let mut centers: Vec<&Center> = Vec::new();
    for c in d.cells.iter().map(|c| &c.center).chain(std::iter::once(&domain_center)) {
        let fresh = match c.exact_value() {
            Some(x) => exact_seen.insert(x.clone()),
            None => !roots.iter().any(|r| r.distance(c).is_inf()),
        };
        if fresh {
            if c.exact_value().is_none() {
                roots.push(c);
            }
            centers.push(c);
        }
    }
    for c in centers {
        if c.distance(&domain_center) < Val::Fin(d.domain.min_ord) {
            continue;
        }
        let probe = Cell1::point(c.clone());
        let hits = d.cells.iter().filter(|cell| !intersect(&probe, cell).is_empty()).count();
        if hits != 1 {
            bad_points.push(format!("{} ({} cells)", fmt_rat(&c.approx(8)), hits));
        }
    }
    Ok(PartitionCheck {
        overlaps,
        covered_measure: covered,
        domain_measure: d.domain.measure(d.prime),
        bad_points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::padic::{rat, ratio};

    fn p5() -> Prime {
        Prime::new(5).unwrap()
    }

    fn zp_split(p: Prime, c: i64) -> Decomposition {
        let center = Center::exact(rat(c), p);
        Decomposition::new(
            p,
            Ball::zp(),
            vec![Cell1::point(center.clone()), Cell1::annuli(center, MRange::from(0), Residue::All)],
        )
    }

    #[test]
    fn membership() {
        let p = p5();
        let cell = Cell1::annuli(Center::exact(rat(0), p), MRange::from(0), Residue::All);
        assert!(cell.contains(&rat(7)));
        assert!(!cell.contains(&ratio(1, 5)));
        let pt = Cell1::point(Center::exact(rat(1), p));
        assert!(pt.contains(&rat(1)));
        assert!(!pt.contains(&rat(6)));
    }

    #[test]
    fn types() {
        let p = p5();
        let ball = Cell1::annuli(Center::exact(rat(0), p), MRange::from(0), Residue::All);
        let pt = Cell1::point(Center::exact(rat(0), p));
        assert_eq!(cell_type(&ball), vec![1]);
        assert_eq!(cell_type(&pt), vec![0]);
        assert_eq!(cell_type(&product(&[ball.clone(), pt.clone()]).unwrap()), vec![1, 0]);
        assert_eq!(product(std::slice::from_ref(&ball)).unwrap().cell_type, vec![1]);
        assert_eq!(product(&[ball.clone(), ball.clone()]).unwrap().cell_type, vec![1, 1]);
        assert_eq!(product(&[pt.clone(), ball, pt]).unwrap().cell_type, vec![0, 1, 0]);
    }

    #[test]
    fn mrange_algebra() {
        let a = MRange::new(0, None, 3).unwrap();
        let b = MRange::new(1, Some(20), 2).unwrap();
        let c = a.intersect(&b).unwrap();
        assert_eq!(c, MRange { lo: 3, hi: Some(15), step: 6 });
        assert!(MRange::new(0, Some(0), 3).unwrap().intersect(&MRange::single(1)).is_none());
        assert_eq!(a.at_least(4), MRange::new(6, None, 3));
        assert_eq!(a.at_most(7), MRange::new(0, Some(6), 3));
    }

    #[test]
    fn refine_is_idempotent() {
        let p = p5();
        let d = zp_split(p, 0);
        let r = refine_common(&d, &d).unwrap();
        assert_eq!(r.cells.len(), d.cells.len());
        for (x, y) in r.cells.iter().zip(&d.cells) {
            assert_eq!(x.shape, y.shape);
        }
    }

    #[test]
    fn refine_depth_one_by_depth_two() {
        let p = p5();
        let d1 = Decomposition::rv_split(p, rat(0), 0, 1, false);
        let d2 = Decomposition::rv_split(p, rat(0), 0, 2, false);
        let r = refine_common(&d1, &d2).unwrap();
        assert_eq!(r.cells.len(), 1);
        let Shape::Annuli { residue, .. } = &r.cells[0].shape else { panic!() };
        assert_eq!(residue.depth(), 2);
        assert_eq!(residue.count(p), BigInt::from(20));
    }

    /// Oracle: every residue mod 5^4 lies in exactly one refined cell, and the
    /// refined cell lies inside its parents on both sides.
    #[test]
    fn refine_different_centers_exhaustive() {
        let p = p5();
        let d1 = zp_split(p, 0);
        let d2 = zp_split(p, 1);
        let r = refine_common(&d1, &d2).unwrap();
        assert!(check_partition(&r).unwrap().is_partition());
        for y in 0..625 {
            let y = rat(y);
            let hits = r.members(&y);
            assert_eq!(hits.len(), 1, "y = {y}");
            let cell = &r.cells[hits[0]];
            // the refined cell sits inside the parent of y on both sides
            for parent in [&d1, &d2] {
                let owner = parent.members(&y)[0];
                for z in 0..625 {
                    let z = rat(z);
                    if cell.contains(&z) {
                        assert!(parent.cells[owner].contains(&z));
                    }
                }
            }
        }
    }

    #[test]
    fn partition_check_flags_overlap_and_gap() {
        let p = p5();
        let c = Center::exact(rat(0), p);
        let overlapping = Decomposition::new(
            p,
            Ball::zp(),
            vec![
                Cell1::point(c.clone()),
                Cell1::annuli(c.clone(), MRange::from(0), Residue::All),
                Cell1::annuli(c.clone(), MRange::between(1, 3).unwrap(), Residue::All),
            ],
        );
        let chk = check_partition(&overlapping).unwrap();
        assert_eq!(chk.overlaps, vec![(1, 2)]);
        let gap = Decomposition::new(p, Ball::zp(), vec![Cell1::annuli(c, MRange::from(0), Residue::All)]);
        let chk = check_partition(&gap).unwrap();
        assert!(chk.is_disjoint());
        assert_eq!(chk.bad_points.len(), 1);
    }

    #[test]
    fn fibers_are_balls() {
        let p = p5();
        let cell = Cell1::annuli(Center::exact(rat(3), p), MRange::from(1), Residue::set(2, [BigInt::from(7)]));
        let b = cell.fiber_ball(2, &BigInt::from(7)).unwrap();
        for y in 0..3125 {
            let y = rat(y);
            let in_fiber = cell.contains(&y) && ord_p(&(&y - rat(3)), p) == Val::Fin(2);
            assert_eq!(in_fiber, b.contains(&y, p));
        }
    }

    #[test]
    fn terms_evaluate() {
        let p = p5();
        let xi = crate::padic::rv(&rat(1), p, 1).unwrap();
        let t = Term::hens(vec![Term::Const(rat(-6)), Term::Const(rat(0)), Term::Const(rat(1))], 1, Term::RvConst(xi));
        assert_eq!(t.children(), 4);
        assert_eq!(t.to_string(), "h_{2,1}(-6, 0, 1, xi[m=0,u=1,d=1])");
        match t.eval(None, p).unwrap() {
            TermValue::Root(base, r) => {
                assert_eq!(base, rat(0));
                assert_eq!(reduce_mod(&r.approx, p, 2).unwrap(), BigInt::from(16));
            }
            other => panic!("{other:?}"),
        }
        let shifted = Term::add(Term::Const(rat(2)), t);
        assert!(matches!(shifted.eval(None, p).unwrap(), TermValue::Root(b, _) if b == rat(2)));
    }

    #[test]
    fn hand_built_cells_have_no_term() {
        let p = p5();
        let cell = Cell1::point(Center::bare(rat(1), p));
        assert_eq!(center_term(&cell), Err(Error::NoProvenance));
        let cell = Cell1::point(Center::exact(ratio(3, 2), p));
        assert_eq!(center_term(&cell).unwrap(), Term::Const(ratio(3, 2)));
    }

    #[test]
    fn root_center_distances() {
        let p = p5();
        let xi = crate::padic::rv(&rat(1), p, 1).unwrap();
        let r = h(&[rat(-6), rat(0), rat(1)], &xi, p).root().unwrap();
        let a = Center::root(&rat(0), r.clone(), Term::Const(rat(0)), p);
        let b = Center::root(&rat(0), r, Term::Const(rat(0)), p);
        assert!(a.distance(&b).is_inf());
        assert_eq!(a.dist_rat(&rat(11)), Val::Fin(1));
        let c = Center::exact(rat(141), p);
        assert_eq!(a.distance(&c), Val::Fin(3));
        // the other square root of 6 is 4 mod 5
        let xi4 = crate::padic::rv(&rat(4), p, 1).unwrap();
        let r4 = h(&[rat(-6), rat(0), rat(1)], &xi4, p).root().unwrap();
        let d = Center::root(&rat(0), r4, Term::Const(rat(0)), p);
        assert_eq!(a.distance(&d), Val::Fin(0));
    }
}
