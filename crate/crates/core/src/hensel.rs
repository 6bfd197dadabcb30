//! Hensel roots: the conditions (h0)-(h2) for a dominant simple root in a
//! given `rv` class, the total Henselian function `h_{m,d}`, and Newton
//! refinement of the resulting root to any precision.
//!
//! Depth conventions: an `rv` class of depth `d` is a coset of
//! `1 + p^d Z_p`, which is `1 + n M` for `ord(n) = d - 1`. The order
//! inequalities therefore use `ord(n) = d - 1`.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::padic::{ord_p, rv, truncate, Prime, Rat, RvData, Val};
use crate::poly::{resultant_val, Poly};

/// Refinement loops give up past this many digits; only reachable on a defect.
const PRECISION_CEILING: i64 = 1 << 14;
/// Candidates kept per level of the lift search in `h`.
const CANDIDATE_CAP: usize = 1 << 14;

/// A root of `witness` in `Q_p`, known to `precision` digits:
/// `ord(root - approx) >= precision`. `precision == Inf` means `approx` is the root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PadicApprox {
    pub witness: Poly,
    #[serde(serialize_with = "crate::ser::rat")]
    pub approx: Rat,
    pub precision: Val,
    pub rv_tag: RvData,
}

impl PadicApprox {
    pub fn exact(witness: Poly, root: Rat, rv_tag: RvData) -> Self {
        PadicApprox { witness, approx: root, precision: Val::Inf, rv_tag }
    }

    pub fn is_exact(&self) -> bool {
        self.precision.is_inf()
    }
}

/// Result of the total function `h_{m,d}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HenselValue {
    Root(PadicApprox),
    Zero,
}

impl HenselValue {
    pub fn root(self) -> Option<PadicApprox> {
        match self {
            HenselValue::Root(r) => Some(r),
            HenselValue::Zero => None,
        }
    }
}

/// Smallest `i0 > 0` satisfying (h0b), (h1), (h2) at `x`, if any.
pub fn check_conditions(
    a: &[Rat],
    x: &Rat,
    x0: &RvData,
    d: u32,
    p: Prime,
) -> Result<Option<usize>> {
    if x.is_zero() {
        return Err(Error::ZeroInput("check_conditions"));
    }
    if &rv(x, p, d)? != x0 {
        return Err(Error::RvMismatch);
    }
    Ok(conditions_at(a, x, d, p))
}

fn conditions_at(a: &[Rat], x: &Rat, d: u32, p: Prime) -> Option<usize> {
    let f = Poly::new(a.to_vec());
    if f.is_zero() {
        return None;
    }
    let ord_n = d as i64 - 1;
    let vx = ord_p(x, p).unwrap();
    let term_ords: Vec<Val> = a
        .iter()
        .enumerate()
        .map(|(i, c)| ord_p(c, p) + vx * i as i64)
        .collect();
    let min = *term_ords.iter().min()?;
    let fx = ord_p(&f.eval(x), p);
    let dfx = ord_p(&f.derivative().eval(x), p);
    (1..a.len()).find(|&i| {
        let Val::Fin(t) = term_ords[i] else { return false };
        term_ords[i] == min
            && fx > Val::Fin(2 * ord_n + t)
            && dfx <= Val::Fin(ord_n + t - vx)
    })
}

/// `h_{m,d}(a_0, ..., a_m, x0)`: the unique root `y0` of `sum a_i y^i` with
/// `rv_d(y0) = x0` when the Hensel conditions can be met in the class `x0`,
/// and `Zero` otherwise. Total: never fails.
pub fn h(a: &[Rat], x0: &RvData, p: Prime) -> HenselValue {
    let RvData::NonZero { valuation: m, unit } = x0 else {
        return HenselValue::Zero;
    };
    let f = Poly::new(a.to_vec());
    if f.degree() < 1 {
        return HenselValue::Zero;
    }
    let g = f.squarefree_part();
    if g.degree() < 1 {
        return HenselValue::Zero;
    }
    let d = unit.depth;
    let gc = g.coeffs().to_vec();
    let disc = resultant_val(&g, &g.derivative(), p)
        .ok()
        .and_then(Val::finite)
        .unwrap_or(0)
        .max(0);
    let s_max = 2 * disc + 2 * d as i64 + 2;

    let base = Rat::from_integer(unit.digits.clone()) * p.rpow(*m);
    let step = |s: i64| p.rpow(*m + d as i64 + s);
    let mu = gc
        .iter()
        .enumerate()
        .map(|(i, c)| ord_p(c, p) + *m * i as i64)
        .min()
        .unwrap_or(Val::Inf);

    let mut level: Vec<Rat> = vec![base];
    for s in 0..=s_max {
        for x in &level {
            if conditions_at(&gc, x, d, p).is_some() {
                return HenselValue::Root(hensel_root(&g, x, x0, p));
            }
        }
        let lift = step(s);
        let mut next = Vec::new();
        for x in &level {
            for j in 0..p.get() {
                let cand = x + &lift * Rat::from_integer(j.into());
                if ord_p(&g.eval(&cand), p) >= mu + (d as i64 + s + 1) {
                    next.push(cand);
                }
            }
        }
        if next.is_empty() || next.len() > CANDIDATE_CAP {
            break;
        }
        level = next;
    }
    HenselValue::Zero
}

/// Build the root from a point satisfying the Hensel conditions.
fn hensel_root(g: &Poly, x: &Rat, x0: &RvData, p: Prime) -> PadicApprox {
    let d = x0.depth().unwrap_or(1) as i64;
    let m = match x0 {
        RvData::NonZero { valuation, .. } => *valuation,
        RvData::Zero => 0,
    };
    let mut approx = x.clone();
    let mut cert = newton_certificate(g, &approx, p);
    let mut guard = 0;
    while cert.is_none() {
        approx = newton_step(g, &approx, p, None);
        cert = newton_certificate(g, &approx, p);
        guard += 1;
        assert!(guard < 64, "Newton iteration failed to converge from a Hensel point");
    }
    let mut r = PadicApprox {
        witness: g.clone(),
        approx,
        precision: cert.unwrap(),
        rv_tag: x0.clone(),
    };
    if r.is_exact() {
        return r;
    }
    let dfo = ord_p(&g.derivative().eval(&r.approx), p).finite().unwrap_or(0);
    let target = (2 * (dfo + d) + 4).max(m + d + 2);
    r = refine_root(&r, target, p);
    if let Some(exact) = reconstruct_rational_root(&r, p) {
        r.approx = exact;
        r.precision = Val::Inf;
    }
    debug_assert_eq!(
        rv(&r.approx, p, d as u32).ok().as_ref(),
        Some(x0),
        "Hensel root left its rv class"
    );
    r
}

/// Certified precision of `x` as an approximation to a root of `f`: the
/// Newton polygon of `f(x + z)` must have a first segment of length one, in
/// which case there is exactly one root with `ord(root - x) = ord f(x) - ord f'(x)`.
pub(crate) fn newton_certificate(f: &Poly, x: &Rat, p: Prime) -> Option<Val> {
    let t = f.taylor_shift(x);
    let v: Vec<Val> = t.coeffs().iter().map(|c| ord_p(c, p)).collect();
    if v.first().is_none_or(|v0| v0.is_inf()) {
        return Some(Val::Inf);
    }
    let (v0, v1) = (v[0].unwrap(), v.get(1).copied().unwrap_or(Val::Inf).finite()?);
    let rho = v0 - v1;
    let ok = v
        .iter()
        .enumerate()
        .skip(2)
        .all(|(i, vi)| *vi + i as i64 * rho > Val::Fin(v1 + rho));
    ok.then_some(Val::Fin(rho))
}

fn newton_step(f: &Poly, x: &Rat, p: Prime, keep: Option<i64>) -> Rat {
    let fx = f.eval(x);
    let dfx = f.derivative().eval(x);
    if dfx.is_zero() {
        return x.clone();
    }
    let next = x - fx / dfx;
    match keep {
        Some(n) => truncate(&next, p, n),
        None => next,
    }
}

/// Same root, precision at least `target`.
pub fn refine_root(r: &PadicApprox, target: i64, p: Prime) -> PadicApprox {
    if r.precision >= Val::Fin(target) {
        return r.clone();
    }
    let mut cur = r.clone();
    let f = &r.witness;
    while cur.precision < Val::Fin(target) {
        let prec = cur.precision.unwrap();
        assert!(prec < PRECISION_CEILING, "root refinement exceeded the precision ceiling");
        let dfo = ord_p(&f.derivative().eval(&cur.approx), p).finite().unwrap_or(0);
        // Keep a few digits beyond the expected quadratic gain.
        let keep = 2 * prec.max(1) + dfo.abs() + 4;
        let mut next = newton_step(f, &cur.approx, p, Some(keep));
        let mut cert = newton_certificate(f, &next, p);
        if !matches!(cert, Some(c) if c > Val::Fin(prec)) {
            next = newton_step(f, &cur.approx, p, None);
            cert = newton_certificate(f, &next, p);
        }
        match cert {
            Some(c) if c > Val::Fin(prec) => {
                cur.approx = next;
                cur.precision = c;
            }
            _ => panic!("Newton refinement lost its certificate"),
        }
    }
    cur
}

/// Try to identify the root as a rational `a/b` using the rational root
/// bounds `|a| <= |c_0|`, `|b| <= |c_n|` of the primitive witness.
pub(crate) fn reconstruct_rational_root(r: &PadicApprox, p: Prime) -> Option<Rat> {
    if r.is_exact() {
        return Some(r.approx.clone());
    }
    let mut coeffs = r.witness.integer_coeffs();
    while coeffs.first().is_some_and(|c| c.is_zero()) {
        coeffs.remove(0);
    }
    let (a_bound, b_bound) = (coeffs.first()?.abs(), coeffs.last()?.abs());
    let v = ord_p(&r.approx, p).finite()?;
    if r.precision <= Val::Fin(v) {
        return None;
    }
    let need = BigInt::from(2) * &a_bound * &b_bound;
    let mut e = 1u32;
    while p.pow(e) <= need {
        e += 1;
    }
    let r = refine_root(r, v + e as i64 + 1, p);
    let modulus = p.pow(e);
    let unit = &r.approx * p.rpow(-v);
    let w = crate::padic::reduce_mod(&unit, p, e)?;
    let (a, b) = wang_reconstruct(&w, &modulus, &a_bound)?;
    if b.is_zero() || b.abs() > b_bound {
        return None;
    }
    let cand = Rat::new(a, b) * p.rpow(v);
    r.witness.eval(&cand).is_zero().then_some(cand)
}

fn wang_reconstruct(w: &BigInt, m: &BigInt, a_bound: &BigInt) -> Option<(BigInt, BigInt)> {
    let (mut r0, mut r1) = (m.clone(), w.clone());
    let (mut t0, mut t1) = (BigInt::zero(), BigInt::one());
    while &r1.abs() > a_bound {
        if r1.is_zero() {
            return None;
        }
        let q = r0.div_floor(&r1);
        let r2 = &r0 - &q * &r1;
        let t2 = &t0 - &q * &t1;
        r0 = std::mem::replace(&mut r1, r2);
        t0 = std::mem::replace(&mut t1, t2);
    }
    if t1.is_negative() {
        Some((-r1, -t1))
    } else {
        Some((r1, t1))
    }
}

/// Lower bound for `ord(F(root) - F(approx))` given `ord(root - approx) >= n`.
fn error_shift(f: &Poly, approx: &Rat, n: i64, p: Prime) -> i64 {
    let w = ord_p(approx, p).finite().unwrap_or(n).min(n).min(0);
    f.coeffs()
        .iter()
        .enumerate()
        .skip(1)
        .filter_map(|(i, c)| ord_p(c, p).finite().map(|v| v + (i as i64 - 1) * w))
        .min()
        .unwrap_or(0)
}

/// Exact `ord F(root)`, with `Inf` when the root is a zero of `F`.
pub fn root_ord(f: &Poly, r: &PadicApprox, p: Prime) -> Val {
    if f.is_zero() {
        return Val::Inf;
    }
    if r.is_exact() {
        return ord_p(&f.eval(&r.approx), p);
    }
    let g = r.witness.gcd(f);
    let cofactor = if g.degree() >= 1 { Some(r.witness.div_rem(&g).0) } else { None };
    let mut cur = r.clone();
    let mut known_nonzero = cofactor.is_none();
    loop {
        let n = cur.precision.unwrap();
        if !known_nonzero {
            let (g, q) = (&g, cofactor.as_ref().unwrap());
            if ord_p(&g.eval(&cur.approx), p) < Val::Fin(n + error_shift(g, &cur.approx, n, p)) {
                known_nonzero = true;
            } else if ord_p(&q.eval(&cur.approx), p)
                < Val::Fin(n + error_shift(q, &cur.approx, n, p))
            {
                return Val::Inf;
            }
        }
        if known_nonzero {
            let v = ord_p(&f.eval(&cur.approx), p);
            if v < Val::Fin(n + error_shift(f, &cur.approx, n, p)) {
                return v;
            }
        }
        assert!(n < PRECISION_CEILING, "root valuation did not stabilise");
        cur = refine_root(&cur, 2 * n.max(1) + 2, p);
    }
}

/// `ord b_1` where `b_1` is the linear Taylor coefficient of `f` at the root.
pub fn order_law_at_root(f: &Poly, r: &PadicApprox, p: Prime) -> Result<Val> {
    match root_ord(&f.derivative(), r, p) {
        Val::Inf => Err(Error::NonSimpleRoot),
        v => Ok(v),
    }
}
