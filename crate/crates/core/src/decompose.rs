//! Cell decomposition of a single polynomial and of quantifier-free sets.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::cells::{Ball, Cell1, Center, Decomposition, MRange, OrderLaw, Residue, Shape, Term};
use crate::error::{Error, Result};
use crate::hensel::{h, HenselValue};
use crate::padic::{ord_p, rv, truncate, unit_digits, units_mod, Prime, Rat, RvData, UnitDigits, Val};
use crate::poly::{resultant_val, Poly};

/// Environment variable overriding the recursion cap of [`prepare`].
pub const MAX_DEPTH_ENV: &str = "PADIC_CELLS_MAX_DEPTH";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Rel {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

impl Rel {
    pub fn holds<T: Ord>(self, a: T, b: T) -> bool {
        match self {
            Rel::Lt => a < b,
            Rel::Le => a <= b,
            Rel::Eq => a == b,
            Rel::Ge => a >= b,
            Rel::Gt => a > b,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Rel::Lt => "<",
            Rel::Le => "<=",
            Rel::Eq => "=",
            Rel::Ge => ">=",
            Rel::Gt => ">",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Atom {
    /// `ord f REL ord g + offset`; `ord f REL c` uses `g = 1`.
    OrdCmp { f: Poly, g: Poly, offset: i64, rel: Rel },
    /// `ord f ≡ residue (mod modulus)`; false where `f` vanishes.
    OrdMod { f: Poly, modulus: i64, residue: i64 },
    OrdEqInf(Poly),
    AcEq { depth: u32, f: Poly, u: UnitDigits },
    RvEq { depth: u32, f: Poly, tag: RvData },
}

impl Atom {
    pub fn polys(&self) -> Vec<&Poly> {
        match self {
            Atom::OrdCmp { f, g, .. } => vec![f, g],
            Atom::OrdMod { f, .. } | Atom::OrdEqInf(f) | Atom::AcEq { f, .. } | Atom::RvEq { f, .. } => vec![f],
        }
    }

    pub fn eval(&self, y: &Rat, p: Prime) -> bool {
        let ord = |f: &Poly| ord_p(&f.eval(y), p);
        match self {
            Atom::OrdCmp { f, g, offset, rel } => rel.holds(ord(f), ord(g) + *offset),
            Atom::OrdMod { f, modulus, residue } => {
                ord(f).finite().is_some_and(|v| v.rem_euclid(*modulus) == residue.rem_euclid(*modulus))
            }
            Atom::OrdEqInf(f) => ord(f).is_inf(),
            Atom::AcEq { depth, f, u } => {
                let x = f.eval(y);
                !x.is_zero() && unit_digits(&x, p, *depth).is_ok_and(|w| w.digits == u.digits)
            }
            Atom::RvEq { depth, f, tag } => rv(&f.eval(y), p, *depth).is_ok_and(|r| &r == tag),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    Atom(Atom),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Not(Box<Formula>),
}

impl Formula {
    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(a: Formula) -> Formula {
        Formula::Not(Box::new(a))
    }

    pub fn atoms(&self) -> Vec<&Atom> {
        match self {
            Formula::Atom(a) => vec![a],
            Formula::And(a, b) | Formula::Or(a, b) => {
                let mut v = a.atoms();
                v.extend(b.atoms());
                v
            }
            Formula::Not(a) => a.atoms(),
        }
    }

    /// Truth at a rational point: the brute-force reference semantics.
    pub fn eval(&self, y: &Rat, p: Prime) -> bool {
        self.eval_with(&mut |a| a.eval(y, p))
    }

    fn eval_with(&self, atom: &mut impl FnMut(&Atom) -> bool) -> bool {
        match self {
            Formula::Atom(a) => atom(a),
            Formula::And(a, b) => a.eval_with(atom) & b.eval_with(atom),
            Formula::Or(a, b) => a.eval_with(atom) | b.eval_with(atom),
            Formula::Not(a) => !a.eval_with(atom),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::OrdCmp { f, g, offset, rel } => {
                write!(out, "ord({f}) {} ", rel.symbol())?;
                if *g == Poly::constant(Rat::one()) {
                    write!(out, "{offset}")
                } else if *offset == 0 {
                    write!(out, "ord({g})")
                } else if *offset > 0 {
                    write!(out, "ord({g}) + {offset}")
                } else {
                    write!(out, "ord({g}) - {}", -offset)
                }
            }
            Atom::OrdMod { f, modulus, residue } => write!(out, "ord({f}) % {modulus} = {residue}"),
            Atom::OrdEqInf(f) => write!(out, "{f} = 0"),
            Atom::AcEq { depth, f, u } => write!(out, "ac({depth}, {f}) = {}", u.digits),
            Atom::RvEq { depth, f, tag: RvData::Zero } => write!(out, "rv({depth}, {f}) = 0"),
            Atom::RvEq { depth, f, tag: RvData::NonZero { valuation, unit } } => {
                write!(out, "rv({depth}, {f}) = ({valuation}, {})", unit.digits)
            }
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Atom(a) => write!(out, "{a}"),
            Formula::And(a, b) => write!(out, "({a} & {b})"),
            Formula::Or(a, b) => write!(out, "({a} | {b})"),
            Formula::Not(a) => write!(out, "!{a}"),
        }
    }
}

// ---------------------------------------------------------------------------
// prepare

#[derive(Debug, Clone, Copy, Default)]
pub struct PrepareOptions {
    /// Recursion cap; `None` reads the environment, then falls back to the
    /// resultant bound.
    pub max_depth: Option<usize>,
}

/// The default recursion cap `2 ord Res(g, g') + deg f + 4` for the squarefree part `g`.
pub fn default_depth_cap(f: &Poly, p: Prime) -> usize {
    let g = f.squarefree_part();
    let r = if g.degree() >= 1 {
        resultant_val(&g, &g.derivative(), p).ok().and_then(Val::finite).unwrap_or(0).max(0)
    } else {
        0
    };
    (2 * r + f.degree().max(0) as i64 + 4) as usize
}

fn depth_cap(f: &Poly, p: Prime, opts: PrepareOptions) -> usize {
    opts.max_depth
        .or_else(|| std::env::var(MAX_DEPTH_ENV).ok().and_then(|s| s.trim().parse().ok()))
        .unwrap_or_else(|| default_depth_cap(f, p))
}

struct Ctx<'a> {
    f: &'a Poly,
    g: &'a Poly,
    p: Prime,
    cap: usize,
}

/// A cell with the gap between its order law and the Newton-polygon minimum.
type Tagged = (Cell1, i64);

/// Decomposition of `domain` on which `ord f` follows an exact law per cell.
pub fn prepare(f: &Poly, p: Prime, domain: &Ball) -> Result<Decomposition> {
    prepare_with(f, p, domain, PrepareOptions::default())
}

pub fn prepare_with(f: &Poly, p: Prime, domain: &Ball, opts: PrepareOptions) -> Result<Decomposition> {
    if f.is_zero() {
        return Err(Error::ZeroPolynomial);
    }
    let g = f.squarefree_part();
    let ctx = Ctx { f, g: &g, p, cap: depth_cap(f, p, opts) };
    let mut center = Center::exact(domain.center.clone(), p);
    if g.degree() == 1 {
        let root = -g.coeff(0) / g.coeff(1);
        if domain.contains(&root, p) {
            center = Center::exact(root, p);
        }
    }
    let tagged = ball(&ctx, center, domain.min_ord, 0)?;
    let k = tagged.iter().map(|(_, d)| *d).max().unwrap_or(0);
    let cells = tagged.into_iter().map(|(c, _)| c).collect();
    Ok(Decomposition { prime: p, domain: domain.clone(), cells, k: vec![(f.clone(), k)] })
}

/// Indices attaining `min_i (v_i + i m)`, and that minimum.
fn argmin(v: &[Val], m: i64) -> (Vec<usize>, Val) {
    let vals: Vec<Val> = v.iter().enumerate().map(|(i, x)| *x + m * i as i64).collect();
    let min = *vals.iter().min().expect("nonempty");
    ((0..v.len()).filter(|&i| vals[i] == min).collect(), min)
}

/// First `m` beyond every crossing of the lines `v_i + i m`.
fn last_crossing(v: &[Val]) -> Option<i64> {
    let fin: Vec<(i64, i64)> = v.iter().enumerate().filter_map(|(i, x)| x.finite().map(|x| (i as i64, x))).collect();
    let mut best: Option<i64> = None;
    for (a, &(i, vi)) in fin.iter().enumerate() {
        for &(j, vj) in &fin[a + 1..] {
            let x = (vi - vj).div_euclid(j - i) + 1;
            best = Some(best.map_or(x, |b| b.max(x)));
        }
    }
    best
}

/// Decompose `{ y : ord(y - center) >= mlo }` (including the center).
fn ball(ctx: &Ctx, center: Center, mlo: i64, level: usize) -> Result<Vec<Tagged>> {
    if level > ctx.cap {
        return Err(Error::BoundExceeded(format!("recursion depth {level} exceeds cap {}", ctx.cap)));
    }
    let f = ctx.f;
    let v = center.taylor_vals(f);
    let mut out: Vec<Tagged> = vec![(Cell1::point(center.clone()).with_law(f, OrderLaw { e0: v[0], i0: 0 }), 0)];
    let first_finite = v.iter().position(|x| !x.is_inf()).expect("f is nonzero");
    let tail = last_crossing(&v).unwrap_or(mlo).max(mlo);

    let annulus = |lo: i64, hi: Option<i64>, i0: usize| -> Tagged {
        let range = MRange::new(lo, hi, 1).expect("nonempty run");
        let law = OrderLaw { e0: v[i0], i0: i0 as u32 };
        (Cell1::annuli(center.clone(), range, Residue::All).with_law(f, law), 0)
    };

    let mut run: Option<(i64, usize)> = None;
    for m in mlo..tail {
        let (idx, phi) = argmin(&v, m);
        if idx.len() == 1 {
            match run {
                Some((_, i)) if i == idx[0] => {}
                Some((lo, i)) => {
                    out.push(annulus(lo, Some(m - 1), i));
                    run = Some((m, idx[0]));
                }
                None => run = Some((m, idx[0])),
            }
            continue;
        }
        if let Some((lo, i)) = run.take() {
            out.push(annulus(lo, Some(m - 1), i));
        }
        out.extend(tie(ctx, &center, m, phi.unwrap(), level)?);
    }
    match run {
        Some((lo, i)) if i == first_finite => out.push(annulus(lo, None, i)),
        Some((lo, i)) => {
            out.push(annulus(lo, Some(tail - 1), i));
            out.push(annulus(tail, None, first_finite));
        }
        None => out.push(annulus(tail, None, first_finite)),
    }
    Ok(out)
}

enum Piece {
    Const(i64),
    Sub(Vec<Tagged>),
}

/// The shell `ord(y - center) = m` where several Taylor terms tie at `phi`.
fn tie(ctx: &Ctx, center: &Center, m: i64, phi: i64, level: usize) -> Result<Vec<Tagged>> {
    let p = ctx.p;
    let c_rep = truncate(&center.approx(m + 1), p, m + 1);
    let units = units_mod(p, 1);
    let shifted = ctx.g.taylor_shift(&c_rep);
    let pieces: Vec<Result<Piece>> = crate::par::map(&units, |u| {
        let cpp = &c_rep + Rat::from_integer(u.clone()) * p.rpow(m);
        let w: Vec<Val> = ctx.f.taylor_shift(&cpp).coeffs().iter().map(|a| ord_p(a, p)).collect();
        if let Val::Fin(w0) = w[0] {
            if w.iter().enumerate().skip(1).all(|(i, x)| Val::Fin(w0) < *x + (m + 1) * i as i64) {
                return Ok(Piece::Const(w0));
            }
        }
        let x0 = rv(&(Rat::from_integer(u.clone()) * p.rpow(m)), p, 1)?;
        let sub = match h(shifted.coeffs(), &x0, p) {
            HenselValue::Root(r) => {
                let hens = Term::hens(
                    shifted.coeffs().iter().cloned().map(Term::Const).collect(),
                    1,
                    Term::RvConst(x0.clone()),
                );
                let term = if c_rep.is_zero() { hens } else { Term::add(Term::Const(c_rep.clone()), hens) };
                Center::root(&c_rep, r, term, p)
            }
            HenselValue::Zero => Center::exact(cpp, p),
        };
        Ok(Piece::Sub(ball(ctx, sub, m + 1, level + 1)?))
    });
    let mut groups: BTreeMap<i64, Vec<BigInt>> = BTreeMap::new();
    let mut subs = Vec::new();
    for (u, piece) in units.iter().zip(pieces) {
        match piece? {
            Piece::Const(w0) => groups.entry(w0).or_default().push(u.clone()),
            Piece::Sub(cells) => subs.push(cells),
        }
    }
    let mut out = Vec::new();
    for (w0, us) in groups {
        let residue = if us.len() == units.len() { Residue::All } else { Residue::set(1, us) };
        let cell = Cell1::annuli(center.clone(), MRange::single(m), residue)
            .with_law(ctx.f, OrderLaw { e0: Val::Fin(w0), i0: 0 });
        out.push((cell, w0 - phi));
    }
    out.extend(subs.into_iter().flatten());
    Ok(out)
}

// ---------------------------------------------------------------------------
// decompose_set

/// A decomposition together with the truth value of the formula on each cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SetDecomposition {
    pub decomposition: Decomposition,
    pub kept: Vec<bool>,
}

impl SetDecomposition {
    pub fn kept_cells(&self) -> impl Iterator<Item = &Cell1> {
        self.decomposition.cells.iter().zip(&self.kept).filter(|(_, k)| **k).map(|(c, _)| c)
    }

    /// The kept cells alone, as a decomposition of the set.
    pub fn as_set(&self) -> Decomposition {
        let d = &self.decomposition;
        Decomposition { prime: d.prime, domain: d.domain.clone(), cells: self.kept_cells().cloned().collect(), k: d.k.clone() }
    }
}

pub fn decompose_set(phi: &Formula, p: Prime, domain: &Ball) -> Result<SetDecomposition> {
    let atoms = phi.atoms();
    let mut polys: Vec<Poly> = Vec::new();
    for a in &atoms {
        if let Atom::OrdCmp { f, g, .. } = a {
            if f.is_zero() || g.is_zero() {
                return Err(Error::ZeroPolynomial);
            }
        }
        if let Atom::OrdMod { modulus, .. } = a {
            if *modulus <= 0 {
                return Err(Error::InvalidInput("modulus must be positive".into()));
            }
        }
        let unit = match a {
            Atom::AcEq { depth, u, .. } => Some((*depth, u)),
            Atom::RvEq { depth, tag: RvData::NonZero { unit, .. }, .. } => Some((*depth, unit)),
            _ => None,
        };
        if let Some((depth, u)) = unit {
            if u.depth != depth || UnitDigits::new(depth, u.digits.clone(), p)? != *u {
                return Err(Error::InvalidInput(format!("{} is not a unit digit string of depth {depth}", u.digits)));
            }
        }
        for f in a.polys() {
            if !polys.contains(f) {
                polys.push(f.clone());
            }
        }
    }
    let nonzero: Vec<&Poly> = polys.iter().filter(|f| !f.is_zero()).collect();
    let mut d = match nonzero.first() {
        Some(f) => prepare(f, p, domain)?,
        None => prepare(&Poly::var(), p, domain)?,
    };
    for f in nonzero.iter().skip(1) {
        d = crate::cells::refine_common(&d, &prepare(f, p, domain)?)?;
    }
    for f in polys.iter().filter(|f| f.is_zero()) {
        for c in &mut d.cells {
            c.set_law(f, OrderLaw { e0: Val::Inf, i0: 0 });
        }
        d.k.push((f.clone(), 0));
    }
    let mut cells = d.cells;
    for atom in &atoms {
        let split: Vec<Result<Vec<Cell1>>> = crate::par::map(&cells, |c| split_for(c, atom));
        let mut next = Vec::new();
        for s in split {
            next.extend(s?);
        }
        cells = next;
    }
    let kept = crate::par::map(&cells, |c| truth(c, phi));
    let decomposition = Decomposition { prime: p, domain: domain.clone(), cells, k: d.k };
    Ok(SetDecomposition { decomposition, kept })
}

fn law(c: &Cell1, f: &Poly) -> OrderLaw {
    c.law_for(f).expect("every tracked polynomial has a law")
}

fn with_range(c: &Cell1, range: MRange) -> Cell1 {
    let Shape::Annuli { residue, .. } = &c.shape else { unreachable!() };
    Cell1 { center: c.center.clone(), shape: Shape::Annuli { range, residue: residue.clone() }, laws: c.laws.clone() }
}

/// Split `c` so that `atom` has constant truth on each piece.
fn split_for(c: &Cell1, atom: &Atom) -> Result<Vec<Cell1>> {
    let Shape::Annuli { range, .. } = &c.shape else { return Ok(vec![c.clone()]) };
    Ok(match atom {
        Atom::OrdCmp { f, g, offset, .. } => {
            let (lf, lg) = (law(c, f), law(c, g));
            match (lf.e0, lg.e0) {
                (Val::Fin(ef), Val::Fin(eg)) => {
                    // ord f - ord g - offset = a + b m
                    let a = ef - eg - offset;
                    let b = lf.i0 as i64 - lg.i0 as i64;
                    split_linear(c, range, a, b)
                }
                _ => vec![c.clone()],
            }
        }
        Atom::OrdMod { f, modulus, .. } => {
            let l = law(c, f);
            if l.i0 == 0 || l.e0.is_inf() {
                vec![c.clone()]
            } else {
                (0..*modulus)
                    .filter_map(|j| {
                        let start = range.lo + (j - range.lo).rem_euclid(*modulus);
                        range.intersect(&MRange::new(start, None, *modulus)?)
                    })
                    .map(|r| with_range(c, r))
                    .collect()
            }
        }
        Atom::OrdEqInf(_) => vec![c.clone()],
        Atom::AcEq { depth, f, .. } => split_ac(c, f, *depth)?,
        Atom::RvEq { tag: RvData::Zero, .. } => vec![c.clone()],
        Atom::RvEq { depth, f, tag: RvData::NonZero { valuation, .. } } => {
            let l = law(c, f);
            let mut out = Vec::new();
            match l.e0 {
                Val::Fin(e0) => {
                    for piece in split_linear(c, range, e0 - valuation, l.i0 as i64) {
                        let Shape::Annuli { range: r, .. } = &piece.shape else { unreachable!() };
                        let m = r.lo;
                        if r.len() == Some(1) && l.at(Val::Fin(m)) == Val::Fin(*valuation) {
                            out.extend(split_ac(&piece, f, *depth)?);
                        } else {
                            out.push(piece);
                        }
                    }
                }
                Val::Inf => out.push(c.clone()),
            }
            out
        }
    })
}

/// Split the range where `a + b m` changes sign.
fn split_linear(c: &Cell1, range: &MRange, a: i64, b: i64) -> Vec<Cell1> {
    if b == 0 {
        return vec![c.clone()];
    }
    let (a, b) = if b < 0 { (-a, -b) } else { (a, b) };
    // a + b m = 0 at m = -a / b
    let below = (-a).div_euclid(b);
    let exact = (-a).rem_euclid(b) == 0;
    let (lo_end, hi_start) = if exact { (below - 1, below + 1) } else { (below, below + 1) };
    let mut out = Vec::new();
    if let Some(r) = range.at_most(lo_end) {
        out.push(with_range(c, r));
    }
    if exact && range.contains(below) {
        out.push(with_range(c, MRange::single(below)));
    }
    if let Some(r) = range.at_least(hi_start) {
        out.push(with_range(c, r));
    }
    out
}

/// Members `center + p^m w` of the cell, grouped so that `ac_depth f` is
/// constant on each group.
fn split_ac(c: &Cell1, f: &Poly, depth: u32) -> Result<Vec<Cell1>> {
    let Shape::Annuli { range, residue } = &c.shape else { return Ok(vec![c.clone()]) };
    let l = law(c, f);
    if l.e0.is_inf() {
        return Ok(vec![c.clone()]);
    }
    let p = c.prime();
    let v = c.center.taylor_vals(f);
    let fin: Vec<(i64, i64)> = v.iter().enumerate().filter_map(|(i, x)| x.finite().map(|x| (i as i64, x))).collect();
    let (imin, vmin) = fin[0];
    // beyond `good`, term `imin` beats every other term by at least `depth`
    let mut good = range.lo;
    for &(i, vi) in &fin[1..] {
        let need = (depth as i64 + vmin - vi).div_euclid(i - imin) + 1;
        good = good.max(need);
    }
    let mut out = Vec::new();
    let shell = |m: i64, extra: i64| -> Result<(u32, BTreeMap<BigInt, Vec<BigInt>>)> {
        let dd = residue.depth().max(depth + extra as u32);
        let c_rep = truncate(&c.center.approx(m + dd as i64), p, m + dd as i64);
        let mut by_ac: BTreeMap<BigInt, Vec<BigInt>> = BTreeMap::new();
        for w in residue.lift(dd, p) {
            let y = &c_rep + Rat::from_integer(w.clone()) * p.rpow(m);
            let fy = f.eval(&y);
            let key = unit_digits(&fy, p, depth)?.digits;
            by_ac.entry(key).or_default().push(w);
        }
        Ok((dd, by_ac))
    };
    for m in range.iter_upto(good - 1) {
        let (_, phi) = argmin(&v, m);
        let e = l.at(Val::Fin(m)).unwrap();
        let (dd, groups) = shell(m, e - phi.unwrap())?;
        for ws in groups.into_values() {
            out.push(Cell1 {
                center: c.center.clone(),
                shape: Shape::Annuli { range: MRange::single(m), residue: Residue::set(dd, ws) },
                laws: c.laws.clone(),
            });
        }
    }
    if let Some(rest) = range.at_least(good) {
        let (dd, groups) = shell(rest.lo, 0)?;
        if groups.len() == 1 {
            out.push(with_range(c, rest));
        } else {
            for ws in groups.into_values() {
                out.push(Cell1 {
                    center: c.center.clone(),
                    shape: Shape::Annuli { range: rest.clone(), residue: Residue::set(dd, ws) },
                    laws: c.laws.clone(),
                });
            }
        }
    }
    Ok(out)
}

/// `ac_depth f(center)` for a center where `f` does not vanish.
fn ac_at_center(center: &Center, f: &Poly, depth: u32) -> Option<BigInt> {
    let p = center.prime();
    let e = center.ord_of(f).finite()?;
    if let Some(x) = center.exact_value() {
        return Some(unit_digits(&f.eval(x), p, depth).ok()?.digits);
    }
    let x = center.approx(1);
    let ox = ord_p(&x, p).finite().unwrap_or(0).min(0);
    let bound = f.min_coeff_ord(p).finite().unwrap_or(0) + f.degree().max(0) as i64 * ox;
    let n = (e + depth as i64 - bound).max(1);
    let x = center.approx(n);
    Some(unit_digits(&f.eval(&x), p, depth).ok()?.digits)
}

fn atom_at_center(atom: &Atom, center: &Center) -> bool {
    let ord = |f: &Poly| center.ord_of(f);
    match atom {
        Atom::OrdCmp { f, g, offset, rel } => rel.holds(ord(f), ord(g) + *offset),
        Atom::OrdMod { f, modulus, residue } => {
            ord(f).finite().is_some_and(|v| v.rem_euclid(*modulus) == residue.rem_euclid(*modulus))
        }
        Atom::OrdEqInf(f) => ord(f).is_inf(),
        Atom::AcEq { depth, f, u } => ac_at_center(center, f, *depth).is_some_and(|w| w == u.digits),
        Atom::RvEq { depth, f, tag } => match tag {
            RvData::Zero => ord(f).is_inf(),
            RvData::NonZero { valuation, unit } => {
                ord(f) == Val::Fin(*valuation) && ac_at_center(center, f, *depth).is_some_and(|w| w == unit.digits)
            }
        },
    }
}

/// Truth of `phi` on a cell on which every atom is constant.
fn truth(c: &Cell1, phi: &Formula) -> bool {
    match representative(c) {
        Some(y) => phi.eval(&y, c.prime()),
        None => phi.eval_with(&mut |a| atom_at_center(a, &c.center)),
    }
}

/// A rational member of an annuli cell.
pub fn representative(c: &Cell1) -> Option<Rat> {
    let Shape::Annuli { range, residue } = &c.shape else {
        return c.center.exact_value().cloned();
    };
    let p = c.prime();
    let d = residue.depth();
    let w = match residue {
        Residue::All => BigInt::one(),
        Residue::Set { units, .. } => units.iter().next()?.clone(),
    };
    let m = range.lo;
    let c_rep = truncate(&c.center.approx(m + d as i64), p, m + d as i64);
    Some(c_rep + Rat::from_integer(w) * p.rpow(m))
}

// ---------------------------------------------------------------------------
// preserves_balls_report

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "image", rename_all = "snake_case")]
pub enum FiberImage {
    /// Every fiber maps onto a point.
    Point,
    /// Fiber `(m, w)` maps onto the ball `F(b) + p^(radius_at_lo + slope (m - lo)) Z_p`.
    Ball { radius_at_lo: i64, slope: i64 },
    /// Linear dominance could not be certified from `m = from_m` on.
    Uncertified { from_m: i64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BallsReport {
    pub poly: String,
    pub cells: Vec<FiberImage>,
    pub preserves_balls: bool,
}

/// For every fiber ball `B` of every cell, whether `F(B)` is a ball or a point.
///
/// A fiber `b + p^r Z_p` maps onto `F(b) + F'(b) p^r Z_p` when the linear
/// Taylor term strictly dominates; the order law for `F'` gives `ord F'(b)`.
pub fn preserves_balls_report(d: &Decomposition, big_f: &Poly, p: Prime) -> Result<BallsReport> {
    if p != d.prime {
        return Err(Error::DomainMismatch);
    }
    let df = big_f.derivative();
    let cells = crate::par::map(&d.cells, |c| fiber_image(c, big_f, &df));
    let cells: Vec<FiberImage> = cells.into_iter().collect::<Result<_>>()?;
    let preserves_balls = cells.iter().all(|c| !matches!(c, FiberImage::Uncertified { .. }));
    Ok(BallsReport { poly: big_f.to_string(), cells, preserves_balls })
}

/// Shells checked one by one before the affine margins take over.
const WINDOW: i64 = 64;

fn fiber_image(c: &Cell1, big_f: &Poly, df: &Poly) -> Result<FiberImage> {
    let Shape::Annuli { range, residue } = &c.shape else { return Ok(FiberImage::Point) };
    if big_f.degree() < 1 {
        return Ok(FiberImage::Point);
    }
    let ld = if df.is_zero() {
        OrderLaw { e0: Val::Inf, i0: 0 }
    } else {
        c.law_for(df).ok_or_else(|| Error::MissingLaw(df.to_string()))?
    };
    let dd = residue.depth() as i64;
    let v = c.center.taylor_vals(big_f);
    let n = v.len() as i64 - 1;
    // ord F'(b) p^r with r = m + dd, as a linear function of m
    let Val::Fin(e1) = ld.e0 else { return Ok(FiberImage::Uncertified { from_m: range.lo }) };
    let lin_a = e1 + dd;
    let lin_b = ld.i0 as i64 + 1;
    // ord(F^(i)(b)/i! p^{ir}) >= min_{j>=i} v_j + (j - i) m + i (m + dd); each
    // margin against the linear term is affine in m.
    let margins: Vec<(i64, i64)> = (2..=n)
        .flat_map(|i| (i..=n).map(move |j| (i, j)))
        .filter_map(|(i, j)| v[j as usize].finite().map(|vj| (vj + i * dd - lin_a, j - lin_b)))
        .collect();
    let margin_ok = |m: i64| margins.iter().all(|&(a, b)| a + b * m > 0);
    let mut uniform_from = range.lo;
    for &(a, b) in &margins {
        if b > 0 {
            uniform_from = uniform_from.max((-a).div_euclid(b) + 1);
        } else if !(b == 0 && a > 0) {
            uniform_from = i64::MAX;
        }
    }
    let check_end = uniform_from.saturating_sub(1).min(range.hi.unwrap_or(i64::MAX));
    if check_end > range.lo + WINDOW {
        return Ok(FiberImage::Uncertified { from_m: range.lo + WINDOW });
    }
    for m in range.iter_upto(check_end) {
        if !margin_ok(m) && !exact_dominance(c, big_f, m) {
            return Ok(FiberImage::Uncertified { from_m: m });
        }
    }
    Ok(FiberImage::Ball { radius_at_lo: lin_a + lin_b * range.lo, slope: lin_b })
}

/// Strict linear dominance checked on the actual Taylor expansion at every
/// fiber of shell `m`.
fn exact_dominance(c: &Cell1, big_f: &Poly, m: i64) -> bool {
    let Shape::Annuli { residue, .. } = &c.shape else { return false };
    let p = c.prime();
    let dd = residue.depth() as i64;
    let r = m + dd;
    let c_rep = truncate(&c.center.approx(r), p, r);
    residue.lift(dd as u32, p).iter().all(|w| {
        let b = &c_rep + Rat::from_integer(w.clone()) * p.rpow(m);
        let t = big_f.taylor_shift(&b);
        let ords: Vec<Val> = t.coeffs().iter().enumerate().map(|(i, a)| ord_p(a, p) + r * i as i64).collect();
        ords.len() > 1 && !ords[1].is_inf() && ords[2..].iter().all(|o| *o > ords[1])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::check_partition;
    use crate::padic::{rat, ratio};

    fn p5() -> Prime {
        Prime::new(5).unwrap()
    }

    fn poly(c: &[i64]) -> Poly {
        Poly::from_ints(c)
    }

    #[test]
    fn prepare_monomial() {
        let p = p5();
        let d = prepare(&poly(&[0, 1]), p, &Ball::zp()).unwrap();
        assert_eq!(d.cells.len(), 2);
        assert_eq!(d.cells[0].shape, Shape::Point);
        assert_eq!(d.cells[1].shape, Shape::Annuli { range: MRange::from(0), residue: Residue::All });
        assert_eq!(d.cells[1].law_for(&poly(&[0, 1])), Some(OrderLaw { e0: Val::Fin(0), i0: 1 }));
    }

    #[test]
    fn prepare_y2_minus_1_exhaustive() {
        let p = p5();
        let f = poly(&[-1, 0, 1]);
        let d = prepare(&f, p, &Ball::zp()).unwrap();
        assert!(check_partition(&d).unwrap().is_partition());
        for y in 0..3125 {
            let y = rat(y);
            let hits = d.members(&y);
            assert_eq!(hits.len(), 1);
            let cell = &d.cells[hits[0]];
            let law = cell.law_for(&f).unwrap();
            assert_eq!(ord_p(&f.eval(&y), p), law.at(cell.center.dist_rat(&y)), "y = {y}");
        }
    }

    #[test]
    fn prepare_y2_minus_5_measures() {
        let p = p5();
        let f = poly(&[-5, 0, 1]);
        let d = prepare(&f, p, &Ball::zp()).unwrap();
        assert_eq!(crate::measure::measure_of_order(&d, &f, 0).unwrap(), ratio(4, 5));
        assert_eq!(crate::measure::measure_of_order(&d, &f, 1).unwrap(), ratio(1, 5));
    }

    #[test]
    fn hensel_center_term() {
        let p = p5();
        let f = poly(&[-6, 0, 1]);
        let d = prepare(&f, p, &Ball::zp()).unwrap();
        let terms: Vec<String> = d
            .cells
            .iter()
            .filter(|&c| c.center.exact_value().is_none()).map(|c| c.center.term().unwrap().to_string())
            .collect();
        assert!(terms.contains(&"h_{2,1}(-6, 0, 1, xi[m=0,u=1,d=1])".to_string()), "{terms:?}");
    }

    #[test]
    fn ord_at_least_one() {
        let p = p5();
        let phi = Formula::Atom(Atom::OrdCmp { f: poly(&[0, 1]), g: poly(&[1]), offset: 1, rel: Rel::Ge });
        let s = decompose_set(&phi, p, &Ball::zp()).unwrap();
        assert_eq!(crate::measure::measure(&s.as_set()).unwrap(), ratio(1, 5));
        for y in 0..625 {
            let y = rat(y);
            let i = s.decomposition.members(&y)[0];
            assert_eq!(s.kept[i], phi.eval(&y, p));
        }
    }

    #[test]
    fn squaring_preserves_balls_at_odd_p() {
        let p = p5();
        let f = poly(&[0, 0, 1]);
        let d = crate::cells::refine_common(
            &prepare(&f, p, &Ball::zp()).unwrap(),
            &prepare(&f.derivative(), p, &Ball::zp()).unwrap(),
        )
        .unwrap();
        let r = preserves_balls_report(&d, &f, p).unwrap();
        assert!(r.preserves_balls);
        let c = preserves_balls_report(&d, &poly(&[3]), p).unwrap();
        assert!(c.cells.iter().all(|x| *x == FiberImage::Point));
    }
}
