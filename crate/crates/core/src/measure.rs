//! Haar measure (normalized so that `Z_p` has measure 1) and Igusa zeta functions.

use num_bigint::BigInt;
use num_traits::{One, Zero};
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::cells::{Cell1, Decomposition, MRange, Shape};
use crate::error::{Error, Result};
use crate::padic::{Prime, Rat, Val};
use crate::poly::Poly;

pub type MeasureQ = Rat;

/// `sum_{m in range} p^{-m} x^m`-style geometric sums: returns
/// `sum_{m in range} ratio^((m - lo)/step)` for `|ratio| < 1`.
fn geometric(range: &MRange, ratio: &Rat) -> Rat {
    let one = Rat::one();
    match range.len() {
        None => &one / (&one - ratio),
        Some(n) => {
            if *ratio == one {
                return Rat::from_integer(BigInt::from(n));
            }
            (&one - pow(ratio, n)) / (&one - ratio)
        }
    }
}

fn pow(x: &Rat, n: u64) -> Rat {
    num_traits::pow(x.clone(), n as usize)
}

pub fn cell_measure(c: &Cell1, p: Prime) -> Result<MeasureQ> {
    let Shape::Annuli { range, residue } = &c.shape else {
        return Ok(Rat::zero());
    };
    let count = Rat::from_integer(residue.count(p));
    let d = residue.depth() as i64;
    Ok(count * p.rpow(-range.lo - d) * geometric(range, &p.rpow(-range.step)))
}

/// Total measure of the cells of `d`.
pub fn measure(d: &Decomposition) -> Result<MeasureQ> {
    let mut total = Rat::zero();
    for c in &d.cells {
        total += cell_measure(c, d.prime)?;
    }
    Ok(total)
}

/// `mu{ y in cells : ord f(y) = m }`, read off the order laws.
pub fn measure_of_order(d: &Decomposition, f: &Poly, m: i64) -> Result<MeasureQ> {
    let p = d.prime;
    let mut total = Rat::zero();
    for c in &d.cells {
        let law = c.law_for(f).ok_or_else(|| Error::MissingLaw(f.to_string()))?;
        let Shape::Annuli { range, residue } = &c.shape else { continue };
        let Val::Fin(e0) = law.e0 else { continue };
        if law.i0 == 0 {
            if e0 == m {
                total += cell_measure(c, p)?;
            }
            continue;
        }
        let i0 = law.i0 as i64;
        if (m - e0) % i0 != 0 {
            continue;
        }
        let k = (m - e0) / i0;
        if range.contains(k) {
            total += Rat::from_integer(residue.count(p)) * p.rpow(-k - residue.depth() as i64);
        }
    }
    Ok(total)
}

/// A rational function `num(t) / den(t)` in `t = p^{-s}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZetaFn {
    pub num: Poly,
    pub den: Poly,
}

impl ZetaFn {
    pub fn zero() -> ZetaFn {
        ZetaFn { num: Poly::zero(), den: Poly::constant(Rat::one()) }
    }

    /// Canonical form: coprime, denominator scaled by its lowest nonzero coefficient.
    pub fn new(num: Poly, den: Poly) -> ZetaFn {
        assert!(!den.is_zero());
        if num.is_zero() {
            return ZetaFn::zero();
        }
        let g = num.gcd(&den);
        let (num, _) = num.div_rem(&g);
        let (den, _) = den.div_rem(&g);
        let low = den.coeffs().iter().find(|c| !c.is_zero()).cloned().expect("nonzero");
        let inv = Rat::one() / low;
        ZetaFn { num: num.scale(&inv), den: den.scale(&inv) }
    }

    pub fn add(&self, other: &ZetaFn) -> ZetaFn {
        if self.den == other.den {
            return ZetaFn::new(&self.num + &other.num, self.den.clone());
        }
        let g = self.den.gcd(&other.den);
        let (a, _) = other.den.div_rem(&g);
        let (b, _) = self.den.div_rem(&g);
        ZetaFn::new(&(&self.num * &a) + &(&other.num * &b), &self.den * &a)
    }

    /// Value at a rational `t`; `None` at a pole.
    pub fn eval(&self, t: &Rat) -> Option<Rat> {
        let d = self.den.eval(t);
        (!d.is_zero()).then(|| self.num.eval(t) / d)
    }

    /// The first `n` coefficients of the power series expansion at `t = 0`.
    pub fn taylor(&self, n: usize) -> Vec<Rat> {
        let d0 = self.den.coeff(0);
        assert!(!d0.is_zero(), "pole at t = 0");
        let mut out: Vec<Rat> = Vec::with_capacity(n);
        for k in 0..n {
            let mut acc = self.num.coeff(k);
            for j in 1..=k {
                acc -= self.den.coeff(j) * &out[k - j];
            }
            out.push(acc / &d0);
        }
        out
    }
}

impl Serialize for ZetaFn {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let fmt = |p: &Poly| -> Vec<String> { p.coeffs().iter().map(crate::poly::fmt_rat).collect() };
        let mut st = s.serialize_struct("ZetaFn", 3)?;
        st.serialize_field("num", &fmt(&self.num))?;
        st.serialize_field("den", &fmt(&self.den))?;
        st.serialize_field("t", "p^-s")?;
        st.end()
    }
}

fn monomial(c: Rat, e: usize) -> Poly {
    let mut v = vec![Rat::zero(); e + 1];
    v[e] = c;
    Poly::new(v)
}

/// `Z(t) = sum_m mu(ord f = m) t^m`, cell by cell in closed form.
pub fn igusa_zeta(d: &Decomposition, f: &Poly, p: Prime) -> Result<ZetaFn> {
    if f.is_zero() {
        return Err(Error::ZeroPolynomial);
    }
    if p != d.prime {
        return Err(Error::DomainMismatch);
    }
    let exponent = |v: i64| -> Result<usize> { usize::try_from(v).map_err(|_| Error::PDenominator) };
    let mut z = ZetaFn::zero();
    for c in &d.cells {
        let law = c.law_for(f).ok_or_else(|| Error::MissingLaw(f.to_string()))?;
        let Shape::Annuli { range, residue } = &c.shape else { continue };
        let Val::Fin(e0) = law.e0 else { continue };
        let count = Rat::from_integer(residue.count(p));
        let dd = residue.depth() as i64;
        let i0 = law.i0 as i64;
        let lead = count * p.rpow(-range.lo - dd);
        let first = exponent(e0 + i0 * range.lo)?;
        let step = exponent(i0 * range.step)?;
        let r = p.rpow(-range.step);
        // sum_k lead * r^k * t^(first + step k)
        let term = match range.len() {
            None => ZetaFn::new(monomial(lead, first), &Poly::constant(Rat::one()) - &monomial(r, step)),
            Some(_) if step == 0 => ZetaFn::new(monomial(lead * geometric(range, &r), first), Poly::constant(Rat::one())),
            Some(n) => {
                let mut num = Poly::zero();
                let mut coef = lead;
                for k in 0..n as usize {
                    num = &num + &monomial(coef.clone(), first + step * k);
                    coef *= &r;
                }
                ZetaFn::new(num, Poly::constant(Rat::one()))
            }
        };
        z = z.add(&term);
    }
    Ok(z)
}
