//! Surface syntax for polynomials in `y` and quantifier-free formulas.
//!
//! ```text
//! poly    := term (('+' | '-') term)*
//! term    := unary ('*' unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' INT)?
//! primary := INT ('/' INT)? | 'y' | '(' poly ')'
//!
//! formula := conj ('|' conj)*
//! conj    := neg ('&' neg)*
//! neg     := '!' neg | atom | '(' formula ')'
//! atom    := 'ord(' poly ')' REL ( 'ord(' poly ')' (('+' | '-') INT)? | INT )
//!          | 'ord(' poly ')' '%' INT '=' INT
//!          | 'ac(' INT ',' poly ')' '=' INT
//!          | 'rv(' INT ',' poly ')' '=' ( '0' | '(' INT ',' INT ')' )
//!          | poly '=' '0'
//! ```

use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};

use crate::decompose::{Atom, Formula, Rel};
use crate::error::{Error, Result};
use crate::padic::{Rat, RvData, UnitDigits};
use crate::poly::Poly;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(BigInt),
    Ident(String),
    Sym(&'static str),
    End,
}

const SYMBOLS: [&str; 16] = ["<=", ">=", "==", "<", ">", "=", "+", "-", "*", "^", "/", "(", ")", ",", "&", "|"];

fn lex(text: &str) -> Result<Vec<(usize, Tok)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    'outer: while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            out.push((start, Tok::Int(text[start..i].parse().expect("digits"))));
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let word = &text[start..i];
            if matches!(word, "exists" | "forall") {
                return Err(Error::QuantifierNotSupported);
            }
            out.push((start, Tok::Ident(word.to_string())));
            continue;
        }
        for s in SYMBOLS.iter().chain(&["!", "%"]) {
            if text[i..].starts_with(s) {
                out.push((i, Tok::Sym(s)));
                i += s.len();
                continue 'outer;
            }
        }
        return Err(Error::Parse { pos: i, msg: format!("unexpected character {:?}", c as char) });
    }
    out.push((text.len(), Tok::End));
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].1
    }

    fn pos(&self) -> usize {
        self.toks[self.at].0
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse { pos: self.pos(), msg: msg.into() })
    }

    fn eat(&mut self, s: &str) -> bool {
        if matches!(self.peek(), Tok::Sym(t) if *t == s) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, s: &str) -> Result<()> {
        if self.eat(s) {
            Ok(())
        } else {
            self.err(format!("expected '{s}'"))
        }
    }

    fn eat_ident(&mut self, name: &str) -> bool {
        if matches!(self.peek(), Tok::Ident(w) if w == name) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn int(&mut self) -> Result<BigInt> {
        let neg = self.eat("-");
        match self.peek().clone() {
            Tok::Int(n) => {
                self.at += 1;
                Ok(if neg { -n } else { n })
            }
            _ => self.err("expected an integer"),
        }
    }

    fn small(&mut self) -> Result<i64> {
        let pos = self.pos();
        self.int()?.to_i64().ok_or(Error::Parse { pos, msg: "integer out of range".into() })
    }

    fn depth(&mut self) -> Result<u32> {
        let pos = self.pos();
        match self.small()? {
            d if d >= 1 && d <= u32::MAX as i64 => Ok(d as u32),
            _ => Err(Error::Parse { pos, msg: "depth must be a positive integer".into() }),
        }
    }

    fn poly(&mut self) -> Result<Poly> {
        let mut acc = self.term()?;
        loop {
            if self.eat("+") {
                acc = &acc + &self.term()?;
            } else if self.eat("-") {
                acc = &acc - &self.term()?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<Poly> {
        let mut acc = self.unary()?;
        while self.eat("*") {
            acc = &acc * &self.unary()?;
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Poly> {
        if self.eat("-") {
            return Ok(-&self.unary()?);
        }
        let base = self.primary()?;
        if self.eat("^") {
            let pos = self.pos();
            let e = self.small()?;
            if !(0..=64).contains(&e) {
                return Err(Error::Parse { pos, msg: "exponent must be between 0 and 64".into() });
            }
            let mut out = Poly::constant(Rat::one());
            for _ in 0..e {
                out = &out * &base;
            }
            return Ok(out);
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Poly> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.at += 1;
                if self.eat("/") {
                    let pos = self.pos();
                    let d = self.int()?;
                    if d.is_zero() {
                        return Err(Error::Parse { pos, msg: "zero denominator".into() });
                    }
                    return Ok(Poly::constant(Rat::new(n, d)));
                }
                Ok(Poly::constant(Rat::from_integer(n)))
            }
            Tok::Ident(w) if w == "y" => {
                self.at += 1;
                Ok(Poly::var())
            }
            Tok::Sym("(") => {
                self.at += 1;
                let p = self.poly()?;
                self.expect(")")?;
                Ok(p)
            }
            _ => self.err("expected a polynomial"),
        }
    }

    fn rel(&mut self) -> Result<Rel> {
        let rel = match self.peek() {
            Tok::Sym("<") => Rel::Lt,
            Tok::Sym("<=") => Rel::Le,
            Tok::Sym("=") | Tok::Sym("==") => Rel::Eq,
            Tok::Sym(">=") => Rel::Ge,
            Tok::Sym(">") => Rel::Gt,
            _ => return self.err("expected a comparison"),
        };
        self.at += 1;
        Ok(rel)
    }

    fn ord_arg(&mut self) -> Result<Poly> {
        self.expect("(")?;
        let f = self.poly()?;
        self.expect(")")?;
        Ok(f)
    }

    fn atom(&mut self) -> Result<Atom> {
        if self.eat_ident("ord") {
            let f = self.ord_arg()?;
            if self.eat("%") {
                let pos = self.pos();
                let modulus = self.small()?;
                if modulus <= 0 {
                    return Err(Error::Parse { pos, msg: "modulus must be positive".into() });
                }
                self.expect("=")?;
                let residue = self.small()?;
                return Ok(Atom::OrdMod { f, modulus, residue });
            }
            let rel = self.rel()?;
            if self.eat_ident("ord") {
                let g = self.ord_arg()?;
                let offset = if self.eat("+") {
                    self.small()?
                } else if self.eat("-") {
                    -self.small()?
                } else {
                    0
                };
                return Ok(Atom::OrdCmp { f, g, offset, rel });
            }
            let offset = self.small()?;
            return Ok(Atom::OrdCmp { f, g: Poly::constant(Rat::one()), offset, rel });
        }
        if self.eat_ident("ac") {
            self.expect("(")?;
            let depth = self.depth()?;
            self.expect(",")?;
            let f = self.poly()?;
            self.expect(")")?;
            self.expect("=")?;
            let digits = self.int()?;
            return Ok(Atom::AcEq { depth, f, u: UnitDigits { depth, digits } });
        }
        if self.eat_ident("rv") {
            self.expect("(")?;
            let depth = self.depth()?;
            self.expect(",")?;
            let f = self.poly()?;
            self.expect(")")?;
            self.expect("=")?;
            if self.eat("(") {
                let valuation = self.small()?;
                self.expect(",")?;
                let digits = self.int()?;
                self.expect(")")?;
                let tag = RvData::NonZero { valuation, unit: UnitDigits { depth, digits } };
                return Ok(Atom::RvEq { depth, f, tag });
            }
            let pos = self.pos();
            if !self.int()?.is_zero() {
                return Err(Error::Parse { pos, msg: "expected 0 or (m, u)".into() });
            }
            return Ok(Atom::RvEq { depth, f, tag: RvData::Zero });
        }
        let f = self.poly()?;
        self.expect("=")?;
        let pos = self.pos();
        if !self.int()?.is_zero() {
            return Err(Error::Parse { pos, msg: "only 'f = 0' is supported".into() });
        }
        Ok(Atom::OrdEqInf(f))
    }

    fn formula(&mut self) -> Result<Formula> {
        let mut acc = self.conj()?;
        while self.eat("|") {
            acc = Formula::or(acc, self.conj()?);
        }
        Ok(acc)
    }

    fn conj(&mut self) -> Result<Formula> {
        let mut acc = self.neg()?;
        while self.eat("&") {
            acc = Formula::and(acc, self.neg()?);
        }
        Ok(acc)
    }

    fn neg(&mut self) -> Result<Formula> {
        if self.eat("!") {
            return Ok(Formula::not(self.neg()?));
        }
        let start = self.at;
        let atom_err = match self.atom() {
            Ok(a) => return Ok(Formula::Atom(a)),
            Err(e) => e,
        };
        let atom_at = self.at;
        self.at = start;
        if self.eat("(") {
            if let Ok(f) = self.formula() {
                if self.eat(")") {
                    return Ok(f);
                }
            }
        }
        self.at = atom_at;
        Err(atom_err)
    }

    fn finish(&self) -> Result<()> {
        if *self.peek() == Tok::End {
            Ok(())
        } else {
            self.err("unexpected trailing input")
        }
    }
}

pub fn parse_poly(text: &str) -> Result<Poly> {
    let mut p = Parser { toks: lex(text)?, at: 0 };
    let f = p.poly()?;
    p.finish()?;
    Ok(f)
}

pub fn parse_formula(text: &str) -> Result<Formula> {
    let mut p = Parser { toks: lex(text)?, at: 0 };
    let f = p.formula()?;
    p.finish()?;
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::padic::{rat, ratio};
    use proptest::prelude::*;

    #[test]
    fn polynomials() {
        assert_eq!(parse_poly("y^2 - 1").unwrap(), Poly::from_ints(&[-1, 0, 1]));
        assert_eq!(parse_poly("(y-1)^2*(y+1)").unwrap(), Poly::from_ints(&[1, -1, -1, 1]));
        assert_eq!(parse_poly("1/2*y - 3").unwrap(), Poly::new(vec![rat(-3), ratio(1, 2)]));
        assert_eq!(parse_poly("-y^2").unwrap(), Poly::from_ints(&[0, 0, -1]));
        assert!(matches!(parse_poly("y +"), Err(Error::Parse { pos: 3, .. })));
        assert!(matches!(parse_poly("y $ 2"), Err(Error::Parse { pos: 2, .. })));
    }

    #[test]
    fn formulas() {
        let f = parse_formula("ord(y^2-1) >= 2 & ac(1, y) = 2").unwrap();
        assert_eq!(f.atoms().len(), 2);
        let g = parse_formula("!(rv(2, y - 5) = 0)").unwrap();
        assert!(matches!(g, Formula::Not(_)));
        let h = parse_formula("(y-1)*(y+1) = 0 | (ord(y) % 3 = 0)").unwrap();
        assert_eq!(h.atoms().len(), 2);
        assert_eq!(parse_formula("exists y (y = 0)"), Err(Error::QuantifierNotSupported));
        assert_eq!(parse_formula("forall z: ord(y) > 0"), Err(Error::QuantifierNotSupported));
    }

    fn arb_poly() -> impl Strategy<Value = Poly> {
        prop::collection::vec((-20i64..=20, 1i64..=4), 1..=5)
            .prop_map(|cs| Poly::new(cs.into_iter().map(|(n, d)| ratio(n, d)).collect()))
    }

    fn arb_atom() -> impl Strategy<Value = Atom> {
        let nonzero = arb_poly().prop_filter("nonzero", |f| !f.is_zero()).boxed();
        prop_oneof![
            (nonzero.clone(), nonzero.clone(), -5i64..=5, 0usize..5).prop_map(|(f, g, offset, r)| Atom::OrdCmp {
                f,
                g,
                offset,
                rel: [Rel::Lt, Rel::Le, Rel::Eq, Rel::Ge, Rel::Gt][r],
            }),
            (nonzero.clone(), 1i64..=4, 0i64..4).prop_map(|(f, modulus, residue)| Atom::OrdMod { f, modulus, residue }),
            arb_poly().prop_map(Atom::OrdEqInf),
            (nonzero.clone(), 1u32..=3, 1i64..100)
                .prop_map(|(f, depth, u)| Atom::AcEq { depth, f, u: UnitDigits { depth, digits: u.into() } }),
            (nonzero, 1u32..=3, -3i64..=3, 1i64..100).prop_map(|(f, depth, valuation, u)| Atom::RvEq {
                depth,
                f,
                tag: RvData::NonZero { valuation, unit: UnitDigits { depth, digits: u.into() } },
            }),
        ]
    }

    fn arb_formula() -> impl Strategy<Value = Formula> {
        arb_atom().prop_map(Formula::Atom).prop_recursive(3, 12, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::or(a, b)),
                inner.prop_map(Formula::not),
            ]
        })
    }

    proptest! {
        #[test]
        fn poly_round_trip(f in arb_poly()) {
            prop_assert_eq!(parse_poly(&f.to_string()).unwrap(), f);
        }

        #[test]
        fn formula_round_trip(phi in arb_formula()) {
            prop_assert_eq!(parse_formula(&phi.to_string()).unwrap(), phi);
        }
    }
}
